// Copyright 2026 The vccm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

/**
 * @file geodesic.hpp
 * @brief Discrete geodesics of a state-dependent Riemannian metric.
 *
 * Paths are piecewise linear with N+1 uniformly indexed nodes and pinned
 * endpoints. The Riemannian energy uses composite midpoint quadrature,
 *
 *   E(c) = N * sum_i dc_i^T M(mid_i, x) dc_i,
 *
 * and the minimizer over interior nodes is found by gradient descent with
 * backtracking line search using the analytic gradient. Constant metrics
 * short-circuit to the straight segment.
 */

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <vector>

namespace vccm {

/// Discretized curve c : [0,1] -> R^n at uniform s_i = i/N, endpoints fixed.
struct Path {
  Eigen::MatrixXd nodes;  // (N+1) x n, row i = c(i/N)

  int segments() const { return static_cast<int>(nodes.rows()) - 1; }
  int dim() const { return static_cast<int>(nodes.cols()); }
  Eigen::VectorXd node(int i) const { return nodes.row(i).transpose(); }

  static Path straight(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                       int N) {
    if (N < 1) throw std::invalid_argument("path needs at least one segment");
    Path p;
    p.nodes.resize(N + 1, a.size());
    for (int i = 0; i <= N; ++i) {
      const double s = static_cast<double>(i) / N;
      p.nodes.row(i) = ((1.0 - s) * a + s * b).transpose();
    }
    // pin the endpoints bit-exactly
    p.nodes.row(0) = a.transpose();
    p.nodes.row(N) = b.transpose();
    return p;
  }

  Path reversed() const {
    Path p;
    p.nodes = nodes.colwise().reverse();
    return p;
  }
};

/// Metric callback bundle: value M(chi, x), its partial derivatives in chi,
/// and a constancy flag that lets solvers skip optimization.
struct MetricFn {
  std::function<Eigen::MatrixXd(const Eigen::VectorXd& chi,
                                const Eigen::VectorXd& x)>
      value;
  /// dM/dchi_k; required when constant_in_chi is false.
  std::function<Eigen::MatrixXd(const Eigen::VectorXd& chi,
                                const Eigen::VectorXd& x, int k)>
      dchi;
  bool constant_in_chi = false;

  static MetricFn constant(const Eigen::MatrixXd& M) {
    MetricFn f;
    f.value = [M](const Eigen::VectorXd&, const Eigen::VectorXd&) { return M; };
    f.constant_in_chi = true;
    return f;
  }
};

/// Discrete Riemannian energy of the path under M(., x).
inline double path_energy(const MetricFn& M, const Path& path,
                          const Eigen::VectorXd& x) {
  const int N = path.segments();
  double E = 0.0;
  for (int i = 0; i < N; ++i) {
    const Eigen::VectorXd d = path.node(i + 1) - path.node(i);
    const Eigen::VectorXd mid = 0.5 * (path.node(i) + path.node(i + 1));
    E += d.dot(M.value(mid, x) * d);
  }
  return E * N;
}

namespace detail {

/// Analytic gradient of the discrete energy w.r.t. all nodes (endpoint rows
/// are zeroed: they are pinned).
inline Eigen::MatrixXd energy_gradient(const MetricFn& M, const Path& path,
                                       const Eigen::VectorXd& x) {
  const int N = path.segments();
  const int n = path.dim();
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(N + 1, n);
  for (int i = 0; i < N; ++i) {
    const Eigen::VectorXd d = path.node(i + 1) - path.node(i);
    const Eigen::VectorXd mid = 0.5 * (path.node(i) + path.node(i + 1));
    const Eigen::VectorXd Md = M.value(mid, x) * d;
    grad.row(i) -= 2.0 * Md.transpose();
    grad.row(i + 1) += 2.0 * Md.transpose();
    if (!M.constant_in_chi) {
      for (int k = 0; k < n; ++k) {
        const double quad = 0.5 * d.dot(M.dchi(mid, x, k) * d);
        grad(i, k) += quad;
        grad(i + 1, k) += quad;
      }
    }
  }
  grad *= static_cast<double>(N);
  grad.row(0).setZero();
  grad.row(N).setZero();
  return grad;
}

/// Applies the inverse of the flat-energy Hessian 2N (L tensor I), where L is
/// the second-difference matrix over interior nodes, to each gradient column
/// (Thomas algorithm). Exact Newton for constant metrics; a preconditioner
/// otherwise.
inline Eigen::MatrixXd laplacian_precondition(const Eigen::MatrixXd& grad,
                                              int N) {
  const int m = N - 1;  // interior nodes
  const int n = static_cast<int>(grad.cols());
  Eigen::MatrixXd dir = Eigen::MatrixXd::Zero(N + 1, n);
  if (m <= 0) return dir;
  for (int col = 0; col < n; ++col) {
    // solve tridiag(-1, 2, -1) z = g
    std::vector<double> c(m, 0.0), d(m, 0.0);
    double beta = 2.0;
    c[0] = -1.0 / beta;
    d[0] = grad(1, col) / beta;
    for (int i = 1; i < m; ++i) {
      beta = 2.0 + c[i - 1];
      c[i] = -1.0 / beta;
      d[i] = (grad(i + 1, col) + d[i - 1]) / beta;
    }
    for (int i = m - 2; i >= 0; --i) d[i] -= c[i] * d[i + 1];
    for (int i = 0; i < m; ++i) dir(i + 1, col) = d[i];
  }
  return dir / (2.0 * N);
}

}  // namespace detail

struct GeodesicOptions {
  int segments = 32;
  double grad_tol = 1e-8;
  int max_iters = 500;
};

struct GeodesicResult {
  Path path;
  double energy = 0.0;
  double grad_norm = 0.0;  // first-order residual actually achieved
  int iterations = 0;
  bool converged = true;  // false flags non-convergence; best path returned
};

/// Minimum-energy path from chi_star to chi under M(., x), initialized from
/// the straight segment. Degenerate endpoints return the constant path;
/// constant metrics return the straight segment immediately (flat geodesics
/// are straight).
inline GeodesicResult solve_geodesic(const MetricFn& M, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& chi_star,
                                     const Eigen::VectorXd& chi,
                                     const GeodesicOptions& opts = {}) {
  GeodesicResult res;
  res.path = Path::straight(chi_star, chi, opts.segments);
  if ((chi - chi_star).cwiseAbs().maxCoeff() == 0.0) {
    res.energy = 0.0;
    return res;
  }
  res.energy = path_energy(M, res.path, x);
  if (M.constant_in_chi) return res;  // zero iterations by design

  double step = 1.0;
  for (int it = 0; it < opts.max_iters; ++it) {
    const Eigen::MatrixXd grad = detail::energy_gradient(M, res.path, x);
    res.grad_norm = grad.norm();
    res.iterations = it;
    if (res.grad_norm <= opts.grad_tol) return res;

    const Eigen::MatrixXd dir =
        detail::laplacian_precondition(grad, opts.segments);
    const double slope = (grad.array() * dir.array()).sum();

    bool improved = false;
    double trial = std::min(step, 4.0);
    for (int ls = 0; ls < 60; ++ls) {
      Path cand = res.path;
      cand.nodes -= trial * dir;
      const double Ec = path_energy(M, cand, x);
      if (Ec <= res.energy - 1e-4 * trial * slope) {
        res.path = cand;
        res.energy = Ec;
        step = trial * 2.0;
        improved = true;
        break;
      }
      trial *= 0.5;
    }
    if (!improved) {
      res.converged = res.grad_norm <= opts.grad_tol;
      return res;
    }
  }
  const Eigen::MatrixXd grad = detail::energy_gradient(M, res.path, x);
  res.grad_norm = grad.norm();
  res.iterations = opts.max_iters;
  res.converged = res.grad_norm <= opts.grad_tol;
  return res;
}

}  // namespace vccm
