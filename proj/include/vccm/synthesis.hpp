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
 * @file synthesis.hpp
 * @brief Pointwise LMI assembly over a scheduling grid and a deterministic
 * semidefinite feasibility solver.
 *
 * The dual metric W(sigma) and gain factor Y(sigma) are parametrized by
 * monomial bases in the scheduling coordinates. Every grid point contributes
 * blocks that are affine in the stacked coefficient vector:
 *
 *   stabilization:  -Wdot + A W + W A^T + B Y + Y^T B^T + 2 lambda W  <= -eps I
 *   L2 gain:        [ -Wdot + A W + W A^T + B Y + Y^T B^T,  B_w, (C W + D Y)^T
 *                     B_w^T,                               -a I,  D_w^T
 *                     C W + D Y,                            D_w,  -a I ] <= -eps I
 *   boundedness:    W(sigma) >= a1 I
 *
 * Wdot is expanded as sum_i dW/dsigma_i * sigmadot_i and enforced at the
 * vertices of the declared rate box (the blocks are affine in sigmadot, so
 * vertices suffice). Feasibility is solved by smoothed max-eigenvalue descent,
 * which is deterministic given the options; a dense a-posteriori validation
 * grid guards against gridding gaps.
 */

#include <algorithm>
#include <iostream>

#include "vccm/model.hpp"

namespace vccm {

// ---------------------------------------------------------------------------
// Monomial basis

/// Monomials over n_sigma coordinates up to a total degree; the constant
/// monomial is always first.
struct MonomialBasis {
  int n_sigma = 0;
  std::vector<std::vector<int>> exponents;

  static MonomialBasis up_to_degree(int n_sigma, int degree) {
    MonomialBasis b;
    b.n_sigma = n_sigma;
    std::vector<int> cur(n_sigma, 0);
    // graded lexicographic enumeration
    std::function<void(int, int, int)> rec = [&](int pos, int remaining,
                                                 int target) {
      if (pos == n_sigma) {
        if (remaining == 0) b.exponents.push_back(cur);
        return;
      }
      for (int e = 0; e <= remaining; ++e) {
        cur[pos] = e;
        rec(pos + 1, remaining - e, target);
      }
      cur[pos] = 0;
    };
    for (int d = 0; d <= degree; ++d) rec(0, d, d);
    return b;
  }

  int size() const { return static_cast<int>(exponents.size()); }
  bool constant_only() const {
    for (const auto& e : exponents)
      for (int k : e)
        if (k != 0) return false;
    return true;
  }

  double eval(int k, const Eigen::VectorXd& sigma) const {
    double v = 1.0;
    for (int i = 0; i < n_sigma; ++i)
      for (int e = 0; e < exponents[k][i]; ++e) v *= sigma(i);
    return v;
  }

  /// d phi_k / d sigma_i at sigma.
  double deval(int k, const Eigen::VectorXd& sigma, int i) const {
    const int e = exponents[k][i];
    if (e == 0) return 0.0;
    double v = static_cast<double>(e);
    for (int j = 0; j < n_sigma; ++j) {
      const int ej = exponents[k][j] - (j == i ? 1 : 0);
      for (int r = 0; r < ej; ++r) v *= sigma(j);
    }
    return v;
  }
};

// ---------------------------------------------------------------------------
// Basis-parametrized W and Y

/// W(sigma) = sum_k W_k phi_k(sigma) (W_k symmetric n x n) and
/// Y(sigma) = sum_k Y_k psi_k(sigma) (Y_k m x n). Also defines the flat
/// coefficient layout used by the LMI blocks: symmetric upper triangles of
/// the W_k first, then the Y_k row-major.
struct BasisParam {
  int n = 0, m = 0;
  MonomialBasis wbasis, ybasis;
  std::vector<Eigen::MatrixXd> Wk, Yk;

  static BasisParam make(int n, int m, int n_sigma, int wdeg, int ydeg) {
    BasisParam b;
    b.n = n;
    b.m = m;
    b.wbasis = MonomialBasis::up_to_degree(n_sigma, wdeg);
    b.ybasis = MonomialBasis::up_to_degree(n_sigma, ydeg);
    b.Wk.assign(b.wbasis.size(), Eigen::MatrixXd::Zero(n, n));
    b.Yk.assign(b.ybasis.size(), Eigen::MatrixXd::Zero(m, n));
    b.Wk[0] = Eigen::MatrixXd::Identity(n, n);
    return b;
  }

  int w_coeffs_per_elem() const { return n * (n + 1) / 2; }
  int coeff_count() const {
    return wbasis.size() * w_coeffs_per_elem() + ybasis.size() * m * n;
  }

  Eigen::VectorXd pack() const {
    Eigen::VectorXd theta(coeff_count());
    int idx = 0;
    for (const auto& W : Wk)
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) theta(idx++) = W(i, j);
    for (const auto& Y : Yk)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) theta(idx++) = Y(i, j);
    return theta;
  }

  void unpack(const Eigen::VectorXd& theta) {
    int idx = 0;
    for (auto& W : Wk)
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
          W(i, j) = theta(idx);
          W(j, i) = theta(idx);
          ++idx;
        }
    for (auto& Y : Yk)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) Y(i, j) = theta(idx++);
  }

  Eigen::MatrixXd W_at(const Eigen::VectorXd& sigma) const {
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k < wbasis.size(); ++k) W += wbasis.eval(k, sigma) * Wk[k];
    return W;
  }
  Eigen::MatrixXd Y_at(const Eigen::VectorXd& sigma) const {
    Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(m, n);
    for (int k = 0; k < ybasis.size(); ++k) Y += ybasis.eval(k, sigma) * Yk[k];
    return Y;
  }
  /// dW/dsigma_i at sigma.
  Eigen::MatrixXd dW_at(const Eigen::VectorXd& sigma, int i) const {
    Eigen::MatrixXd dW = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k < wbasis.size(); ++k)
      dW += wbasis.deval(k, sigma, i) * Wk[k];
    return dW;
  }
};

// ---------------------------------------------------------------------------
// Grid

struct GridSpec {
  Box P;
  int points_per_dim = 41;
  std::optional<Box> rate_bounds;
  int validation_multiplier = 10;

  GridSpec() = default;
  GridSpec(Box box, int pts, int mult = 10)
      : P(std::move(box)), points_per_dim(pts), validation_multiplier(mult) {
    if (points_per_dim < 2) throw ExprError("grid needs >= 2 points per dim");
    if (validation_multiplier < 2)
      throw ExprError("validation grid must be strictly finer");
  }

  std::vector<Eigen::VectorXd> points(int per_dim) const {
    const int d = P.dim();
    std::vector<Eigen::VectorXd> out;
    std::vector<int> idx(d, 0);
    for (;;) {
      Eigen::VectorXd s(d);
      for (int i = 0; i < d; ++i)
        s(i) = P.lo(i) + (P.hi(i) - P.lo(i)) * idx[i] / (per_dim - 1);
      out.push_back(s);
      int i = 0;
      for (; i < d; ++i) {
        if (++idx[i] < per_dim) break;
        idx[i] = 0;
      }
      if (i == d) break;
    }
    return out;
  }

  std::vector<Eigen::VectorXd> synthesis_points() const {
    return points(points_per_dim);
  }
  std::vector<Eigen::VectorXd> validation_points() const {
    return points((points_per_dim - 1) * validation_multiplier + 1);
  }

  /// Vertices of the rate box (a single zero vertex when no box is set).
  std::vector<Eigen::VectorXd> rate_vertices() const {
    if (!rate_bounds.has_value())
      return {Eigen::VectorXd::Zero(P.dim())};
    const Box& r = *rate_bounds;
    std::vector<Eigen::VectorXd> out;
    const int d = r.dim();
    for (int mask = 0; mask < (1 << d); ++mask) {
      Eigen::VectorXd v(d);
      for (int i = 0; i < d; ++i) v(i) = (mask >> i) & 1 ? r.hi(i) : r.lo(i);
      out.push_back(v);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// LMI blocks

/// Symmetric matrix-valued affine map of the coefficient vector, carrying the
/// grid point it was assembled at and the sign it must satisfy.
struct LMIBlock {
  enum class Sign { kNegDef, kPosDef };  // <= -eps I  /  >= eps I

  Eigen::VectorXd sigma;
  Eigen::VectorXd rate;  // sigmadot vertex (zero when W is constant)
  Sign sign = Sign::kNegDef;
  std::string label;

  Eigen::MatrixXd G0;
  std::vector<Eigen::MatrixXd> G;  // value(theta) = G0 + sum_k theta_k G_k

  Eigen::MatrixXd value(const Eigen::VectorXd& theta) const {
    Eigen::MatrixXd V = G0;
    for (int k = 0; k < theta.size(); ++k)
      if (theta(k) != 0.0) V += theta(k) * G[k];
    return V;
  }

  /// Sign-normalized matrix: feasibility means lambda_max(normalized) <= -eps.
  Eigen::MatrixXd normalized(const Eigen::VectorXd& theta) const {
    return sign == Sign::kNegDef ? value(theta) : (-value(theta)).eval();
  }

  /// Margin by which the sign condition holds: -lambda_max(value) for
  /// negative-required blocks, +lambda_min(value) for positive-required.
  double margin(const Eigen::VectorXd& theta) const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(normalized(theta),
                                                      Eigen::EigenvaluesOnly);
    return -es.eigenvalues().maxCoeff();
  }

  /// Builds the affine decomposition by probing a dense assembler.
  static LMIBlock from_builder(
      const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& build,
      int ncoeff, Sign sign, Eigen::VectorXd sigma, Eigen::VectorXd rate,
      std::string label) {
    LMIBlock b;
    b.sigma = std::move(sigma);
    b.rate = std::move(rate);
    b.sign = sign;
    b.label = std::move(label);
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(ncoeff);
    b.G0 = build(zero);
    b.G.reserve(ncoeff);
    for (int k = 0; k < ncoeff; ++k) {
      Eigen::VectorXd ek = zero;
      ek(k) = 1.0;
      Eigen::MatrixXd Gk = build(ek) - b.G0;
      b.G.push_back(0.5 * (Gk + Gk.transpose()));  // kill roundoff asymmetry
    }
    b.G0 = 0.5 * (b.G0 + b.G0.transpose());
    return b;
  }
};

namespace detail {

inline Eigen::MatrixXd stabilization_matrix(const DiffDynamics::Eval& ev,
                                            const BasisParam& bp,
                                            const Eigen::VectorXd& sigma,
                                            const Eigen::VectorXd& rate,
                                            double lambda) {
  const Eigen::MatrixXd W = bp.W_at(sigma);
  const Eigen::MatrixXd Y = bp.Y_at(sigma);
  Eigen::MatrixXd Wdot = Eigen::MatrixXd::Zero(bp.n, bp.n);
  for (int i = 0; i < sigma.size(); ++i)
    if (rate.size() > 0 && rate(i) != 0.0) Wdot += bp.dW_at(sigma, i) * rate(i);
  Eigen::MatrixXd S = -Wdot + ev.A * W + W * ev.A.transpose() + ev.B * Y +
                      Y.transpose() * ev.B.transpose() + 2.0 * lambda * W;
  return 0.5 * (S + S.transpose());
}

inline Eigen::MatrixXd robust_matrix(const DiffDynamics::Eval& ev,
                                     const BasisParam& bp,
                                     const Eigen::VectorXd& sigma,
                                     const Eigen::VectorXd& rate,
                                     double alpha) {
  const int n = bp.n;
  const int p = static_cast<int>(ev.Bw.cols());
  const int q = static_cast<int>(ev.C.rows());
  const Eigen::MatrixXd W = bp.W_at(sigma);
  const Eigen::MatrixXd Y = bp.Y_at(sigma);
  Eigen::MatrixXd Wdot = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < sigma.size(); ++i)
    if (rate.size() > 0 && rate(i) != 0.0) Wdot += bp.dW_at(sigma, i) * rate(i);
  const Eigen::MatrixXd Wcal = -Wdot + ev.A * W + W * ev.A.transpose() +
                               ev.B * Y + Y.transpose() * ev.B.transpose();
  const Eigen::MatrixXd CWDY = ev.C * W + ev.D * Y;

  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + p + q, n + p + q);
  M.topLeftCorner(n, n) = Wcal;
  M.block(0, n, n, p) = ev.Bw;
  M.block(n, 0, p, n) = ev.Bw.transpose();
  M.block(n, n, p, p) = -alpha * Eigen::MatrixXd::Identity(p, p);
  M.block(n, n + p, p, q) = ev.Dw.transpose();
  M.block(n + p, n, q, p) = ev.Dw;
  M.block(0, n + p, n, q) = CWDY.transpose();
  M.block(n + p, 0, q, n) = CWDY;
  M.bottomRightCorner(q, q) = -alpha * Eigen::MatrixXd::Identity(q, q);
  return 0.5 * (M + M.transpose());
}

inline void check_rate_bounds(const BasisParam& basis, const GridSpec& grid) {
  if (!basis.wbasis.constant_only() && !grid.rate_bounds.has_value())
    throw ExprError(
        "non-constant W basis requires rate bounds for the Wdot term");
}

}  // namespace detail

/// Blocks of the stabilization condition at rate lambda, one per grid point
/// (and rate vertex), plus the W(sigma) >= a1 I boundedness blocks.
inline std::vector<LMIBlock> assemble_stabilization(
    const DiffDynamics& dd, const SchedulingMap& smap, const BasisParam& basis,
    const GridSpec& grid, double lambda, double a1 = 1e-3) {
  if (lambda <= 0.0) throw ExprError("stabilization rate must be positive");
  detail::check_rate_bounds(basis, grid);
  const int ncoeff = basis.coeff_count();
  std::vector<LMIBlock> blocks;
  BasisParam probe = basis;
  for (const auto& sigma : grid.synthesis_points()) {
    const auto ev = dd.at_anchor(smap, sigma);
    for (const auto& rate : grid.rate_vertices()) {
      auto build = [&](const Eigen::VectorXd& theta) {
        probe.unpack(theta);
        return detail::stabilization_matrix(ev, probe, sigma, rate, lambda);
      };
      blocks.push_back(LMIBlock::from_builder(build, ncoeff,
                                              LMIBlock::Sign::kNegDef, sigma,
                                              rate, "stab"));
      if (basis.wbasis.constant_only()) break;
    }
    auto build_wlb = [&](const Eigen::VectorXd& theta) {
      probe.unpack(theta);
      return (probe.W_at(sigma) -
              a1 * Eigen::MatrixXd::Identity(basis.n, basis.n))
          .eval();
    };
    blocks.push_back(LMIBlock::from_builder(build_wlb, ncoeff,
                                            LMIBlock::Sign::kPosDef, sigma,
                                            Eigen::VectorXd(), "wlb"));
  }
  return blocks;
}

/// Blocks of the L2-gain condition at level alpha (one (n+p+q) block per grid
/// point and rate vertex), plus the W >= a1 I blocks.
inline std::vector<LMIBlock> assemble_robust(
    const DiffDynamics& dd, const SchedulingMap& smap, const BasisParam& basis,
    const GridSpec& grid, double alpha, double a1 = 1e-3) {
  if (alpha <= 0.0) throw ExprError("gain level must be positive");
  detail::check_rate_bounds(basis, grid);
  const int ncoeff = basis.coeff_count();
  std::vector<LMIBlock> blocks;
  BasisParam probe = basis;
  for (const auto& sigma : grid.synthesis_points()) {
    const auto ev = dd.at_anchor(smap, sigma);
    for (const auto& rate : grid.rate_vertices()) {
      auto build = [&](const Eigen::VectorXd& theta) {
        probe.unpack(theta);
        return detail::robust_matrix(ev, probe, sigma, rate, alpha);
      };
      blocks.push_back(LMIBlock::from_builder(build, ncoeff,
                                              LMIBlock::Sign::kNegDef, sigma,
                                              rate, "l2"));
      if (basis.wbasis.constant_only()) break;
    }
    auto build_wlb = [&](const Eigen::VectorXd& theta) {
      probe.unpack(theta);
      return (probe.W_at(sigma) -
              a1 * Eigen::MatrixXd::Identity(basis.n, basis.n))
          .eval();
    };
    blocks.push_back(LMIBlock::from_builder(build_wlb, ncoeff,
                                            LMIBlock::Sign::kPosDef, sigma,
                                            Eigen::VectorXd(), "wlb"));
  }
  return blocks;
}

// ---------------------------------------------------------------------------
// Certificate

struct Certificate {
  enum class Mode { kStabilization, kRobust };
  Mode mode = Mode::kStabilization;
  double lambda = 0.0;  // stabilization rate
  double alpha = 0.0;   // L2-gain level
  BasisParam param;
  double a1 = 0.0;      // min eig of W over the validation grid
  double a2 = 0.0;      // max eig of W over the validation grid
  double margin = 0.0;  // achieved feasibility margin

  /// Gain K(sigma) = Y(sigma) W(sigma)^{-1}.
  Eigen::MatrixXd gain_at(const Eigen::VectorXd& sigma) const {
    const Eigen::MatrixXd W = param.W_at(sigma);
    return param.Y_at(sigma) * W.inverse();
  }
  /// Metric M(sigma) = W(sigma)^{-1} (SPD wherever W >= a1 I holds).
  Eigen::MatrixXd metric_at(const Eigen::VectorXd& sigma) const {
    return param.W_at(sigma).inverse();
  }
  bool metric_constant() const { return param.wbasis.constant_only(); }
};

/// Theorem-4 gain composition: alpha_tilde = sqrt(a^2 + awx^2 * axz^2).
inline double compose_gain(double alpha, double alpha_wx, double alpha_xz) {
  if (alpha < 0 || alpha_wx < 0 || alpha_xz < 0)
    throw ExprError("compose_gain arguments must be non-negative");
  return std::sqrt(alpha * alpha + alpha_wx * alpha_wx * alpha_xz * alpha_xz);
}

// ---------------------------------------------------------------------------
// Solver

struct SolveOptions {
  double eps_feas = 1e-6;
  int max_iters = 4000;
  /// Keep descending to an interior point instead of stopping at the first
  /// strictly feasible iterate.
  bool maximize_margin = false;
  /// Margin at which the default (non-maximizing) search stops.
  double target_margin = 1e-4;
  /// Coefficients pinned to fixed values: theta[index] = value.
  std::vector<std::pair<int, double>> fixed;
  /// Proportional ties theta[index] = scale * theta[source].
  struct Tie {
    int index;
    int source;
    double scale;
  };
  std::vector<Tie> ties;
  bool verbose = false;
};

struct SolveResult {
  bool feasible = false;
  Eigen::VectorXd theta;
  double margin = 0.0;  // min over blocks at theta
  int iterations = 0;
  // Most violated block at exit (meaningful for infeasible results).
  int worst_block = -1;
  double worst_eigenvalue = 0.0;
  Eigen::VectorXd worst_sigma;
};

namespace detail {

struct Reparam {
  Eigen::MatrixXd P;   // theta = P phi + t0
  Eigen::VectorXd t0;
  std::vector<int> free_index;  // phi slot -> theta slot
};

inline Reparam make_reparam(int ncoeff, const SolveOptions& opts) {
  std::vector<int> kind(ncoeff, 0);  // 0 free, 1 fixed, 2 tied
  Eigen::VectorXd fixed_val = Eigen::VectorXd::Zero(ncoeff);
  std::vector<SolveOptions::Tie> ties(ncoeff);
  for (const auto& [i, v] : opts.fixed) {
    kind.at(i) = 1;
    fixed_val(i) = v;
  }
  for (const auto& t : opts.ties) {
    kind.at(t.index) = 2;
    ties.at(t.index) = t;
  }
  Reparam r;
  for (int i = 0; i < ncoeff; ++i)
    if (kind[i] == 0) r.free_index.push_back(i);
  const int nfree = static_cast<int>(r.free_index.size());
  r.P = Eigen::MatrixXd::Zero(ncoeff, nfree);
  r.t0 = fixed_val;
  std::map<int, int> col;
  for (int j = 0; j < nfree; ++j) col[r.free_index[j]] = j;
  for (int j = 0; j < nfree; ++j) r.P(r.free_index[j], j) = 1.0;
  for (int i = 0; i < ncoeff; ++i) {
    if (kind[i] != 2) continue;
    const auto& t = ties[i];
    if (kind.at(t.source) != 0)
      throw ExprError("tie source coefficient must be free");
    r.P(i, col.at(t.source)) = t.scale;
  }
  return r;
}

struct EigCache {
  double maxeig;
  Eigen::VectorXd eigs;
  Eigen::MatrixXd vecs;
};

}  // namespace detail

/// Semidefinite feasibility by smoothed max-eigenvalue descent.
///
/// Minimizes f(theta) = max over blocks of lambda_max of the sign-normalized
/// block value, through the convex smooth surrogate
/// F_tau = tau log sum_{blocks, eigs} exp(lambda / tau), annealing tau.
/// Deterministic given the options. Infeasibility is reported when the
/// descent converges with f above -eps_feas.
inline SolveResult solve(const std::vector<LMIBlock>& blocks,
                         const SolveOptions& opts = {},
                         const Eigen::VectorXd& theta0 = Eigen::VectorXd()) {
  if (blocks.empty()) throw ExprError("solve requires at least one block");
  const int ncoeff = static_cast<int>(blocks.front().G.size());
  const auto rep = detail::make_reparam(ncoeff, opts);
  const int nfree = static_cast<int>(rep.free_index.size());

  Eigen::VectorXd phi = Eigen::VectorXd::Zero(nfree);
  if (theta0.size() == ncoeff)
    for (int j = 0; j < nfree; ++j) phi(j) = theta0(rep.free_index[j]);

  auto theta_of = [&](const Eigen::VectorXd& ph) {
    return (rep.P * ph + rep.t0).eval();
  };

  auto eval_blocks = [&](const Eigen::VectorXd& theta,
                         std::vector<detail::EigCache>* cache) {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
          blocks[i].normalized(theta));
      if (cache) {
        (*cache)[i].eigs = es.eigenvalues();
        (*cache)[i].vecs = es.eigenvectors();
        (*cache)[i].maxeig = es.eigenvalues().maxCoeff();
      }
      worst = std::max(worst, es.eigenvalues().maxCoeff());
    }
    return worst;
  };

  auto f_only = [&](const Eigen::VectorXd& ph) {
    return eval_blocks(theta_of(ph), nullptr);
  };

  std::vector<detail::EigCache> cache(blocks.size());
  double f = eval_blocks(theta_of(phi), &cache);
  int iters = 0;
  const double stop_at =
      opts.maximize_margin ? -std::numeric_limits<double>::infinity()
                           : -std::max(opts.target_margin, 10 * opts.eps_feas);

  // Smoothed objective F_tau = tau log sum exp(lambda / tau) >= f; smooth and
  // convex, so plain Armijo descent converges for each tau level.
  auto smoothed = [&](const std::vector<detail::EigCache>& cc, double shift,
                      double tau) {
    double s = 0.0;
    for (const auto& c : cc)
      for (int j = 0; j < c.eigs.size(); ++j)
        s += std::exp((c.eigs(j) - shift) / tau);
    return shift + tau * std::log(s);
  };
  auto smoothed_at = [&](const Eigen::VectorXd& ph, double tau) {
    std::vector<detail::EigCache> cc(blocks.size());
    const double fv = eval_blocks(theta_of(ph), &cc);
    return smoothed(cc, fv, tau);
  };

  for (double tau : {1.0, 0.3, 0.1, 0.03, 0.01, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5,
                     1e-5, 3e-6, 1e-6, 1e-7}) {
    if (f <= stop_at || iters >= opts.max_iters) break;
    double step = 1.0;
    while (iters < opts.max_iters && f > stop_at) {
      // Gradient of F_tau via the eigenvalue weights.
      double wsum = 0.0;
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(nfree);
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& c = cache[i];
        const double sgn =
            blocks[i].sign == LMIBlock::Sign::kNegDef ? 1.0 : -1.0;
        for (int j = 0; j < c.eigs.size(); ++j) {
          const double wj = std::exp((c.eigs(j) - f) / tau);
          if (wj < 1e-14) continue;
          wsum += wj;
          const Eigen::VectorXd v = c.vecs.col(j);
          // d lambda_j / d theta_k = v^T G_k v, mapped through the reparam
          Eigen::VectorXd gtheta(ncoeff);
          for (int k = 0; k < ncoeff; ++k)
            gtheta(k) = sgn * v.dot(blocks[i].G[k] * v);
          grad += wj * (rep.P.transpose() * gtheta);
        }
      }
      grad /= std::max(wsum, 1e-300);
      const double gnorm = grad.norm();
      const double Fcur = smoothed(cache, f, tau);
      if (gnorm < 1e-12 * std::max(1.0, std::abs(Fcur))) break;

      bool improved = false;
      double trial = std::max(step, 1e-12 / gnorm);
      for (int ls = 0; ls < 50; ++ls) {
        Eigen::VectorXd cand = phi - trial * grad;
        const double Fc = smoothed_at(cand, tau);
        if (Fc <= Fcur - 1e-4 * trial * gnorm * gnorm) {
          phi = cand;
          f = eval_blocks(theta_of(phi), &cache);
          step = trial * 2.0;  // carry the successful step forward
          improved = true;
          break;
        }
        trial *= 0.5;
      }
      ++iters;
      if (!improved) break;  // converged at this smoothing level
      if (opts.verbose && iters % 100 == 0)
        std::cerr << "solve iter " << iters << " f=" << f << " tau=" << tau
                  << "\n";
    }
  }

  SolveResult res;
  res.iterations = iters;
  res.theta = theta_of(phi);
  res.margin = -f;
  res.feasible = res.margin >= opts.eps_feas;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (cache[i].maxeig > worst) {
      worst = cache[i].maxeig;
      res.worst_block = static_cast<int>(i);
      res.worst_eigenvalue = cache[i].maxeig;
      res.worst_sigma = blocks[i].sigma;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Dense a-posteriori validation

struct ValidationReport {
  double min_margin = 0.0;
  Eigen::VectorXd worst_sigma;
  double a1 = 0.0, a2 = 0.0;      // eigenvalue range of W over the dense grid
  double lipschitz_estimate = 0.0;  // max |d margin| between neighbors
  bool accepted = false;
};

/// Evaluates every block condition of the certificate's mode on the dense
/// validation grid and returns the minimum eigenvalue margin. A certificate
/// is accepted iff the margin is positive and W stays above its a1 bound.
inline ValidationReport validate(const Certificate& cert,
                                 const DiffDynamics& dd,
                                 const SchedulingMap& smap,
                                 const GridSpec& grid, double a1_bound = 1e-3) {
  ValidationReport rep;
  rep.min_margin = std::numeric_limits<double>::infinity();
  rep.a1 = std::numeric_limits<double>::infinity();
  rep.a2 = -std::numeric_limits<double>::infinity();
  double prev_margin = std::numeric_limits<double>::quiet_NaN();
  double prev_sigma0 = 0.0;
  for (const auto& sigma : grid.validation_points()) {
    const auto ev = dd.at_anchor(smap, sigma);
    double here = std::numeric_limits<double>::infinity();
    for (const auto& rate : grid.rate_vertices()) {
      Eigen::MatrixXd M =
          cert.mode == Certificate::Mode::kStabilization
              ? detail::stabilization_matrix(ev, cert.param, sigma, rate,
                                             cert.lambda)
              : detail::robust_matrix(ev, cert.param, sigma, rate, cert.alpha);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M,
                                                        Eigen::EigenvaluesOnly);
      here = std::min(here, -es.eigenvalues().maxCoeff());
      if (cert.param.wbasis.constant_only()) break;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ew(cert.param.W_at(sigma),
                                                      Eigen::EigenvaluesOnly);
    rep.a1 = std::min(rep.a1, ew.eigenvalues().minCoeff());
    rep.a2 = std::max(rep.a2, ew.eigenvalues().maxCoeff());
    here = std::min(here, ew.eigenvalues().minCoeff() - a1_bound);
    if (here < rep.min_margin) {
      rep.min_margin = here;
      rep.worst_sigma = sigma;
    }
    if (!std::isnan(prev_margin) && sigma.size() == 1) {
      const double ds = std::abs(sigma(0) - prev_sigma0);
      if (ds > 0)
        rep.lipschitz_estimate =
            std::max(rep.lipschitz_estimate, std::abs(here - prev_margin) / ds);
    }
    prev_margin = here;
    if (sigma.size() == 1) prev_sigma0 = sigma(0);
  }
  rep.accepted = rep.min_margin > 0.0;
  return rep;
}

/// Packages a solver result into a validated certificate.
inline Certificate make_certificate(Certificate::Mode mode, double level,
                                    const BasisParam& basis,
                                    const Eigen::VectorXd& theta,
                                    const DiffDynamics& dd,
                                    const SchedulingMap& smap,
                                    const GridSpec& grid) {
  Certificate cert;
  cert.mode = mode;
  (mode == Certificate::Mode::kStabilization ? cert.lambda : cert.alpha) =
      level;
  cert.param = basis;
  cert.param.unpack(theta);
  const auto rep = validate(cert, dd, smap, grid);
  cert.a1 = rep.a1;
  cert.a2 = rep.a2;
  cert.margin = rep.min_margin;
  return cert;
}

/// Certificate pinned from explicit gains: W constant, Y_k = K_k W. Used to
/// realize closed-form controllers; the margin is whatever validation yields.
inline Certificate certificate_from_gains(
    const Eigen::MatrixXd& W, const std::vector<Eigen::MatrixXd>& K_coeffs,
    int n_sigma, Certificate::Mode mode, double level) {
  Certificate cert;
  cert.mode = mode;
  (mode == Certificate::Mode::kStabilization ? cert.lambda : cert.alpha) =
      level;
  const int n = static_cast<int>(W.rows());
  const int m = static_cast<int>(K_coeffs.front().rows());
  const int ydeg = static_cast<int>(K_coeffs.size()) - 1;
  cert.param = BasisParam::make(n, m, n_sigma, 0, ydeg);
  cert.param.Wk[0] = W;
  for (std::size_t k = 0; k < K_coeffs.size(); ++k)
    cert.param.Yk[k] = K_coeffs[k] * W;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ew(W, Eigen::EigenvaluesOnly);
  cert.a1 = ew.eigenvalues().minCoeff();
  cert.a2 = ew.eigenvalues().maxCoeff();
  return cert;
}

}  // namespace vccm
