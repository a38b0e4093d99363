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
 * @file realization.hpp
 * @brief Executable control laws from differential gain certificates.
 *
 * The feedback value is the endpoint of the control path
 *
 *   nu(s) = mu* + int_0^s K(c(tau), x, nu(tau)) dc/ds dtau,
 *
 * integrated along the geodesic c from the virtual target chi* to the
 * measured state x. The gain's scheduling arguments are evaluated at the
 * moving path point (chi = c(tau), x fixed, mu = nu(tau)); schedules that
 * only read the true state are therefore frozen along the path and the
 * integral collapses to mu* + K(x - chi*).
 *
 * The feedforward mu* solves fhat(chi*, x, mu, 0) = xdot* in least squares,
 * anchored at u* so that on-reference inputs pass through unchanged. When the
 * system is inconsistent (exact feedforward does not exist), the residual is
 * reported and the virtual target generator chidot* = fhat(chi*, x, mu*)
 * carries the slack: chi* then converges to x* instead of being pinned to it.
 */

#include "vccm/geodesic.hpp"
#include "vccm/synthesis.hpp"

namespace vccm {

// ---------------------------------------------------------------------------
// Gain and metric functions backed by a certificate + scheduling map

/// Differential gain K(chi, x, mu) realized from a certificate; scheduling
/// through sigma = psi(chi, x).
struct GainFn {
  std::function<Eigen::MatrixXd(const Eigen::VectorXd& chi,
                                const Eigen::VectorXd& x,
                                const Eigen::VectorXd& mu)>
      eval;
  /// True when the schedule ignores chi: K is frozen along a control path.
  bool constant_along_path = false;
};

inline GainFn make_gain(const Certificate& cert, const SchedulingMap& smap) {
  GainFn g;
  g.constant_along_path = smap.constant_along_path();
  if (cert.param.wbasis.constant_only()) {
    // K(sigma) = sum_k phi_k(sigma) Y_k W^{-1}: precompute the pieces
    const Eigen::MatrixXd Winv = cert.param.Wk[0].inverse();
    std::vector<Eigen::MatrixXd> Kk;
    Kk.reserve(cert.param.Yk.size());
    for (const auto& Y : cert.param.Yk) Kk.push_back(Y * Winv);
    const MonomialBasis basis = cert.param.ybasis;
    const SchedulingMap* sm = &smap;
    g.eval = [basis, Kk, sm](const Eigen::VectorXd& chi,
                             const Eigen::VectorXd& x,
                             const Eigen::VectorXd&) {
      const Eigen::VectorXd sigma = sm->psi_at(chi, x);
      Eigen::MatrixXd K = Eigen::MatrixXd::Zero(Kk[0].rows(), Kk[0].cols());
      for (std::size_t k = 0; k < Kk.size(); ++k)
        K += basis.eval(static_cast<int>(k), sigma) * Kk[k];
      return K;
    };
  } else {
    const Certificate* c = &cert;
    const SchedulingMap* sm = &smap;
    g.eval = [c, sm](const Eigen::VectorXd& chi, const Eigen::VectorXd& x,
                     const Eigen::VectorXd&) {
      return c->gain_at(sm->psi_at(chi, x));
    };
  }
  return g;
}

/// Metric M(chi, x) = W(psi(chi, x))^{-1} with its chi-derivatives for the
/// geodesic solver.
inline MetricFn make_metric(const Certificate& cert,
                            const SchedulingMap& smap) {
  MetricFn m;
  m.constant_in_chi =
      cert.param.wbasis.constant_only() || smap.constant_along_path();
  if (cert.param.wbasis.constant_only()) {
    const Eigen::MatrixXd M0 = cert.param.Wk[0].inverse();
    m.value = [M0](const Eigen::VectorXd&, const Eigen::VectorXd&) {
      return M0;
    };
    return m;
  }
  // State-dependent dual: dM/dchi_k = -M (dW/dchi_k) M with
  // dW/dchi_k = sum_i dW/dsigma_i * dpsi_i/dchi_k.
  auto dpsi = std::make_shared<MatrixField>(jacobian(smap.psi, "chi"));
  const Certificate* c = &cert;
  const SchedulingMap* sm = &smap;
  m.value = [c, sm](const Eigen::VectorXd& chi, const Eigen::VectorXd& x) {
    return c->metric_at(sm->psi_at(chi, x));
  };
  m.dchi = [c, sm, dpsi](const Eigen::VectorXd& chi, const Eigen::VectorXd& x,
                         int k) {
    const Eigen::VectorXd sigma = sm->psi_at(chi, x);
    const Eigen::MatrixXd M = c->metric_at(sigma);
    const Eigen::MatrixXd J = dpsi->eval({{"chi", chi}, {"x", x}});
    Eigen::MatrixXd dW =
        Eigen::MatrixXd::Zero(c->param.n, c->param.n);
    for (int i = 0; i < sigma.size(); ++i)
      if (J(i, k) != 0.0) dW += c->param.dW_at(sigma, i) * J(i, k);
    return (-M * dW * M).eval();
  };
  return m;
}

// ---------------------------------------------------------------------------
// Control path integration

/// Endpoint nu(1) of the control path along `path`, with nu(0) = mu*.
/// Fixed-step classic 4th-order integration with `steps` substeps per path
/// segment; K must be at most affine in mu for the path ODE to be well posed.
inline Eigen::VectorXd integrate_control_path(
    const std::function<Eigen::MatrixXd(const Eigen::VectorXd&,
                                        const Eigen::VectorXd&,
                                        const Eigen::VectorXd&)>& K,
    const Path& path, const Eigen::VectorXd& x, const Eigen::VectorXd& mu_star,
    int steps_per_segment = 16) {
  if (steps_per_segment < 1)
    throw std::invalid_argument("steps_per_segment must be positive");
  const int N = path.segments();
  Eigen::VectorXd nu = mu_star;
  for (int i = 0; i < N; ++i) {
    const Eigen::VectorXd c0 = path.node(i);
    const Eigen::VectorXd dc = path.node(i + 1) - c0;        // over ds = 1/N
    const Eigen::VectorXd slope_s = static_cast<double>(N) * dc;  // dc/ds
    const double h = 1.0 / (N * steps_per_segment);           // step in s
    for (int j = 0; j < steps_per_segment; ++j) {
      const double a0 = static_cast<double>(j) / steps_per_segment;
      auto chi_at = [&](double frac) -> Eigen::VectorXd {
        return c0 + (a0 + frac / steps_per_segment) * dc;
      };
      const Eigen::VectorXd k1 = K(chi_at(0.0), x, nu) * slope_s;
      const Eigen::VectorXd k2 =
          K(chi_at(0.5), x, nu + 0.5 * h * k1) * slope_s;
      const Eigen::VectorXd k3 =
          K(chi_at(0.5), x, nu + 0.5 * h * k2) * slope_s;
      const Eigen::VectorXd k4 = K(chi_at(1.0), x, nu + h * k3) * slope_s;
      nu += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  }
  return nu;
}

// ---------------------------------------------------------------------------
// Feedforward

struct FeedforwardSpec {
  enum class Mode { kLinearSolve, kUserExpression };
  Mode mode = Mode::kLinearSolve;
  /// User-expression feedforward over groups (chistar, x, xstar, ustar).
  VectorField kappa_ff;

  static FeedforwardSpec linear_solve() { return {}; }
  static FeedforwardSpec user(VectorField k) {
    FeedforwardSpec s;
    s.mode = Mode::kUserExpression;
    s.kappa_ff = std::move(k);
    return s;
  }
};

struct FeedforwardResult {
  Eigen::VectorXd mu_star;
  double residual = 0.0;  // |fhat(chi*, x, mu*, 0) - xdot*|_inf
  bool exact = true;      // false signals that A2 fails at this point
};

/// Precomputed feedforward machinery for one virtual model: the symbolic
/// input Jacobian Bhat = dfhat/dmu and the affinity check, done once.
class FeedforwardContext {
 public:
  FeedforwardContext(const VirtualModel& v, FeedforwardSpec spec)
      : model_(&v), spec_(std::move(spec)), bhat_(jacobian(v.fhat, "mu")) {
    if (spec_.mode == FeedforwardSpec::Mode::kLinearSolve)
      require_affine_in_mu(v);
  }

  const VirtualModel& model() const { return *model_; }
  const FeedforwardSpec& spec() const { return spec_; }

  /// Virtual feedforward mu* anchored at u*:
  ///   mu* = u* + Bhat^+ (xdot* - fhat(chi*, x, u*, w*)),
  /// the least-squares solution of fhat(chi*, x, mu, w*) = xdot*. At
  /// chi* = x = x* this returns u* exactly (consistency clause). A nonzero
  /// residual reports that no exact feedforward exists here and the VTR must
  /// absorb the mismatch.
  FeedforwardResult at(const Eigen::VectorXd& chi_star,
                       const Eigen::VectorXd& x,
                       const TargetBehavior::Sample& tgt) const {
    FeedforwardResult out;
    const VirtualModel& v = *model_;
    const Eigen::VectorXd& ws = tgt.wstar;
    if (spec_.mode == FeedforwardSpec::Mode::kUserExpression) {
      out.mu_star = spec_.kappa_ff.eval({{"chistar", chi_star},
                                         {"x", x},
                                         {"xstar", tgt.xstar},
                                         {"ustar", tgt.ustar}});
      out.residual = (v.fhat_at(chi_star, x, out.mu_star, ws) - tgt.xdotstar)
                         .cwiseAbs()
                         .maxCoeff();
      out.exact = out.residual <= 1e-9;
      return out;
    }
    SlotPacker pk(v.fhat.env());
    pk.set("chi", chi_star).set("x", x).set("mu", tgt.ustar).set("w", ws);
    const Eigen::MatrixXd Bhat = bhat_.eval_slots(pk.slots());
    const Eigen::VectorXd gap =
        tgt.xdotstar - v.fhat_at(chi_star, x, tgt.ustar, ws);
    const Eigen::VectorXd corr =
        Bhat.completeOrthogonalDecomposition().solve(gap);
    out.mu_star = tgt.ustar + corr;
    out.residual = (v.fhat_at(chi_star, x, out.mu_star, ws) - tgt.xdotstar)
                       .cwiseAbs()
                       .maxCoeff();
    out.exact = out.residual <= 1e-9;
    return out;
  }

 private:
  static void require_affine_in_mu(const VirtualModel& v) {
    const auto& mu_names = v.fhat.env().find("mu").names;
    for (const auto& e : v.fhat.entries())
      for (const auto& m1 : mu_names)
        for (const auto& m2 : mu_names)
          if (!diff(diff(e, m1), m2).is_constant(0.0))
            throw ExprError(
                "linear-solve feedforward requires fhat affine in mu");
  }

  const VirtualModel* model_;
  FeedforwardSpec spec_;
  MatrixField bhat_;
};

/// One-shot convenience wrapper around FeedforwardContext.
inline FeedforwardResult feedforward(const VirtualModel& v,
                                     const FeedforwardSpec& spec,
                                     const Eigen::VectorXd& chi_star,
                                     const Eigen::VectorXd& x,
                                     const TargetBehavior::Sample& tgt) {
  return FeedforwardContext(v, spec).at(chi_star, x, tgt);
}

// ---------------------------------------------------------------------------
// Virtual target generator

struct VTRState {
  Eigen::VectorXd chi_star;  // current virtual target
  Eigen::VectorXd mu_star;   // last feedforward value
  double t = 0.0;

  /// Initial condition chi*(0) = x*(0).
  static VTRState init(const Eigen::VectorXd& xstar0, int m) {
    VTRState s;
    s.chi_star = xstar0;
    s.mu_star = Eigen::VectorXd::Zero(m);
    return s;
  }
};

/// One 4th-order step of chidot* = fhat(chi*, x, kappa_ff(chi*, ...), 0),
/// holding x and the target sample fixed across the step. The feedforward is
/// re-evaluated at every stage point.
inline VTRState vtr_step(const FeedforwardContext& ff, const VTRState& st,
                         const Eigen::VectorXd& x,
                         const TargetBehavior::Sample& tgt, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("vtr_step requires dt > 0");
  const VirtualModel& v = ff.model();
  auto rhs = [&](const Eigen::VectorXd& chi) {
    return v.fhat_at(chi, x, ff.at(chi, x, tgt).mu_star, tgt.wstar);
  };
  const Eigen::VectorXd k1 = rhs(st.chi_star);
  const Eigen::VectorXd k2 = rhs(st.chi_star + 0.5 * dt * k1);
  const Eigen::VectorXd k3 = rhs(st.chi_star + 0.5 * dt * k2);
  const Eigen::VectorXd k4 = rhs(st.chi_star + dt * k3);
  VTRState out = st;
  out.chi_star = st.chi_star + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  out.mu_star = ff.at(st.chi_star, x, tgt).mu_star;
  out.t = st.t + dt;
  return out;
}

/// One-shot convenience wrapper.
inline VTRState vtr_step(const VirtualModel& v, const FeedforwardSpec& spec,
                         const VTRState& st, const Eigen::VectorXd& x,
                         const TargetBehavior::Sample& tgt, double dt) {
  return vtr_step(FeedforwardContext(v, spec), st, x, tgt, dt);
}

// ---------------------------------------------------------------------------
// Full controller

struct ControllerOptions {
  GeodesicOptions geodesic;
  int path_steps_per_segment = 16;
};

struct ControllerDiag {
  double geodesic_energy = 0.0;
  double geodesic_grad_norm = 0.0;
  bool geodesic_converged = true;
  double ff_residual = 0.0;
  bool warn = false;
};

struct ControllerOutput {
  Eigen::VectorXd u;
  VTRState state;
  ControllerDiag diag;
};

/// Certificate-backed realization around a virtual target generator:
/// feedforward, geodesic from chi* to x under M(., x), control path integral,
/// then one VTR step. True realization: chi = x at the path's far endpoint
/// and u = nu(1).
class Controller {
 public:
  Controller(Certificate cert, SchedulingMap smap, VirtualModel v,
             FeedforwardSpec spec, ControllerOptions opts = {})
      : cert_(std::move(cert)),
        smap_(std::move(smap)),
        model_(std::make_unique<VirtualModel>(std::move(v))),
        ff_(*model_, std::move(spec)),
        opts_(opts),
        gain_(make_gain(cert_, smap_)),
        metric_(make_metric(cert_, smap_)) {}

  // gain_/metric_ capture addresses of cert_/smap_
  Controller(const Controller&) = delete;
  Controller& operator=(const Controller&) = delete;
  Controller(Controller&&) = delete;
  Controller& operator=(Controller&&) = delete;

  const Certificate& certificate() const { return cert_; }
  const VirtualModel& model() const { return *model_; }

  ControllerOutput step(const VTRState& st, const Eigen::VectorXd& x,
                        const TargetBehavior::Sample& tgt, double dt) const {
    ControllerOutput out;
    const auto ff = ff_.at(st.chi_star, x, tgt);
    out.diag.ff_residual = ff.residual;

    if (gain_.constant_along_path) {
      // Frozen schedule: the path integral telescopes to mu* + K (x - chi*).
      const Eigen::MatrixXd K = gain_.eval(x, x, ff.mu_star);
      out.u = ff.mu_star + K * (x - st.chi_star);
      out.diag.geodesic_energy =
          (x - st.chi_star).dot(metric_.value(x, x) * (x - st.chi_star));
    } else {
      const auto geo =
          solve_geodesic(metric_, x, st.chi_star, x, opts_.geodesic);
      out.diag.geodesic_energy = geo.energy;
      out.diag.geodesic_grad_norm = geo.grad_norm;
      out.diag.geodesic_converged = geo.converged;
      out.diag.warn = !geo.converged;
      out.u = integrate_control_path(gain_.eval, geo.path, x, ff.mu_star,
                                     opts_.path_steps_per_segment);
    }
    out.state = vtr_step(ff_, st, x, tgt, dt);
    return out;
  }

 private:
  Certificate cert_;
  SchedulingMap smap_;
  std::unique_ptr<VirtualModel> model_;  // stable address for the ff context
  FeedforwardContext ff_;
  ControllerOptions opts_;
  GainFn gain_;
  MetricFn metric_;
};

}  // namespace vccm
