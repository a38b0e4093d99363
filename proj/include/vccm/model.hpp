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
 * @file model.hpp
 * @brief Plant, virtual-system, target-behavior and differential-dynamics
 * representations, plus the embedding consistency checks.
 *
 * A plant is xdot = f(x, u, w), z = h(x, u, w). A virtual system rides on the
 * plant state as an exogenous input: chidot = fhat(chi, x, mu, w),
 * zeta = hhat(chi, x, mu, w), and must coincide with the plant on the diagonal
 * fhat(x, x, u, w) = f(x, u, w). Differential dynamics are the Jacobians of
 * (fhat, hhat) in (chi, mu, w), evaluated along scheduling points.
 */

#include <optional>
#include <random>

#include "vccm/field.hpp"

namespace vccm {

struct Box {
  Eigen::VectorXd lo, hi;

  int dim() const { return static_cast<int>(lo.size()); }

  static Box cube(int dim, double lo, double hi) {
    Box b;
    b.lo = Eigen::VectorXd::Constant(dim, lo);
    b.hi = Eigen::VectorXd::Constant(dim, hi);
    return b;
  }

  Eigen::VectorXd clamp(const Eigen::VectorXd& v, bool* clamped = nullptr) const {
    Eigen::VectorXd out = v;
    bool hit = false;
    for (int i = 0; i < dim(); ++i) {
      if (out(i) < lo(i)) { out(i) = lo(i); hit = true; }
      if (out(i) > hi(i)) { out(i) = hi(i); hit = true; }
    }
    if (clamped) *clamped = hit;
    return out;
  }

  bool contains(const Eigen::VectorXd& v) const {
    for (int i = 0; i < dim(); ++i)
      if (v(i) < lo(i) || v(i) > hi(i)) return false;
    return true;
  }

  Eigen::VectorXd sample(std::mt19937& rng) const {
    Eigen::VectorXd v(dim());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < dim(); ++i) v(i) = lo(i) + (hi(i) - lo(i)) * u(rng);
    return v;
  }
};

// ---------------------------------------------------------------------------

/// xdot = f(x, u, w), z = h(x, u, w) with declared dimensions.
struct PlantModel {
  int n = 0, m = 0, p = 0, q = 0;
  VectorField f;  // groups (x, u, w) -> R^n
  VectorField h;  // groups (x, u, w) -> R^q

  static VariableEnv plant_env(int n, int m, int p) {
    VariableEnv env;
    env.add_group("x", n);
    env.add_group("u", m);
    env.add_group("w", p);
    return env;
  }

  PlantModel() = default;
  PlantModel(int n, int m, int p, int q, VectorField f_in, VectorField h_in)
      : n(n), m(m), p(p), q(q), f(std::move(f_in)), h(std::move(h_in)) {
    if (f.dim() != n) throw ExprError("plant f has wrong output dimension");
    if (h.dim() != q) throw ExprError("plant h has wrong output dimension");
  }

  Eigen::VectorXd f_at(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                       const Eigen::VectorXd& w) const {
    return f.eval({{"x", x}, {"u", u}, {"w", w}});
  }
  Eigen::VectorXd h_at(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                       const Eigen::VectorXd& w) const {
    return h.eval({{"x", x}, {"u", u}, {"w", w}});
  }
};

/// Virtual system over (chi, x, mu, w) embedding a plant.
struct VirtualModel {
  PlantModel plant;
  VectorField fhat;  // groups (chi, x, mu, w) -> R^n
  VectorField hhat;  // groups (chi, x, mu, w) -> R^q

  static VariableEnv virtual_env(int n, int m, int p) {
    VariableEnv env;
    env.add_group("chi", n);
    env.add_group("x", n);
    env.add_group("mu", m);
    env.add_group("w", p);
    return env;
  }

  Eigen::VectorXd fhat_at(const Eigen::VectorXd& chi, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& mu,
                          const Eigen::VectorXd& w) const {
    return fhat.eval({{"chi", chi}, {"x", x}, {"mu", mu}, {"w", w}});
  }
  Eigen::VectorXd hhat_at(const Eigen::VectorXd& chi, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& mu,
                          const Eigen::VectorXd& w) const {
    return hhat.eval({{"chi", chi}, {"x", x}, {"mu", mu}, {"w", w}});
  }
};

// ---------------------------------------------------------------------------

/// Reference family: either a trajectory generator t -> (x*, u*) with w* = 0,
/// or an equilibrium family sigma -> (x_e, u_e, z_e) (optionally with the
/// exogenous input level w_e(sigma) that sustains the equilibrium).
struct TargetBehavior {
  enum class Mode { kTrajectory, kEquilibriumFamily };
  Mode mode = Mode::kEquilibriumFamily;

  // Trajectory mode: fields over the scalar group "t".
  VectorField xstar, ustar;
  std::optional<VectorField> xdotstar;  // analytic when available
  std::optional<VectorField> wstar;     // nominal exogenous input (default 0)

  // Family mode: fields over group "sigma" (family parameter, n_fam dims).
  VectorField xe, ue, ze, we;
  Box family_box;                  // admissible family parameters
  VectorField psi_family;          // x -> sigma (equilibrium substitution)

  static VariableEnv family_env(int n_fam) {
    VariableEnv env;
    env.add_group("sigma", n_fam);
    return env;
  }
  static VariableEnv time_env() {
    VariableEnv env;
    env.add_group("t", 1, /*indexed=*/false);
    return env;
  }

  int n_fam() const { return xe.env().has_group("sigma") ? xe.env().group_dim("sigma") : 0; }

  Eigen::VectorXd xe_at(const Eigen::VectorXd& s) const { return xe.eval({{"sigma", s}}); }
  Eigen::VectorXd ue_at(const Eigen::VectorXd& s) const { return ue.eval({{"sigma", s}}); }
  Eigen::VectorXd ze_at(const Eigen::VectorXd& s) const { return ze.eval({{"sigma", s}}); }
  Eigen::VectorXd we_at(const Eigen::VectorXd& s) const { return we.eval({{"sigma", s}}); }

  struct Sample {
    Eigen::VectorXd xstar, ustar, xdotstar, wstar;

    static Sample setpoint(const Eigen::VectorXd& xe, const Eigen::VectorXd& ue,
                           const Eigen::VectorXd& we) {
      return Sample{xe, ue, Eigen::VectorXd::Zero(xe.size()), we};
    }
  };

  /// Trajectory-mode sample at time t; xdot* falls back to central
  /// differences when no analytic derivative was supplied.
  Sample at_time(double t, int p) const {
    Sample s;
    Eigen::VectorXd tv = Eigen::VectorXd::Constant(1, t);
    s.xstar = xstar.eval({{"t", tv}});
    s.ustar = ustar.eval({{"t", tv}});
    if (xdotstar.has_value()) {
      s.xdotstar = xdotstar->eval({{"t", tv}});
    } else {
      const double h = 1e-6;
      Eigen::VectorXd tp = Eigen::VectorXd::Constant(1, t + h);
      Eigen::VectorXd tm = Eigen::VectorXd::Constant(1, t - h);
      s.xdotstar = (xstar.eval({{"t", tp}}) - xstar.eval({{"t", tm}})) / (2 * h);
    }
    s.wstar = wstar.has_value() ? wstar->eval({{"t", tv}})
                                : Eigen::VectorXd::Zero(p);
    return s;
  }

  /// Family-mode sample at parameter sigma.
  Sample at_family(const Eigen::VectorXd& s) const {
    return Sample::setpoint(xe_at(s), ue_at(s), we_at(s));
  }

  static TargetBehavior trajectory(VectorField xs, VectorField us,
                                   std::optional<VectorField> xds = {},
                                   std::optional<VectorField> ws = {}) {
    TargetBehavior t;
    t.mode = Mode::kTrajectory;
    t.xstar = std::move(xs);
    t.ustar = std::move(us);
    t.xdotstar = std::move(xds);
    t.wstar = std::move(ws);
    return t;
  }

  static TargetBehavior family(VectorField xe, VectorField ue, VectorField ze,
                               VectorField we, Box box, VectorField psi_fam) {
    TargetBehavior t;
    t.mode = Mode::kEquilibriumFamily;
    t.xe = std::move(xe);
    t.ue = std::move(ue);
    t.ze = std::move(ze);
    t.we = std::move(we);
    t.family_box = std::move(box);
    t.psi_family = std::move(psi_fam);
    return t;
  }
};

// ---------------------------------------------------------------------------

/// Scheduling map sigma = psi(.) with its admissible box P.
///
/// psi is declared over (chi, x): entries that read chi schedule on the
/// virtual state (and therefore on the moving path point inside the control
/// path integral); entries that read x schedule on the exogenous true state
/// and stay frozen along a path. On the diagonal chi = x both agree with the
/// plant-level scheduling psi(x).
///
/// `anchor` maps a grid point sigma in P to a representative full point
/// (chi, x, mu, w) at which the differential dynamics reproduce the scheduled
/// coefficient matrices; it is what lets the pointwise LMIs be assembled on a
/// sigma grid.
struct SchedulingMap {
  VectorField psi;  // groups (chi, x) -> R^{n_sigma}
  Box P;
  std::optional<Box> rate_bounds;  // bounds on sigmadot, per coordinate

  struct AnchorPoint {
    Eigen::VectorXd chi, x, mu, w;
  };
  std::function<AnchorPoint(const Eigen::VectorXd&)> anchor;

  int n_sigma() const { return P.dim(); }

  Eigen::VectorXd psi_at(const Eigen::VectorXd& chi,
                         const Eigen::VectorXd& x) const {
    return psi.eval({{"chi", chi}, {"x", x}});
  }
  /// Plant-level scheduling: evaluate on the diagonal chi = x.
  Eigen::VectorXd psi_state(const Eigen::VectorXd& x) const {
    return psi_at(x, x);
  }
  /// True when no psi entry reads the chi group; then the schedule (and any
  /// basis-parametrized gain or metric) is constant along a control path.
  bool constant_along_path() const {
    for (const auto& e : psi.entries())
      for (const auto& name : psi.env().find("chi").names)
        if (depends_on(e, name)) return false;
    return true;
  }

  /// Plant-level scheduling field over x only (the diagonal chi = x).
  VectorField psi_state_field() const {
    const auto& chi_names = psi.env().find("chi").names;
    const auto& x_names = psi.env().find("x").names;
    std::map<std::string, Expr> diag;
    for (std::size_t i = 0; i < chi_names.size(); ++i)
      diag[chi_names[i]] = Expr::variable(x_names[i]);
    VariableEnv xonly;
    xonly.add_group("x", static_cast<int>(x_names.size()));
    std::vector<Expr> entries;
    entries.reserve(psi.entries().size());
    for (const auto& e : psi.entries()) entries.push_back(substitute(e, diag));
    return VectorField(std::move(xonly), std::move(entries));
  }
};

// ---------------------------------------------------------------------------

/// Jacobian evaluators of the virtual dynamics at a scheduling point
/// sigma = (chi, x, mu, w):
///   ddelta_chi = A delta_chi + B delta_mu + B_w delta_w
///   delta_zeta = C delta_chi + D delta_mu + D_w delta_w
struct DiffDynamics {
  int n = 0, m = 0, p = 0, q = 0;
  MatrixField A, B, Bw, C, D, Dw;

  struct Eval {
    Eigen::MatrixXd A, B, Bw, C, D, Dw;
  };

  Eval at(const Eigen::VectorXd& chi, const Eigen::VectorXd& x,
          const Eigen::VectorXd& mu, const Eigen::VectorXd& w) const {
    SlotPacker pk(A.env());
    pk.set("chi", chi).set("x", x).set("mu", mu).set("w", w);
    const auto& slots = pk.slots();
    return Eval{A.eval_slots(slots),  B.eval_slots(slots), Bw.eval_slots(slots),
                C.eval_slots(slots),  D.eval_slots(slots), Dw.eval_slots(slots)};
  }

  Eval at_anchor(const SchedulingMap& smap, const Eigen::VectorXd& sigma) const {
    const auto a = smap.anchor(sigma);
    return at(a.chi, a.x, a.mu, a.w);
  }
};

/// Differential dynamics of a virtual system via symbolic Jacobians.
inline DiffDynamics linearize(const VirtualModel& v) {
  DiffDynamics dd;
  dd.n = v.plant.n;
  dd.m = v.plant.m;
  dd.p = v.plant.p;
  dd.q = v.plant.q;
  dd.A = jacobian(v.fhat, "chi");
  dd.B = jacobian(v.fhat, "mu");
  dd.Bw = jacobian(v.fhat, "w");
  dd.C = jacobian(v.hhat, "chi");
  dd.D = jacobian(v.hhat, "mu");
  dd.Dw = jacobian(v.hhat, "w");
  return dd;
}

// ---------------------------------------------------------------------------

struct EmbeddingReport {
  double max_residual = 0.0;
  Eigen::VectorXd worst_x, worst_u, worst_w;
  bool pass = false;
};

/// Samples the identity fhat(x,x,u,w) = f(x,u,w), hhat(x,x,u,w) = h(x,u,w)
/// uniformly over a box and reports the worst residual. Passes at 1e-9.
inline EmbeddingReport check_embedding(const VirtualModel& v, int samples,
                                       unsigned seed,
                                       const Box& xbox, const Box& ubox,
                                       const Box& wbox,
                                       double tol = 1e-9) {
  if (samples < 1) throw ExprError("check_embedding requires samples >= 1");
  std::mt19937 rng(seed);
  EmbeddingReport rep;
  for (int k = 0; k < samples; ++k) {
    const Eigen::VectorXd x = xbox.sample(rng);
    const Eigen::VectorXd u = ubox.sample(rng);
    const Eigen::VectorXd w = wbox.sample(rng);
    const double rf =
        (v.fhat_at(x, x, u, w) - v.plant.f_at(x, u, w)).cwiseAbs().maxCoeff();
    const double rh =
        (v.hhat_at(x, x, u, w) - v.plant.h_at(x, u, w)).cwiseAbs().maxCoeff();
    const double r = std::max(rf, rh);
    if (r > rep.max_residual) {
      rep.max_residual = r;
      rep.worst_x = x;
      rep.worst_u = u;
      rep.worst_w = w;
    }
  }
  rep.pass = rep.max_residual <= tol;
  return rep;
}

inline EmbeddingReport check_embedding(const VirtualModel& v, int samples = 1000,
                                       unsigned seed = 0) {
  return check_embedding(v, samples, seed, Box::cube(v.plant.n, -3, 3),
                         Box::cube(v.plant.m, -3, 3),
                         Box::cube(std::max(v.plant.p, 0), -3, 3));
}

/// Max |f(x_e(s), u_e(s), w_e(s))| over an evenly spaced family-parameter
/// grid; equilibrium families must hold this at ~1e-9.
inline double equilibrium_residual(const PlantModel& plant,
                                   const TargetBehavior& t, int grid = 101) {
  if (t.mode != TargetBehavior::Mode::kEquilibriumFamily)
    throw ExprError("equilibrium_residual requires a family-mode target");
  double worst = 0.0;
  const Box& b = t.family_box;
  for (int i = 0; i < grid; ++i) {
    Eigen::VectorXd s(b.dim());
    for (int d = 0; d < b.dim(); ++d)
      s(d) = b.lo(d) + (b.hi(d) - b.lo(d)) * i / (grid - 1);
    const Eigen::VectorXd res =
        plant.f_at(t.xe_at(s), t.ue_at(s), t.we_at(s));
    worst = std::max(worst, res.cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace vccm
