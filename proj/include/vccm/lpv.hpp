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
 * @file lpv.hpp
 * @brief Gain-scheduled LPV control realizations and their analysis
 * artifacts: hidden coupling, scheduling residual, quadratic-stability
 * perturbation, instability regions.
 *
 * Four realizations of a scheduled gain K are provided for head-to-head
 * comparison with the contraction-based law:
 *  - naive gain scheduling on an exogenous schedule,
 *      u = u_e(sigma) + K(sigma)[x - x_e(sigma)],
 *  - the same law with the equilibrium substitution sigma = psi_fam(x),
 *  - the hidden-coupling-compensated variant (scalar schedules),
 *      u = u_sub(x) - int_{sigma_ref}^{psi_fam(x)} K_h(s) ds,
 *  - the global-LPV tracking realization u = u* + K(psi(x))[x - x*].
 */

#include "vccm/model.hpp"

namespace vccm {

// ---------------------------------------------------------------------------

/// Equilibrium family sigma -> (x_e, u_e, z_e, w_e) with the substitution map
/// psi_fam recovering the family parameter from the state.
struct EquilibriumFamily {
  VectorField xe, ue, ze, we;  // over group "sigma" (n_fam coordinates)
  VectorField psi_fam;         // over group "x"
  Box P;

  static EquilibriumFamily from_target(const TargetBehavior& t) {
    if (t.mode != TargetBehavior::Mode::kEquilibriumFamily)
      throw ExprError("target behavior is not an equilibrium family");
    return EquilibriumFamily{t.xe, t.ue, t.ze, t.we, t.psi_family,
                             t.family_box};
  }

  int n_fam() const { return P.dim(); }
  Eigen::VectorXd xe_at(const Eigen::VectorXd& s) const {
    return xe.eval({{"sigma", s}});
  }
  Eigen::VectorXd ue_at(const Eigen::VectorXd& s) const {
    return ue.eval({{"sigma", s}});
  }
  Eigen::VectorXd we_at(const Eigen::VectorXd& s) const {
    return we.eval({{"sigma", s}});
  }
  Eigen::VectorXd psi_at(const Eigen::VectorXd& x) const {
    return psi_fam.eval({{"x", x}});
  }
};

/// Scheduled gain K(sigma) as a symbolic m x n matrix over the family (or
/// embedding) parameter.
struct GainSchedule {
  MatrixField K;  // env group "sigma"

  Eigen::MatrixXd at(const Eigen::VectorXd& s) const {
    return K.eval({{"sigma", s}});
  }

  static GainSchedule from_text(int n_fam, int m, int n,
                                const std::vector<std::string>& entries) {
    VariableEnv env;
    env.add_group("sigma", n_fam);
    std::vector<Expr> exprs;
    exprs.reserve(entries.size());
    for (const auto& t : entries) exprs.push_back(parse(t, env.name_set()));
    return GainSchedule{MatrixField(env, m, n, std::move(exprs))};
  }
};

// ---------------------------------------------------------------------------
// Local linearization

/// Jacobians of (f, h) at the family point sigma; errors out when the family
/// does not actually solve the plant there.
inline DiffDynamics::Eval local_linearize(const PlantModel& plant,
                                          const EquilibriumFamily& family,
                                          const Eigen::VectorXd& sigma,
                                          double residual_tol = 1e-6) {
  const Eigen::VectorXd xe = family.xe_at(sigma);
  const Eigen::VectorXd ue = family.ue_at(sigma);
  const Eigen::VectorXd we = family.we_at(sigma);
  const double res = plant.f_at(xe, ue, we).cwiseAbs().maxCoeff();
  if (res > residual_tol)
    throw ExprError("family point is not an equilibrium (residual " +
                    std::to_string(res) + ")");
  SlotPacker pk(plant.f.env());
  pk.set("x", xe).set("u", ue).set("w", we);
  const auto& slots = pk.slots();
  DiffDynamics::Eval ev;
  ev.A = jacobian(plant.f, "x").eval_slots(slots);
  ev.B = jacobian(plant.f, "u").eval_slots(slots);
  ev.Bw = jacobian(plant.f, "w").eval_slots(slots);
  ev.C = jacobian(plant.h, "x").eval_slots(slots);
  ev.D = jacobian(plant.h, "u").eval_slots(slots);
  ev.Dw = jacobian(plant.h, "w").eval_slots(slots);
  return ev;
}

// ---------------------------------------------------------------------------
// Control laws

/// A realized gain-scheduled law: symbolic expressions for analysis plus a
/// numeric evaluator with schedule saturation.
struct BaselineLaw {
  enum class Kind { kGscExogenous, kGscStateMap, kGscCompensated, kGlpv };
  Kind kind;
  std::string name;
  EquilibriumFamily family;
  MatrixField K;           // over "sigma"
  MatrixField Kh;          // compensated mode only
  VectorField psi_lmi;     // glpv mode: x -> embedding schedule
  Box P_lmi;               // glpv saturation box
  /// u as expressions over groups (x, sigma, xstar, ustar); sigma is the
  /// current set-point's family parameter. Built without saturation.
  VectorField u_sym;

  /// Evaluate the law; sets *saturated when the schedule left its box.
  Eigen::VectorXd eval(const Eigen::VectorXd& x, const Eigen::VectorXd& sigma,
                       const Eigen::VectorXd& xstar,
                       const Eigen::VectorXd& ustar,
                       bool* saturated = nullptr) const {
    bool sat = false;
    Eigen::VectorXd u;
    switch (kind) {
      case Kind::kGscExogenous: {
        const Eigen::VectorXd s = family.P.clamp(sigma, &sat);
        u = family.ue_at(s) + K.eval({{"sigma", s}}) * (x - family.xe_at(s));
        break;
      }
      case Kind::kGscStateMap: {
        const Eigen::VectorXd s = family.P.clamp(family.psi_at(x), &sat);
        u = family.ue_at(s) + K.eval({{"sigma", s}}) * (x - family.xe_at(s));
        break;
      }
      case Kind::kGscCompensated: {
        const Eigen::VectorXd s = family.P.clamp(family.psi_at(x), &sat);
        u = family.ue_at(s) + K.eval({{"sigma", s}}) * (x - family.xe_at(s));
        // subtract int_{sigma_ref}^{s} K_h, composite Simpson
        const double a = sigma(0), b = s(0);
        const int segs = 32;
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(u.size());
        const double h = (b - a) / segs;
        for (int i = 0; i < segs; ++i) {
          const double s0 = a + i * h, s1 = s0 + h, sm = s0 + 0.5 * h;
          auto khat = [&](double sv) {
            return Kh.eval({{"sigma", Eigen::VectorXd::Constant(1, sv)}})
                .col(0)
                .eval();
          };
          acc += (h / 6.0) * (khat(s0) + 4.0 * khat(sm) + khat(s1));
        }
        u -= acc;
        break;
      }
      case Kind::kGlpv: {
        const Eigen::VectorXd s = P_lmi.clamp(psi_lmi.eval({{"x", x}}), &sat);
        u = ustar + K.eval({{"sigma", s}}) * (x - xstar);
        break;
      }
    }
    if (saturated) *saturated = sat;
    return u;
  }
};

namespace detail {

inline VariableEnv law_env(int n, int n_fam, int m) {
  VariableEnv env;
  env.add_group("x", n);
  env.add_group("sigma", n_fam);
  env.add_group("xstar", n);
  env.add_group("ustar", m);
  return env;
}

/// Substitution map sending "sigma" variables to the given expressions.
inline std::map<std::string, Expr> sigma_subst(const VariableEnv& sigma_env,
                                               const std::vector<Expr>& to) {
  std::map<std::string, Expr> repl;
  const auto& names = sigma_env.find("sigma").names;
  for (std::size_t i = 0; i < names.size(); ++i) repl[names[i]] = to.at(i);
  return repl;
}

/// u = u_e(s) + K(s) [x - x_e(s)] with s given symbolically.
inline std::vector<Expr> scheduled_law_exprs(const EquilibriumFamily& family,
                                             const MatrixField& K,
                                             const std::vector<Expr>& s_exprs,
                                             const VariableEnv& env) {
  const int n = family.xe.dim();
  const int m = family.ue.dim();
  const auto repl = sigma_subst(family.xe.env(), s_exprs);
  std::vector<Expr> out;
  out.reserve(m);
  for (int i = 0; i < m; ++i) {
    Expr u = substitute(family.ue.entry(i), repl);
    for (int j = 0; j < n; ++j) {
      const Expr kij = substitute(K.at(i, j), repl);
      const Expr gap = Expr::sub(Expr::variable("x" + std::to_string(j + 1)),
                                 substitute(family.xe.entry(j), repl));
      u = Expr::add(u, Expr::mul(kij, gap));
    }
    out.push_back(u);
  }
  (void)env;
  return out;
}

/// Polynomial antiderivative in `var`; empty when the expression is not
/// recognizably polynomial in it.
inline std::optional<Expr> antiderivative(const Expr& e,
                                          const std::string& var) {
  if (!depends_on(e, var)) return Expr::mul(e, Expr::variable(var));
  switch (e.op()) {
    case ExprOp::kVar:
      return Expr::div(Expr::pow(e, 2), Expr::constant(2.0));
    case ExprOp::kNeg: {
      auto a = antiderivative(e.child_a(), var);
      if (!a) return std::nullopt;
      return Expr::neg(*a);
    }
    case ExprOp::kAdd:
    case ExprOp::kSub: {
      auto a = antiderivative(e.child_a(), var);
      auto b = antiderivative(e.child_b(), var);
      if (!a || !b) return std::nullopt;
      return e.op() == ExprOp::kAdd ? Expr::add(*a, *b) : Expr::sub(*a, *b);
    }
    case ExprOp::kMul: {
      if (!depends_on(e.child_a(), var)) {
        auto b = antiderivative(e.child_b(), var);
        if (!b) return std::nullopt;
        return Expr::mul(e.child_a(), *b);
      }
      if (!depends_on(e.child_b(), var)) {
        auto a = antiderivative(e.child_a(), var);
        if (!a) return std::nullopt;
        return Expr::mul(*a, e.child_b());
      }
      return std::nullopt;
    }
    case ExprOp::kDiv: {
      if (!depends_on(e.child_b(), var)) {
        auto a = antiderivative(e.child_a(), var);
        if (!a) return std::nullopt;
        return Expr::div(*a, e.child_b());
      }
      return std::nullopt;
    }
    case ExprOp::kPow: {
      if (e.child_a().op() == ExprOp::kVar && e.child_a().var_name() == var) {
        const int k = e.pow_exponent();
        return Expr::div(Expr::pow(e.child_a(), k + 1),
                         Expr::constant(static_cast<double>(k + 1)));
      }
      return std::nullopt;
    }
    default:
      return std::nullopt;
  }
}

/// Detects whether a scalar expression of sigma is polynomial in value over
/// the box (cancellations included) by escalating-degree least-squares fits
/// verified at off-grid points; returns monomial coefficients on success.
inline std::optional<std::vector<double>> fit_polynomial(
    const Expr& e, const std::string& var, double lo, double hi,
    int max_degree = 8, double tol = 1e-9) {
  auto value = [&](double s) { return eval(e, {{var, s}}); };
  const int n_fit = 2 * max_degree + 5;
  for (int d = 0; d <= max_degree; ++d) {
    Eigen::MatrixXd V(n_fit, d + 1);
    Eigen::VectorXd y(n_fit);
    for (int i = 0; i < n_fit; ++i) {
      const double s = lo + (hi - lo) * i / (n_fit - 1);
      double p = 1.0;
      for (int j = 0; j <= d; ++j) {
        V(i, j) = p;
        p *= s;
      }
      y(i) = value(s);
    }
    Eigen::VectorXd c = V.colPivHouseholderQr().solve(y);
    // verify at off-grid points
    double worst = 0.0;
    double scale = 1.0;
    for (int i = 0; i < n_fit - 1; ++i) {
      const double s = lo + (hi - lo) * (i + 0.37) / (n_fit - 1);
      double p = 1.0, fit = 0.0;
      for (int j = 0; j <= d; ++j) {
        fit += c(j) * p;
        p *= s;
      }
      const double truth = value(s);
      worst = std::max(worst, std::abs(fit - truth));
      scale = std::max(scale, std::abs(truth));
    }
    if (worst <= tol * scale) {
      std::vector<double> out(c.data(), c.data() + d + 1);
      return out;
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Naive gain scheduling, Eq-45 style. With `exogenous_schedule` the family
/// parameter is the measured reference; otherwise the equilibrium
/// substitution sigma = psi_fam(x) is applied ("self-scheduled").
inline BaselineLaw gsc_naive(const GainSchedule& K,
                             const EquilibriumFamily& family,
                             bool exogenous_schedule = true) {
  const int n = family.xe.dim();
  const int m = family.ue.dim();
  const int n_fam = family.n_fam();
  BaselineLaw law;
  law.kind = exogenous_schedule ? BaselineLaw::Kind::kGscExogenous
                                : BaselineLaw::Kind::kGscStateMap;
  law.name = exogenous_schedule ? "gsc1" : "gsc-subst";
  law.family = family;
  law.K = K.K;
  VariableEnv env = detail::law_env(n, n_fam, m);
  std::vector<Expr> s_exprs;
  if (exogenous_schedule) {
    for (const auto& nm : env.find("sigma").names)
      s_exprs.push_back(Expr::variable(nm));
  } else {
    for (int i = 0; i < n_fam; ++i) s_exprs.push_back(family.psi_fam.entry(i));
  }
  law.u_sym = VectorField(
      env, detail::scheduled_law_exprs(family, K.K, s_exprs, env));
  return law;
}

/// Hidden-coupling matrix
///   K_h(sigma) = du_e/dsigma - K(sigma) dx_e/dsigma
///                - dkappa(x_e(sigma), sigma)/dsigma,
/// where the last term differentiates the realized law's explicit sigma
/// dependence and then restricts to the equilibrium manifold.
inline MatrixField hidden_coupling(const GainSchedule& K,
                                   const EquilibriumFamily& family,
                                   const BaselineLaw& kappa) {
  const int m = family.ue.dim();
  const int n_fam = family.n_fam();
  MatrixField due = jacobian(family.ue, "sigma");      // m x n_fam
  MatrixField dxe = jacobian(family.xe, "sigma");      // n x n_fam
  MatrixField KdXe = matmul(K.K, dxe);                 // m x n_fam
  // explicit-sigma derivative of the law, restricted to x = x_e(sigma)
  std::map<std::string, Expr> onto_family;
  const auto& xnames = kappa.u_sym.env().find("x").names;
  for (std::size_t j = 0; j < xnames.size(); ++j)
    onto_family[xnames[j]] = family.xe.entry(static_cast<int>(j));
  std::vector<Expr> dk_entries;
  dk_entries.reserve(m * n_fam);
  const auto& snames = kappa.u_sym.env().find("sigma").names;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n_fam; ++j)
      dk_entries.push_back(
          substitute(diff(kappa.u_sym.entry(i), snames[j]), onto_family));
  MatrixField dkappa(family.ue.env(), m, n_fam, std::move(dk_entries));
  return matsub(matsub(due, KdXe), dkappa);
}

/// Compensated realization for scalar schedules:
/// u = u_sub(x) - int_{sigma_ref}^{psi_fam(x)} K_h(s) ds. The symbolic form
/// uses the polynomial antiderivative of K_h when one exists.
inline BaselineLaw gsc_compensated(const GainSchedule& K,
                                   const EquilibriumFamily& family) {
  if (family.n_fam() != 1)
    throw ExprError("compensation scheme requires a scalar schedule");
  BaselineLaw base = gsc_naive(K, family, /*exogenous_schedule=*/false);
  BaselineLaw law = base;
  law.kind = BaselineLaw::Kind::kGscCompensated;
  law.name = "gsc2";
  law.Kh = hidden_coupling(K, family, base);

  // Symbolic form u_sub - [H(psi_fam(x)) - H(sigma)] with H' = K_h. The
  // coupling matrix often carries canceling transcendental terms, so the
  // antiderivative works on a verified polynomial refit of K_h; when K_h is
  // not polynomial in value the symbolic form stays the substituted law and
  // only the numeric evaluator compensates.
  const std::string svar = family.ue.env().find("sigma").names[0];
  std::vector<Expr> entries;
  bool symbolic_ok = true;
  for (int i = 0; i < family.ue.dim(); ++i) {
    auto coeffs = detail::fit_polynomial(law.Kh.at(i, 0), svar, family.P.lo(0),
                                         family.P.hi(0));
    if (!coeffs) {
      symbolic_ok = false;
      break;
    }
    Expr poly = Expr::constant(0.0);
    const Expr s = Expr::variable(svar);
    for (std::size_t k = 0; k < coeffs->size(); ++k)
      poly = poly + Expr::constant((*coeffs)[k]) *
                        Expr::pow(s, static_cast<int>(k));
    auto H = detail::antiderivative(poly, svar);
    if (!H) {
      symbolic_ok = false;
      break;
    }
    const Expr at_x = substitute(*H, {{svar, family.psi_fam.entry(0)}});
    const Expr at_ref = substitute(
        *H, {{svar, Expr::variable(law.u_sym.env().find("sigma").names[0])}});
    entries.push_back(
        Expr::sub(base.u_sym.entry(i), Expr::sub(at_x, at_ref)));
  }
  if (symbolic_ok)
    law.u_sym = VectorField(base.u_sym.env(), std::move(entries));
  return law;
}

/// Global-LPV tracking realization u = u* + K(psi(x)) (x - x*).
inline BaselineLaw glpv_realization(const GainSchedule& K,
                                    const VectorField& psi_state,
                                    const Box& P,
                                    const EquilibriumFamily& family) {
  const int n = family.xe.dim();
  const int m = family.ue.dim();
  BaselineLaw law;
  law.kind = BaselineLaw::Kind::kGlpv;
  law.name = "glpv";
  law.family = family;
  law.K = K.K;
  law.psi_lmi = psi_state;
  law.P_lmi = P;
  VariableEnv env = detail::law_env(n, family.n_fam(), m);
  // substitute sigma -> psi(x) into K, then u = ustar + K(psi(x))(x - xstar)
  std::vector<Expr> psi_exprs;
  for (int i = 0; i < psi_state.dim(); ++i)
    psi_exprs.push_back(psi_state.entry(i));
  // K's env is "sigma" of the embedding dimension (may differ from family's)
  const auto repl = detail::sigma_subst(K.K.env(), psi_exprs);
  std::vector<Expr> entries;
  entries.reserve(m);
  for (int i = 0; i < m; ++i) {
    Expr u = Expr::variable("ustar" + std::to_string(i + 1));
    for (int j = 0; j < n; ++j) {
      const Expr kij = substitute(K.K.at(i, j), repl);
      const Expr gap =
          Expr::sub(Expr::variable("x" + std::to_string(j + 1)),
                    Expr::variable("xstar" + std::to_string(j + 1)));
      u = Expr::add(u, Expr::mul(kij, gap));
    }
    entries.push_back(u);
  }
  law.u_sym = VectorField(env, std::move(entries));
  return law;
}

/// Scheduling residual of the scheduled reference: the rate sensitivity
/// E(sigma) = dx_e/dsigma, so that the tracking-error driver along a moving
/// schedule is E(sigma) sigmadot (the scheduled equilibrium path is not an
/// admissible closed-loop solution).
inline MatrixField residual_term(const GainSchedule& K,
                                 const EquilibriumFamily& family) {
  (void)K;  // realization-independent: every Eq-44-consistent law shares it
  return jacobian(family.xe, "sigma");
}

// ---------------------------------------------------------------------------
// Closed-loop analysis

/// Plant field with the law substituted at a frozen set-point: a symbolic
/// vector field over x with sigma, x*, u*, w pinned to the family values.
inline VectorField closed_loop_field(const PlantModel& plant,
                                     const BaselineLaw& law,
                                     const Eigen::VectorXd& sigma_ref) {
  const Eigen::VectorXd xs = law.family.xe_at(sigma_ref);
  const Eigen::VectorXd us = law.family.ue_at(sigma_ref);
  const Eigen::VectorXd ws = law.family.we_at(sigma_ref);

  std::map<std::string, Expr> pin;
  const auto& env = law.u_sym.env();
  const auto& snames = env.find("sigma").names;
  for (std::size_t i = 0; i < snames.size(); ++i)
    pin[snames[i]] = Expr::constant(sigma_ref(static_cast<int>(i)));
  const auto& xsn = env.find("xstar").names;
  for (std::size_t i = 0; i < xsn.size(); ++i)
    pin[xsn[i]] = Expr::constant(xs(static_cast<int>(i)));
  const auto& usn = env.find("ustar").names;
  for (std::size_t i = 0; i < usn.size(); ++i)
    pin[usn[i]] = Expr::constant(us(static_cast<int>(i)));

  std::map<std::string, Expr> into_plant;
  const auto& unames = plant.f.env().find("u").names;
  for (std::size_t i = 0; i < unames.size(); ++i)
    into_plant[unames[i]] =
        substitute(law.u_sym.entry(static_cast<int>(i)), pin);
  const auto& wnames = plant.f.env().find("w").names;
  for (std::size_t i = 0; i < wnames.size(); ++i)
    into_plant[wnames[i]] = Expr::constant(ws(static_cast<int>(i)));

  VariableEnv xonly;
  xonly.add_group("x", plant.n);
  std::vector<Expr> entries;
  entries.reserve(plant.n);
  for (int i = 0; i < plant.n; ++i)
    entries.push_back(substitute(plant.f.entry(i), into_plant));
  return VectorField(std::move(xonly), std::move(entries));
}

/// Quadratic-stability perturbation of the global-LPV realization at a
/// set-point: Delta(x, x_e) delta_x = [A(sigma) - A(sigma_e)] x_e via the
/// rank-1 factorization along delta_x, and the perturbed Lyapunov derivative
/// Q_Delta = Q(psi(x)) + Delta^T M + M Delta. A positive minimum eigenvalue
/// certifies loss of the quadratic-stability guarantee at this pair.
struct PerturbationReport {
  Eigen::MatrixXd Delta;
  Eigen::MatrixXd Q_Delta;
  double min_eig = 0.0;
};

inline PerturbationReport glpv_perturbation(
    const DiffDynamics& dd, const SchedulingMap& smap, const GainSchedule& K,
    const Eigen::MatrixXd& M, const Eigen::VectorXd& x,
    const Eigen::VectorXd& xe) {
  const int n = static_cast<int>(x.size());
  const Eigen::VectorXd sigma = smap.psi_state(x);
  const Eigen::VectorXd sigma_e = smap.psi_state(xe);
  const Eigen::MatrixXd A = dd.at_anchor(smap, sigma).A;
  const Eigen::MatrixXd Ae = dd.at_anchor(smap, sigma_e).A;
  const Eigen::MatrixXd B = dd.at_anchor(smap, sigma).B;

  PerturbationReport rep;
  const Eigen::VectorXd dx = x - xe;
  if (dx.cwiseAbs().maxCoeff() < 1e-12) {
    rep.Delta = Eigen::MatrixXd::Zero(n, n);
  } else {
    const Eigen::VectorXd v = (A - Ae) * xe;
    rep.Delta = v * dx.transpose() / dx.squaredNorm();
  }
  const Eigen::MatrixXd Acl = A + B * K.at(sigma);
  const Eigen::MatrixXd Q = Acl.transpose() * M + M * Acl;
  rep.Q_Delta = Q + rep.Delta.transpose() * M + M * rep.Delta;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(rep.Q_Delta,
                                                    Eigen::EigenvaluesOnly);
  rep.min_eig = es.eigenvalues().minCoeff();
  return rep;
}

/// Hurwitz labeling of the closed-loop Jacobian over a state grid.
struct RegionScan {
  std::vector<Eigen::VectorXd> points;
  std::vector<bool> hurwitz;
  std::vector<double> max_real_part;
};

inline RegionScan instability_region(const VectorField& field, const Box& box,
                                     double step) {
  if (step <= 0.0) throw ExprError("grid step must be positive");
  MatrixField J = jacobian(field, "x");
  RegionScan scan;
  const int d = box.dim();
  std::vector<int> counts(d);
  for (int i = 0; i < d; ++i)
    counts[i] = static_cast<int>(std::floor((box.hi(i) - box.lo(i)) / step +
                                            1e-9)) +
                1;
  std::vector<int> idx(d, 0);
  for (;;) {
    Eigen::VectorXd x(d);
    for (int i = 0; i < d; ++i) x(i) = box.lo(i) + idx[i] * step;
    const Eigen::MatrixXd Jv = J.eval({{"x", x}});
    Eigen::EigenSolver<Eigen::MatrixXd> es(Jv);
    const double maxre = es.eigenvalues().real().maxCoeff();
    scan.points.push_back(x);
    scan.max_real_part.push_back(maxre);
    scan.hurwitz.push_back(maxre < -1e-9);
    int i = 0;
    for (; i < d; ++i) {
      if (++idx[i] < counts[i]) break;
      idx[i] = 0;
    }
    if (i == d) break;
  }
  return scan;
}

/// Sign-change bisection roots of a scalar field over a box.
inline std::vector<double> find_equilibria_1d(const VectorField& field,
                                              double lo, double hi,
                                              int samples = 601) {
  if (field.dim() != 1) throw ExprError("find_equilibria_1d needs a 1-D field");
  auto g = [&](double x) {
    return field.eval({{"x", Eigen::VectorXd::Constant(1, x)}})(0);
  };
  std::vector<double> roots;
  double xprev = lo, gprev = g(lo);
  for (int i = 1; i < samples; ++i) {
    const double x = lo + (hi - lo) * i / (samples - 1);
    const double gx = g(x);
    if (gprev == 0.0) roots.push_back(xprev);
    if (gprev * gx < 0.0) {
      double a = xprev, b = x, ga = gprev;
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (a + b);
        const double gm = g(mid);
        if (ga * gm <= 0.0) {
          b = mid;
        } else {
          a = mid;
          ga = gm;
        }
      }
      roots.push_back(0.5 * (a + b));
    }
    xprev = x;
    gprev = gx;
  }
  return roots;
}

}  // namespace vccm
