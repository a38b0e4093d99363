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
 * @file sim.hpp
 * @brief Fixed-step closed-loop simulation and metric extraction: decay-rate
 * fits, L2-gain estimates, differential Lyapunov decrease checks, CSV I/O.
 *
 * Integration is classic 4th-order with a fixed step (bit-reproducible golden
 * runs); the controller is evaluated at the step rate and held between
 * samples, while exogenous signals vary continuously through the stages.
 * Non-finite or exploding states truncate the run and flag blow-up, which the
 * comparisons use as an instability signal.
 */

#include <fstream>
#include <iomanip>

#include "vccm/lpv.hpp"
#include "vccm/realization.hpp"

namespace vccm {

// ---------------------------------------------------------------------------

/// Sampled closed-loop signals on a uniform time grid.
struct Trajectory {
  double dt = 0.0;
  std::vector<double> t;
  std::vector<Eigen::VectorXd> x, u, w, z;
  std::vector<Eigen::VectorXd> chi_star, mu_star;  // present for VTR runs
  std::vector<double> geo_energy, ff_residual;     // controller diagnostics
  bool blew_up = false;
  double blowup_time = std::numeric_limits<double>::quiet_NaN();

  int steps() const { return static_cast<int>(t.size()); }
  bool has_vtr() const { return !chi_star.empty(); }
};

namespace detail {
inline bool state_ok(const Eigen::VectorXd& x) {
  return x.allFinite() && x.cwiseAbs().maxCoeff() < 1e9;
}
}  // namespace detail

/// Fixed-step 4th-order integration of xdot = rhs(t, x). Deterministic;
/// truncates on non-finite state and reports the blow-up time.
inline Trajectory integrate(
    const std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>& rhs,
    const Eigen::VectorXd& x0, double T, double dt) {
  if (dt <= 0.0 || T < dt) throw ExprError("integrate requires 0 < dt <= T");
  Trajectory traj;
  traj.dt = dt;
  const int steps = static_cast<int>(std::round(T / dt));
  Eigen::VectorXd x = x0;
  for (int k = 0; k <= steps; ++k) {
    const double t = k * dt;
    if (!detail::state_ok(x)) {
      traj.blew_up = true;
      traj.blowup_time = t;
      break;
    }
    traj.t.push_back(t);
    traj.x.push_back(x);
    if (k == steps) break;
    const Eigen::VectorXd k1 = rhs(t, x);
    const Eigen::VectorXd k2 = rhs(t + 0.5 * dt, x + 0.5 * dt * k1);
    const Eigen::VectorXd k3 = rhs(t + 0.5 * dt, x + 0.5 * dt * k2);
    const Eigen::VectorXd k4 = rhs(t + dt, x + dt * k3);
    x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) {
      traj.blew_up = true;
      traj.blowup_time = t + dt;
      break;
    }
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Closed-loop simulation

/// Control agent evaluated once per simulation step (zero-order hold).
class Agent {
 public:
  virtual ~Agent() = default;
  virtual void reset(const TargetBehavior::Sample& tgt0,
                     const Eigen::VectorXd& x0) {}
  /// Returns u for this step; may append VTR/diagnostic columns to *rec.
  virtual Eigen::VectorXd act(double t, const Eigen::VectorXd& x,
                              const TargetBehavior::Sample& tgt, double dt,
                              Trajectory* rec) = 0;
};

/// Certificate-backed contraction controller with its virtual target state.
class VccmAgent : public Agent {
 public:
  VccmAgent(Certificate cert, SchedulingMap smap, VirtualModel v,
            FeedforwardSpec spec = FeedforwardSpec::linear_solve(),
            ControllerOptions opts = {})
      : ctrl_(std::move(cert), std::move(smap), std::move(v), std::move(spec),
              opts) {}

  void reset(const TargetBehavior::Sample& tgt0,
             const Eigen::VectorXd& x0) override {
    st_ = VTRState::init(tgt0.xstar, ctrl_.model().plant.m);
  }

  Eigen::VectorXd act(double t, const Eigen::VectorXd& x,
                      const TargetBehavior::Sample& tgt, double dt,
                      Trajectory* rec) override {
    auto out = ctrl_.step(st_, x, tgt, dt);
    if (rec) {
      rec->chi_star.push_back(st_.chi_star);
      rec->mu_star.push_back(out.state.mu_star);
      rec->geo_energy.push_back(out.diag.geodesic_energy);
      rec->ff_residual.push_back(out.diag.ff_residual);
    }
    st_ = out.state;
    return out.u;
  }

  const VTRState& state() const { return st_; }

 private:
  Controller ctrl_;
  VTRState st_;
};

/// Gain-scheduled baseline; sigma_ref(t) supplies the set-point's family
/// parameter (e.g. the measured reference).
class BaselineAgent : public Agent {
 public:
  BaselineAgent(BaselineLaw law, std::function<Eigen::VectorXd(double)> sigma)
      : law_(std::move(law)), sigma_(std::move(sigma)) {}

  Eigen::VectorXd act(double t, const Eigen::VectorXd& x,
                      const TargetBehavior::Sample& tgt, double,
                      Trajectory*) override {
    bool sat = false;
    Eigen::VectorXd u = law_.eval(x, sigma_(t), tgt.xstar, tgt.ustar, &sat);
    saturated_ = saturated_ || sat;
    return u;
  }
  bool ever_saturated() const { return saturated_; }

 private:
  BaselineLaw law_;
  std::function<Eigen::VectorXd(double)> sigma_;
  bool saturated_ = false;
};

/// u = u*(t): open-loop replay of the target input.
class OpenLoopAgent : public Agent {
 public:
  Eigen::VectorXd act(double, const Eigen::VectorXd&,
                      const TargetBehavior::Sample& tgt, double,
                      Trajectory*) override {
    return tgt.ustar;
  }
};

struct Scenario {
  double T = 10.0;
  double dt = 1e-3;
  Eigen::VectorXd x0;
  std::function<TargetBehavior::Sample(double)> target;
  std::function<Eigen::VectorXd(double)> w_of_t;  // defaults to w*(t)
};

/// Closed-loop rollout of the plant under the agent.
inline Trajectory simulate(const PlantModel& plant, const Scenario& sc,
                           Agent& agent) {
  if (sc.dt <= 0.0 || sc.T < sc.dt)
    throw ExprError("scenario requires 0 < dt <= T");
  Trajectory traj;
  traj.dt = sc.dt;
  const int steps = static_cast<int>(std::round(sc.T / sc.dt));
  auto wsig = [&](double t) {
    return sc.w_of_t ? sc.w_of_t(t) : sc.target(t).wstar;
  };
  Eigen::VectorXd x = sc.x0;
  agent.reset(sc.target(0.0), x);
  for (int k = 0; k <= steps; ++k) {
    const double t = k * sc.dt;
    if (!detail::state_ok(x)) {
      traj.blew_up = true;
      traj.blowup_time = t;
      break;
    }
    const auto tgt = sc.target(t);
    const Eigen::VectorXd w = wsig(t);
    const Eigen::VectorXd u = agent.act(t, x, tgt, sc.dt, &traj);
    traj.t.push_back(t);
    traj.x.push_back(x);
    traj.u.push_back(u);
    traj.w.push_back(w);
    traj.z.push_back(plant.h_at(x, u, w));
    if (k == steps) break;
    auto rhs = [&](double tau, const Eigen::VectorXd& xs) {
      return plant.f_at(xs, u, wsig(tau));
    };
    const Eigen::VectorXd k1 = rhs(t, x);
    const Eigen::VectorXd k2 = rhs(t + 0.5 * sc.dt, x + 0.5 * sc.dt * k1);
    const Eigen::VectorXd k3 = rhs(t + 0.5 * sc.dt, x + 0.5 * sc.dt * k2);
    const Eigen::VectorXd k4 = rhs(t + sc.dt, x + sc.dt * k3);
    x += (sc.dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) {
      traj.blew_up = true;
      traj.blowup_time = t + sc.dt;
      break;
    }
  }
  return traj;
}

/// Set-point scenario helper.
inline std::function<TargetBehavior::Sample(double)> setpoint_target(
    const TargetBehavior& t, const Eigen::VectorXd& sigma_fam) {
  const auto s = t.at_family(sigma_fam);
  return [s](double) { return s; };
}

/// Trajectory-mode scenario helper.
inline std::function<TargetBehavior::Sample(double)> trajectory_target(
    const TargetBehavior& t, int p) {
  const TargetBehavior* tp = &t;
  return [tp, p](double time) { return tp->at_time(time, p); };
}

// ---------------------------------------------------------------------------
// Decay-rate fit

struct DecayFit {
  double R = 0.0;        // overshoot constant from the intercept
  double lambda = 0.0;   // -slope of log|e|
  int points = 0;
};

/// Least-squares line fit of log|x - x*| over [t0, t1]; samples below the
/// 1e-12 floor are dropped (numerical-zero truncation).
inline DecayFit decay_fit(const std::vector<double>& t,
                          const std::vector<double>& err, double t0, double t1,
                          double floor = 1e-12) {
  double st = 0, se = 0, stt = 0, ste = 0;
  int n = 0;
  double e0 = -1.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (e0 < 0.0 && err[k] > 0.0) e0 = err[k];
    if (t[k] < t0 || t[k] > t1 || err[k] < floor) continue;
    const double le = std::log(err[k]);
    st += t[k];
    se += le;
    stt += t[k] * t[k];
    ste += t[k] * le;
    ++n;
  }
  if (n < 2) throw ExprError("decay_fit needs >= 2 usable samples");
  const double denom = n * stt - st * st;
  const double slope = (n * ste - st * se) / denom;
  const double intercept = (se - slope * st) / n;
  DecayFit fit;
  fit.lambda = -slope;
  fit.R = e0 > 0.0 ? std::exp(intercept) / e0 : std::exp(intercept);
  fit.points = n;
  return fit;
}

/// Fit of the state tracking error of a trajectory against the scenario's
/// target; default window [0.1 T, 0.9 T] skips transients and floor effects.
inline DecayFit decay_fit(const Trajectory& traj,
                          const std::function<TargetBehavior::Sample(double)>&
                              target) {
  std::vector<double> err(traj.t.size());
  for (std::size_t k = 0; k < traj.t.size(); ++k)
    err[k] = (traj.x[k] - target(traj.t[k]).xstar).norm();
  const double T = traj.t.back();
  return decay_fit(traj.t, err, 0.1 * T, 0.9 * T);
}

// ---------------------------------------------------------------------------
// L2 gain estimation

struct GainRun {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> dw, dz;  // w - w*, z - z*
};

/// Worst-case ratio ||dz||_2 / ||dw||_2 over the runs (trapezoidal
/// quadrature); zero-input runs are excluded. All runs must start
/// on-reference so the storage offset vanishes.
inline double l2_gain_estimate(const std::vector<GainRun>& runs) {
  double worst = 0.0;
  bool any = false;
  for (const auto& run : runs) {
    double ew = 0.0, ez = 0.0;
    for (std::size_t k = 0; k + 1 < run.t.size(); ++k) {
      const double h = run.t[k + 1] - run.t[k];
      ew += 0.5 * h * (run.dw[k].squaredNorm() + run.dw[k + 1].squaredNorm());
      ez += 0.5 * h * (run.dz[k].squaredNorm() + run.dz[k + 1].squaredNorm());
    }
    if (ew <= 0.0) continue;  // zero-input run
    any = true;
    worst = std::max(worst, std::sqrt(ez / ew));
  }
  if (!any) throw ExprError("l2_gain_estimate needs a nonzero-input run");
  return worst;
}

/// Extracts a gain run from a closed-loop trajectory against reference
/// signals z*(t), w*(t).
inline GainRun gain_run(const Trajectory& traj,
                        const std::function<Eigen::VectorXd(double)>& zstar,
                        const std::function<Eigen::VectorXd(double)>& wstar) {
  GainRun run;
  run.t = traj.t;
  run.dw.reserve(traj.t.size());
  run.dz.reserve(traj.t.size());
  for (std::size_t k = 0; k < traj.t.size(); ++k) {
    run.dw.push_back(traj.w[k] - wstar(traj.t[k]));
    run.dz.push_back(traj.z[k] - zstar(traj.t[k]));
  }
  return run;
}

/// Declared disturbance suite for worst-case gain estimation: sinusoids at
/// five frequencies plus one filtered step.
inline std::vector<std::function<Eigen::VectorXd(double)>> disturbance_suite(
    int p, double amplitude = 0.2) {
  std::vector<std::function<Eigen::VectorXd(double)>> suite;
  for (double omega : {0.2, 0.5, 1.0, 2.0, 5.0}) {
    suite.push_back([p, amplitude, omega](double t) {
      return Eigen::VectorXd::Constant(p, amplitude * std::sin(omega * t))
          .eval();
    });
  }
  suite.push_back([p, amplitude](double t) {
    return Eigen::VectorXd::Constant(p,
                                     amplitude * (1.0 - std::exp(-2.0 * t)))
        .eval();
  });
  return suite;
}

// ---------------------------------------------------------------------------
// Differential Lyapunov decrease

struct LyapunovReport {
  double max_violation = -std::numeric_limits<double>::infinity();
  double t_worst = 0.0;
  std::vector<double> V;  // probe energy along the trajectory
};

/// Propagates a probe displacement through delta' = A(t, x(t)) delta along
/// the trajectory and checks d/dt (delta' M delta) <= -2 lambda V + tol.
/// Returned violations are relative to the local V.
inline LyapunovReport lyapunov_check(
    const Trajectory& traj,
    const std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&)>& Afun,
    const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& Mfun,
    double lambda, const Eigen::VectorXd& delta0) {
  LyapunovReport rep;
  const double dt = traj.dt;
  Eigen::VectorXd delta = delta0;
  double Vprev = delta.dot(Mfun(traj.x[0]) * delta);
  rep.V.push_back(Vprev);
  for (std::size_t k = 0; k + 1 < traj.t.size(); ++k) {
    const Eigen::VectorXd& xk = traj.x[k];
    const Eigen::VectorXd& xk1 = traj.x[k + 1];
    const Eigen::VectorXd xm = 0.5 * (xk + xk1);
    const double tk = traj.t[k];
    auto Aat = [&](double frac) {
      return Afun(tk + frac * dt, frac == 0.0 ? xk : (frac == 1.0 ? xk1 : xm));
    };
    const Eigen::VectorXd k1 = Aat(0.0) * delta;
    const Eigen::VectorXd k2 = Aat(0.5) * (delta + 0.5 * dt * k1);
    const Eigen::VectorXd k3 = Aat(0.5) * (delta + 0.5 * dt * k2);
    const Eigen::VectorXd k4 = Aat(1.0) * (delta + dt * k3);
    delta += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const double V = delta.dot(Mfun(xk1) * delta);
    rep.V.push_back(V);
    const double vdot = (V - Vprev) / dt;
    const double bound = -2.0 * lambda * 0.5 * (V + Vprev);
    const double denom = std::max(0.5 * (V + Vprev), 1e-300);
    const double viol = (vdot - bound) / denom;
    if (viol > rep.max_violation) {
      rep.max_violation = viol;
      rep.t_worst = traj.t[k];
    }
    Vprev = V;
  }
  return rep;
}

/// Certificate-backed variant: propagates through the closed-loop virtual
/// differential dynamics (A + B K)(sigma(t)) under the certificate metric.
inline LyapunovReport lyapunov_check(const Trajectory& traj,
                                     const Certificate& cert,
                                     const SchedulingMap& smap,
                                     const VirtualModel& v, double lambda) {
  auto dd = std::make_shared<DiffDynamics>(linearize(v));
  const Certificate* c = &cert;
  const SchedulingMap* sm = &smap;
  const Trajectory* tr = &traj;
  auto Afun = [dd, c, sm, tr](double t, const Eigen::VectorXd& x) {
    // schedule on the trajectory point (chi = x), inputs from the record
    const std::size_t k = std::min<std::size_t>(
        static_cast<std::size_t>(std::round(t / tr->dt)), tr->u.size() - 1);
    auto ev = dd->at(x, x, tr->u[k], tr->w[k]);
    return (ev.A + ev.B * c->gain_at(sm->psi_at(x, x))).eval();
  };
  auto Mfun = [c, sm](const Eigen::VectorXd& x) {
    return c->metric_at(sm->psi_at(x, x));
  };
  Eigen::VectorXd delta0 = Eigen::VectorXd::Ones(v.plant.n).normalized();
  return lyapunov_check(traj, Afun, Mfun, lambda, delta0);
}

// ---------------------------------------------------------------------------
// CSV I/O

inline void write_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream os(path);
  if (!os) throw ExprError("cannot open '" + path + "' for writing");
  const int n = traj.x.empty() ? 0 : static_cast<int>(traj.x[0].size());
  const int m = traj.u.empty() ? 0 : static_cast<int>(traj.u[0].size());
  const int p = traj.w.empty() ? 0 : static_cast<int>(traj.w[0].size());
  const int q = traj.z.empty() ? 0 : static_cast<int>(traj.z[0].size());
  const bool vtr = traj.has_vtr();
  os << "t";
  for (int i = 1; i <= n; ++i) os << ",x" << i;
  for (int i = 1; i <= m; ++i) os << ",u" << i;
  for (int i = 1; i <= p; ++i) os << ",w" << i;
  for (int i = 1; i <= q; ++i) os << ",z" << i;
  if (vtr) {
    for (int i = 1; i <= n; ++i) os << ",chi_star" << i;
    for (int i = 1; i <= m; ++i) os << ",mu_star" << i;
    os << ",geo_energy,ff_residual";
  }
  os << "\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf;
  };
  for (std::size_t k = 0; k < traj.t.size(); ++k) {
    put(traj.t[k]);
    auto row = [&](const std::vector<Eigen::VectorXd>& col, int dim) {
      for (int i = 0; i < dim; ++i) {
        os << ",";
        put(col[k](i));
      }
    };
    row(traj.x, n);
    row(traj.u, m);
    row(traj.w, p);
    row(traj.z, q);
    if (vtr) {
      row(traj.chi_star, n);
      row(traj.mu_star, m);
      os << ",";
      put(traj.geo_energy[k]);
      os << ",";
      put(traj.ff_residual[k]);
    }
    os << "\n";
  }
}

inline Trajectory read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ExprError("cannot open '" + path + "'");
  std::string header;
  if (!std::getline(is, header)) throw ExprError("empty CSV");
  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  auto count = [&](const std::string& prefix) {
    int k = 0;
    for (const auto& c : cols)
      if (c.rfind(prefix, 0) == 0 &&
          c.size() > prefix.size() &&
          std::isdigit(c[prefix.size()]))
        ++k;
    return k;
  };
  const int n = count("x");
  const int m = count("u");
  const int p = count("w");
  const int q = count("z");
  const int nv = count("chi_star");
  Trajectory traj;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    std::size_t i = 0;
    traj.t.push_back(vals[i++]);
    auto grab = [&](int dim) {
      Eigen::VectorXd v(dim);
      for (int j = 0; j < dim; ++j) v(j) = vals[i++];
      return v;
    };
    traj.x.push_back(grab(n));
    traj.u.push_back(grab(m));
    traj.w.push_back(grab(p));
    traj.z.push_back(grab(q));
    if (nv > 0) {
      traj.chi_star.push_back(grab(nv));
      traj.mu_star.push_back(grab(m));
      traj.geo_energy.push_back(vals[i++]);
      traj.ff_residual.push_back(vals[i++]);
    }
  }
  if (traj.t.size() >= 2) traj.dt = traj.t[1] - traj.t[0];
  return traj;
}

}  // namespace vccm
