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
 * @file experiment.hpp
 * @brief Configuration-driven experiment runner.
 *
 * JSON configs select a system (registry name or inline definition), a mode
 * (synth / validate / simulate / compare / region), gains or synthesis
 * options, and a scenario. Artifacts land in the output directory:
 * summary.json plus per-run trajectory CSVs and region CSVs. Exit codes:
 * 0 success, 2 synthesis infeasible, 3 validation failure. Repeated runs with
 * the same config and seed produce byte-identical summaries.
 */

#include <filesystem>
#include <future>
#include <thread>

#include <json.hpp>

#include "vccm/defaults.hpp"
#include "vccm/sim.hpp"

namespace vccm {

using Json = nlohmann::ordered_json;

class ConfigError : public ExprError {
 public:
  ConfigError(const std::string& what, const std::string& path)
      : ExprError(what + " at " + path), path(path) {}
  std::string path;
};

namespace detail {

inline const Json& need(const Json& j, const std::string& key,
                        const std::string& path) {
  if (!j.contains(key))
    throw ConfigError("missing required key '" + key + "'", path);
  return j.at(key);
}

inline std::vector<std::string> string_list(const Json& j,
                                            const std::string& path) {
  if (!j.is_array()) throw ConfigError("expected an array", path);
  std::vector<std::string> out;
  for (const auto& e : j) {
    if (!e.is_string()) throw ConfigError("expected strings", path);
    out.push_back(e.get<std::string>());
  }
  return out;
}

inline Eigen::VectorXd vecd(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError("expected a numeric array", path);
  Eigen::VectorXd v(j.size());
  int i = 0;
  for (const auto& e : j) {
    if (!e.is_number()) throw ConfigError("expected numbers", path);
    v(i++) = e.get<double>();
  }
  return v;
}

inline Json to_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Json to_json(const Eigen::MatrixXd& M) {
  Json rows = Json::array();
  for (int i = 0; i < M.rows(); ++i) {
    Json r = Json::array();
    for (int j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
    rows.push_back(r);
  }
  return rows;
}

inline Eigen::MatrixXd matd(const Json& j, const std::string& path) {
  if (!j.is_array() || j.empty())
    throw ConfigError("expected a matrix (array of rows)", path);
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j.at(0).size());
  Eigen::MatrixXd M(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j.at(i).size()) != cols)
      throw ConfigError("ragged matrix rows", path);
    for (int c = 0; c < cols; ++c) M(i, c) = j.at(i).at(c).get<double>();
  }
  return M;
}

inline Box box_from_json(const Json& j, const std::string& path) {
  Box b;
  b.lo = vecd(need(j, "lo", path), path + "/lo");
  b.hi = vecd(need(j, "hi", path), path + "/hi");
  if (b.lo.size() != b.hi.size())
    throw ConfigError("lo/hi dimension mismatch", path);
  for (int i = 0; i < b.dim(); ++i)
    if (!(b.lo(i) < b.hi(i)))
      throw ConfigError("box requires lo < hi per coordinate", path);
  return b;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// User-defined systems

/// Loads {dims, f, h, fhat, hhat, psi, box, anchor, target} into a registry
/// entry. Expression entries use the flat variable convention of the built-in
/// systems (x1..., u1..., w1..., chi1..., mu1..., sigma1...).
inline RegistryEntry load_system(const Json& j, const std::string& path = "/") {
  RegistryEntry e;
  e.name = detail::need(j, "name", path).get<std::string>();
  e.description = j.value("description", std::string("user-defined system"));
  const Json& dims = detail::need(j, "dims", path);
  const int n = detail::need(dims, "n", path + "dims").get<int>();
  const int m = detail::need(dims, "m", path + "dims").get<int>();
  const int p = dims.value("p", 0);
  const int q = dims.value("q", n);

  auto penv = PlantModel::plant_env(n, m, p);
  auto venv = VirtualModel::virtual_env(n, m, p);
  try {
    e.plant = PlantModel(
        n, m, p, q,
        VectorField::from_text(penv,
                               detail::string_list(detail::need(j, "f", path),
                                                   path + "f")),
        VectorField::from_text(penv,
                               detail::string_list(detail::need(j, "h", path),
                                                   path + "h")));
    e.virtual_model.plant = e.plant;
    e.virtual_model.fhat = VectorField::from_text(
        venv,
        detail::string_list(detail::need(j, "fhat", path), path + "fhat"));
    e.virtual_model.hhat = VectorField::from_text(
        venv,
        detail::string_list(detail::need(j, "hhat", path), path + "hhat"));

    VariableEnv senv;
    senv.add_group("chi", n);
    senv.add_group("x", n);
    e.scheduling.psi = VectorField::from_text(
        senv, detail::string_list(detail::need(j, "psi", path), path + "psi"));
    e.scheduling.P =
        detail::box_from_json(detail::need(j, "box", path), path + "box");

    const Json& anc = detail::need(j, "anchor", path);
    VariableEnv fenv = TargetBehavior::family_env(e.scheduling.P.dim());
    auto anchor_field = [&](const char* key, int dim) {
      auto texts =
          detail::string_list(detail::need(anc, key, path + "anchor"),
                              path + std::string("anchor/") + key);
      if (static_cast<int>(texts.size()) != dim)
        throw ConfigError("anchor dimension mismatch",
                          path + std::string("anchor/") + key);
      return VectorField::from_text(fenv, texts);
    };
    auto chi_f = std::make_shared<VectorField>(anchor_field("chi", n));
    auto x_f = std::make_shared<VectorField>(anchor_field("x", n));
    auto mu_f = std::make_shared<VectorField>(anchor_field("mu", m));
    auto w_f = std::make_shared<VectorField>(anchor_field("w", p));
    e.scheduling.anchor = [chi_f, x_f, mu_f, w_f](const Eigen::VectorXd& s) {
      SchedulingMap::AnchorPoint a;
      a.chi = chi_f->eval({{"sigma", s}});
      a.x = x_f->eval({{"sigma", s}});
      a.mu = mu_f->eval({{"sigma", s}});
      a.w = w_f->eval({{"sigma", s}});
      return a;
    };

    const Json& tgt = detail::need(j, "target", path);
    const Json& fam = detail::need(tgt, "family", path + "target");
    const std::string fpath = path + "target/family";
    Box fbox = detail::box_from_json(detail::need(fam, "box", fpath),
                                     fpath + "/box");
    VariableEnv famenv = TargetBehavior::family_env(fbox.dim());
    VariableEnv xonly;
    xonly.add_group("x", n);
    auto fam_field = [&](const char* key, const VariableEnv& env) {
      return VectorField::from_text(
          env, detail::string_list(detail::need(fam, key, fpath),
                                   fpath + "/" + key));
    };
    e.target = TargetBehavior::family(
        fam_field("xe", famenv), fam_field("ue", famenv),
        fam_field("ze", famenv), fam_field("we", famenv), fbox,
        fam_field("psi", xonly));
  } catch (const ParseError& pe) {
    throw ConfigError(std::string("expression error: ") + pe.what(), path);
  }
  return e;
}

// ---------------------------------------------------------------------------
// Certificate serialization

inline Json certificate_to_json(const Certificate& c) {
  Json j;
  j["mode"] =
      c.mode == Certificate::Mode::kStabilization ? "stabilization" : "robust";
  j["lambda"] = c.lambda;
  j["alpha"] = c.alpha;
  j["n"] = c.param.n;
  j["m"] = c.param.m;
  j["n_sigma"] = c.param.wbasis.n_sigma;
  j["wbasis"] = c.param.wbasis.exponents;
  j["ybasis"] = c.param.ybasis.exponents;
  Json W = Json::array(), Y = Json::array();
  for (const auto& Wk : c.param.Wk) W.push_back(detail::to_json(Wk));
  for (const auto& Yk : c.param.Yk) Y.push_back(detail::to_json(Yk));
  j["W"] = W;
  j["Y"] = Y;
  j["a1"] = c.a1;
  j["a2"] = c.a2;
  j["margin"] = c.margin;
  return j;
}

inline Certificate certificate_from_json(const Json& j,
                                         const std::string& path = "/certificate") {
  Certificate c;
  const std::string mode =
      detail::need(j, "mode", path).get<std::string>();
  if (mode == "stabilization") {
    c.mode = Certificate::Mode::kStabilization;
  } else if (mode == "robust") {
    c.mode = Certificate::Mode::kRobust;
  } else {
    throw ConfigError("mode must be 'stabilization' or 'robust'", path);
  }
  c.lambda = j.value("lambda", 0.0);
  c.alpha = j.value("alpha", 0.0);
  c.param.n = detail::need(j, "n", path).get<int>();
  c.param.m = detail::need(j, "m", path).get<int>();
  const int n_sigma = detail::need(j, "n_sigma", path).get<int>();
  c.param.wbasis.n_sigma = n_sigma;
  c.param.ybasis.n_sigma = n_sigma;
  c.param.wbasis.exponents =
      detail::need(j, "wbasis", path).get<std::vector<std::vector<int>>>();
  c.param.ybasis.exponents =
      detail::need(j, "ybasis", path).get<std::vector<std::vector<int>>>();
  for (const auto& Wk : detail::need(j, "W", path))
    c.param.Wk.push_back(detail::matd(Wk, path + "/W"));
  for (const auto& Yk : detail::need(j, "Y", path))
    c.param.Yk.push_back(detail::matd(Yk, path + "/Y"));
  if (static_cast<int>(c.param.Wk.size()) != c.param.wbasis.size() ||
      static_cast<int>(c.param.Yk.size()) != c.param.ybasis.size())
    throw ConfigError("coefficient count does not match basis", path);
  c.a1 = j.value("a1", 0.0);
  c.a2 = j.value("a2", 0.0);
  c.margin = j.value("margin", 0.0);
  return c;
}

// ---------------------------------------------------------------------------
// Experiment running

struct RunOutcome {
  int exit_code = 0;
  Json summary;
};

namespace detail {

struct ResolvedSystem {
  RegistryEntry entry;
};

inline ResolvedSystem resolve_system(const Json& config) {
  const Json& sys = need(config, "system", "/");
  if (sys.is_string()) return {registry_get(sys.get<std::string>())};
  if (sys.is_object()) return {load_system(sys, "/system/")};
  throw ConfigError("system must be a registry name or an inline object",
                    "/system");
}

/// Gains block {k0, k1} for the scalar benchmark's shared parametrization.
struct GainPair {
  double k0 = -2.2742, k1 = -1.0063;
  bool provided = false;
};

inline GainPair gains_from(const Json& config) {
  GainPair g;
  if (!config.contains("gains")) return g;
  const Json& j = config.at("gains");
  g.k0 = need(j, "k0", "/gains").get<double>();
  g.k1 = need(j, "k1", "/gains").get<double>();
  g.provided = true;
  return g;
}

inline GridSpec grid_from(const Json& config, const SchedulingMap& smap) {
  int pts = 41, mult = 10;
  if (config.contains("synthesis")) {
    const Json& s = config.at("synthesis");
    pts = s.value("grid_points", 41);
    mult = s.value("validation_multiplier", 10);
  }
  return GridSpec(smap.P, pts, mult);
}

/// Certificate resolution precedence: inline certificate > gains (scalar
/// parametrization) > synthesis block > stock default.
inline Certificate resolve_certificate(const Json& config,
                                       const RegistryEntry& entry,
                                       Json* summary, int* exit_code) {
  if (config.contains("certificate"))
    return certificate_from_json(config.at("certificate"));
  if (config.contains("gains")) {
    const GainPair g = gains_from(config);
    if (entry.plant.n != 1 || entry.scheduling.n_sigma() != 1)
      throw ConfigError("gains {k0,k1} shorthand needs a scalar schedule",
                        "/gains");
    return scalar_cubic_certificate(
        g.k0, g.k1, Certificate::Mode::kStabilization, 1.0 - g.k0);
  }
  if (config.contains("synthesis")) {
    const Json& s = config.at("synthesis");
    const std::string type =
        s.value("type", std::string("stabilization"));
    DiffDynamics dd = linearize(entry.virtual_model);
    BasisParam basis = BasisParam::make(
        entry.plant.n, entry.plant.m, entry.scheduling.n_sigma(),
        s.value("wdeg", 0), s.value("ydeg", 1));
    GridSpec grid = grid_from(config, entry.scheduling);
    SolveOptions opts;
    opts.eps_feas = s.value("eps_feas", 1e-6);
    opts.max_iters = s.value("max_iters", 4000);
    std::vector<LMIBlock> blocks;
    double level = 0.0;
    Certificate::Mode mode;
    if (type == "stabilization") {
      level = need(s, "lambda", "/synthesis").get<double>();
      mode = Certificate::Mode::kStabilization;
      blocks = assemble_stabilization(dd, entry.scheduling, basis, grid, level);
    } else if (type == "robust") {
      level = need(s, "alpha", "/synthesis").get<double>();
      mode = Certificate::Mode::kRobust;
      blocks = assemble_robust(dd, entry.scheduling, basis, grid, level);
    } else {
      throw ConfigError("synthesis type must be stabilization or robust",
                        "/synthesis/type");
    }
    auto res = solve(blocks, opts);
    if (summary) {
      Json sj;
      sj["feasible"] = res.feasible;
      sj["solver_margin"] = res.margin;
      sj["iterations"] = res.iterations;
      if (!res.feasible) {
        sj["worst_sigma"] = to_json(res.worst_sigma);
        sj["worst_eigenvalue"] = res.worst_eigenvalue;
      }
      (*summary)["synthesis"] = sj;
    }
    if (!res.feasible) {
      if (exit_code) *exit_code = 2;
      return Certificate{};  // caller aborts on exit code
    }
    return make_certificate(mode, level, basis, res.theta, dd,
                            entry.scheduling, grid);
  }
  return default_certificate(entry.name);
}

/// Baseline law bound to a system. Scalar systems use the {k0, k1} schedule;
/// the furnace binds its exogenous-reference schedules.
inline BaselineLaw baseline_for(const RegistryEntry& entry,
                                const std::string& name, const GainPair& g) {
  auto fam = EquilibriumFamily::from_target(entry.target);
  if (name == "glpv") {
    GainSchedule K =
        entry.plant.n == 1
            ? scalar_gain_schedule(g.k0, g.k1)
            : (entry.name == "gs-furnace"
                   ? GainSchedule::from_text(1, 1, 2, {"1", "-3 - sigma1"})
                   : throw ConfigError("glpv baseline unavailable here",
                                       "/controllers"));
    return glpv_realization(K, entry.scheduling.psi_state_field(),
                            entry.scheduling.P, fam);
  }
  if (entry.name != "gs-furnace")
    throw ConfigError("baseline '" + name + "' is only bound for gs-furnace",
                      "/controllers");
  if (name == "gsc1") return gsc_naive(furnace_gain_schedule(), fam, true);
  if (name == "gsc-subst") return gsc_naive(furnace_gain_schedule(), fam, false);
  if (name == "gsc2") return gsc_compensated(furnace_gain_schedule(), fam);
  throw ConfigError("unknown controller '" + name + "'", "/controllers");
}

struct RunSpec {
  std::string controller;
  Eigen::VectorXd setpoint;  // family parameter (empty in reference mode)
  Eigen::VectorXd x0;
  std::string csv_name;
};

struct RunRecord {
  Json summary;
  Trajectory traj;
};

inline RunRecord execute_run(const RegistryEntry& entry, const Json& config,
                             const Certificate& cert, const GainPair& gains,
                             const RunSpec& spec, const Json& scenario) {
  Scenario sc;
  sc.T = scenario.value("T", 10.0);
  sc.dt = scenario.value("dt", 1e-3);
  sc.x0 = spec.x0;

  std::optional<TargetBehavior> traj_target;
  std::function<Eigen::VectorXd(double)> sigma_ref;
  if (scenario.contains("reference")) {
    if (!entry.target_from_reference)
      throw ConfigError("system has no reference-driven target",
                        "/scenario/reference");
    VariableEnv tenv = TargetBehavior::time_env();
    Expr r = parse(scenario.at("reference").get<std::string>(),
                   tenv.name_set());
    traj_target = entry.target_from_reference(r);
    sc.target = trajectory_target(*traj_target, entry.plant.p);
    auto rf = std::make_shared<CompiledExpr>(r, tenv.flat_names());
    sigma_ref = [rf](double t) {
      const double tv = t;
      return Eigen::VectorXd::Constant(1, rf->eval(&tv));
    };
  } else {
    sc.target = setpoint_target(entry.target, spec.setpoint);
    const Eigen::VectorXd sp = spec.setpoint;
    sigma_ref = [sp](double) { return sp; };
  }

  if (scenario.contains("disturbance")) {
    VariableEnv tenv = TargetBehavior::time_env();
    Expr wx = parse(scenario.at("disturbance").get<std::string>(),
                    tenv.name_set());
    auto wf = std::make_shared<CompiledExpr>(wx, tenv.flat_names());
    auto base = sc.target;
    const int p = entry.plant.p;
    sc.w_of_t = [wf, base, p](double t) {
      const double tv = t;
      return (base(t).wstar +
              Eigen::VectorXd::Constant(p, wf->eval(&tv)))
          .eval();
    };
  }

  std::unique_ptr<Agent> agent;
  BaselineAgent* baseline = nullptr;
  if (spec.controller == "vccm") {
    agent = std::make_unique<VccmAgent>(cert, entry.scheduling,
                                        entry.virtual_model);
  } else if (spec.controller == "openloop") {
    agent = std::make_unique<OpenLoopAgent>();
  } else {
    auto law = baseline_for(entry, spec.controller, gains);
    auto ba = std::make_unique<BaselineAgent>(std::move(law), sigma_ref);
    baseline = ba.get();
    agent = std::move(ba);
  }

  RunRecord rec;
  rec.traj = simulate(entry.plant, sc, *agent);

  Json rj;
  rj["controller"] = spec.controller;
  if (spec.setpoint.size() > 0) rj["setpoint"] = to_json(spec.setpoint);
  rj["x0"] = to_json(spec.x0);
  rj["csv"] = spec.csv_name;
  rj["blew_up"] = rec.traj.blew_up;
  if (rec.traj.blew_up) rj["blowup_time"] = rec.traj.blowup_time;
  if (!rec.traj.x.empty()) {
    rj["final_x"] = to_json(rec.traj.x.back());
    const Eigen::VectorXd xs = sc.target(rec.traj.t.back()).xstar;
    const double efinal = (rec.traj.x.back() - xs).norm();
    const double e0 = (sc.x0 - sc.target(0.0).xstar).norm();
    rj["final_error"] = efinal;
    rj["diverged"] = rec.traj.blew_up || (e0 > 0 && efinal > 10.0 * e0);
    if (!rec.traj.blew_up && e0 > 0) {
      try {
        auto fit = decay_fit(rec.traj, sc.target);
        rj["lambda_fit"] = fit.lambda;
        rj["R_fit"] = fit.R;
      } catch (const ExprError&) {
        // error hit the numeric floor everywhere; no fit available
      }
    }
  }
  if (baseline) rj["schedule_saturated"] = baseline->ever_saturated();
  rec.summary = std::move(rj);
  return rec;
}

}  // namespace detail

/// Registry names and one-line descriptions, optionally with user systems
/// loaded from *.json files in a directory (appended in sorted order).
inline std::vector<std::pair<std::string, std::string>> list_systems(
    const std::string& user_dir = "") {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : registry()) out.emplace_back(e.name, e.description);
  if (!user_dir.empty() && std::filesystem::is_directory(user_dir)) {
    std::vector<std::filesystem::path> files;
    for (const auto& p : std::filesystem::directory_iterator(user_dir))
      if (p.path().extension() == ".json") files.push_back(p.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::ifstream is(f);
      Json j = Json::parse(is);
      RegistryEntry e = load_system(j);
      out.emplace_back(e.name, e.description);
    }
  }
  return out;
}

/// Runs one experiment config. Writes summary.json and per-run artifacts to
/// out_dir; returns the summary and the process exit code.
inline RunOutcome run_experiment(const Json& config, std::string mode,
                                 const std::string& out_dir, int workers = 1,
                                 unsigned seed = 0) {
  namespace fs = std::filesystem;
  RunOutcome out;
  if (mode.empty()) mode = config.value("mode", std::string(""));
  if (mode.empty())
    throw ConfigError("mode missing (CLI subcommand or config field)",
                      "/mode");
  if (config.contains("mode") &&
      config.at("mode").get<std::string>() != mode)
    throw ConfigError("config mode disagrees with the CLI subcommand",
                      "/mode");
  auto sys = detail::resolve_system(config);
  const RegistryEntry& entry = sys.entry;

  fs::create_directories(out_dir);
  Json& summary = out.summary;
  summary["system"] = entry.name;
  summary["mode"] = mode;
  summary["seed"] = seed;

  // Embedding sanity gate shared by every mode.
  auto emb = check_embedding(entry.virtual_model, 200, seed);
  summary["embedding_residual"] = emb.max_residual;
  if (!emb.pass) {
    summary["error"] = "virtual model fails the embedding identity";
    out.exit_code = 3;
  }

  const detail::GainPair gains = detail::gains_from(config);
  DiffDynamics dd = linearize(entry.virtual_model);
  GridSpec grid = detail::grid_from(config, entry.scheduling);

  if (out.exit_code == 0 && mode == "synth") {
    Certificate cert =
        detail::resolve_certificate(config, entry, &summary, &out.exit_code);
    if (out.exit_code == 0) {
      summary["certificate"] = certificate_to_json(cert);
      auto rep = validate(cert, dd, entry.scheduling, grid);
      summary["validation"] = {{"min_margin", rep.min_margin},
                               {"accepted", rep.accepted},
                               {"a1", rep.a1},
                               {"a2", rep.a2},
                               {"lipschitz_estimate", rep.lipschitz_estimate}};
      if (!rep.accepted) out.exit_code = 3;
    }
  } else if (out.exit_code == 0 && mode == "validate") {
    Certificate cert =
        detail::resolve_certificate(config, entry, &summary, &out.exit_code);
    if (out.exit_code == 0) {
      auto rep = validate(cert, dd, entry.scheduling, grid);
      summary["certificate"] = certificate_to_json(cert);
      summary["validation"] = {{"min_margin", rep.min_margin},
                               {"accepted", rep.accepted},
                               {"a1", rep.a1},
                               {"a2", rep.a2},
                               {"worst_sigma", detail::to_json(rep.worst_sigma)},
                               {"lipschitz_estimate", rep.lipschitz_estimate}};
      if (!rep.accepted) out.exit_code = 3;
    }
  } else if (out.exit_code == 0 && (mode == "simulate" || mode == "compare")) {
    Certificate cert =
        detail::resolve_certificate(config, entry, &summary, &out.exit_code);
    if (out.exit_code == 0) {
      summary["certificate"] = certificate_to_json(cert);
      const Json& scenario = detail::need(config, "scenario", "/");
      std::vector<std::string> controllers;
      if (mode == "compare") {
        controllers = detail::string_list(
            detail::need(config, "controllers", "/"), "/controllers");
      } else {
        controllers = {config.value("controller", std::string("vccm"))};
      }
      // enumerate runs: controllers x setpoints x initial states
      std::vector<detail::RunSpec> specs;
      std::vector<Eigen::VectorXd> setpoints;
      if (scenario.contains("setpoints")) {
        for (const auto& sp : scenario.at("setpoints"))
          setpoints.push_back(sp.is_array()
                                  ? detail::vecd(sp, "/scenario/setpoints")
                                  : Eigen::VectorXd::Constant(
                                        1, sp.get<double>()));
      } else if (!scenario.contains("reference")) {
        throw ConfigError("scenario needs setpoints or a reference",
                          "/scenario");
      } else {
        setpoints.push_back(Eigen::VectorXd());
      }
      std::vector<Eigen::VectorXd> x0s;
      for (const auto& x0 : detail::need(scenario, "x0", "/scenario"))
        x0s.push_back(x0.is_array() ? detail::vecd(x0, "/scenario/x0")
                                    : Eigen::VectorXd::Constant(
                                          1, x0.get<double>()));
      int run_id = 0;
      for (const auto& ctrl : controllers)
        for (const auto& sp : setpoints)
          for (const auto& x0 : x0s) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "run_%03d_%s.csv", run_id++,
                          ctrl.c_str());
            specs.push_back({ctrl, sp, x0, buf});
          }

      std::vector<detail::RunRecord> records(specs.size());
      const int nthreads =
          std::max(1, std::min<int>(workers, static_cast<int>(specs.size())));
      std::atomic<std::size_t> next{0};
      std::vector<std::string> errors(specs.size());
      auto work = [&]() {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= specs.size()) return;
          try {
            records[i] = detail::execute_run(entry, config, cert, gains,
                                             specs[i], scenario);
          } catch (const std::exception& ex) {
            errors[i] = ex.what();
          }
        }
      };
      std::vector<std::thread> pool;
      for (int i = 0; i < nthreads; ++i) pool.emplace_back(work);
      for (auto& th : pool) th.join();
      for (std::size_t i = 0; i < specs.size(); ++i)
        if (!errors[i].empty()) throw ExprError(errors[i]);

      Json runs = Json::array();
      for (std::size_t i = 0; i < specs.size(); ++i) {
        write_csv((fs::path(out_dir) / specs[i].csv_name).string(),
                  records[i].traj);
        runs.push_back(records[i].summary);
      }
      summary["runs"] = runs;

      // scalar comparisons also report the closed-loop equilibria of any
      // gain-scheduled law at each set-point
      if (mode == "compare" && entry.plant.n == 1) {
        Json eq = Json::object();
        for (const auto& ctrl : controllers) {
          if (ctrl == "vccm" || ctrl == "openloop") continue;
          for (const auto& sp : setpoints) {
            if (sp.size() == 0) continue;
            auto law = detail::baseline_for(entry, ctrl, gains);
            VectorField cl = closed_loop_field(entry.plant, law, sp);
            auto roots = find_equilibria_1d(cl, entry.target.family_box.lo(0) -
                                                    1.0,
                                            entry.target.family_box.hi(0) +
                                                1.0);
            char key[64];
            std::snprintf(key, sizeof(key), "%s@%.6g", ctrl.c_str(), sp(0));
            Json arr = Json::array();
            for (double r : roots) arr.push_back(r);
            eq[key] = arr;
          }
        }
        summary["closed_loop_equilibria"] = eq;
      }
    }
  } else if (out.exit_code == 0 && mode == "region") {
    const Json& reg = detail::need(config, "region", "/");
    const std::string ctrl =
        reg.value("controller", std::string("gsc1"));
    const Box box = detail::box_from_json(detail::need(reg, "box", "/region"),
                                          "/region/box");
    const double step = reg.value("step", 0.02);
    std::vector<double> refs;
    for (const auto& r : detail::need(reg, "references", "/region"))
      refs.push_back(r.get<double>());
    Json scans = Json::array();
    for (double r : refs) {
      auto law = detail::baseline_for(entry, ctrl, gains);
      VectorField cl =
          closed_loop_field(entry.plant, law, Eigen::VectorXd::Constant(1, r));
      auto scan = instability_region(cl, box, step);
      char name[64];
      std::snprintf(name, sizeof(name), "region_%s_r%+.3f.csv", ctrl.c_str(),
                    r);
      std::ofstream os(fs::path(out_dir) / name);
      os << "x1,x2,hurwitz,max_re\n";
      char buf[32];
      for (std::size_t i = 0; i < scan.points.size(); ++i) {
        for (int d = 0; d < scan.points[i].size(); ++d) {
          std::snprintf(buf, sizeof(buf), "%.17g", scan.points[i](d));
          os << buf << ",";
        }
        os << (scan.hurwitz[i] ? 1 : 0) << ",";
        std::snprintf(buf, sizeof(buf), "%.17g", scan.max_real_part[i]);
        os << buf << "\n";
      }
      int flips = 0;
      double flip_at = std::numeric_limits<double>::quiet_NaN();
      for (std::size_t i = 1; i < scan.points.size(); ++i) {
        if (scan.hurwitz[i] != scan.hurwitz[i - 1]) {
          ++flips;
          flip_at = 0.5 * (scan.points[i](scan.points[i].size() - 1) +
                           scan.points[i - 1](scan.points[i - 1].size() - 1));
        }
      }
      scans.push_back({{"reference", r},
                       {"csv", name},
                       {"label_flips", flips},
                       {"boundary_estimate", flip_at}});
    }
    summary["regions"] = scans;
  } else if (out.exit_code == 0) {
    throw ConfigError("unknown mode '" + mode + "'", "/mode");
  }

  std::ofstream os(fs::path(out_dir) / "summary.json");
  os << summary.dump(2) << "\n";
  return out;
}

}  // namespace vccm
