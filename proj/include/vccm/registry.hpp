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
 * @file registry.hpp
 * @brief Built-in benchmark systems with their virtual embeddings, target
 * behaviors and scheduling maps.
 *
 *  - "ex2":          2-state system xdot = A(x)x + Bu with A depending on
 *                    cos(x1); exact feedforward does not exist, so tracking
 *                    needs a virtual target generator.
 *  - "ex3-skew":     2-state system with skew-symmetric A(x) (A + A^T = -2I);
 *                    open-loop contracting virtual dynamics.
 *  - "gs-furnace":   classic gain-scheduling benchmark
 *                    x1dot = -x1 - x2 + r, x2dot = 1 - exp(-x2) + u, with the
 *                    measured reference r carried on the w channel.
 *  - "scalar-cubic": xdot = -x + x^3 + u (+ input disturbance), embedded as
 *                    chidot = -(1 - sigma) chi + mu with sigma = x^2 on [0,4].
 */

#include "vccm/model.hpp"

namespace vccm {

struct RegistryEntry {
  std::string name;
  std::string description;
  PlantModel plant;
  VirtualModel virtual_model;
  TargetBehavior target;  // equilibrium family
  SchedulingMap scheduling;

  /// For externally referenced systems: builds a trajectory-mode target from
  /// a reference expression r(t), with the analytic rdot.
  std::function<TargetBehavior(const Expr& r_of_t)> target_from_reference;
};

namespace detail {

inline RegistryEntry make_ex2() {
  RegistryEntry e;
  e.name = "ex2";
  e.description =
      "2-state plant xdot=A(x)x+Bu, A=[0 1/4; cos(x1) -1], B=[1;0]; VTR-based tracking";

  auto penv = PlantModel::plant_env(2, 1, 0);
  e.plant = PlantModel(
      2, 1, 0, 2,
      VectorField::from_text(penv, {"x2/4 + u1", "cos(x1)*x1 - x2"}),
      VectorField::from_text(penv, {"x1", "x2"}));

  auto venv = VirtualModel::virtual_env(2, 1, 0);
  e.virtual_model.plant = e.plant;
  e.virtual_model.fhat =
      VectorField::from_text(venv, {"chi2/4 + mu1", "cos(x1)*chi1 - chi2"});
  e.virtual_model.hhat = VectorField::from_text(venv, {"chi1", "chi2"});

  auto fam = TargetBehavior::family_env(1);
  VariableEnv xonly;
  xonly.add_group("x", 2);
  e.target = TargetBehavior::family(
      VectorField::from_text(fam, {"sigma1", "sigma1*cos(sigma1)"}),
      VectorField::from_text(fam, {"-sigma1*cos(sigma1)/4"}),
      VectorField::from_text(fam, {"sigma1", "sigma1*cos(sigma1)"}),
      VectorField(fam, std::vector<Expr>{}), Box::cube(1, -2.0, 2.0),
      VectorField::from_text(xonly, {"x1"}));

  VariableEnv senv;
  senv.add_group("chi", 2);
  senv.add_group("x", 2);
  e.scheduling.psi = VectorField::from_text(senv, {"cos(x1)"});
  e.scheduling.P = Box::cube(1, -1.0, 1.0);
  e.scheduling.anchor = [](const Eigen::VectorXd& s) {
    SchedulingMap::AnchorPoint a;
    a.x = Eigen::Vector2d(std::acos(std::clamp(s(0), -1.0, 1.0)), 0.0);
    a.chi = a.x;
    a.mu = Eigen::VectorXd::Zero(1);
    a.w = Eigen::VectorXd::Zero(0);
    return a;
  };
  return e;
}

inline RegistryEntry make_ex3_skew() {
  RegistryEntry e;
  e.name = "ex3-skew";
  e.description =
      "2-state plant with skew-symmetric A(x) (A+A^T=-2I); open-loop virtual contraction";

  auto penv = PlantModel::plant_env(2, 1, 0);
  e.plant = PlantModel(
      2, 1, 0, 2,
      VectorField::from_text(penv, {"-x1 + sin(x2)*x2 + u1", "-sin(x2)*x1 - x2"}),
      VectorField::from_text(penv, {"x1", "x2"}));

  auto venv = VirtualModel::virtual_env(2, 1, 0);
  e.virtual_model.plant = e.plant;
  e.virtual_model.fhat =
      VectorField::from_text(venv, {"-chi1 + sin(x2)*chi2 + mu1", "-sin(x2)*chi1 - chi2"});
  e.virtual_model.hhat = VectorField::from_text(venv, {"chi1", "chi2"});

  auto fam = TargetBehavior::family_env(1);
  VariableEnv xonly;
  xonly.add_group("x", 2);
  e.target = TargetBehavior::family(
      VectorField::from_text(fam, {"sigma1", "0"}), VectorField::from_text(fam, {"sigma1"}),
      VectorField::from_text(fam, {"sigma1", "0"}),
      VectorField(fam, std::vector<Expr>{}), Box::cube(1, -2.0, 2.0),
      VectorField::from_text(xonly, {"x1"}));

  VariableEnv senv;
  senv.add_group("chi", 2);
  senv.add_group("x", 2);
  e.scheduling.psi = VectorField::from_text(senv, {"sin(x2)"});
  e.scheduling.P = Box::cube(1, -1.0, 1.0);
  e.scheduling.anchor = [](const Eigen::VectorXd& s) {
    SchedulingMap::AnchorPoint a;
    a.x = Eigen::Vector2d(0.0, std::asin(std::clamp(s(0), -1.0, 1.0)));
    a.chi = a.x;
    a.mu = Eigen::VectorXd::Zero(1);
    a.w = Eigen::VectorXd::Zero(0);
    return a;
  };
  return e;
}

inline RegistryEntry make_gs_furnace() {
  RegistryEntry e;
  e.name = "gs-furnace";
  e.description =
      "gain-scheduling benchmark x1dot=-x1-x2+r, x2dot=1-exp(-x2)+u; r on the w channel";

  auto penv = PlantModel::plant_env(2, 1, 1);
  e.plant = PlantModel(
      2, 1, 1, 1,
      VectorField::from_text(penv, {"-x1 - x2 + w1", "1 - exp(-x2) + u1"}),
      VectorField::from_text(penv, {"x2 - w1"}));

  auto venv = VirtualModel::virtual_env(2, 1, 1);
  e.virtual_model.plant = e.plant;
  e.virtual_model.fhat =
      VectorField::from_text(venv, {"-chi1 - chi2 + w1", "1 - exp(-chi2) + mu1"});
  e.virtual_model.hhat = VectorField::from_text(venv, {"chi2 - w1"});

  // Equilibrium family parametrized by the set-point r_e: x_e = (0, r_e),
  // u_e = exp(-r_e) - 1, sustained by w = r_e.
  auto fam = TargetBehavior::family_env(1);
  VariableEnv xonly;
  xonly.add_group("x", 2);
  e.target = TargetBehavior::family(
      VectorField::from_text(fam, {"0", "sigma1"}),
      VectorField::from_text(fam, {"exp(-sigma1) - 1"}), VectorField::from_text(fam, {"0"}),
      VectorField::from_text(fam, {"sigma1"}), Box::cube(1, -1.5, 1.5),
      VectorField::from_text(xonly, {"x2"}));

  // Metric-consistent scheduling: sigma = exp(-chi2) rides the virtual state,
  // so the gain varies along the control path.
  VariableEnv senv;
  senv.add_group("chi", 2);
  senv.add_group("x", 2);
  e.scheduling.psi = VectorField::from_text(senv, {"exp(-chi2)"});
  e.scheduling.P = Box::cube(1, 0.2, 5.0);
  e.scheduling.anchor = [](const Eigen::VectorXd& s) {
    SchedulingMap::AnchorPoint a;
    const double x2 = -std::log(std::max(s(0), 1e-12));
    a.x = Eigen::Vector2d(0.0, x2);
    a.chi = a.x;
    a.mu = Eigen::VectorXd::Zero(1);
    a.w = Eigen::VectorXd::Zero(1);
    return a;
  };

  e.target_from_reference = [](const Expr& r) {
    auto tenv = TargetBehavior::time_env();
    const Expr rdot = diff(r, "t");
    VectorField xs(tenv, {Expr::constant(0.0), r});
    VectorField us(tenv, {Expr::exp(Expr::neg(r)) - Expr::constant(1.0) + rdot});
    VectorField xds(tenv, {Expr::constant(0.0), rdot});
    VectorField ws(tenv, {r});  // the reference rides the w channel
    return TargetBehavior::trajectory(std::move(xs), std::move(us),
                                      std::move(xds), std::move(ws));
  };
  return e;
}

inline RegistryEntry make_scalar_cubic() {
  RegistryEntry e;
  e.name = "scalar-cubic";
  e.description =
      "scalar plant xdot=-x+x^3+u+w embedded as chidot=-(1-sigma)chi+mu+w, sigma=x^2 in [0,4]";

  auto penv = PlantModel::plant_env(1, 1, 1);
  e.plant = PlantModel(
      1, 1, 1, 2,
      VectorField::from_text(penv, {"-x1 + x1^3 + u1 + w1"}),
      VectorField::from_text(penv, {"x1", "0.1*u1"}));

  auto venv = VirtualModel::virtual_env(1, 1, 1);
  e.virtual_model.plant = e.plant;
  e.virtual_model.fhat =
      VectorField::from_text(venv, {"-(1 - x1^2)*chi1 + mu1 + w1"});
  e.virtual_model.hhat = VectorField::from_text(venv, {"chi1", "0.1*mu1"});

  auto fam = TargetBehavior::family_env(1);
  VariableEnv xonly;
  xonly.add_group("x", 1);
  e.target = TargetBehavior::family(
      VectorField::from_text(fam, {"sigma1"}), VectorField::from_text(fam, {"sigma1 - sigma1^3"}),
      VectorField::from_text(fam, {"sigma1", "0.1*(sigma1 - sigma1^3)"}),
      VectorField::from_text(fam, {"0"}), Box::cube(1, -2.0, 2.0),
      VectorField::from_text(xonly, {"x1"}));

  // Global LPV embedding: sigma = x^2 reads the true state, so the gain is
  // frozen along a control path.
  VariableEnv senv;
  senv.add_group("chi", 1);
  senv.add_group("x", 1);
  e.scheduling.psi = VectorField::from_text(senv, {"x1^2"});
  e.scheduling.P = Box::cube(1, 0.0, 4.0);
  e.scheduling.anchor = [](const Eigen::VectorXd& s) {
    SchedulingMap::AnchorPoint a;
    a.x = Eigen::VectorXd::Constant(1, std::sqrt(std::max(s(0), 0.0)));
    a.chi = a.x;
    a.mu = Eigen::VectorXd::Zero(1);
    a.w = Eigen::VectorXd::Zero(1);
    return a;
  };
  return e;
}

}  // namespace detail

/// Built-in systems in stable order.
inline const std::vector<RegistryEntry>& registry() {
  static const std::vector<RegistryEntry> entries = [] {
    std::vector<RegistryEntry> v;
    v.push_back(detail::make_ex2());
    v.push_back(detail::make_ex3_skew());
    v.push_back(detail::make_gs_furnace());
    v.push_back(detail::make_scalar_cubic());
    return v;
  }();
  return entries;
}

inline const RegistryEntry& registry_get(const std::string& name) {
  for (const auto& e : registry())
    if (e.name == name) return e;
  throw ExprError("unknown system '" + name + "'");
}

}  // namespace vccm
