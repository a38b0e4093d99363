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
 * @file defaults.hpp
 * @brief Stock certificates for the registry systems.
 *
 * Each entry pins the closed-form dual pair (W, Y = K W) its benchmark is
 * known to admit, so realizations and comparisons run without a synthesis
 * pass. All use constant W; gains are affine in the scheduling variable.
 */

#include "vccm/lpv.hpp"
#include "vccm/registry.hpp"
#include "vccm/synthesis.hpp"

namespace vccm {

/// Furnace schedule in the family parameter r_e: K = [1, -3 - exp(-r_e)]
/// (the paper's [1, -3 - sigma] with sigma = exp(-r)).
inline GainSchedule furnace_gain_schedule() {
  return GainSchedule::from_text(1, 1, 2, {"1", "-3 - exp(-sigma1)"});
}

/// Scalar embedding schedule K(sigma) = k0 + k1 sigma with sigma = x^2.
inline GainSchedule scalar_gain_schedule(double k0, double k1) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%.17g + %.17g*sigma1", k0, k1);
  return GainSchedule::from_text(1, 1, 1, {buf});
}

/// Scheduled gain K(sigma) = k0 + k1 sigma for the scalar benchmark.
inline Certificate scalar_cubic_certificate(double k0, double k1,
                                            Certificate::Mode mode,
                                            double level) {
  return certificate_from_gains(
      Eigen::MatrixXd::Identity(1, 1),
      {Eigen::MatrixXd::Constant(1, 1, k0), Eigen::MatrixXd::Constant(1, 1, k1)},
      1, mode, level);
}

/// Default certificate for a registry system.
///
///  - "ex2":          K = [-1, 0], W = I, rate 1/4.
///  - "ex3-skew":     open-loop K = 0, W = I, rate 0.9 (skew structure).
///  - "gs-furnace":   K(sigma) = [1, -3-sigma], W from a Lyapunov pick at
///                    rate 3/2 (the closed loop places -2, -2).
///  - "scalar-cubic": the L2-level-1 gains k0 = -2.2742, k1 = -1.0063.
inline Certificate default_certificate(const std::string& name) {
  if (name == "ex2") {
    Eigen::MatrixXd K0(1, 2);
    K0 << -1.0, 0.0;
    return certificate_from_gains(Eigen::MatrixXd::Identity(2, 2), {K0}, 1,
                                  Certificate::Mode::kStabilization, 0.25);
  }
  if (name == "ex3-skew") {
    return certificate_from_gains(Eigen::MatrixXd::Identity(2, 2),
                                  {Eigen::MatrixXd::Zero(1, 2)}, 1,
                                  Certificate::Mode::kStabilization, 0.9);
  }
  if (name == "gs-furnace") {
    Eigen::MatrixXd W(2, 2);
    W << 1.0, 1.0, 1.0, 1.5;
    Eigen::MatrixXd K0(1, 2), K1(1, 2);
    K0 << 1.0, -3.0;
    K1 << 0.0, -1.0;
    return certificate_from_gains(W, {K0, K1}, 1,
                                  Certificate::Mode::kStabilization, 1.5);
  }
  if (name == "scalar-cubic") {
    return scalar_cubic_certificate(-2.2742, -1.0063,
                                    Certificate::Mode::kRobust, 1.0);
  }
  throw ExprError("no default certificate for system '" + name + "'");
}

/// Nominal contraction rate the default certificate is designed for; used by
/// tracking-rate checks.
inline double default_design_rate(const std::string& name) {
  if (name == "ex2") return 0.25;
  if (name == "ex3-skew") return 0.9;
  if (name == "gs-furnace") return 1.5;
  if (name == "scalar-cubic") return 1.0 + 2.2742;  // exact linear error rate
  throw ExprError("no default design rate for system '" + name + "'");
}

}  // namespace vccm
