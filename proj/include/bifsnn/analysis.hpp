// Copyright 2026 The bifsnn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "bifsnn/core.hpp"
#include "bifsnn/dynamics.hpp"
#include "bifsnn/eigen.hpp"
#include "bifsnn/error.hpp"
#include "bifsnn/matrix.hpp"

namespace bifsnn {

enum class SystemClass { Dissipative, Conservative, Diffusive, Mixed, Indefinite };

constexpr std::string_view to_string(SystemClass c) {
  switch (c) {
    case SystemClass::Dissipative: return "dissipative";
    case SystemClass::Conservative: return "conservative";
    case SystemClass::Diffusive: return "diffusive";
    case SystemClass::Mixed: return "mixed";
    case SystemClass::Indefinite: return "indefinite";
  }
  return "unknown";
}

struct EnergyReport {
  std::vector<double> H;      // total energy per step
  std::vector<double> dH_dt;  // analytic rate 2 gamma |u|^2 per step
  SystemClass system_class = SystemClass::Conservative;
};

struct BifurcationReport {
  std::vector<Complex> eigenvalues;  // sorted by real part, descending
  std::size_t n_positive = 0;
  std::size_t n_zero = 0;
  std::size_t n_negative = 0;
  std::optional<double> lambda_c;  // gamma^2, two-neuron layers only
  bool bifurcated = false;         // some eigenvalue has positive real part
  bool hyperbolic = false;         // exactly one positive and one negative, N = 2
  SystemClass system_class = SystemClass::Conservative;
};

struct HhParams {
  double g1 = 1.0, g2 = 1.0, g3 = 1.0;
  double tau_u = 1.0, tau_n = 1.0, tau_m = 1.0, tau_h = 1.0;
};

struct HhState {
  double u = 0.0, n = 0.0, m = 0.0, h = 0.0;
};

struct HhEnergyRate {
  double rate = 0.0;
  SystemClass system_class = SystemClass::Indefinite;
  bool non_positive_tau = false;
};

struct IzhikevichParams {
  double a_u = 0.04, b_u = 5.0, a_w = 0.02, b_w = 0.2;
};

inline SystemClass classify_rate(double gamma) {
  if (gamma < 0.0) return SystemClass::Dissipative;
  if (gamma > 0.0) return SystemClass::Diffusive;
  return SystemClass::Conservative;
}

/// Energy of a layer of LIF neurons, H = |u|^2 - 2 (R / tau_m) F, where F is
/// the running trapezoidal integral of <f, u>. With du/dt = gamma u + (R /
/// tau_m) f this makes dH/dt = 2 gamma |u|^2 exactly; note the sign of the F
/// term (adding it would double the drive contribution instead of cancelling
/// it). `drive` holds f(I) on the same grid as `trace`. dH_dt is the analytic
/// rate 2 gamma |u|^2.
inline EnergyReport lif_energy(const MembraneTrace& trace,
                               const MembraneTrace& drive,
                               const LifParams& params) {
  require(trace.grid() == drive.grid() &&
              trace.neuron_count() == drive.neuron_count(),
          ErrorKind::GridMismatch, "trace and drive grids differ");
  const std::size_t steps = trace.steps();
  const double dt = trace.grid().dt;
  EnergyReport report;
  report.H.resize(steps);
  report.dH_dt.resize(steps);
  report.system_class = classify_rate(params.gamma);
  const double gain = params.R / params.tau_m;
  double F = 0.0;
  double prev_fu = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    double u2 = 0.0;
    double fu = 0.0;
    for (std::size_t k = 0; k < trace.neuron_count(); ++k) {
      const double u = trace.at(k, s);
      u2 += u * u;
      fu += drive.at(k, s) * u;
    }
    if (s > 0) F += 0.5 * (prev_fu + fu) * dt;
    prev_fu = fu;
    report.H[s] = u2 - 2.0 * gain * F;
    report.dH_dt[s] = 2.0 * params.gamma * u2;
  }
  return report;
}

/// L = gamma I + lambda.
inline Matrix bsnn_operator(double gamma, const Matrix& lambda) {
  require(lambda.square(), ErrorKind::NonSquare, "lambda must be square");
  Matrix L = lambda;
  for (std::size_t i = 0; i < L.rows(); ++i) L(i, i) += gamma;
  return L;
}

/// dH_B/dt = 2 u^T (gamma I + lambda) u.
inline double bsnn_energy_rate(std::span<const double> u, double gamma,
                               const Matrix& lambda) {
  require(lambda.square() && lambda.rows() == u.size(),
          ErrorKind::DimensionMismatch, "u and lambda sizes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    double row = gamma * u[i];
    for (std::size_t j = 0; j < u.size(); ++j) row += lambda(i, j) * u[j];
    acc += u[i] * row;
  }
  return 2.0 * acc;
}

inline double default_zero_tolerance(double gamma) {
  return 1e-9 * (1.0 + std::abs(gamma));
}

/// Counts eigenvalue signs (|Re| <= tol counts as zero) and derives the
/// system class.
inline BifurcationReport classify_spectrum(std::vector<Complex> eigenvalues,
                                           double tol) {
  BifurcationReport r;
  sort_eigenvalues(eigenvalues);
  r.eigenvalues = std::move(eigenvalues);
  for (const auto& e : r.eigenvalues) {
    if (std::abs(e.real()) <= tol) {
      ++r.n_zero;
    } else if (e.real() > 0.0) {
      ++r.n_positive;
    } else {
      ++r.n_negative;
    }
  }
  const std::size_t n = r.eigenvalues.size();
  r.bifurcated = r.n_positive >= 1;
  r.hyperbolic = n == 2 && r.n_positive == 1 && r.n_negative == 1;
  if (r.n_negative == n) {
    r.system_class = SystemClass::Dissipative;
  } else if (r.n_positive == n) {
    r.system_class = SystemClass::Diffusive;
  } else if (r.n_zero == n) {
    r.system_class = SystemClass::Conservative;
  } else {
    r.system_class = SystemClass::Mixed;
  }
  return r;
}

inline BifurcationReport bsnn_bifurcation(double gamma, const Matrix& lambda,
                                          std::optional<double> tol = std::nullopt) {
  require(lambda.square(), ErrorKind::NonSquare, "lambda must be square");
  for (std::size_t i = 0; i < lambda.rows(); ++i) {
    require(lambda(i, i) == 0.0, ErrorKind::DimensionMismatch,
            "lambda diagonal must be zero");
  }
  auto report = classify_spectrum(
      abstract_eigenvalues(bsnn_operator(gamma, lambda)),
      tol.value_or(default_zero_tolerance(gamma)));
  if (lambda.rows() == 2) report.lambda_c = gamma * gamma;
  return report;
}

/// dH_HH/dt = -2 (g1 u^2 / tau_u + n^2 / tau_n + m^2 / tau_m + h^2 / tau_h).
inline HhEnergyRate hh_energy_rate(const HhParams& p, const HhState& s) {
  HhEnergyRate out;
  out.rate = -2.0 * (p.g1 * s.u * s.u / p.tau_u + s.n * s.n / p.tau_n +
                     s.m * s.m / p.tau_m + s.h * s.h / p.tau_h);
  out.non_positive_tau =
      p.tau_u <= 0.0 || p.tau_n <= 0.0 || p.tau_m <= 0.0 || p.tau_h <= 0.0;
  const bool nonzero = s.u != 0.0 || s.n != 0.0 || s.m != 0.0 || s.h != 0.0;
  out.system_class = !out.non_positive_tau && p.g1 > 0.0 && nonzero
                         ? SystemClass::Dissipative
                         : SystemClass::Indefinite;
  return out;
}

/// Linear part of the Izhikevich energy rate, A = [[b_u, 0], [a_w b_w, -a_w]].
inline Matrix izhikevich_operator(const IzhikevichParams& p) {
  return Matrix{{p.b_u, 0.0}, {p.a_w * p.b_w, -p.a_w}};
}

inline BifurcationReport izhikevich_analysis(const IzhikevichParams& p) {
  return classify_spectrum(abstract_eigenvalues(izhikevich_operator(p)),
                           default_zero_tolerance(0.0));
}

}  // namespace bifsnn
