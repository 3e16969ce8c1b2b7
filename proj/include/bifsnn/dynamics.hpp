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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "bifsnn/core.hpp"
#include "bifsnn/error.hpp"
#include "bifsnn/matrix.hpp"

namespace bifsnn {

/// Which exponential weights the closed-form (spike response) solutions use.
///  - OdeConsistent: e^{gamma (t - s)}, the Green's function of the ODE.
///  - AnchoredIntegral:  e^{gamma (s - t')}, anchored at the last firing time t'.
enum class KernelConvention { OdeConsistent, AnchoredIntegral };

/// Absolute: the potential is clamped to rest for `refractory` ms after a
/// spike. Kernel: no clamp, a negative exponential is convolved with the
/// neuron's own spikes instead.
enum class RefractoryMode { Absolute, Kernel };

/// Potentials are clamped to this magnitude so runaway (gamma > 0) layers
/// stay finite.
inline constexpr double kMaxPotential = 1e9;
inline constexpr SpikeCount kMaxSpikesPerBin = 1 << 20;

struct LifParams {
  double tau_m = 20.0;
  double R = 1.0;
  double gamma = -1.0 / 20.0;
  double u_rest = 0.0;
  double u_firing = 1.0;
  double refractory = 2.0;

  /// Classic LIF parameterization; the control rate is tied to tau_m.
  static LifParams lif_style(double tau_m, double R, double u_rest,
                             double u_firing, double refractory) {
    require(tau_m > 0.0, ErrorKind::NonPositiveTime, "tau_m must be positive");
    return LifParams{tau_m, R, -1.0 / tau_m, u_rest, u_firing, refractory};
  }
};

struct BsnnLayerParams {
  double gamma = -0.21;
  Matrix lambda;  // N x N, zero diagonal
  double R = 1.0;
  double tau_m = 1.0;
  double u_rest = 0.0;
  double u_firing = 1.0;
  double refractory = 2.0;

  std::size_t size() const noexcept { return lambda.rows(); }

  void validate() const {
    require(lambda.square(), ErrorKind::DimensionMismatch,
            "lambda must be square");
    for (std::size_t i = 0; i < lambda.rows(); ++i) {
      require(lambda(i, i) == 0.0, ErrorKind::DimensionMismatch,
              "lambda diagonal must be zero");
    }
    for (double v : lambda.data()) {
      require(std::isfinite(v), ErrorKind::DimensionMismatch,
              "lambda entries must be finite");
    }
  }

  LifParams as_lif() const {
    return LifParams{tau_m, R, gamma, u_rest, u_firing, refractory};
  }
};

/// Mutable per-layer simulation state.
struct LayerState {
  std::vector<double> u;
  std::vector<std::optional<std::size_t>> last_fire_step;  // t'
  std::vector<std::size_t> refractory_until;  // first step allowed to integrate
  std::vector<SpikeCount> last_spike_value;   // S_i(t'_i)
  std::size_t step = 0;                        // index of the next step

  static LayerState at_rest(std::size_t n, double u_rest) {
    LayerState s;
    s.u.assign(n, u_rest);
    s.last_fire_step.assign(n, std::nullopt);
    s.refractory_until.assign(n, 0);
    s.last_spike_value.assign(n, 0);
    return s;
  }

  std::size_t size() const noexcept { return u.size(); }
};

struct StepResult {
  LayerState state;
  std::vector<SpikeCount> spikes;
};

/// floor(max(u, 0) / u_firing).
inline SpikeCount spike_excitation(double u, double u_firing) {
  require(u_firing > 0.0, ErrorKind::NonPositiveThreshold,
          "u_firing must be positive");
  if (!(u > 0.0) || std::isinf(u_firing)) return 0;
  const double n = std::floor(u / u_firing);
  return n >= kMaxSpikesPerBin ? kMaxSpikesPerBin : static_cast<SpikeCount>(n);
}

inline std::size_t refractory_steps(double refractory_ms, double dt) {
  return refractory_ms <= 0.0
             ? 0
             : static_cast<std::size_t>(std::llround(refractory_ms / dt));
}

/// Constants the stepping kernel needs, shared by LIF and BSNN layers.
struct NeuronConstants {
  double gamma;
  double gain;  // R / tau_m
  double u_rest;
  double u_firing;
  double refractory;

  static NeuronConstants from(const LifParams& p) {
    return {p.gamma, p.R / p.tau_m, p.u_rest, p.u_firing, p.refractory};
  }
  static NeuronConstants from(const BsnnLayerParams& p) {
    return {p.gamma, p.R / p.tau_m, p.u_rest, p.u_firing, p.refractory};
  }
};

/// Advances every neuron of a layer by one step in place.
///
/// OdeConsistent uses exponential Euler,
///   u <- u_rest + (u - u_rest) e^{gamma dt} + gain * drive * dt,
/// which is exact for the leak. AnchoredIntegral accumulates the drive with
/// weight e^{gamma (t - t')} and no leak on the accumulated value. Neurons
/// inside their refractory window are held at u_rest. Spikes come from
/// spike_excitation; a firing neuron resets to u_rest.
///
/// `u_pre` (optional) receives the potential the excitation function saw.
inline void advance_layer(LayerState& state, std::span<const double> drive,
                          const NeuronConstants& c, double dt,
                          KernelConvention kernel, std::span<SpikeCount> spikes,
                          std::span<double> u_pre = {}) {
  const std::size_t n = state.size();
  require(drive.size() == n && spikes.size() == n,
          ErrorKind::DimensionMismatch, "drive/spike size != layer size");
  require(c.u_firing > 0.0, ErrorKind::NonPositiveThreshold,
          "u_firing must be positive");
  const std::size_t t = state.step;
  const double leak = std::exp(c.gamma * dt);
  const std::size_t n_ref = refractory_steps(c.refractory, dt);
  for (std::size_t k = 0; k < n; ++k) {
    double u = c.u_rest;
    if (t >= state.refractory_until[k]) {
      if (kernel == KernelConvention::OdeConsistent) {
        u = c.u_rest + (state.u[k] - c.u_rest) * leak + c.gain * drive[k] * dt;
      } else {
        const std::size_t anchor = state.last_fire_step[k].value_or(0);
        const double w =
            std::exp(c.gamma * static_cast<double>(t - anchor) * dt);
        u = state.u[k] + c.gain * drive[k] * dt * w;
      }
      u = std::clamp(u, -kMaxPotential, kMaxPotential);
    }
    if (!u_pre.empty()) u_pre[k] = u;
    const SpikeCount s =
        t >= state.refractory_until[k] ? spike_excitation(u, c.u_firing) : 0;
    spikes[k] = s;
    if (s > 0) {
      u = c.u_rest;
      state.last_fire_step[k] = t;
      state.last_spike_value[k] = s;
      state.refractory_until[k] = t + n_ref + 1;
    }
    state.u[k] = u;
  }
  state.step = t + 1;
}

inline StepResult lif_step(const LayerState& state,
                           std::span<const double> drive,
                           const LifParams& params, double dt) {
  require(dt > 0.0, ErrorKind::NonPositiveTime, "dt must be positive");
  require(dt <= params.tau_m, ErrorKind::UnstableStep, "dt exceeds tau_m");
  StepResult r{state, std::vector<SpikeCount>(state.size(), 0)};
  advance_layer(r.state, drive, NeuronConstants::from(params), dt,
                KernelConvention::OdeConsistent, r.spikes);
  return r;
}

/// Adds the lateral term sum_{i != k} lambda_ki * S_i(t'_i) to each drive.
inline void add_lateral_drive(const LayerState& state, const Matrix& lambda,
                              std::span<double> drive) {
  const std::size_t n = state.size();
  for (std::size_t i = 0; i < n; ++i) {
    const SpikeCount p = state.last_spike_value[i];
    if (p == 0) continue;
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i) drive[k] += lambda(k, i) * static_cast<double>(p);
    }
  }
}

inline StepResult bsnn_layer_step(const LayerState& state,
                                  std::span<const double> drive,
                                  const BsnnLayerParams& params, double dt) {
  require(dt > 0.0, ErrorKind::NonPositiveTime, "dt must be positive");
  require(params.lambda.rows() == state.size() &&
              params.lambda.cols() == state.size(),
          ErrorKind::DimensionMismatch, "lambda shape != N x N");
  require(drive.size() == state.size(), ErrorKind::DimensionMismatch,
          "drive size != layer size");
  std::vector<double> augmented(drive.begin(), drive.end());
  add_lateral_drive(state, params.lambda, augmented);
  StepResult r{state, std::vector<SpikeCount>(state.size(), 0)};
  advance_layer(r.state, augmented, NeuronConstants::from(params), dt,
                KernelConvention::OdeConsistent, r.spikes);
  return r;
}

/// Refractory kernel eta(tau) = -u_firing e^{gamma tau} on [0, refractory],
/// convolved with one neuron's spike counts.
inline std::vector<double> refractory_response(std::span<const SpikeCount> spikes,
                                               const LifParams& params,
                                               double dt) {
  std::vector<double> out(spikes.size(), 0.0);
  const std::size_t width = static_cast<std::size_t>(
      std::floor(params.refractory / dt + 1e-9));
  for (std::size_t f = 0; f < spikes.size(); ++f) {
    if (spikes[f] == 0) continue;
    for (std::size_t d = 0; d <= width && f + d < spikes.size(); ++d) {
      out[f + d] += -params.u_firing *
                    std::exp(params.gamma * static_cast<double>(d) * dt) *
                    static_cast<double>(spikes[f]);
    }
  }
  return out;
}

namespace detail {

/// Direct-sum evaluation shared by the closed-form routes. `charge[s]` is
/// the input delivered during bin s (already weighted); the sum restarts
/// after every firing.
inline MembraneTrace closed_form_single(std::span<const double> charge,
                                        const TimeGrid& grid, double gamma,
                                        double u_rest, double u_firing,
                                        double refractory,
                                        KernelConvention kernel,
                                        RefractoryMode mode) {
  require(u_firing > 0.0, ErrorKind::NonPositiveThreshold,
          "u_firing must be positive");
  const std::size_t steps = grid.steps;
  const double dt = grid.dt;
  const std::size_t n_ref =
      mode == RefractoryMode::Absolute ? refractory_steps(refractory, dt) : 0;
  MembraneTrace trace(1, grid);
  std::vector<SpikeCount> own(steps, 0);
  std::size_t restart = 0;  // first bin included in the current integral
  std::optional<std::size_t> last_fire;
  const std::size_t eta_width =
      static_cast<std::size_t>(std::floor(refractory / dt + 1e-9));

  for (std::size_t t = 0; t < steps; ++t) {
    if (t < restart) {
      trace.at(0, t) = u_rest;
      continue;
    }
    double u = 0.0;
    for (std::size_t s = restart; s <= t; ++s) {
      if (charge[s] == 0.0) continue;
      const double w =
          kernel == KernelConvention::OdeConsistent
              ? std::exp(gamma * static_cast<double>(t - s) * dt)
              : std::exp(gamma * static_cast<double>(s - last_fire.value_or(0)) * dt);
      u += w * charge[s];
    }
    u = std::clamp(u_rest + u, -kMaxPotential, kMaxPotential);
    if (mode == RefractoryMode::Kernel) {
      for (std::size_t f = t >= eta_width ? t - eta_width : 0; f < t; ++f) {
        if (own[f] == 0) continue;
        u += -u_firing * std::exp(gamma * static_cast<double>(t - f) * dt) *
             static_cast<double>(own[f]);
      }
    }
    const SpikeCount s = spike_excitation(u, u_firing);
    own[t] = s;
    trace.at(0, t) = u;
    if (s > 0) {
      last_fire = t;
      restart = t + n_ref + 1;
      if (mode == RefractoryMode::Kernel) {
        trace.at(0, t) += -u_firing * static_cast<double>(s);
      }
    }
  }
  return trace;
}

}  // namespace detail

/// Spike-response (closed-form) membrane trace of one LIF neuron driven by
/// M input channels. R / tau_m is taken to be absorbed into `weights`, and a
/// spike in bin s delivers its full weight at s.
inline MembraneTrace lif_srm_response(
    std::span<const double> weights, const SpikeTrain& inputs,
    const LifParams& params,
    KernelConvention kernel = KernelConvention::OdeConsistent,
    RefractoryMode mode = RefractoryMode::Absolute) {
  require(weights.size() == inputs.neuron_count(), ErrorKind::DimensionMismatch,
          "weights size != input channels");
  std::vector<double> charge(inputs.steps(), 0.0);
  for (std::size_t j = 0; j < inputs.neuron_count(); ++j) {
    const auto row = inputs.row(j);
    for (std::size_t s = 0; s < row.size(); ++s) {
      if (row[s] != 0) charge[s] += weights[j] * static_cast<double>(row[s]);
    }
  }
  return detail::closed_form_single(charge, inputs.grid(), params.gamma,
                                    params.u_rest, params.u_firing,
                                    params.refractory, kernel, mode);
}

/// Closed-form BSNN membrane of one neuron k:
///   u_k(t) = integral of kernel * Q_k,  Q_k = sum_j W_kj I_j + sum_i lambda_ki S_i(t'_i).
/// `peer_spikes` holds the other neurons' spike trains; S_i(t'_i) at bin s is
/// the count of neuron i's latest spike strictly before s. The lateral term
/// is a current, so it contributes lambda * S * dt per bin.
inline MembraneTrace bsnn_closed_form(
    std::span<const double> weights, std::span<const double> lambda_row,
    const SpikeTrain& inputs, const SpikeTrain& peer_spikes,
    const BsnnLayerParams& params,
    KernelConvention kernel = KernelConvention::OdeConsistent) {
  require(weights.size() == inputs.neuron_count(), ErrorKind::DimensionMismatch,
          "weights size != input channels");
  require(lambda_row.size() == peer_spikes.neuron_count(),
          ErrorKind::DimensionMismatch, "lambda row size != peer count");
  require(peer_spikes.steps() == inputs.steps(), ErrorKind::DimensionMismatch,
          "peer and input grids differ");
  const double dt = inputs.grid().dt;
  std::vector<double> charge(inputs.steps(), 0.0);
  for (std::size_t j = 0; j < inputs.neuron_count(); ++j) {
    const auto row = inputs.row(j);
    for (std::size_t s = 0; s < row.size(); ++s) {
      if (row[s] != 0) charge[s] += weights[j] * static_cast<double>(row[s]);
    }
  }
  for (std::size_t i = 0; i < peer_spikes.neuron_count(); ++i) {
    if (lambda_row[i] == 0.0) continue;
    SpikeCount last = 0;
    const auto row = peer_spikes.row(i);
    for (std::size_t s = 0; s < row.size(); ++s) {
      charge[s] += lambda_row[i] * static_cast<double>(last) * dt;
      if (row[s] != 0) last = row[s];
    }
  }
  return detail::closed_form_single(charge, inputs.grid(), params.gamma,
                                    params.u_rest, params.u_firing,
                                    params.refractory, kernel,
                                    RefractoryMode::Absolute);
}

}  // namespace bifsnn
