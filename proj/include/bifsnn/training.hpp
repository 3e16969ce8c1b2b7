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
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "bifsnn/core.hpp"
#include "bifsnn/dynamics.hpp"
#include "bifsnn/encoding.hpp"
#include "bifsnn/error.hpp"
#include "bifsnn/filter.hpp"
#include "bifsnn/matrix.hpp"
#include "bifsnn/network.hpp"
#include "bifsnn/random.hpp"

namespace bifsnn {

// ---------------------------------------------------------------------------
// Surrogate spike function
// ---------------------------------------------------------------------------

struct SurrogateParams {
  double alpha = 1.0;
  double beta = 5.0;  // in units of 1 / u_firing
};

/// Spike-escape style stand-in for dS/du: alpha e^{-beta |u - u_firing|}.
inline double surrogate_spike_derivative(double u, double u_firing,
                                         double alpha, double beta) {
  return alpha * std::exp(-beta * std::abs(u - u_firing));
}

/// Antiderivative of the surrogate; rises smoothly from 0 to 2 alpha / beta
/// and equals alpha / beta at the threshold.
inline double soft_spike(double u, double u_firing, double alpha, double beta) {
  const double d = u - u_firing;
  if (d < 0.0) return alpha / beta * std::exp(beta * d);
  return alpha / beta * (2.0 - std::exp(-beta * d));
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

/// Hard: integer spikes, reset and refractoriness (what inference uses).
/// Smoothed: spikes replaced everywhere by soft_spike(u), no reset, no
/// refractory clamp, lateral peer values frozen from a reference record. The
/// smoothed objective is differentiable, and backward() returns its exact
/// gradient, which is what the finite-difference checks exercise.
enum class ForwardMode { Hard, Smoothed };

/// Everything backward() needs about one layer. Internal buffers are
/// time-major: element (t, k) is at t * n + k.
struct LayerRecord {
  std::size_t n = 0;
  SparseSteps input;
  std::vector<double> u_pre;
  std::vector<double> activation;
  std::vector<double> drive;  // filtered W * input, without the lateral term
  std::vector<SpikeCount> peer;  // S_k(t'_k) as seen by step t
  std::vector<std::uint8_t> integrating;
  std::vector<std::uint8_t> fired;
  std::vector<std::uint32_t> anchor;  // t' used by the AnchoredIntegral kernel
  MembraneTrace membrane;
  SpikeTrain spikes;
  LayerState final_state;
};

struct ForwardRecord {
  ForwardMode mode = ForwardMode::Hard;
  KernelConvention kernel = KernelConvention::OdeConsistent;
  SurrogateParams surrogate;
  TimeGrid grid;
  std::vector<LayerRecord> layers;

  const SpikeTrain& output() const { return layers.back().spikes; }
};

struct ForwardOptions {
  ForwardMode mode = ForwardMode::Hard;
  KernelConvention kernel = KernelConvention::OdeConsistent;
  SurrogateParams surrogate;
  /// Smoothed mode only: source of the frozen lateral peer values. Without
  /// it the peers are taken as zero.
  const ForwardRecord* frozen_peers = nullptr;
};

namespace detail {

inline std::vector<double> transpose_weights(const Matrix& W) {
  const std::size_t n = W.rows(), m = W.cols();
  std::vector<double> wt(m * n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < m; ++j) wt[j * n + k] = W(k, j);
  }
  return wt;
}

inline void finish_layer_record(LayerRecord& rec, const TimeGrid& grid) {
  const std::size_t n = rec.n, T = grid.steps;
  std::vector<double> membrane(n * T);
  std::vector<SpikeCount> counts(n * T, 0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < n; ++k) {
      membrane[k * T + t] = rec.u_pre[t * n + k];
      if (rec.fired[t * n + k]) {
        counts[k * T + t] = static_cast<SpikeCount>(rec.activation[t * n + k]);
      }
    }
  }
  rec.membrane = MembraneTrace(n, grid, std::move(membrane));
  rec.spikes = SpikeTrain(n, grid, std::move(counts));
}

}  // namespace detail

/// Runs the layered network on an input spike train. Each layer filters the
/// presynaptic spikes with the alpha kernel, adds the lateral bifurcation
/// term sum_i lambda_ki S_i(t'_i), and steps the membrane with
/// advance_layer.
inline ForwardRecord forward(const Network& net, const SpikeTrain& input,
                             const TimeGrid& grid,
                             const ForwardOptions& opts = {}) {
  require(!net.layers.empty(), ErrorKind::DimensionMismatch, "empty network");
  require(input.neuron_count() == net.input_size(),
          ErrorKind::DimensionMismatch, "input width != first layer n_in");
  require(input.steps() == grid.steps, ErrorKind::GridMismatch,
          "input train and grid differ");
  if (opts.frozen_peers != nullptr) {
    require(opts.frozen_peers->layers.size() == net.layers.size() &&
                opts.frozen_peers->grid == grid,
            ErrorKind::RecordMismatch, "frozen peer record does not match");
  }
  const std::size_t T = grid.steps;
  const double dt = grid.dt;
  ForwardRecord record;
  record.mode = opts.mode;
  record.kernel = opts.kernel;
  record.surrogate = opts.surrogate;
  record.grid = grid;
  record.layers.resize(net.layers.size());

  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Layer& layer = net.layers[l];
    LayerRecord& rec = record.layers[l];
    const std::size_t n = layer.n_out();
    rec.n = n;
    rec.input = l == 0 ? SparseSteps::from_train(input)
                       : SparseSteps::from_dense(record.layers[l - 1].activation,
                                                 T, layer.n_in());

    // Weighted presynaptic activity, then the synaptic filter (both linear,
    // so the order is free).
    const auto wt = detail::transpose_weights(layer.W);
    std::vector<double> y(T * n, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      double* yt = y.data() + t * n;
      for (auto e = rec.input.offsets[t]; e < rec.input.offsets[t + 1]; ++e) {
        const double v = rec.input.value[e];
        const double* col = wt.data() + rec.input.index[e] * n;
        for (std::size_t k = 0; k < n; ++k) yt[k] += v * col[k];
      }
    }
    rec.drive.assign(T * n, 0.0);
    AlphaFilter(layer.tau_s, dt).apply(y, rec.drive, T, n);

    rec.u_pre.assign(T * n, 0.0);
    rec.activation.assign(T * n, 0.0);
    rec.peer.assign(T * n, 0);
    rec.integrating.assign(T * n, 1);
    rec.fired.assign(T * n, 0);
    rec.anchor.assign(T * n, 0);

    const NeuronConstants c = NeuronConstants::from(layer.neuron);
    const Matrix& lambda = layer.neuron.lambda;
    std::vector<double> lateral(n, 0.0);
    std::vector<double> aug(n, 0.0);
    const auto update_lateral = [&](std::size_t i, double delta) {
      if (delta == 0.0) return;
      for (std::size_t k = 0; k < n; ++k) {
        if (k != i) lateral[k] += lambda(k, i) * delta;
      }
    };

    if (opts.mode == ForwardMode::Hard) {
      LayerState state = LayerState::at_rest(n, c.u_rest);
      std::vector<SpikeCount> spikes(n, 0);
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t base = t * n;
        for (std::size_t k = 0; k < n; ++k) {
          rec.integrating[base + k] = t >= state.refractory_until[k] ? 1 : 0;
          rec.peer[base + k] = state.last_spike_value[k];
          rec.anchor[base + k] =
              static_cast<std::uint32_t>(state.last_fire_step[k].value_or(0));
          aug[k] = rec.drive[base + k] + lateral[k];
        }
        advance_layer(state, aug, c, dt, opts.kernel, spikes,
                      std::span<double>(rec.u_pre.data() + base, n));
        for (std::size_t k = 0; k < n; ++k) {
          if (spikes[k] > 0) {
            rec.fired[base + k] = 1;
            rec.activation[base + k] = static_cast<double>(spikes[k]);
            update_lateral(k, static_cast<double>(spikes[k]) -
                                  static_cast<double>(rec.peer[base + k]));
          }
        }
      }
      rec.final_state = std::move(state);
    } else {
      const std::vector<SpikeCount>* frozen =
          opts.frozen_peers != nullptr ? &opts.frozen_peers->layers[l].peer
                                       : nullptr;
      if (frozen != nullptr) {
        require(frozen->size() == T * n, ErrorKind::RecordMismatch,
                "frozen peer shape");
      }
      const double leak = std::exp(c.gamma * dt);
      const auto& sg = opts.surrogate;
      std::vector<double> u(n, c.u_rest);
      std::vector<SpikeCount> current(n, 0);
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t base = t * n;
        if (frozen != nullptr) {
          for (std::size_t i = 0; i < n; ++i) {
            const SpikeCount p = (*frozen)[base + i];
            if (p != current[i]) {
              update_lateral(i, static_cast<double>(p) - static_cast<double>(current[i]));
              current[i] = p;
            }
          }
        }
        const double w = opts.kernel == KernelConvention::OdeConsistent
                             ? 1.0
                             : std::exp(c.gamma * static_cast<double>(t) * dt);
        for (std::size_t k = 0; k < n; ++k) {
          const double q = rec.drive[base + k] + lateral[k];
          double v = opts.kernel == KernelConvention::OdeConsistent
                         ? c.u_rest + (u[k] - c.u_rest) * leak + c.gain * q * dt
                         : u[k] + c.gain * q * dt * w;
          v = std::clamp(v, -kMaxPotential, kMaxPotential);
          u[k] = v;
          rec.u_pre[base + k] = v;
          rec.peer[base + k] = current[k];
          rec.activation[base + k] = soft_spike(v, c.u_firing, sg.alpha, sg.beta);
        }
      }
      rec.final_state = LayerState::at_rest(n, c.u_rest);
      rec.final_state.u = u;
      rec.final_state.step = T;
    }
    detail::finish_layer_record(rec, grid);
  }
  return record;
}

/// Same network evaluated with lif_step only (no lateral term). With
/// lambda = 0 forward() must reproduce its spikes exactly.
inline std::vector<SpikeTrain> lif_reference_forward(const Network& net,
                                                     const SpikeTrain& input,
                                                     const TimeGrid& grid) {
  std::vector<SpikeTrain> out;
  const SpikeTrain* current = &input;
  const std::size_t T = grid.steps;
  for (const Layer& layer : net.layers) {
    const std::size_t n = layer.n_out(), m = layer.n_in();
    const auto in = SparseSteps::from_train(*current);
    const auto wt = detail::transpose_weights(layer.W);
    std::vector<double> y(T * n, 0.0), drive(T * n, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      for (auto e = in.offsets[t]; e < in.offsets[t + 1]; ++e) {
        for (std::size_t k = 0; k < n; ++k) {
          y[t * n + k] += in.value[e] * wt[in.index[e] * n + k];
        }
      }
    }
    (void)m;
    AlphaFilter(layer.tau_s, grid.dt).apply(y, drive, T, n);
    LifParams p = layer.neuron.as_lif();
    // lif_step's stability guard assumes tau_m is the leak time constant;
    // here gamma is independent, so relax it to the step size.
    p.tau_m = std::max(p.tau_m, grid.dt);
    p.R = layer.neuron.R * p.tau_m / layer.neuron.tau_m;
    LayerState state = LayerState::at_rest(n, p.u_rest);
    std::vector<SpikeCount> counts(n * T, 0);
    for (std::size_t t = 0; t < T; ++t) {
      auto r = lif_step(state, std::span<const double>(drive.data() + t * n, n),
                        p, grid.dt);
      state = std::move(r.state);
      for (std::size_t k = 0; k < n; ++k) counts[k * T + t] = r.spikes[k];
    }
    out.emplace_back(n, grid, std::move(counts));
    current = &out.back();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

namespace detail {

/// E = 1/2 sum_k sum_t (filtered(a) - filtered(target))^2 dt. Writes dE/da
/// into `grad` when it is non-empty.
inline double filtered_quadratic_loss(std::span<const double> activation,
                                      std::span<const double> target,
                                      std::size_t steps, std::size_t width,
                                      double tau_s, double dt,
                                      std::span<double> grad = {}) {
  const AlphaFilter filter(tau_s, dt);
  std::vector<double> fa(steps * width), ft(steps * width);
  filter.apply(activation, fa, steps, width);
  filter.apply(target, ft, steps, width);
  double loss = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    fa[i] -= ft[i];
    loss += fa[i] * fa[i];
  }
  loss *= 0.5 * dt;
  if (!grad.empty()) {
    filter.apply_adjoint(fa, grad, steps, width);
    for (double& g : grad) g *= dt;
  }
  return loss;
}

}  // namespace detail

/// Quadratic spike-train distance after filtering both trains with the
/// alpha kernel of time constant tau_s (tau_s <= 0 disables the filter).
inline double spike_loss(const SpikeTrain& output, const SpikeTrain& target,
                         double tau_s) {
  require(output.grid() == target.grid() &&
              output.neuron_count() == target.neuron_count(),
          ErrorKind::GridMismatch, "output and target shapes differ");
  return detail::filtered_quadratic_loss(time_major(output), time_major(target),
                                         output.steps(), output.neuron_count(),
                                         tau_s, output.grid().dt);
}

/// Loss of a forward record's output activation (soft spikes in smoothed
/// mode) against a target train.
inline double record_loss(const Network& net, const ForwardRecord& record,
                          const SpikeTrain& target) {
  const auto& out = record.layers.back();
  require(target.neuron_count() == out.n && target.grid() == record.grid,
          ErrorKind::GridMismatch, "target shape does not match output");
  return detail::filtered_quadratic_loss(out.activation, time_major(target),
                                         record.grid.steps, out.n,
                                         net.layers.back().tau_s,
                                         record.grid.dt);
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

struct LayerGradient {
  Matrix dW;
  Matrix dLambda;
  std::optional<double> dGamma;
};

struct GradientSet {
  std::vector<LayerGradient> layers;

  static GradientSet zeros_like(const Network& net) {
    GradientSet g;
    for (const auto& layer : net.layers) {
      g.layers.push_back({Matrix(layer.n_out(), layer.n_in()),
                          Matrix(layer.n_out(), layer.n_out()), std::nullopt});
    }
    return g;
  }

  void set_zero() {
    for (auto& l : layers) {
      std::fill(l.dW.data().begin(), l.dW.data().end(), 0.0);
      std::fill(l.dLambda.data().begin(), l.dLambda.data().end(), 0.0);
      l.dGamma.reset();
    }
  }

  void add(const GradientSet& other) {
    require(other.layers.size() == layers.size(), ErrorKind::ShapeMismatch,
            "gradient layer count");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto dst = layers[l].dW.data();
      auto src = other.layers[l].dW.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      auto dl = layers[l].dLambda.data();
      auto sl = other.layers[l].dLambda.data();
      for (std::size_t i = 0; i < dl.size(); ++i) dl[i] += sl[i];
    }
  }

  void scale(double f) {
    for (auto& l : layers) {
      for (double& v : l.dW.data()) v *= f;
      for (double& v : l.dLambda.data()) v *= f;
    }
  }
};

struct TrainConfig;

/// Direct loss sensitivities dE/du_k(t) per layer (time-major), filled by
/// backward() on request.
struct BackwardTaps {
  std::vector<std::vector<double>> dE_du;
};

/// Surrogate-gradient backpropagation through time for W and lambda.
///
/// The output error is the adjoint-filtered residual of the filtered trains;
/// dS/du is the surrogate; the membrane recursion is differentiated
/// exactly, cut at resets and refractory steps. Peer values S_i(t'_i) are
/// treated as constants, so dE/dlambda_ki = sum_t dE/dQ_k(t) S_i(t'_i).
/// Hidden layers receive their error through W only. All gradients point in
/// the ascent direction of E (descend with -eta * grad).
inline void backward_into(const Network& net, const ForwardRecord& record,
                          const SpikeTrain& target, bool with_lambda,
                          GradientSet& grads, BackwardTaps* taps = nullptr) {
  require(record.layers.size() == net.layers.size(), ErrorKind::RecordMismatch,
          "record layer count != network layer count");
  const std::size_t T = record.grid.steps;
  const double dt = record.grid.dt;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    require(record.layers[l].n == net.layers[l].n_out() &&
                record.layers[l].input.width == net.layers[l].n_in() &&
                record.layers[l].u_pre.size() == T * record.layers[l].n,
            ErrorKind::RecordMismatch, "record does not match network");
  }
  require(grads.layers.size() == net.layers.size(), ErrorKind::ShapeMismatch,
          "gradient set does not match network");
  if (taps != nullptr) taps->dE_du.assign(net.layers.size(), {});

  const std::size_t L = net.layers.size();
  std::vector<double> dA(T * record.layers.back().n, 0.0);
  require(target.neuron_count() == record.layers.back().n &&
              target.grid() == record.grid,
          ErrorKind::GridMismatch, "target shape does not match output");
  detail::filtered_quadratic_loss(record.layers.back().activation,
                                  time_major(target), T,
                                  record.layers.back().n,
                                  net.layers.back().tau_s, dt, dA);
  const auto& sg = record.surrogate;
  const bool ode = record.kernel == KernelConvention::OdeConsistent;

  for (std::size_t li = L; li-- > 0;) {
    const Layer& layer = net.layers[li];
    const LayerRecord& rec = record.layers[li];
    const std::size_t n = rec.n, m = layer.n_in();
    const double gamma = layer.neuron.gamma;
    const double leak = std::exp(gamma * dt);
    const double gain = layer.neuron.R / layer.neuron.tau_m;
    const double u_firing = layer.neuron.u_firing;

    std::vector<double> g(T * n);
    for (std::size_t i = 0; i < T * n; ++i) {
      g[i] = rec.integrating[i]
                 ? dA[i] * surrogate_spike_derivative(rec.u_pre[i], u_firing,
                                                      sg.alpha, sg.beta)
                 : 0.0;
    }

    std::vector<double> dQ(T * n, 0.0);
    std::vector<double> mu(n, 0.0);
    for (std::size_t t = T; t-- > 0;) {
      const std::size_t base = t * n;
      for (std::size_t k = 0; k < n; ++k) {
        const bool carries = t + 1 < T && rec.integrating[base + n + k] &&
                             !rec.fired[base + k];
        mu[k] = g[base + k] + (carries ? (ode ? leak : 1.0) * mu[k] : 0.0);
        if (rec.integrating[base + k]) {
          const double w =
              ode ? 1.0
                  : std::exp(gamma *
                             static_cast<double>(t - rec.anchor[base + k]) * dt);
          dQ[base + k] = mu[k] * gain * dt * w;
        }
      }
    }

    LayerGradient& out = grads.layers[li];
    if (with_lambda) {
      // Peer values are piecewise constant; sum dQ over each constant run.
      std::vector<double> prefix((T + 1) * n, 0.0);
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = 0; k < n; ++k) {
          prefix[(t + 1) * n + k] = prefix[t * n + k] + dQ[t * n + k];
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t start = 0;
        SpikeCount value = T > 0 ? rec.peer[i] : 0;
        for (std::size_t t = 1; t <= T; ++t) {
          const SpikeCount next = t < T ? rec.peer[t * n + i] : -1;
          if (next == value) continue;
          if (value != 0) {
            for (std::size_t k = 0; k < n; ++k) {
              if (k == i) continue;
              out.dLambda(k, i) += static_cast<double>(value) *
                                   (prefix[t * n + k] - prefix[start * n + k]);
            }
          }
          start = t;
          value = next;
        }
      }
    }

    std::vector<double> dy(T * n, 0.0);
    AlphaFilter(layer.tau_s, dt).apply_adjoint(dQ, dy, T, n);

    std::vector<double> dWt(m * n, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      const double* dyt = dy.data() + t * n;
      for (auto e = rec.input.offsets[t]; e < rec.input.offsets[t + 1]; ++e) {
        const double v = rec.input.value[e];
        double* row = dWt.data() + rec.input.index[e] * n;
        for (std::size_t k = 0; k < n; ++k) row[k] += v * dyt[k];
      }
    }
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t j = 0; j < m; ++j) out.dW(k, j) += dWt[j * n + k];
    }

    if (taps != nullptr) taps->dE_du[li] = g;

    if (li > 0) {
      const auto wt = detail::transpose_weights(layer.W);
      std::vector<double> prev(T * m, 0.0);
      for (std::size_t t = 0; t < T; ++t) {
        const double* dyt = dy.data() + t * n;
        for (std::size_t j = 0; j < m; ++j) {
          const double* col = wt.data() + j * n;
          double acc = 0.0;
          for (std::size_t k = 0; k < n; ++k) acc += col[k] * dyt[k];
          prev[t * m + j] = acc;
        }
      }
      dA = std::move(prev);
    }
  }
}

inline GradientSet backward(const Network& net, const ForwardRecord& record,
                            const SpikeTrain& target, bool with_lambda = true,
                            BackwardTaps* taps = nullptr) {
  GradientSet grads = GradientSet::zeros_like(net);
  backward_into(net, record, target, with_lambda, grads, taps);
  return grads;
}

/// Diagnostic gradient of E with respect to each neuron's control rate,
///   dE/dgamma_k = sum_t dE/du_k(t) * du_k(t)/dgamma,
///   du_k(t)/dgamma = gain * int_{t'}^{t} e^{gamma (s - t')} (s - t') Q^W_k(s) ds,
/// where t' is the neuron's last firing time and Q^W the filtered synaptic
/// drive. Not used by the optimizers.
inline std::vector<double> gamma_gradient(const Network& net,
                                          const ForwardRecord& record,
                                          const SpikeTrain& target,
                                          std::size_t layer_index) {
  require(layer_index < net.layers.size() &&
              record.layers.size() == net.layers.size(),
          ErrorKind::RecordMismatch, "layer index outside record");
  BackwardTaps taps;
  backward(net, record, target, false, &taps);
  const auto& rec = record.layers[layer_index];
  const auto& layer = net.layers[layer_index];
  const std::size_t T = record.grid.steps, n = rec.n;
  const double dt = record.grid.dt;
  const double gamma = layer.neuron.gamma;
  const double gain = layer.neuron.R / layer.neuron.tau_m;
  const auto& g = taps.dE_du[layer_index];
  std::vector<double> out(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double sens = 0.0;
    std::size_t anchor = 0;
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t i = t * n + k;
      if (!rec.integrating[i]) {
        sens = 0.0;
        continue;
      }
      const double lag = static_cast<double>(t - anchor) * dt;
      sens += gain * std::exp(gamma * lag) * lag * rec.drive[i] * dt;
      out[k] += g[i] * sens;
      if (rec.fired[i]) {
        sens = 0.0;
        anchor = t;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

namespace detail {

inline void check_grad_shapes(const Network& net, const GradientSet& grads) {
  require(grads.layers.size() == net.layers.size(), ErrorKind::ShapeMismatch,
          "gradient layer count");
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    require(grads.layers[l].dW.same_shape(net.layers[l].W) &&
                grads.layers[l].dLambda.same_shape(net.layers[l].neuron.lambda),
            ErrorKind::ShapeMismatch, "gradient shape");
  }
}

inline void zero_diagonal(Matrix& m) {
  for (std::size_t i = 0; i < std::min(m.rows(), m.cols()); ++i) m(i, i) = 0.0;
}

}  // namespace detail

/// W <- W - eta dW, lambda <- lambda - eta dLambda (diagonal kept at zero).
/// Control rates are left alone.
inline Network sgd_step(Network net, const GradientSet& grads, double eta) {
  detail::check_grad_shapes(net, grads);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto w = net.layers[l].W.data();
    auto dw = grads.layers[l].dW.data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= eta * dw[i];
    auto lam = net.layers[l].neuron.lambda.data();
    auto dl = grads.layers[l].dLambda.data();
    for (std::size_t i = 0; i < lam.size(); ++i) lam[i] -= eta * dl[i];
    detail::zero_diagonal(net.layers[l].neuron.lambda);
  }
  return net;
}

enum class OptimizerKind { Sgd, Adam };

/// Plain SGD or Adam over (W, lambda).
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double eta, const Network& net,
            bool update_lambda = true)
      : kind_(kind), eta_(eta), update_lambda_(update_lambda) {
    if (kind_ == OptimizerKind::Adam) {
      m_ = GradientSet::zeros_like(net);
      v_ = GradientSet::zeros_like(net);
    }
  }

  void apply(Network& net, const GradientSet& grads) {
    detail::check_grad_shapes(net, grads);
    ++steps_;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      update(net.layers[l].W.data(), grads.layers[l].dW.data(),
             kind_ == OptimizerKind::Adam ? m_.layers[l].dW.data() : std::span<double>{},
             kind_ == OptimizerKind::Adam ? v_.layers[l].dW.data() : std::span<double>{});
      if (update_lambda_) {
        update(net.layers[l].neuron.lambda.data(), grads.layers[l].dLambda.data(),
               kind_ == OptimizerKind::Adam ? m_.layers[l].dLambda.data() : std::span<double>{},
               kind_ == OptimizerKind::Adam ? v_.layers[l].dLambda.data() : std::span<double>{});
        detail::zero_diagonal(net.layers[l].neuron.lambda);
      }
    }
  }

 private:
  void update(std::span<double> p, std::span<const double> g,
              std::span<double> m, std::span<double> v) const {
    if (kind_ == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= eta_ * g[i];
      return;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      p[i] -= eta_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }

  OptimizerKind kind_;
  double eta_;
  bool update_lambda_;
  std::size_t steps_ = 0;
  GradientSet m_, v_;
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

enum class EncoderKind { Poisson, Latency, Precomputed };

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double eta = 0.01;
  std::size_t true_count = 100;
  std::size_t false_count = 10;
  SurrogateParams surrogate{1.0, 5.0};
  std::uint64_t seed = 1;
  KernelConvention kernel = KernelConvention::OdeConsistent;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  bool train_lambda = true;  // false: lambda frozen at its initial value
  EncoderKind encoder = EncoderKind::Poisson;
  double max_rate = 100.0;
  TimeGrid grid{300.0, 1.0, 300};
  std::size_t threads = 0;  // 0: BIFSNN_THREADS or hardware concurrency
  bool record_wall_time = true;
};

/// Labeled samples, either images (encoded on the fly) or pre-encoded trains.
struct Dataset {
  std::vector<Image> images;
  std::vector<SpikeTrain> encoded;
  std::vector<std::size_t> labels;
  std::size_t classes = 10;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
};

inline constexpr std::uint64_t kTrainStream = 0x7121;
inline constexpr std::uint64_t kTestStream = 0x7E57;

inline SpikeTrain encode_sample(const Dataset& data, std::size_t index,
                                const TrainConfig& cfg, std::uint64_t stream) {
  require(index < data.size(), ErrorKind::IndexOutOfRange, "sample index");
  if (cfg.encoder == EncoderKind::Precomputed || !data.encoded.empty()) {
    require(index < data.encoded.size(), ErrorKind::IndexOutOfRange,
            "no pre-encoded train for sample");
    return data.encoded[index];
  }
  if (cfg.encoder == EncoderKind::Latency) {
    return latency_encode(data.images[index], cfg.grid);
  }
  return poisson_encode(data.images[index], cfg.grid, cfg.max_rate,
                        derive_seed(cfg.seed ^ stream, index));
}

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double mean_loss = 0.0;
  double wall_seconds = 0.0;
};

struct RunMetrics {
  std::vector<EpochMetrics> epochs;
  double best_test_acc = 0.0;
  std::size_t best_epoch = 0;

  void push(const EpochMetrics& e) {
    epochs.push_back(e);
    if (epochs.size() == 1 || e.test_acc > best_test_acc) {
      best_test_acc = e.test_acc;
      best_epoch = e.epoch;
    }
  }
};

inline std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("BIFSNN_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Each index is
/// handled by exactly one worker; callers keep per-index outputs so results
/// do not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += threads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

/// Hard forward pass over a dataset: accuracy and mean spike loss.
inline EvalResult evaluate(const Network& net, const Dataset& data,
                           const TrainConfig& cfg, std::uint64_t stream) {
  EvalResult r;
  if (data.empty()) return r;
  std::vector<double> losses(data.size(), 0.0);
  std::vector<std::uint8_t> correct(data.size(), 0);
  const ForwardOptions fo{ForwardMode::Hard, cfg.kernel, cfg.surrogate, nullptr};
  parallel_for(data.size(), resolve_threads(cfg.threads), [&](std::size_t i) {
    const auto input = encode_sample(data, i, cfg, stream);
    const auto rec = forward(net, input, cfg.grid, fo);
    const auto target = label_to_target(data.labels[i], data.classes, cfg.grid,
                                        cfg.true_count, cfg.false_count);
    losses[i] = record_loss(net, rec, target);
    correct[i] = decode_label(rec.output()) == data.labels[i] ? 1 : 0;
  });
  double loss_sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    loss_sum += losses[i];
    hits += correct[i];
  }
  r.accuracy = static_cast<double>(hits) / static_cast<double>(data.size());
  r.mean_loss = loss_sum / static_cast<double>(data.size());
  return r;
}

/// Deterministic Fisher-Yates shuffle.
inline void shuffle_indices(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.below(i)]);
  }
}

/// Mini-batch training: encode, forward, loss, backward, averaged batch
/// gradient, optimizer step. Test accuracy is measured after every epoch
/// when a test set is given.
inline RunMetrics train(Network& net, const Dataset& train_set,
                        const Dataset* test_set, const TrainConfig& cfg) {
  RunMetrics metrics;
  require(!train_set.empty(), ErrorKind::EmptyDataset, "training set is empty");
  require(cfg.eta > 0.0, ErrorKind::ConfigInvalid, "eta must be positive");
  require(cfg.batch_size > 0, ErrorKind::ConfigInvalid, "batch size must be positive");
  require(cfg.true_count <= cfg.grid.steps && cfg.false_count <= cfg.grid.steps,
          ErrorKind::TargetOverflow, "target count exceeds grid steps");
  if (cfg.epochs == 0) return metrics;
  net.validate();

  Optimizer opt(cfg.optimizer, cfg.eta, net, cfg.train_lambda);
  const std::size_t threads = resolve_threads(cfg.threads);
  const std::size_t slots = std::min(cfg.batch_size, train_set.size());
  std::vector<GradientSet> slot_grads(slots, GradientSet::zeros_like(net));
  std::vector<double> slot_loss(slots, 0.0);
  std::vector<std::uint8_t> slot_hit(slots, 0);
  GradientSet batch = GradientSet::zeros_like(net);
  const ForwardOptions fo{ForwardMode::Hard, cfg.kernel, cfg.surrogate, nullptr};

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    Rng shuffler(derive_seed(cfg.seed, 0x5EED0000ULL + epoch));
    shuffle_indices(order, shuffler);
    double loss_sum = 0.0;
    std::size_t hits = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      parallel_for(count, threads, [&](std::size_t b) {
        const std::size_t i = order[start + b];
        const auto input = encode_sample(train_set, i, cfg, kTrainStream);
        const auto rec = forward(net, input, cfg.grid, fo);
        const auto target =
            label_to_target(train_set.labels[i], train_set.classes, cfg.grid,
                            cfg.true_count, cfg.false_count);
        slot_grads[b].set_zero();
        backward_into(net, rec, target, cfg.train_lambda, slot_grads[b]);
        slot_loss[b] = record_loss(net, rec, target);
        slot_hit[b] = decode_label(rec.output()) == train_set.labels[i] ? 1 : 0;
      });
      batch.set_zero();
      for (std::size_t b = 0; b < count; ++b) {
        batch.add(slot_grads[b]);
        loss_sum += slot_loss[b];
        hits += slot_hit[b];
      }
      batch.scale(1.0 / static_cast<double>(count));
      opt.apply(net, batch);
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.train_acc = static_cast<double>(hits) / static_cast<double>(train_set.size());
    em.mean_loss = loss_sum / static_cast<double>(train_set.size());
    if (test_set != nullptr && !test_set->empty()) {
      em.test_acc = evaluate(net, *test_set, cfg, kTestStream).accuracy;
    }
    if (cfg.record_wall_time) {
      em.wall_seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - started)
                            .count();
    }
    metrics.push(em);
  }
  return metrics;
}

}  // namespace bifsnn
