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
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bifsnn/core.hpp"
#include "bifsnn/error.hpp"

namespace bifsnn {

/// Synaptic kernel alpha(t) = (t / tau_s) e^{1 - t / tau_s}.
inline double alpha_kernel(double t, double tau_s) {
  if (t <= 0.0) return 0.0;
  return t / tau_s * std::exp(1.0 - t / tau_s);
}

/// Discrete causal alpha filter, out(t) = sum_{n >= 1} alpha(n dt) in(t - n),
/// run as an exact second-order recursion. tau_s <= 0 means "no filter"
/// (identity).
class AlphaFilter {
 public:
  AlphaFilter(double tau_s, double dt)
      : identity_(tau_s <= 0.0),
        decay_(identity_ ? 0.0 : std::exp(-dt / tau_s)),
        scale_(identity_ ? 1.0 : std::exp(1.0) * dt / tau_s) {}

  bool identity() const noexcept { return identity_; }

  /// Signals are time-major: element (t, k) lives at t * width + k.
  void apply(std::span<const double> in, std::span<double> out,
             std::size_t steps, std::size_t width) const {
    run(in, out, steps, width, false);
  }

  /// Adjoint (time-reversed) filter: out(s) = sum_{n >= 1} alpha(n dt) in(s + n).
  void apply_adjoint(std::span<const double> in, std::span<double> out,
                     std::size_t steps, std::size_t width) const {
    run(in, out, steps, width, true);
  }

 private:
  void run(std::span<const double> in, std::span<double> out,
           std::size_t steps, std::size_t width, bool reverse) const {
    require(in.size() == steps * width && out.size() == steps * width,
            ErrorKind::DimensionMismatch, "filter buffer size");
    if (identity_) {
      std::copy(in.begin(), in.end(), out.begin());
      return;
    }
    std::vector<double> a(width, 0.0), b(width, 0.0);
    for (std::size_t i = 0; i < steps; ++i) {
      const std::size_t t = reverse ? steps - 1 - i : i;
      const double* x = in.data() + t * width;
      double* y = out.data() + t * width;
      for (std::size_t k = 0; k < width; ++k) {
        y[k] = scale_ * b[k];
        const double a_old = a[k];
        a[k] = decay_ * (a_old + x[k]);
        b[k] = decay_ * (b[k] + a_old + x[k]);
      }
    }
  }

  bool identity_;
  double decay_;
  double scale_;
};

/// Time-major copy of a spike train as doubles.
inline std::vector<double> time_major(const SpikeTrain& train) {
  const std::size_t n = train.neuron_count(), steps = train.steps();
  std::vector<double> out(n * steps);
  for (std::size_t k = 0; k < n; ++k) {
    const auto row = train.row(k);
    for (std::size_t t = 0; t < steps; ++t) {
      out[t * n + k] = static_cast<double>(row[t]);
    }
  }
  return out;
}

/// Per-step lists of non-zero activity, used to exploit input sparsity.
struct SparseSteps {
  std::size_t steps = 0;
  std::size_t width = 0;
  std::vector<std::uint32_t> offsets;  // steps + 1 entries
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  static SparseSteps from_train(const SpikeTrain& train) {
    SparseSteps s;
    s.steps = train.steps();
    s.width = train.neuron_count();
    s.offsets.assign(s.steps + 1, 0);
    for (std::size_t j = 0; j < s.width; ++j) {
      const auto row = train.row(j);
      for (std::size_t t = 0; t < s.steps; ++t) {
        if (row[t] != 0) ++s.offsets[t + 1];
      }
    }
    for (std::size_t t = 0; t < s.steps; ++t) s.offsets[t + 1] += s.offsets[t];
    s.index.resize(s.offsets.back());
    s.value.resize(s.offsets.back());
    std::vector<std::uint32_t> cursor(s.offsets.begin(), s.offsets.end() - 1);
    for (std::size_t j = 0; j < s.width; ++j) {
      const auto row = train.row(j);
      for (std::size_t t = 0; t < s.steps; ++t) {
        if (row[t] != 0) {
          const auto at = cursor[t]++;
          s.index[at] = static_cast<std::uint32_t>(j);
          s.value[at] = static_cast<double>(row[t]);
        }
      }
    }
    return s;
  }

  static SparseSteps from_dense(std::span<const double> data, std::size_t steps,
                                std::size_t width) {
    SparseSteps s;
    s.steps = steps;
    s.width = width;
    s.offsets.assign(steps + 1, 0);
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t j = 0; j < width; ++j) {
        const double v = data[t * width + j];
        if (v != 0.0) {
          s.index.push_back(static_cast<std::uint32_t>(j));
          s.value.push_back(v);
        }
      }
      s.offsets[t + 1] = static_cast<std::uint32_t>(s.index.size());
    }
    return s;
  }
};

}  // namespace bifsnn
