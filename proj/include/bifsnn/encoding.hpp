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
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bifsnn/core.hpp"
#include "bifsnn/error.hpp"
#include "bifsnn/random.hpp"

namespace bifsnn {

/// Grayscale image with intensities normalized to [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::vector<double> px)
      : height(h), width(w), pixels(std::move(px)) {
    require(pixels.size() == height * width, ErrorKind::DimensionMismatch,
            "pixel count does not match image shape");
    require(std::all_of(pixels.begin(), pixels.end(),
                        [](double p) { return p >= 0.0 && p <= 1.0; }),
            ErrorKind::BadFormat, "pixel intensity outside [0,1]");
  }

  std::size_t size() const noexcept { return pixels.size(); }
};

/// Bernoulli rate code: pixel j fires in each bin with probability
/// intensity_j * max_rate * dt / 1000.
inline SpikeTrain poisson_encode(const Image& image, const TimeGrid& grid,
                                 double max_rate_hz, std::uint64_t seed) {
  require(max_rate_hz > 0.0, ErrorKind::RateTooHigh,
          "max_rate must be positive");
  const double full_prob = max_rate_hz * grid.dt / 1000.0;
  require(full_prob <= 1.0, ErrorKind::RateTooHigh,
          "max_rate * dt exceeds one expected spike per bin");
  std::vector<SpikeCount> counts(image.size() * grid.steps, 0);
  Rng rng(seed);
  for (std::size_t j = 0; j < image.size(); ++j) {
    const double p = image.pixels[j] * full_prob;
    if (p <= 0.0) continue;
    SpikeCount* row = counts.data() + j * grid.steps;
    for (std::size_t s = 0; s < grid.steps; ++s) {
      row[s] = rng.uniform() < p ? 1 : 0;
    }
  }
  return SpikeTrain(image.size(), grid, std::move(counts));
}

/// Time-to-first-spike code: brighter pixels fire earlier, dark pixels never.
inline SpikeTrain latency_encode(const Image& image, const TimeGrid& grid) {
  std::vector<SpikeCount> counts(image.size() * grid.steps, 0);
  const double last = static_cast<double>(grid.steps - 1);
  for (std::size_t j = 0; j < image.size(); ++j) {
    const double intensity = image.pixels[j];
    if (intensity <= 0.0) continue;
    const auto step = static_cast<std::size_t>(std::round((1.0 - intensity) * last));
    counts[j * grid.steps + step] = 1;
  }
  return SpikeTrain(image.size(), grid, std::move(counts));
}

/// Index of the neuron with the most spikes; ties go to the lowest index.
inline std::size_t decode_label(const SpikeTrain& output) {
  std::size_t best = 0;
  std::int64_t best_count = -1;
  for (std::size_t k = 0; k < output.neuron_count(); ++k) {
    const auto c = spike_count(output, k);
    if (c > best_count) {
      best = k;
      best_count = c;
    }
  }
  return best;
}

namespace detail {

inline void spread_evenly(std::vector<SpikeCount>& counts, std::size_t neuron,
                          std::size_t steps, std::size_t how_many) {
  if (how_many == 0) return;
  const std::size_t stride = steps / how_many;
  for (std::size_t i = 0; i < how_many; ++i) {
    counts[neuron * steps + i * stride] += 1;
  }
}

}  // namespace detail

/// Desired output train: `true_count` evenly spaced spikes on the label's
/// neuron, `false_count` on every other one.
inline SpikeTrain label_to_target(std::size_t label, std::size_t classes,
                                  const TimeGrid& grid, std::size_t true_count,
                                  std::size_t false_count) {
  require(label < classes, ErrorKind::IndexOutOfRange, "label >= classes");
  require(true_count <= grid.steps && false_count <= grid.steps,
          ErrorKind::TargetOverflow, "target count exceeds grid steps");
  std::vector<SpikeCount> counts(classes * grid.steps, 0);
  for (std::size_t k = 0; k < classes; ++k) {
    detail::spread_evenly(counts, k, grid.steps,
                          k == label ? true_count : false_count);
  }
  return SpikeTrain(classes, grid, std::move(counts));
}

/// Encoded-spike cache: `# neurons=<n> steps=<s> dt=<dt>` followed by a
/// raster CSV.
inline void write_spike_file(std::ostream& out, const SpikeTrain& train) {
  out << "# neurons=" << train.neuron_count() << " steps=" << train.steps()
      << " dt=" << detail::format_time(train.grid().dt) << '\n';
  write_raster_csv(out, train);
}

inline SpikeTrain read_spike_file(std::istream& in) {
  std::string header;
  require(static_cast<bool>(std::getline(in, header)), ErrorKind::TruncatedFile,
          "empty spike file");
  std::size_t neurons = 0, steps = 0;
  double dt = 0.0;
  {
    std::istringstream hs(header);
    hs.imbue(std::locale::classic());
    std::string hash, a, b, c;
    hs >> hash >> a >> b >> c;
    const auto value = [](const std::string& kv, const std::string& key) {
      require(kv.rfind(key + "=", 0) == 0, ErrorKind::BadFormat,
              "expected " + key + "= in spike file header");
      return kv.substr(key.size() + 1);
    };
    require(hash == "#", ErrorKind::BadFormat, "missing spike file header");
    neurons = std::stoul(value(a, "neurons"));
    steps = std::stoul(value(b, "steps"));
    dt = std::stod(value(c, "dt"));
  }
  const TimeGrid grid =
      make_time_grid(static_cast<double>(steps) * dt, dt);
  const auto rows = read_raster_csv(in);
  return train_from_raster(rows, neurons, grid);
}

}  // namespace bifsnn
