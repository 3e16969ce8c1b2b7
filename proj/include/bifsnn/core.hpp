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
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "bifsnn/error.hpp"

namespace bifsnn {

using SpikeCount = std::int32_t;

/// Uniform time discretization. Times are in milliseconds; with the default
/// dt = 1 ms a duration of T maps onto T steps.
struct TimeGrid {
  double duration = 1.0;
  double dt = 1.0;
  std::size_t steps = 1;

  double time_of(std::size_t step) const noexcept {
    return static_cast<double>(step) * dt;
  }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

inline TimeGrid make_time_grid(double duration, double dt) {
  require(duration > 0.0 && dt > 0.0, ErrorKind::NonPositiveTime,
          "duration and dt must be positive");
  const double ratio = duration / dt;
  const double rounded = std::round(ratio);
  require(rounded >= 1.0 && std::abs(ratio - rounded) <= 1e-6 * rounded,
          ErrorKind::MisalignedGrid,
          "duration is not an integer multiple of dt");
  return TimeGrid{duration, dt, static_cast<std::size_t>(rounded)};
}

/// One non-zero cell of a spike train.
struct RasterRow {
  std::size_t neuron = 0;
  double time_ms = 0.0;
  SpikeCount count = 0;

  friend bool operator==(const RasterRow&, const RasterRow&) = default;
};

/// Per-neuron, per-step spike counts. A bin may hold more than one spike
/// because the excitation function is a floor, not a step.
class SpikeTrain {
 public:
  SpikeTrain() = default;
  SpikeTrain(std::size_t neuron_count, TimeGrid grid)
      : neuron_count_(neuron_count),
        grid_(grid),
        counts_(neuron_count * grid.steps, 0) {}
  SpikeTrain(std::size_t neuron_count, TimeGrid grid,
             std::vector<SpikeCount> counts)
      : neuron_count_(neuron_count), grid_(grid), counts_(std::move(counts)) {
    require(counts_.size() == neuron_count_ * grid_.steps,
            ErrorKind::DimensionMismatch, "spike matrix has wrong size");
    require(std::all_of(counts_.begin(), counts_.end(),
                        [](SpikeCount c) { return c >= 0; }),
            ErrorKind::BadFormat, "negative spike count");
  }

  /// Builds a train from (neuron, step, count) triples; repeated cells add.
  struct Event {
    std::size_t neuron;
    std::size_t step;
    SpikeCount count = 1;
  };
  static SpikeTrain from_events(std::size_t neuron_count, TimeGrid grid,
                                std::span<const Event> events) {
    std::vector<SpikeCount> counts(neuron_count * grid.steps, 0);
    for (const auto& e : events) {
      require(e.neuron < neuron_count && e.step < grid.steps,
              ErrorKind::IndexOutOfRange, "event outside the train");
      counts[e.neuron * grid.steps + e.step] += e.count;
    }
    return SpikeTrain(neuron_count, grid, std::move(counts));
  }
  static SpikeTrain from_events(std::size_t neuron_count, TimeGrid grid,
                                std::initializer_list<Event> events) {
    return from_events(neuron_count, grid,
                       std::span<const Event>(events.begin(), events.size()));
  }

  std::size_t neuron_count() const noexcept { return neuron_count_; }
  std::size_t steps() const noexcept { return grid_.steps; }
  const TimeGrid& grid() const noexcept { return grid_; }

  SpikeCount at(std::size_t neuron, std::size_t step) const {
    return counts_[neuron * grid_.steps + step];
  }
  std::span<const SpikeCount> row(std::size_t neuron) const {
    return {counts_.data() + neuron * grid_.steps, grid_.steps};
  }
  std::span<const SpikeCount> counts() const noexcept { return counts_; }

  friend bool operator==(const SpikeTrain&, const SpikeTrain&) = default;

 private:
  std::size_t neuron_count_ = 0;
  TimeGrid grid_{};
  std::vector<SpikeCount> counts_;
};

/// Per-neuron, per-step membrane potential.
class MembraneTrace {
 public:
  MembraneTrace() = default;
  MembraneTrace(std::size_t neuron_count, TimeGrid grid)
      : neuron_count_(neuron_count),
        grid_(grid),
        values_(neuron_count * grid.steps, 0.0) {}
  MembraneTrace(std::size_t neuron_count, TimeGrid grid,
                std::vector<double> values)
      : neuron_count_(neuron_count), grid_(grid), values_(std::move(values)) {
    require(values_.size() == neuron_count_ * grid_.steps,
            ErrorKind::DimensionMismatch, "trace has wrong size");
  }

  std::size_t neuron_count() const noexcept { return neuron_count_; }
  std::size_t steps() const noexcept { return grid_.steps; }
  const TimeGrid& grid() const noexcept { return grid_; }

  double at(std::size_t neuron, std::size_t step) const {
    return values_[neuron * grid_.steps + step];
  }
  double& at(std::size_t neuron, std::size_t step) {
    return values_[neuron * grid_.steps + step];
  }
  std::span<const double> row(std::size_t neuron) const {
    return {values_.data() + neuron * grid_.steps, grid_.steps};
  }
  std::span<double> row(std::size_t neuron) {
    return {values_.data() + neuron * grid_.steps, grid_.steps};
  }
  std::span<const double> values() const noexcept { return values_; }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(),
                       [](double v) { return std::isfinite(v); });
  }

 private:
  std::size_t neuron_count_ = 0;
  TimeGrid grid_{};
  std::vector<double> values_;
};

inline std::int64_t spike_count(const SpikeTrain& train, std::size_t neuron) {
  require(neuron < train.neuron_count(), ErrorKind::IndexOutOfRange,
          "neuron index " + std::to_string(neuron));
  const auto row = train.row(neuron);
  return std::accumulate(row.begin(), row.end(), std::int64_t{0});
}

/// Non-zero cells ordered by time, then neuron.
inline std::vector<RasterRow> raster_rows(const SpikeTrain& train) {
  std::vector<RasterRow> rows;
  for (std::size_t s = 0; s < train.steps(); ++s) {
    for (std::size_t n = 0; n < train.neuron_count(); ++n) {
      if (const auto c = train.at(n, s); c != 0) {
        rows.push_back({n, train.grid().time_of(s), c});
      }
    }
  }
  return rows;
}

/// Inverse of raster_rows; the neuron count and grid are not recoverable
/// from the rows alone.
inline SpikeTrain train_from_raster(std::span<const RasterRow> rows,
                                    std::size_t neuron_count, TimeGrid grid) {
  std::vector<SpikeTrain::Event> events;
  events.reserve(rows.size());
  for (const auto& r : rows) {
    const double step = std::round(r.time_ms / grid.dt);
    require(step >= 0.0, ErrorKind::IndexOutOfRange, "negative spike time");
    events.push_back({r.neuron, static_cast<std::size_t>(step), r.count});
  }
  return SpikeTrain::from_events(neuron_count, grid, events);
}

namespace detail {

inline std::string format_time(double t) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(17);
  os << t;
  return os.str();
}

}  // namespace detail

/// Raster CSV: `neuron,time_ms,count` header, LF line endings.
inline void write_raster_csv(std::ostream& out, const SpikeTrain& train) {
  out << "neuron,time_ms,count\n";
  for (const auto& r : raster_rows(train)) {
    out << r.neuron << ',' << detail::format_time(r.time_ms) << ',' << r.count
        << '\n';
  }
}

/// Reads raster rows, skipping `#` comment lines and the header.
inline std::vector<RasterRow> read_raster_csv(std::istream& in) {
  std::vector<RasterRow> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      require(line == "neuron,time_ms,count", ErrorKind::BadFormat,
              "unexpected raster header: " + line);
      header_seen = true;
      continue;
    }
    std::istringstream ls(line);
    ls.imbue(std::locale::classic());
    RasterRow r;
    char c1 = 0, c2 = 0;
    ls >> r.neuron >> c1 >> r.time_ms >> c2 >> r.count;
    require(ls && c1 == ',' && c2 == ',' && r.count >= 0, ErrorKind::BadFormat,
            "malformed raster row: " + line);
    rows.push_back(r);
  }
  require(header_seen, ErrorKind::BadFormat, "missing raster header");
  return rows;
}

}  // namespace bifsnn
