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

#include "bifsnn/dynamics.hpp"
#include "bifsnn/error.hpp"
#include "bifsnn/matrix.hpp"
#include "bifsnn/random.hpp"

namespace bifsnn {

/// One fully connected spiking layer: weights W (n_out x n_in), lateral
/// bifurcation matrix lambda (inside `neuron`), a shared control rate and the
/// synaptic time constant used to filter the incoming spikes.
struct Layer {
  Matrix W;
  BsnnLayerParams neuron;
  double tau_s = 8.0;

  std::size_t n_in() const noexcept { return W.cols(); }
  std::size_t n_out() const noexcept { return W.rows(); }
};

struct Network {
  std::vector<Layer> layers;

  std::size_t input_size() const {
    return layers.empty() ? 0 : layers.front().n_in();
  }
  std::size_t output_size() const {
    return layers.empty() ? 0 : layers.back().n_out();
  }

  std::vector<double> gammas() const {
    std::vector<double> g;
    for (const auto& l : layers) g.push_back(l.neuron.gamma);
    return g;
  }
  void set_gammas(std::span<const double> g) {
    require(g.size() == layers.size(), ErrorKind::ShapeMismatch,
            "one gamma per layer expected");
    for (std::size_t i = 0; i < g.size(); ++i) layers[i].neuron.gamma = g[i];
  }

  void validate() const {
    require(!layers.empty(), ErrorKind::DimensionMismatch, "network has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      if (l > 0) {
        require(layer.n_in() == layers[l - 1].n_out(),
                ErrorKind::DimensionMismatch, "layer widths do not chain");
      }
      require(layer.neuron.lambda.rows() == layer.n_out(),
              ErrorKind::DimensionMismatch, "lambda shape != n_out x n_out");
      layer.neuron.validate();
      require(layer.tau_s > 0.0, ErrorKind::DimensionMismatch,
              "tau_s must be positive");
      for (double w : layer.W.data()) {
        require(std::isfinite(w), ErrorKind::DimensionMismatch,
                "non-finite weight");
      }
      require(std::isfinite(layer.neuron.gamma), ErrorKind::DimensionMismatch,
              "non-finite gamma");
    }
  }
};

struct NeuronDefaults {
  double u_firing = 1.0;
  double u_rest = 0.0;
  double refractory = 2.0;
  double R = 1.0;
  double tau_m = 1.0;
  double tau_s = 8.0;
};

/// Weights uniform in +-scale/sqrt(n_in), lambda zero (the layer starts out
/// as a plain LIF layer).
inline Network make_network(std::span<const std::size_t> widths, double gamma,
                            const NeuronDefaults& d, std::uint64_t seed,
                            double init_scale = 1.0) {
  require(widths.size() >= 2, ErrorKind::ConfigInvalid,
          "architecture needs at least input and output widths");
  Network net;
  Rng rng(derive_seed(seed, 0xA11CE));
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t n_in = widths[l], n_out = widths[l + 1];
    require(n_in > 0 && n_out > 0, ErrorKind::ConfigInvalid,
            "layer widths must be positive");
    Layer layer;
    layer.W = Matrix(n_out, n_in);
    const double bound = init_scale / std::sqrt(static_cast<double>(n_in));
    for (double& w : layer.W.data()) w = rng.uniform(-bound, bound);
    layer.neuron = BsnnLayerParams{gamma,        Matrix(n_out, n_out),
                                   d.R,          d.tau_m,
                                   d.u_rest,     d.u_firing,
                                   d.refractory};
    layer.tau_s = d.tau_s;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

}  // namespace bifsnn
