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
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "bifsnn/error.hpp"
#include "bifsnn/network.hpp"
#include "bifsnn/random.hpp"
#include "bifsnn/training.hpp"

namespace bifsnn {

/// Sampling range for control rates: U[-1, 0] or U[-1, 1].
enum class GammaDistribution { NegativeUnit, SymmetricUnit };

inline double distribution_low(GammaDistribution) { return -1.0; }
inline double distribution_high(GammaDistribution d) {
  return d == GammaDistribution::NegativeUnit ? 0.0 : 1.0;
}

struct AltOptConfig {
  GammaDistribution distribution = GammaDistribution::NegativeUnit;
  std::size_t rounds = 4;
  std::size_t inner_epochs = 2;
  std::uint64_t seed = 1;
  /// Per-layer 5-point line search around the best sample. Only meaningful
  /// with at least two rounds; a single round returns its sample as is.
  bool refine = true;
};

struct GammaCandidate {
  std::vector<double> gammas;
  double loss = 0.0;      // mean spike loss on the training set after training
  double accuracy = 0.0;  // on the evaluation set
  bool refinement = false;
  RunMetrics metrics;
};

struct AltOptResult {
  std::vector<double> best_gammas;
  std::size_t best_index = 0;
  std::vector<GammaCandidate> candidates;

  const GammaCandidate& best() const { return candidates.at(best_index); }
};

/// Trains a copy of the template with the given control rates held fixed and
/// scores it.
inline GammaCandidate evaluate_gamma_candidate(const Network& net_template,
                                               const Dataset& train_set,
                                               const Dataset* eval_set,
                                               const TrainConfig& cfg,
                                               std::vector<double> gammas) {
  GammaCandidate c;
  Network net = net_template;
  net.set_gammas(gammas);
  c.gammas = std::move(gammas);
  c.metrics = train(net, train_set, eval_set, cfg);
  c.loss = evaluate(net, train_set, cfg, kTrainStream).mean_loss;
  const Dataset& scored = eval_set != nullptr && !eval_set->empty() ? *eval_set : train_set;
  c.accuracy = evaluate(net, scored, cfg,
                        &scored == &train_set ? kTrainStream : kTestStream)
                   .accuracy;
  return c;
}

namespace detail {

inline std::size_t argmin_loss(const std::vector<GammaCandidate>& cs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < cs.size(); ++i) {
    if (cs[i].loss < cs[best].loss) best = i;
  }
  return best;
}

}  // namespace detail

/// Exhaustive evaluation of a fixed candidate list; keeps the lowest loss
/// (earliest on ties).
inline AltOptResult select_gamma_candidates(
    const Network& net_template, const Dataset& train_set,
    const Dataset* eval_set, TrainConfig cfg, std::size_t inner_epochs,
    const std::vector<std::vector<double>>& candidates) {
  require(!train_set.empty(), ErrorKind::EmptyDataset, "training set is empty");
  require(!candidates.empty(), ErrorKind::ConfigInvalid, "no gamma candidates");
  cfg.epochs = inner_epochs;
  AltOptResult r;
  for (const auto& g : candidates) {
    r.candidates.push_back(
        evaluate_gamma_candidate(net_template, train_set, eval_set, cfg, g));
  }
  r.best_index = detail::argmin_loss(r.candidates);
  r.best_gammas = r.best().gammas;
  return r;
}

/// Alternating optimization of the control rates: each round samples one
/// gamma per layer, trains the weights with gammas fixed, and scores the
/// training loss. The best sample is then refined layer by layer on a
/// 5-point grid with spacing (range / 8), clamped to the sampling range.
/// Every evaluated vector is kept in `candidates`; the winner has the
/// lowest loss among all of them.
inline AltOptResult alternating_optimize(const Network& net_template,
                                         const Dataset& train_set,
                                         const Dataset* eval_set,
                                         TrainConfig cfg,
                                         const AltOptConfig& alt) {
  require(!train_set.empty(), ErrorKind::EmptyDataset, "training set is empty");
  require(alt.rounds >= 1, ErrorKind::ConfigInvalid, "rounds must be >= 1");
  cfg.epochs = alt.inner_epochs;
  const double lo = distribution_low(alt.distribution);
  const double hi = distribution_high(alt.distribution);
  const std::size_t L = net_template.layers.size();

  AltOptResult r;
  Rng rng(derive_seed(alt.seed, 0xA170));
  for (std::size_t round = 0; round < alt.rounds; ++round) {
    std::vector<double> g(L);
    for (double& v : g) v = rng.uniform(lo, hi);
    r.candidates.push_back(
        evaluate_gamma_candidate(net_template, train_set, eval_set, cfg, g));
  }
  r.best_index = detail::argmin_loss(r.candidates);

  if (alt.refine && alt.rounds > 1) {
    const double h = (hi - lo) / 8.0;
    for (std::size_t l = 0; l < L; ++l) {
      const std::vector<double> incumbent = r.best().gammas;
      for (int offset : {-2, -1, 1, 2}) {
        std::vector<double> g = incumbent;
        g[l] = std::clamp(incumbent[l] + offset * h, lo, hi);
        if (g[l] == incumbent[l]) continue;
        GammaCandidate c =
            evaluate_gamma_candidate(net_template, train_set, eval_set, cfg, g);
        c.refinement = true;
        r.candidates.push_back(std::move(c));
        if (r.candidates.back().loss < r.best().loss) {
          r.best_index = r.candidates.size() - 1;
        }
      }
    }
  }
  r.best_gammas = r.best().gammas;
  return r;
}

inline GammaDistribution parse_gamma_distribution(const std::string& s) {
  if (s == "neg" || s == "U[-1,0]") return GammaDistribution::NegativeUnit;
  if (s == "sym" || s == "U[-1,1]") return GammaDistribution::SymmetricUnit;
  throw Error(ErrorKind::ConfigInvalid, "unknown gamma distribution '" + s + "'");
}

}  // namespace bifsnn
