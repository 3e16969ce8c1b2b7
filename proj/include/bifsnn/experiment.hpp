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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bifsnn/altopt.hpp"
#include "bifsnn/checkpoint.hpp"
#include "bifsnn/config.hpp"
#include "bifsnn/core.hpp"
#include "bifsnn/encoding.hpp"
#include "bifsnn/error.hpp"
#include "bifsnn/idx.hpp"
#include "bifsnn/network.hpp"
#include "bifsnn/training.hpp"

namespace bifsnn {

enum class ModelKind { Lif, Bsnn };

struct ConfigKey {
  const char* key;
  const char* fallback;
  const char* help;
};

/// Every key ExperimentConfig understands, with its default.
inline const std::vector<ConfigKey>& experiment_keys() {
  static const std::vector<ConfigKey> keys = {
      {"data.train_images", "data/mnist5k/train-images-idx3-ubyte", "IDX training images"},
      {"data.train_labels", "data/mnist5k/train-labels-idx1-ubyte", "IDX training labels"},
      {"data.test_images", "data/mnist5k/t10k-images-idx3-ubyte", "IDX test images"},
      {"data.test_labels", "data/mnist5k/t10k-labels-idx1-ubyte", "IDX test labels"},
      {"data.train_size", "2000", "training samples taken from the front of the file"},
      {"data.test_size", "500", "test samples taken from the front of the file"},
      {"data.classes", "10", "number of output classes"},
      {"model.kind", "bsnn", "bsnn (lambda trained) or lif (lambda fixed at 0)"},
      {"model.widths", "784,100,10", "layer widths, input first"},
      {"model.gamma", "-0.21", "control rate shared by every layer"},
      {"model.init_scale", "0.3", "weights start in +-scale/sqrt(n_in)"},
      {"neuron.u_firing", "1", "firing threshold"},
      {"neuron.u_rest", "0", "resting potential"},
      {"neuron.refractory", "2", "absolute refractory period, ms"},
      {"neuron.R", "1", "membrane resistance"},
      {"neuron.tau_m", "1", "membrane time constant scaling the input, ms"},
      {"neuron.tau_s", "8", "synaptic (and loss) filter time constant, ms"},
      {"grid.duration", "300", "simulation length T, ms"},
      {"grid.dt", "1", "step size, ms"},
      {"encoder.kind", "poisson", "poisson, latency or precomputed"},
      {"encoder.max_rate", "100", "poisson rate of a white pixel, Hz"},
      {"encoder.cache_dir", "", "precomputed spike files: <dir>/train/<i>.csv, <dir>/test/<i>.csv"},
      {"train.batch", "32", "mini-batch size"},
      {"train.epochs", "10", "training epochs"},
      {"train.eta", "0.001", "learning rate"},
      {"train.optimizer", "adam", "sgd or adam"},
      {"train.true_count", "100", "target spikes of the labelled output neuron"},
      {"train.false_count", "10", "target spikes of the other output neurons"},
      {"train.surrogate_alpha", "1", "surrogate peak"},
      {"train.surrogate_beta", "5", "surrogate sharpness, in units of 1/u_firing"},
      {"train.kernel", "ode", "ode (exponential Euler) or anchored (integral restarted at each fire)"},
      {"run.seed", "1", "master seed"},
      {"run.name", "run", "run directory prefix"},
      {"run.output_dir", "runs", "parent of run directories"},
      {"run.raster_indices", "", "test samples whose rasters are written"},
      {"run.record_wall_time", "false", "write real epoch timings to the metrics CSV"},
      {"run.threads", "0", "worker threads, 0 = BIFSNN_THREADS or all cores"},
      {"search.gammas", "-1,-0.75,-0.5,-0.25,-0.05", "gamma grid for gridsearch"},
      {"search.repeats", "5", "seeded repeats per grid point"},
      {"search.vary_seed", "true", "false repeats with the same seed"},
      {"altopt.distribution", "neg", "neg = U[-1,0], sym = U[-1,1]"},
      {"altopt.rounds", "4", "sampled gamma vectors"},
      {"altopt.inner_epochs", "2", "weight-training epochs per candidate"},
      {"altopt.refine", "true", "5-point per-layer line search after sampling"},
  };
  return keys;
}

struct ExperimentConfig {
  std::string train_images, train_labels, test_images, test_labels;
  std::size_t train_size = 2000, test_size = 500, classes = 10;
  ModelKind model = ModelKind::Bsnn;
  std::vector<std::size_t> widths{784, 100, 10};
  double gamma = -0.21;
  double init_scale = 0.3;
  NeuronDefaults neuron;
  TrainConfig train;
  std::string cache_dir;
  std::uint64_t seed = 1;
  std::string name = "run", output_dir = "runs";
  std::vector<std::size_t> raster_indices;
  std::vector<double> search_gammas;
  std::size_t search_repeats = 5;
  bool search_vary_seed = true;
  AltOptConfig altopt;
  Config source;  // fully resolved key/value view, defaults included

  std::uint64_t hash() const { return source.hash(); }

  static ExperimentConfig from(const Config& given) {
    Config c;
    for (const auto& k : experiment_keys()) c.set(k.key, k.fallback);
    for (const auto& [k, v] : given.values()) {
      bool known = false;
      for (const auto& d : experiment_keys()) known = known || k == d.key;
      require(known, ErrorKind::ConfigInvalid, "unknown config key '" + k + "'");
      c.set(k, v);
    }
    ExperimentConfig e;
    e.source = c;
    e.train_images = c.get_string("data.train_images", "");
    e.train_labels = c.get_string("data.train_labels", "");
    e.test_images = c.get_string("data.test_images", "");
    e.test_labels = c.get_string("data.test_labels", "");
    e.train_size = c.get_uint("data.train_size", 0);
    e.test_size = c.get_uint("data.test_size", 0);
    e.classes = c.get_uint("data.classes", 10);
    const auto kind = c.get_string("model.kind", "bsnn");
    require(kind == "bsnn" || kind == "lif", ErrorKind::ConfigInvalid,
            "model.kind must be bsnn or lif");
    e.model = kind == "bsnn" ? ModelKind::Bsnn : ModelKind::Lif;
    e.widths.clear();
    for (auto w : c.get_uints("model.widths", {})) e.widths.push_back(w);
    require(e.widths.size() >= 2, ErrorKind::ConfigInvalid,
            "model.widths needs at least two entries");
    require(e.widths.back() == e.classes, ErrorKind::ConfigInvalid,
            "last width must equal data.classes");
    e.gamma = c.get_double("model.gamma", -0.21);
    e.init_scale = c.get_double("model.init_scale", 0.3);
    e.neuron.u_firing = c.get_double("neuron.u_firing", 1);
    e.neuron.u_rest = c.get_double("neuron.u_rest", 0);
    e.neuron.refractory = c.get_double("neuron.refractory", 2);
    e.neuron.R = c.get_double("neuron.R", 1);
    e.neuron.tau_m = c.get_double("neuron.tau_m", 1);
    e.neuron.tau_s = c.get_double("neuron.tau_s", 8);
    require(e.neuron.u_firing > 0 && e.neuron.tau_m > 0 && e.neuron.tau_s > 0,
            ErrorKind::ConfigInvalid, "u_firing, tau_m and tau_s must be positive");

    auto& t = e.train;
    try {
      t.grid = make_time_grid(c.get_double("grid.duration", 300),
                              c.get_double("grid.dt", 1));
    } catch (const Error& err) {
      throw Error(ErrorKind::ConfigInvalid, err.what());
    }
    const auto enc = c.get_string("encoder.kind", "poisson");
    if (enc == "poisson") {
      t.encoder = EncoderKind::Poisson;
    } else if (enc == "latency") {
      t.encoder = EncoderKind::Latency;
    } else if (enc == "precomputed") {
      t.encoder = EncoderKind::Precomputed;
    } else {
      throw Error(ErrorKind::ConfigInvalid, "unknown encoder.kind '" + enc + "'");
    }
    t.max_rate = c.get_double("encoder.max_rate", 100);
    require(t.max_rate > 0 && t.max_rate * t.grid.dt <= 1000.0,
            ErrorKind::ConfigInvalid, "encoder.max_rate out of range for dt");
    e.cache_dir = c.get_string("encoder.cache_dir", "");
    require(t.encoder != EncoderKind::Precomputed || !e.cache_dir.empty(),
            ErrorKind::ConfigInvalid, "precomputed encoder needs encoder.cache_dir");
    t.batch_size = c.get_uint("train.batch", 32);
    t.epochs = c.get_uint("train.epochs", 10);
    t.eta = c.get_double("train.eta", 0.001);
    require(t.batch_size > 0 && t.eta > 0, ErrorKind::ConfigInvalid,
            "train.batch and train.eta must be positive");
    const auto opt = c.get_string("train.optimizer", "adam");
    require(opt == "sgd" || opt == "adam", ErrorKind::ConfigInvalid,
            "train.optimizer must be sgd or adam");
    t.optimizer = opt == "sgd" ? OptimizerKind::Sgd : OptimizerKind::Adam;
    t.true_count = c.get_uint("train.true_count", 100);
    t.false_count = c.get_uint("train.false_count", 10);
    require(t.true_count <= t.grid.steps && t.false_count <= t.grid.steps,
            ErrorKind::ConfigInvalid, "target counts exceed grid steps");
    t.surrogate.alpha = c.get_double("train.surrogate_alpha", 1);
    t.surrogate.beta = c.get_double("train.surrogate_beta", 5) / e.neuron.u_firing;
    require(t.surrogate.beta > 0, ErrorKind::ConfigInvalid,
            "train.surrogate_beta must be positive");
    const auto kernel = c.get_string("train.kernel", "ode");
    require(kernel == "ode" || kernel == "anchored", ErrorKind::ConfigInvalid,
            "train.kernel must be ode or anchored");
    t.kernel = kernel == "ode" ? KernelConvention::OdeConsistent
                               : KernelConvention::AnchoredIntegral;
    t.train_lambda = e.model == ModelKind::Bsnn;

    e.seed = c.get_uint("run.seed", 1);
    t.seed = e.seed;
    e.name = c.get_string("run.name", "run");
    e.output_dir = c.get_string("run.output_dir", "runs");
    for (auto i : c.get_uints("run.raster_indices", {})) e.raster_indices.push_back(i);
    t.record_wall_time = c.get_bool("run.record_wall_time", false);
    t.threads = c.get_uint("run.threads", 0);

    e.search_gammas = c.get_doubles("search.gammas", {});
    e.search_repeats = c.get_uint("search.repeats", 5);
    e.search_vary_seed = c.get_bool("search.vary_seed", true);
    e.altopt.distribution = parse_gamma_distribution(c.get_string("altopt.distribution", "neg"));
    e.altopt.rounds = c.get_uint("altopt.rounds", 4);
    e.altopt.inner_epochs = c.get_uint("altopt.inner_epochs", 2);
    e.altopt.refine = c.get_bool("altopt.refine", true);
    e.altopt.seed = e.seed;
    return e;
  }
};

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// `<output_dir>/<name>-<config hash>`; a changed config never lands in an
/// existing run's directory.
inline std::filesystem::path run_directory(const ExperimentConfig& cfg) {
  return std::filesystem::path(cfg.output_dir) / (cfg.name + "-" + hash_hex(cfg.hash()));
}

struct ExperimentData {
  Dataset train;
  Dataset test;
};

inline std::filesystem::path cached_spike_file(const std::string& dir,
                                               const char* split, std::size_t i) {
  return std::filesystem::path(dir) / split / (std::to_string(i) + ".csv");
}

inline ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
  require(cfg.train_size > 0, ErrorKind::EmptyDataset, "data.train_size is 0");
  ExperimentData d;
  d.train.classes = d.test.classes = cfg.classes;
  const bool cached = cfg.train.encoder == EncoderKind::Precomputed;
  const auto load = [&](Dataset& ds, const std::string& images,
                        const std::string& labels, std::size_t n,
                        const char* split) {
    if (n == 0) return;
    ds.labels = load_idx_labels(labels, n);
    require(ds.labels.size() == n, ErrorKind::ConfigInvalid,
            std::string(split) + " subset larger than the label file");
    if (cached) {
      for (std::size_t i = 0; i < n; ++i) {
        std::ifstream in(cached_spike_file(cfg.cache_dir, split, i));
        require(static_cast<bool>(in), ErrorKind::Io,
                "missing cached spike file for " + std::string(split) + " sample " +
                    std::to_string(i));
        ds.encoded.push_back(read_spike_file(in));
        require(ds.encoded.back().grid() == cfg.train.grid, ErrorKind::GridMismatch,
                "cached spike file grid differs from the config grid");
      }
    } else {
      ds.images = load_idx_images(images, n);
      check_idx_pair(ds.images, ds.labels);
    }
    for (auto l : ds.labels) {
      require(l < cfg.classes, ErrorKind::IndexOutOfRange, "label >= data.classes");
    }
  };
  load(d.train, cfg.train_images, cfg.train_labels, cfg.train_size, "train");
  load(d.test, cfg.test_images, cfg.test_labels, cfg.test_size, "test");
  return d;
}

inline Network build_network(const ExperimentConfig& cfg, std::uint64_t seed) {
  return make_network(cfg.widths, cfg.gamma, cfg.neuron, seed, cfg.init_scale);
}

inline std::string format_metrics_csv(const RunMetrics& m, std::uint64_t config_hash) {
  std::ostringstream out;
  out << "# config_hash=" << hash_hex(config_hash) << "\n";
  out << "epoch,train_acc,test_acc,mean_loss,wall_seconds\n";
  for (const auto& e : m.epochs) {
    out << e.epoch << ',' << detail::format_time(e.train_acc) << ','
        << detail::format_time(e.test_acc) << ',' << detail::format_time(e.mean_loss)
        << ',' << detail::format_time(e.wall_seconds) << '\n';
  }
  return out.str();
}

inline RunMetrics parse_metrics_csv(std::istream& in) {
  RunMetrics m;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      require(line == "epoch,train_acc,test_acc,mean_loss,wall_seconds",
              ErrorKind::BadFormat, "unexpected metrics header");
      header = true;
      continue;
    }
    std::istringstream row(line);
    row.imbue(std::locale::classic());
    EpochMetrics e;
    char c1 = 0, c2 = 0, c3 = 0, c4 = 0;
    row >> e.epoch >> c1 >> e.train_acc >> c2 >> e.test_acc >> c3 >> e.mean_loss >>
        c4 >> e.wall_seconds;
    require(!row.fail() && c1 == ',' && c2 == ',' && c3 == ',' && c4 == ',',
            ErrorKind::BadFormat, "bad metrics row: " + line);
    m.push(e);
  }
  require(header, ErrorKind::BadFormat, "metrics CSV has no header");
  return m;
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

}  // namespace detail

struct ExperimentResult {
  RunMetrics metrics;
  Network net;
  std::filesystem::path run_dir;
};

/// Trains one model on already-loaded data (no files written).
inline ExperimentResult train_model(const ExperimentConfig& cfg,
                                    const ExperimentData& data) {
  ExperimentResult r;
  r.net = build_network(cfg, cfg.seed);
  require(r.net.input_size() ==
              (data.train.images.empty() ? data.train.encoded.front().neuron_count()
                                         : data.train.images.front().size()),
          ErrorKind::ConfigInvalid, "first width does not match the input size");
  r.metrics = train(r.net, data.train, data.test.empty() ? nullptr : &data.test,
                    cfg.train);
  return r;
}

/// Full run: load, train, then write config, metrics CSV, checkpoint and
/// the requested test rasters into run_directory(cfg).
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const ExperimentData data = load_experiment_data(cfg);
  ExperimentResult r = train_model(cfg, data);
  r.run_dir = run_directory(cfg);
  std::filesystem::create_directories(r.run_dir);
  const std::string tag = "# config_hash=" + hash_hex(cfg.hash()) + "\n";
  detail::write_text(r.run_dir / "config.cfg", tag + cfg.source.canonical());
  detail::write_text(r.run_dir / "metrics.csv", format_metrics_csv(r.metrics, cfg.hash()));
  save_checkpoint(r.run_dir / "checkpoint.bin", Checkpoint{r.net, cfg.train.grid, cfg.hash()});
  const ForwardOptions fo{ForwardMode::Hard, cfg.train.kernel, cfg.train.surrogate, nullptr};
  for (auto idx : cfg.raster_indices) {
    require(idx < data.test.size(), ErrorKind::ConfigInvalid,
            "raster index " + std::to_string(idx) + " outside the test subset");
    const auto input = encode_sample(data.test, idx, cfg.train, kTestStream);
    const auto rec = forward(r.net, input, cfg.train.grid, fo);
    for (std::size_t l = 0; l <= rec.layers.size(); ++l) {
      const SpikeTrain& s = l == 0 ? input : rec.layers[l - 1].spikes;
      std::ostringstream out;
      write_spike_file(out, s);
      std::string text = out.str();
      text.insert(text.find('\n') + 1, tag);
      detail::write_text(r.run_dir / ("raster_" + std::to_string(idx) + "_layer" +
                                      std::to_string(l) + ".csv"),
                         text);
    }
  }
  return r;
}

struct GridRow {
  double gamma = 0.0;
  double mean_acc = 0.0;
  double std_acc = 0.0;  // population standard deviation over repeats
  std::size_t repeats = 0;
  std::vector<double> accuracies;
};

inline std::uint64_t repeat_seed(const ExperimentConfig& cfg, std::size_t r) {
  return cfg.search_vary_seed ? derive_seed(cfg.seed, 0x9E00 + r) : cfg.seed;
}

/// For every gamma on the grid, trains `search_repeats` seeded models and
/// records each one's best test accuracy within the epoch budget.
inline std::vector<GridRow> gamma_grid_search(const ExperimentConfig& cfg,
                                              const ExperimentData& data) {
  require(!cfg.search_gammas.empty(), ErrorKind::ConfigInvalid, "empty gamma grid");
  require(cfg.search_repeats > 0, ErrorKind::ConfigInvalid, "search.repeats is 0");
  std::vector<GridRow> rows;
  for (double g : cfg.search_gammas) {
    GridRow row;
    row.gamma = g;
    row.repeats = cfg.search_repeats;
    for (std::size_t r = 0; r < cfg.search_repeats; ++r) {
      ExperimentConfig c = cfg;
      c.gamma = g;
      c.seed = c.train.seed = repeat_seed(cfg, r);
      row.accuracies.push_back(train_model(c, data).metrics.best_test_acc);
    }
    double sum = 0.0;
    for (double a : row.accuracies) sum += a;
    row.mean_acc = sum / static_cast<double>(row.repeats);
    double var = 0.0;
    for (double a : row.accuracies) var += (a - row.mean_acc) * (a - row.mean_acc);
    row.std_acc = std::sqrt(var / static_cast<double>(row.repeats));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string format_grid_csv(const std::vector<GridRow>& rows,
                                   std::uint64_t config_hash) {
  std::ostringstream out;
  out << "# config_hash=" << hash_hex(config_hash) << "\n";
  out << "gamma,mean_acc,std_acc,repeats\n";
  for (const auto& r : rows) {
    out << detail::format_time(r.gamma) << ',' << detail::format_time(r.mean_acc) << ','
        << detail::format_time(r.std_acc) << ',' << r.repeats << '\n';
  }
  return out.str();
}

/// max - min of the per-gamma mean accuracies.
inline double accuracy_spread(const std::vector<GridRow>& rows) {
  if (rows.empty()) return 0.0;
  double lo = rows.front().mean_acc, hi = lo;
  for (const auto& r : rows) {
    lo = std::min(lo, r.mean_acc);
    hi = std::max(hi, r.mean_acc);
  }
  return hi - lo;
}

}  // namespace bifsnn
