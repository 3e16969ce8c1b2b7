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

// Command-line front end: encode, train, analyze, altopt, gridsearch and
// export-raster. Exit codes: 0 ok, 1 runtime failure, 2 configuration error.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bifsnn/bifsnn.hpp"

namespace {

using namespace bifsnn;

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<double> gamma;
  std::optional<std::uint64_t> epochs;
  std::optional<std::string> model;
  std::optional<std::string> output_dir;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "key = value config file");
  sub->add_option("--set", c.sets, "override one key, e.g. --set train.eta=0.01")
      ->take_all();
  sub->add_option("--seed", c.seed, "run.seed");
  sub->add_option("--gamma", c.gamma, "model.gamma");
  sub->add_option("--epochs", c.epochs, "train.epochs");
  sub->add_option("--model", c.model, "model.kind (bsnn | lif)");
  sub->add_option("--output-dir", c.output_dir, "run.output_dir");
}

ExperimentConfig resolve(const Common& c) {
  Config cfg = c.config_path.empty() ? Config{} : Config::load(c.config_path);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos, ErrorKind::ConfigInvalid,
            "--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  const auto num = [](double v) {
    std::ostringstream s;
    s.imbue(std::locale::classic());
    s.precision(17);
    s << v;
    return s.str();
  };
  if (c.seed) cfg.set("run.seed", std::to_string(*c.seed));
  if (c.gamma) cfg.set("model.gamma", num(*c.gamma));
  if (c.epochs) cfg.set("train.epochs", std::to_string(*c.epochs));
  if (c.model) cfg.set("model.kind", *c.model);
  if (c.output_dir) cfg.set("run.output_dir", *c.output_dir);
  return ExperimentConfig::from(cfg);
}

std::string key_listing() {
  std::ostringstream out;
  out << "Config keys (file: `key = value`, flags: --set key=value):\n";
  for (const auto& k : experiment_keys()) {
    out << "  " << k.key << " [" << k.fallback << "]  " << k.help << "\n";
  }
  return out.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_train(const Common& c) {
  const auto cfg = resolve(c);
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run_experiment(cfg);
  std::cerr << "trained in " << seconds_since(t0) << " s\n";
  std::cout << "run_dir=" << r.run_dir.string() << "\n"
            << format_metrics_csv(r.metrics, cfg.hash());
  std::cout << "# best_test_acc=" << r.metrics.best_test_acc
            << " best_epoch=" << r.metrics.best_epoch << "\n";
  return 0;
}

int cmd_encode(const Common& c, const std::string& out_dir) {
  auto cfg = resolve(c);
  require(cfg.train.encoder != EncoderKind::Precomputed, ErrorKind::ConfigInvalid,
          "encode needs encoder.kind = poisson or latency");
  const auto data = load_experiment_data(cfg);
  const std::string dir = out_dir.empty() ? cfg.cache_dir : out_dir;
  require(!dir.empty(), ErrorKind::ConfigInvalid, "encode needs --out or encoder.cache_dir");
  const auto dump = [&](const Dataset& ds, const char* split, std::uint64_t stream) {
    std::filesystem::create_directories(std::filesystem::path(dir) / split);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      std::ofstream out(cached_spike_file(dir, split, i));
      require(static_cast<bool>(out), ErrorKind::Io, "cannot write spike cache");
      write_spike_file(out, encode_sample(ds, i, cfg.train, stream));
    }
  };
  dump(data.train, "train", kTrainStream);
  dump(data.test, "test", kTestStream);
  std::cout << "encoded " << data.train.size() << " train and " << data.test.size()
            << " test samples into " << dir << "\n";
  return 0;
}

void print_report(const BifurcationReport& r) {
  std::cout << "eig_index,re,im\n";
  for (std::size_t i = 0; i < r.eigenvalues.size(); ++i) {
    std::cout << i << ',' << detail::format_time(r.eigenvalues[i].real()) << ','
              << detail::format_time(r.eigenvalues[i].imag()) << '\n';
  }
  std::cout << "# n_pos=" << r.n_positive << " n_zero=" << r.n_zero
            << " n_neg=" << r.n_negative << " bifurcated=" << (r.bifurcated ? 1 : 0)
            << " class=" << to_string(r.system_class);
  if (r.lambda_c) std::cout << " lambda_c=" << detail::format_time(*r.lambda_c);
  std::cout << '\n';
}

/// "a,b" for N = 2 lists the off-diagonal entries; N(N-1) values fill the
/// off-diagonal row by row, N*N values give the full matrix.
Matrix lambda_from_list(const std::vector<double>& v) {
  for (std::size_t n = 1; n * (n - 1) <= v.size(); ++n) {
    if (n * n == v.size()) {
      Matrix m(n, n);
      for (std::size_t i = 0; i < v.size(); ++i) m.data()[i] = v[i];
      return m;
    }
    if (n > 1 && n * (n - 1) == v.size()) {
      Matrix m(n, n);
      std::size_t at = 0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (i != j) m(i, j) = v[at++];
        }
      }
      return m;
    }
  }
  throw Error(ErrorKind::ConfigInvalid, "--lambda needs N*(N-1) or N*N values");
}

int cmd_analyze(double gamma, const std::string& lambda, const std::string& checkpoint) {
  if (!checkpoint.empty()) {
    const auto ck = load_checkpoint(checkpoint);
    for (std::size_t l = 0; l < ck.net.layers.size(); ++l) {
      const auto& p = ck.net.layers[l].neuron;
      std::cout << "# layer=" << l << " gamma=" << detail::format_time(p.gamma) << "\n";
      print_report(bsnn_bifurcation(p.gamma, p.lambda));
    }
    return 0;
  }
  std::vector<double> values;
  for (const auto& item : Config::split_list(lambda)) {
    try {
      values.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error(ErrorKind::ConfigInvalid, "bad --lambda entry '" + item + "'");
    }
  }
  print_report(bsnn_bifurcation(gamma, lambda_from_list(values)));
  return 0;
}

int cmd_gridsearch(const Common& c) {
  const auto cfg = resolve(c);
  const auto data = load_experiment_data(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = gamma_grid_search(cfg, data);
  std::cerr << "grid search took " << seconds_since(t0) << " s\n";
  const auto dir = run_directory(cfg);
  std::filesystem::create_directories(dir);
  const auto csv = format_grid_csv(rows, cfg.hash());
  std::ofstream(dir / "gridsearch.csv") << csv;
  std::cout << "run_dir=" << dir.string() << "\n" << csv
            << "# spread=" << detail::format_time(accuracy_spread(rows)) << "\n";
  return 0;
}

int cmd_altopt(const Common& c) {
  const auto cfg = resolve(c);
  const auto data = load_experiment_data(cfg);
  const Network tmpl = build_network(cfg, cfg.seed);
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = alternating_optimize(tmpl, data.train,
                                      data.test.empty() ? nullptr : &data.test,
                                      cfg.train, cfg.altopt);
  std::cerr << "alternating optimization took " << seconds_since(t0) << " s\n";
  std::ostringstream csv;
  csv << "# config_hash=" << hash_hex(cfg.hash()) << "\n"
      << "candidate,gammas,loss,accuracy,refinement,selected\n";
  for (std::size_t i = 0; i < r.candidates.size(); ++i) {
    const auto& cand = r.candidates[i];
    csv << i << ',';
    for (std::size_t l = 0; l < cand.gammas.size(); ++l) {
      csv << (l ? ";" : "") << detail::format_time(cand.gammas[l]);
    }
    csv << ',' << detail::format_time(cand.loss) << ','
        << detail::format_time(cand.accuracy) << ',' << (cand.refinement ? 1 : 0) << ','
        << (i == r.best_index ? 1 : 0) << '\n';
  }
  const auto dir = run_directory(cfg);
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "altopt.csv") << csv.str();
  std::cout << "run_dir=" << dir.string() << "\n" << csv.str();
  return 0;
}

int cmd_export_raster(const Common& c, const std::string& checkpoint, std::size_t index,
                      std::optional<std::size_t> layer, const std::string& out_path) {
  auto cfg = resolve(c);
  const auto ck = load_checkpoint(checkpoint);
  require(ck.grid == cfg.train.grid, ErrorKind::ConfigInvalid,
          "checkpoint grid differs from the config grid");
  cfg.train_size = std::max<std::size_t>(cfg.train_size, 1);
  require(index < cfg.test_size, ErrorKind::ConfigInvalid, "--index outside the test subset");
  const auto data = load_experiment_data(cfg);
  const auto input = encode_sample(data.test, index, cfg.train, kTestStream);
  const auto rec = forward(ck.net, input, ck.grid,
                           ForwardOptions{ForwardMode::Hard, cfg.train.kernel,
                                          cfg.train.surrogate, nullptr});
  const std::size_t l = layer.value_or(rec.layers.size());
  require(l <= rec.layers.size(), ErrorKind::ConfigInvalid, "--layer out of range");
  const SpikeTrain& s = l == 0 ? input : rec.layers[l - 1].spikes;
  if (out_path.empty()) {
    write_spike_file(std::cout, s);
  } else {
    std::ofstream out(out_path);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + out_path);
    write_spike_file(out, s);
  }
  std::cerr << "sample " << index << " decoded as " << decode_label(rec.output())
            << " (label " << data.test.labels[index] << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bifurcation spiking neural network toolkit"};
  app.footer(key_listing());
  app.require_subcommand(1);

  Common common;
  auto* train_cmd = app.add_subcommand("train", "train one model and write a run directory");
  add_common(train_cmd, common);

  std::string encode_out;
  auto* encode_cmd = app.add_subcommand("encode", "write spike-train caches for the data subsets");
  add_common(encode_cmd, common);
  encode_cmd->add_option("--out", encode_out, "cache directory (default encoder.cache_dir)");

  double an_gamma = -0.21;
  std::string an_lambda = "", an_checkpoint;
  auto* analyze_cmd = app.add_subcommand("analyze", "spectrum of gamma I + lambda");
  analyze_cmd->add_option("--gamma", an_gamma, "control rate");
  analyze_cmd->add_option("--lambda", an_lambda,
                          "comma list: N(N-1) off-diagonal or N*N full entries");
  analyze_cmd->add_option("--checkpoint", an_checkpoint, "analyze every layer of a checkpoint");

  auto* altopt_cmd = app.add_subcommand("altopt", "alternating control-rate optimization");
  add_common(altopt_cmd, common);

  auto* grid_cmd = app.add_subcommand("gridsearch", "gamma robustness grid search");
  add_common(grid_cmd, common);

  std::string ex_checkpoint, ex_out;
  std::size_t ex_index = 0;
  std::optional<std::size_t> ex_layer;
  auto* export_cmd = app.add_subcommand("export-raster", "raster of one test sample");
  add_common(export_cmd, common);
  export_cmd->add_option("--checkpoint", ex_checkpoint, "trained checkpoint")->required();
  export_cmd->add_option("--index", ex_index, "test sample index");
  export_cmd->add_option("--layer", ex_layer, "0 = input, default = output layer");
  export_cmd->add_option("--out", ex_out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return cmd_train(common);
    if (*encode_cmd) return cmd_encode(common, encode_out);
    if (*analyze_cmd) return cmd_analyze(an_gamma, an_lambda, an_checkpoint);
    if (*altopt_cmd) return cmd_altopt(common);
    if (*grid_cmd) return cmd_gridsearch(common);
    if (*export_cmd) {
      return cmd_export_raster(common, ex_checkpoint, ex_index, ex_layer, ex_out);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::ConfigInvalid ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
