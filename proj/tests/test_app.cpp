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

#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bifsnn/bifsnn.hpp"

namespace bifsnn {
namespace {

namespace fs = std::filesystem;

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no bifsnn::Error thrown";
  return ErrorKind::Io;
}

std::vector<unsigned char> be32(std::uint32_t v) {
  return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
}

std::vector<unsigned char> concat(std::initializer_list<std::vector<unsigned char>> parts) {
  std::vector<unsigned char> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("bifsnn_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const std::string kData = BIFSNN_DATA_DIR;

TEST(IdxTest, GoldenImageBytes) {
  const auto bytes = concat({be32(0x803), be32(1), be32(2), be32(2), {0, 255, 128, 0}});
  const auto images = parse_idx_images(bytes);
  ASSERT_EQ(images.size(), 1u);
  EXPECT_EQ(images[0].height, 2u);
  EXPECT_EQ(images[0].width, 2u);
  EXPECT_EQ(images[0].pixels, (std::vector<double>{0.0, 1.0, 128.0 / 255.0, 0.0}));
  EXPECT_EQ(encode_idx_images(images), bytes);
}

TEST(IdxTest, GoldenLabelBytes) {
  const auto bytes = concat({be32(0x801), be32(3), {7, 2, 1}});
  EXPECT_EQ(parse_idx_labels(bytes), (std::vector<std::size_t>{7, 2, 1}));
  EXPECT_EQ(encode_idx_labels({7, 2, 1}), bytes);
  EXPECT_TRUE(parse_idx_labels(concat({be32(0x801), be32(0)})).empty());
  EXPECT_EQ(parse_idx_labels(bytes, 2), (std::vector<std::size_t>{7, 2}));
}

TEST(IdxTest, Errors) {
  EXPECT_EQ(kind_of([] { parse_idx_images(concat({be32(0x801), be32(0), be32(1), be32(1)})); }),
            ErrorKind::BadMagic);
  EXPECT_EQ(kind_of([] { parse_idx_labels(concat({be32(0x803), be32(0)})); }),
            ErrorKind::BadMagic);
  EXPECT_EQ(kind_of([] { parse_idx_images(concat({be32(0x803), be32(1), be32(2)})); }),
            ErrorKind::TruncatedFile);
  EXPECT_EQ(kind_of([] {
              parse_idx_images(concat({be32(0x803), be32(2), be32(2), be32(2), {1, 2, 3, 4, 5}}));
            }),
            ErrorKind::TruncatedFile);
  EXPECT_EQ(kind_of([] { parse_idx_labels(concat({be32(0x801), be32(4), {1, 2}})); }),
            ErrorKind::TruncatedFile);
  EXPECT_EQ(kind_of([] {
              parse_idx_images(concat({be32(0x803), be32(1), be32(1u << 20), be32(1u << 20)}));
            }),
            ErrorKind::DimensionOverflow);
  EXPECT_EQ(kind_of([] {
              parse_idx_images(concat({be32(0x803), be32(0xFFFFFFFF), be32(4096), be32(4096)}));
            }),
            ErrorKind::DimensionOverflow);
  const auto images = parse_idx_images(concat({be32(0x803), be32(1), be32(1), be32(1), {9}}));
  EXPECT_EQ(kind_of([&] { check_idx_pair(images, {1, 2}); }), ErrorKind::CountMismatch);
  EXPECT_EQ(kind_of([] { load_idx_labels("/nonexistent/labels"); }), ErrorKind::Io);
}

TEST(IdxTest, FileRoundTrip) {
  const auto dir = scratch("idx");
  const auto bytes = concat({be32(0x803), be32(2), be32(1), be32(3), {0, 10, 20, 30, 40, 255}});
  std::ofstream(dir / "img", std::ios::binary)
      .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  const auto images = load_idx_images(dir / "img");
  ASSERT_EQ(images.size(), 2u);
  EXPECT_EQ(images[1].pixels[2], 1.0);
  EXPECT_EQ(load_idx_images(dir / "img", 1).size(), 1u);
}

TEST(IdxTest, BundledSubset) {
  const auto images = load_idx_images(kData + "/train-images-idx3-ubyte");
  const auto labels = load_idx_labels(kData + "/train-labels-idx1-ubyte");
  ASSERT_EQ(images.size(), 4000u);
  check_idx_pair(images, labels);
  for (const auto& im : images) {
    ASSERT_EQ(im.height, 28u);
    ASSERT_EQ(im.width, 28u);
  }
  const auto test_labels = load_idx_labels(kData + "/t10k-labels-idx1-ubyte");
  ASSERT_EQ(test_labels.size(), 1000u);
  std::vector<int> seen(10, 0);
  for (auto l : test_labels) {
    ASSERT_LT(l, 10u);
    seen[l] = 1;
  }
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(ConfigTest, ParsesCommentsAndWhitespace) {
  const auto c = Config::parse_string(
      "# header\n"
      "train.eta = 0.01   # trailing\n"
      "\n"
      "  model.widths=784, 100 ,10\n"
      "run.record_wall_time = yes\n");
  EXPECT_EQ(c.get_double("train.eta", 0), 0.01);
  EXPECT_EQ(c.get_uints("model.widths", {}), (std::vector<std::uint64_t>{784, 100, 10}));
  EXPECT_TRUE(c.get_bool("run.record_wall_time", false));
  EXPECT_EQ(c.get_string("missing.key", "x"), "x");
}

TEST(ConfigTest, Errors) {
  EXPECT_EQ(kind_of([] { Config::parse_string("a.b = 1\na.b = 2\n"); }), ErrorKind::ConfigInvalid);
  EXPECT_EQ(kind_of([] { Config::parse_string("no equals sign\n"); }), ErrorKind::ConfigInvalid);
  EXPECT_EQ(kind_of([] { Config::parse_string("bad key = 1\n"); }), ErrorKind::ConfigInvalid);
  EXPECT_EQ(kind_of([] { Config::parse_string("a = maybe\n").get_bool("a", false); }),
            ErrorKind::ConfigInvalid);
  EXPECT_EQ(kind_of([] { Config::parse_string("a = 1x\n").get_double("a", 0); }),
            ErrorKind::ConfigInvalid);
  EXPECT_EQ(kind_of([] { Config::parse_string("a = -3\n").get_uint("a", 0); }),
            ErrorKind::ConfigInvalid);
  EXPECT_EQ(kind_of([] { Config::load("/nonexistent/missing.cfg"); }), ErrorKind::ConfigInvalid);
}

TEST(ConfigTest, HashIgnoresOrderButNotValues) {
  const auto a = Config::parse_string("x.a = 1\ny.b = 2\n");
  const auto b = Config::parse_string("y.b = 2\nx.a = 1\n");
  const auto c = Config::parse_string("x.a = 1\ny.b = 3\n");
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), c.hash());
  EXPECT_EQ(a.hash(), fnv1a64(a.canonical()));
}

TEST(ExperimentConfigTest, DefaultsAndValidation) {
  const auto e = ExperimentConfig::from(Config{});
  EXPECT_EQ(e.widths, (std::vector<std::size_t>{784, 100, 10}));
  EXPECT_EQ(e.gamma, -0.21);
  EXPECT_EQ(e.train.grid.steps, 300u);
  EXPECT_EQ(e.train.batch_size, 32u);
  EXPECT_EQ(e.train.true_count, 100u);
  EXPECT_EQ(e.train.false_count, 10u);
  EXPECT_EQ(e.neuron.tau_s, 8.0);
  EXPECT_TRUE(e.train.train_lambda);
  EXPECT_EQ(ExperimentConfig::from(Config::parse_string("model.kind = lif\n")).train.train_lambda,
            false);
  for (const char* bad : {"model.kind = cnn\n", "nope.key = 1\n", "model.widths = 784,100,7\n",
                          "train.optimizer = rmsprop\n", "grid.dt = 0\n",
                          "train.true_count = 400\n", "encoder.kind = precomputed\n"}) {
    EXPECT_EQ(kind_of([&] { ExperimentConfig::from(Config::parse_string(bad)); }),
              ErrorKind::ConfigInvalid)
        << bad;
  }
  // A full-width 784-500-500-10 MNIST setup is a valid configuration.
  const auto wide = ExperimentConfig::from(Config::parse_string(
      "model.widths = 784,500,500,10\nmodel.gamma = -0.21\ntrain.optimizer = sgd\ntrain.eta = 0.01\n"));
  EXPECT_EQ(build_network(wide, 1).layers.size(), 3u);
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  Network net = make_network(std::vector<std::size_t>{5, 4, 3}, -0.21, NeuronDefaults{}, 9, 1.0);
  net.layers[1].neuron.lambda(0, 2) = 0.1 + 0.2;  // not exactly representable in decimal
  net.layers[0].neuron.gamma = -1.0 / 3.0;
  const Checkpoint ck{net, make_time_grid(300.0, 1.0), 0xDEADBEEFCAFEF00DULL};
  const auto bytes = serialize_checkpoint(ck);
  const auto back = deserialize_checkpoint(bytes);
  EXPECT_EQ(back.config_hash, ck.config_hash);
  EXPECT_EQ(back.grid, ck.grid);
  ASSERT_EQ(back.net.layers.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) {
    const auto &a = net.layers[l], &b = back.net.layers[l];
    EXPECT_EQ(a.W, b.W);
    EXPECT_EQ(a.neuron.lambda, b.neuron.lambda);
    EXPECT_EQ(a.neuron.gamma, b.neuron.gamma);
    EXPECT_EQ(a.neuron.R, b.neuron.R);
    EXPECT_EQ(a.neuron.tau_m, b.neuron.tau_m);
    EXPECT_EQ(a.neuron.u_rest, b.neuron.u_rest);
    EXPECT_EQ(a.neuron.u_firing, b.neuron.u_firing);
    EXPECT_EQ(a.neuron.refractory, b.neuron.refractory);
    EXPECT_EQ(a.tau_s, b.tau_s);
  }
  EXPECT_EQ(serialize_checkpoint(back), bytes);

  const auto dir = scratch("ckpt");
  save_checkpoint(dir / "c.bin", ck);
  EXPECT_EQ(serialize_checkpoint(load_checkpoint(dir / "c.bin")), bytes);
}

TEST(CheckpointTest, GoldenHeaderLayout) {
  Network net;
  Layer layer;
  layer.W = Matrix{{2.0}};
  layer.neuron.lambda = Matrix(1, 1);
  net.layers.push_back(layer);
  const auto bytes = serialize_checkpoint({net, make_time_grid(4.0, 0.5), 0x0102030405060708ULL});
  // magic, version, hash, duration, dt, steps, layer count, shapes, 7 scalars,
  // W, lambda, checksum
  ASSERT_EQ(bytes.size(), 8u + 4 + 8 + 8 + 8 + 8 + 4 + 16 + 7 * 8 + 8 + 8 + 8);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "BIFSNNCK");
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[12], 0x08);  // little-endian hash
  EXPECT_EQ(bytes[19], 0x01);
  EXPECT_EQ(bytes[36], 8);  // steps = 4 / 0.5
  std::uint64_t tail = 0;
  for (int i = 7; i >= 0; --i) tail = (tail << 8) | bytes[bytes.size() - 8 + i];
  EXPECT_EQ(tail, fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                           bytes.size() - 8)));
}

TEST(CheckpointTest, CorruptionIsDetected) {
  const Network net = make_network(std::vector<std::size_t>{3, 2}, -0.2, NeuronDefaults{}, 1);
  const auto bytes = serialize_checkpoint({net, make_time_grid(10.0, 1.0), 1});
  auto flipped = bytes;
  flipped[40] ^= 0x10;
  EXPECT_EQ(kind_of([&] { deserialize_checkpoint(flipped); }), ErrorKind::BadFormat);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_EQ(kind_of([&] { deserialize_checkpoint(magic); }), ErrorKind::BadMagic);
  EXPECT_EQ(kind_of([&] {
              deserialize_checkpoint(std::vector<unsigned char>(bytes.begin(), bytes.begin() + 10));
            }),
            ErrorKind::TruncatedFile);
}

TEST(MetricsCsvTest, RoundTripAndSchema) {
  RunMetrics m;
  m.push({1, 0.5, 0.25, 123.456, 0.0});
  m.push({2, 0.75, 1.0 / 3.0, 99.5, 1.5});
  const auto text = format_metrics_csv(m, 0xABCDEF);
  EXPECT_NE(text.find("# config_hash=0000000000abcdef\n"), std::string::npos);
  EXPECT_NE(text.find("\nepoch,train_acc,test_acc,mean_loss,wall_seconds\n"), std::string::npos);
  std::istringstream in(text);
  const auto back = parse_metrics_csv(in);
  ASSERT_EQ(back.epochs.size(), 2u);
  EXPECT_EQ(back.epochs[1].test_acc, 1.0 / 3.0);
  EXPECT_EQ(back.best_test_acc, 1.0 / 3.0);
  EXPECT_EQ(back.best_epoch, 2u);
  std::istringstream bad("epoch,acc\n1,2\n");
  EXPECT_EQ(kind_of([&] { parse_metrics_csv(bad); }), ErrorKind::BadFormat);
}

Config tiny_config(const fs::path& out) {
  return Config::parse_string(
      "data.train_images = " + kData + "/train-images-idx3-ubyte\n" +
      "data.train_labels = " + kData + "/train-labels-idx1-ubyte\n" +
      "data.test_images = " + kData + "/t10k-images-idx3-ubyte\n" +
      "data.test_labels = " + kData + "/t10k-labels-idx1-ubyte\n" +
      "data.train_size = 24\ndata.test_size = 8\n"
      "model.widths = 784,12,10\n"
      "grid.duration = 40\n"
      "train.true_count = 10\ntrain.false_count = 1\ntrain.batch = 8\ntrain.epochs = 2\n"
      "run.raster_indices = 0,3\n"
      "run.output_dir = " + out.string() + "\n");
}

TEST(RunExperimentTest, ByteIdenticalReruns) {
  const auto out = scratch("runs");
  const auto cfg = ExperimentConfig::from(tiny_config(out));
  const auto a = run_experiment(cfg);
  const std::string metrics = slurp(a.run_dir / "metrics.csv");
  const std::string ckpt = slurp(a.run_dir / "checkpoint.bin");
  const auto b = run_experiment(cfg);
  EXPECT_EQ(a.run_dir, b.run_dir);
  EXPECT_EQ(slurp(b.run_dir / "metrics.csv"), metrics);
  EXPECT_EQ(slurp(b.run_dir / "checkpoint.bin"), ckpt);
  EXPECT_EQ(a.run_dir.filename().string(), "run-" + hash_hex(cfg.hash()));

  // Every artifact carries the hash.
  const std::string tag = "# config_hash=" + hash_hex(cfg.hash());
  for (const char* f : {"metrics.csv", "config.cfg", "raster_0_layer0.csv", "raster_3_layer2.csv"}) {
    EXPECT_NE(slurp(a.run_dir / f).find(tag), std::string::npos) << f;
  }
  EXPECT_EQ(load_checkpoint(a.run_dir / "checkpoint.bin").config_hash, cfg.hash());
  std::ifstream raster(a.run_dir / "raster_3_layer2.csv");
  EXPECT_EQ(read_spike_file(raster).neuron_count(), 10u);

  // A changed config lands in a fresh directory.
  auto changed = tiny_config(out);
  changed.set("model.gamma", "-0.5");
  const auto c = run_experiment(ExperimentConfig::from(changed));
  EXPECT_NE(c.run_dir, a.run_dir);
  EXPECT_EQ(slurp(a.run_dir / "metrics.csv"), metrics);
}

TEST(RunExperimentTest, EmptyTrainingSubset) {
  auto c = tiny_config(scratch("empty"));
  c.set("data.train_size", "0");
  EXPECT_EQ(kind_of([&] { run_experiment(ExperimentConfig::from(c)); }), ErrorKind::EmptyDataset);
}

TEST(RunExperimentTest, PrecomputedCacheMatchesOnlineEncoding) {
  const auto out = scratch("cache");
  auto c = tiny_config(out);
  const auto online = ExperimentConfig::from(c);
  const auto data = load_experiment_data(online);
  for (const auto& [ds, split, stream] :
       {std::tuple{&data.train, "train", kTrainStream}, std::tuple{&data.test, "test", kTestStream}}) {
    fs::create_directories(out / "cache" / split);
    for (std::size_t i = 0; i < ds->size(); ++i) {
      std::ofstream f(cached_spike_file((out / "cache").string(), split, i));
      write_spike_file(f, encode_sample(*ds, i, online.train, stream));
    }
  }
  c.set("encoder.kind", "precomputed");
  c.set("encoder.cache_dir", (out / "cache").string());
  const auto cached = ExperimentConfig::from(c);
  EXPECT_EQ(format_metrics_csv(train_model(online, data).metrics, 0),
            format_metrics_csv(train_model(cached, load_experiment_data(cached)).metrics, 0));
}

TEST(GridSearchTest, IdenticalSeedsGiveZeroSpreadAndZeroGammaRuns) {
  auto c = tiny_config(scratch("grid"));
  c.set("search.gammas", "0,-0.5");
  c.set("search.repeats", "3");
  c.set("search.vary_seed", "false");
  c.set("train.epochs", "1");
  const auto cfg = ExperimentConfig::from(c);
  const auto rows = gamma_grid_search(cfg, load_experiment_data(cfg));
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.repeats, 3u);
    EXPECT_EQ(r.std_acc, 0.0);
    EXPECT_EQ(r.accuracies[0], r.accuracies[2]);
  }
  EXPECT_EQ(rows[0].gamma, 0.0);
  const auto csv = format_grid_csv(rows, cfg.hash());
  EXPECT_NE(csv.find("\ngamma,mean_acc,std_acc,repeats\n0,"), std::string::npos);
}

TEST(GridSearchTest, StdIsPopulationStd) {
  // Oracle: accuracies {a, b} -> |a - b| / 2.
  auto c = tiny_config(scratch("grid2"));
  c.set("search.gammas", "-0.3");
  c.set("search.repeats", "2");
  c.set("train.epochs", "1");
  const auto cfg = ExperimentConfig::from(c);
  const auto rows = gamma_grid_search(cfg, load_experiment_data(cfg));
  const auto& acc = rows[0].accuracies;
  EXPECT_DOUBLE_EQ(rows[0].std_acc, std::abs(acc[0] - acc[1]) / 2);
  EXPECT_DOUBLE_EQ(rows[0].mean_acc, (acc[0] + acc[1]) / 2);
}

struct CliResult {
  int code;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  const auto dir = fs::path(::testing::TempDir());
  const auto log = dir / "bifsnn_cli_out.txt";
  const std::string cmd =
      std::string("\"") + BIFSNN_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

TEST(CliTest, AnalyzeHandSolvedCase) {
  const auto r = run_cli("analyze --gamma -1 --lambda 2,2");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("0,1,0\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("1,-3,0\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("bifurcated=1"), std::string::npos) << r.out;
}

TEST(CliTest, ExitCodes) {
  EXPECT_EQ(run_cli("train --config /nonexistent/missing.cfg").code, 2);
  EXPECT_EQ(run_cli("train --set nope.key=1").code, 2);
  EXPECT_EQ(run_cli("frobnicate").code, 2);
  EXPECT_EQ(run_cli("analyze --lambda 1,2,3").code, 2);
  EXPECT_EQ(run_cli("analyze --checkpoint /nonexistent/ck.bin").code, 1);
  const auto help = run_cli("--help");
  EXPECT_EQ(help.code, 0);
  for (const char* sub : {"train", "encode", "analyze", "altopt", "gridsearch", "export-raster"}) {
    EXPECT_NE(help.out.find(sub), std::string::npos) << sub;
  }
  for (const auto& k : experiment_keys()) {
    EXPECT_NE(help.out.find(k.key), std::string::npos) << k.key;
  }
}

TEST(CliTest, TrainThenExportRaster) {
  const auto out = scratch("cli");
  const auto cfg_path = out / "tiny.cfg";
  std::ofstream(cfg_path) << tiny_config(out).canonical();
  const auto r = run_cli("train --config \"" + cfg_path.string() + "\" --epochs 1 --seed 4");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto pos = r.out.find("run_dir=");
  ASSERT_NE(pos, std::string::npos);
  const std::string dir = r.out.substr(pos + 8, r.out.find('\n', pos) - pos - 8);
  EXPECT_TRUE(fs::exists(fs::path(dir) / "checkpoint.bin"));
  const auto ex = run_cli("export-raster --config \"" + cfg_path.string() +
                          "\" --checkpoint \"" + dir + "/checkpoint.bin\" --index 2");
  ASSERT_EQ(ex.code, 0) << ex.out;
  EXPECT_NE(ex.out.find("# neurons=10 steps=40 dt=1"), std::string::npos) << ex.out;
}

}  // namespace
}  // namespace bifsnn
