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

#include <cmath>
#include <vector>

#include "bifsnn/dynamics.hpp"
#include "bifsnn/random.hpp"

namespace bifsnn {
namespace {

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

TEST(SpikeExcitationTest, FloorOfRatio) {
  EXPECT_EQ(spike_excitation(2.5, 1.0), 2);
  EXPECT_EQ(spike_excitation(0.999, 1.0), 0);
  EXPECT_EQ(spike_excitation(1.0, 1.0), 1);
  EXPECT_EQ(spike_excitation(-3.0, 1.0), 0);
  EXPECT_EQ(spike_excitation(7.0, 2.0), 3);
  EXPECT_EQ(spike_excitation(1e300, 1.0), kMaxSpikesPerBin);
  EXPECT_EQ(kind_of([] { spike_excitation(1.0, 0.0); }), ErrorKind::NonPositiveThreshold);
}

TEST(LifStepTest, ConstantDriveFollowsGeometricSeries) {
  // u_n = c (1 - L^n) / (1 - L), c = gain * drive * dt, L = e^{gamma dt}.
  const LifParams p = LifParams::lif_style(10.0, 2.0, 0.0, 1.0, 3.0);
  const double dt = 0.5, drive = 1.3;
  const double L = std::exp(p.gamma * dt), c = p.R / p.tau_m * drive * dt;
  std::size_t expected_fire = 0;
  for (std::size_t n = 1;; ++n) {
    if (c * (1 - std::pow(L, n)) / (1 - L) >= p.u_firing) {
      expected_fire = n - 1;  // step index is n - 1
      break;
    }
  }
  const std::size_t n_ref = 6;  // round(3 / 0.5)
  LayerState state = LayerState::at_rest(1, 0.0);
  const std::vector<double> d{drive};
  std::vector<std::size_t> fires;
  for (std::size_t t = 0; t < 3 * (expected_fire + n_ref + 2); ++t) {
    auto r = lif_step(state, d, p, dt);
    if (t < expected_fire) {
      EXPECT_NEAR(r.state.u[0], c * (1 - std::pow(L, t + 1)) / (1 - L), 1e-12);
    }
    if (r.spikes[0] > 0) fires.push_back(t);
    state = r.state;
  }
  ASSERT_GE(fires.size(), 2u);
  EXPECT_EQ(fires[0], expected_fire);
  // After a spike the neuron sits out n_ref steps, then repeats the same ramp.
  EXPECT_EQ(fires[1] - fires[0], expected_fire + 1 + n_ref);
}

TEST(LifStepTest, RefractoryClampHoldsRest) {
  const LifParams p{1.0, 1.0, -0.2, -0.5, 1.0, 2.0};
  LayerState s = LayerState::at_rest(1, p.u_rest);
  const std::vector<double> big{10.0};
  auto r = lif_step(s, big, p, 1.0);
  ASSERT_GT(r.spikes[0], 0);
  EXPECT_EQ(r.state.u[0], p.u_rest);
  EXPECT_EQ(r.state.last_fire_step[0], 0u);
  for (int i = 0; i < 2; ++i) {
    r = lif_step(r.state, big, p, 1.0);
    EXPECT_EQ(r.spikes[0], 0);
    EXPECT_EQ(r.state.u[0], p.u_rest);
  }
  r = lif_step(r.state, big, p, 1.0);
  EXPECT_GT(r.spikes[0], 0);
}

TEST(LifStepTest, Guards) {
  const LifParams p = LifParams::lif_style(1.0, 1.0, 0.0, 1.0, 0.0);
  const LayerState s = LayerState::at_rest(2, 0.0);
  const std::vector<double> d{0.0, 0.0}, wrong{0.0};
  EXPECT_EQ(kind_of([&] { lif_step(s, d, p, 2.0); }), ErrorKind::UnstableStep);
  EXPECT_EQ(kind_of([&] { lif_step(s, d, p, 0.0); }), ErrorKind::NonPositiveTime);
  EXPECT_EQ(kind_of([&] { lif_step(s, wrong, p, 0.5); }), ErrorKind::DimensionMismatch);
}

TEST(BsnnStepTest, ZeroLambdaEqualsLif) {
  BsnnLayerParams bp;
  bp.gamma = -0.3;
  bp.lambda = Matrix(4, 4);
  Rng rng(5);
  LayerState a = LayerState::at_rest(4, 0.0), b = a;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> d(4);
    for (double& v : d) v = rng.uniform(-0.5, 1.5);
    auto ra = bsnn_layer_step(a, d, bp, 1.0);
    auto rb = lif_step(b, d, bp.as_lif(), 1.0);
    ASSERT_EQ(ra.spikes, rb.spikes);
    ASSERT_EQ(ra.state.u, rb.state.u);
    a = ra.state;
    b = rb.state;
  }
}

TEST(BsnnStepTest, LateralTermUsesLastSpikeValue) {
  BsnnLayerParams bp;
  bp.gamma = -0.5;
  bp.lambda = Matrix{{0.0, 0.0}, {0.1, 0.0}};
  LayerState s = LayerState::at_rest(2, 0.0);
  auto r = bsnn_layer_step(s, std::vector<double>{3.5, 0.0}, bp, 1.0);
  ASSERT_EQ(r.spikes[0], 3);
  EXPECT_EQ(r.state.u[1], 0.0);  // the spike is seen from the next step on
  r = bsnn_layer_step(r.state, std::vector<double>{0.0, 0.0}, bp, 1.0);
  EXPECT_DOUBLE_EQ(r.state.u[1], 0.1 * 3);
  r = bsnn_layer_step(r.state, std::vector<double>{0.0, 0.0}, bp, 1.0);
  // S_0(t'_0) persists after the refractory window: leak plus another 0.3.
  EXPECT_DOUBLE_EQ(r.state.u[1], 0.3 * std::exp(-0.5) + 0.3);
  EXPECT_EQ(kind_of([&] {
              BsnnLayerParams q = bp;
              q.lambda = Matrix(3, 3);
              bsnn_layer_step(s, std::vector<double>{0.0, 0.0}, q, 1.0);
            }),
            ErrorKind::DimensionMismatch);
}

// The closed form is a direct sum over the spike history; the stepper is a
// recursion. They must agree for both kernel conventions.
struct ClosedFormCase {
  KernelConvention kernel;
  double gamma;
  double dt;
};

class ClosedFormTest : public ::testing::TestWithParam<ClosedFormCase> {};

TEST_P(ClosedFormTest, SingleNeuronMatchesStepper) {
  const auto c = GetParam();
  const TimeGrid grid = make_time_grid(200.0 * c.dt, c.dt);
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m = 5;
    std::vector<double> w(m);
    for (double& v : w) v = rng.uniform(-0.2, 0.6);
    std::vector<SpikeTrain::Event> ev;
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t t = 0; t < grid.steps; ++t) {
        if (rng.uniform() < 0.15) ev.push_back({j, t});
      }
    }
    const auto inputs = SpikeTrain::from_events(m, grid, ev);
    LifParams p{1.0, 1.0, c.gamma, 0.0, 1.0, 2.0};
    const auto trace = lif_srm_response(w, inputs, p, c.kernel);

    NeuronConstants k = NeuronConstants::from(p);
    LayerState s = LayerState::at_rest(1, 0.0);
    std::vector<SpikeCount> spk(1);
    std::vector<double> u_pre(1);
    for (std::size_t t = 0; t < grid.steps; ++t) {
      double charge = 0.0;
      for (std::size_t j = 0; j < m; ++j) charge += w[j] * inputs.at(j, t);
      const std::vector<double> d{charge / (k.gain * c.dt)};
      const bool integrating = t >= s.refractory_until[0];
      advance_layer(s, d, k, c.dt, c.kernel, spk, u_pre);
      if (integrating) {
        ASSERT_NEAR(trace.at(0, t), u_pre[0], 1e-9 * (1 + std::abs(u_pre[0])))
            << "trial " << trial << " step " << t;
      } else {
        ASSERT_EQ(trace.at(0, t), 0.0);
      }
      ASSERT_EQ(spike_excitation(trace.at(0, t), 1.0), spk[0]);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(
    Conventions, ClosedFormTest,
    ::testing::Values(ClosedFormCase{KernelConvention::OdeConsistent, -0.2, 1.0},
                      ClosedFormCase{KernelConvention::OdeConsistent, 0.05, 0.5},
                      ClosedFormCase{KernelConvention::AnchoredIntegral, -0.2, 1.0},
                      ClosedFormCase{KernelConvention::AnchoredIntegral, -0.8, 0.5}));

TEST(ClosedFormTest, BsnnLayerMatchesStepper) {
  const std::size_t n = 3, m = 4;
  const auto grid = make_time_grid(150.0, 1.0);
  Rng rng(23);
  BsnnLayerParams bp;
  bp.gamma = -0.25;
  bp.lambda = Matrix(n, n);
  Matrix W(n, m);
  for (double& v : W.data()) v = rng.uniform(0.0, 0.5);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) bp.lambda(i, j) = rng.uniform(-0.3, 0.5);
    }
  }
  std::vector<SpikeTrain::Event> ev;
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t t = 0; t < grid.steps; ++t) {
      if (rng.uniform() < 0.2) ev.push_back({j, t});
    }
  }
  const auto inputs = SpikeTrain::from_events(m, grid, ev);

  LayerState s = LayerState::at_rest(n, 0.0);
  std::vector<SpikeCount> counts(n * grid.steps);
  std::vector<double> u_pre(n * grid.steps);
  std::vector<SpikeCount> spk(n);
  std::vector<double> pre(n);
  std::vector<std::vector<bool>> integrating(n, std::vector<bool>(grid.steps));
  for (std::size_t t = 0; t < grid.steps; ++t) {
    std::vector<double> d(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t j = 0; j < m; ++j) d[k] += W(k, j) * inputs.at(j, t);
      integrating[k][t] = t >= s.refractory_until[k];
    }
    add_lateral_drive(s, bp.lambda, d);
    advance_layer(s, d, NeuronConstants::from(bp), 1.0, KernelConvention::OdeConsistent,
                  spk, pre);
    for (std::size_t k = 0; k < n; ++k) {
      counts[k * grid.steps + t] = spk[k];
      u_pre[k * grid.steps + t] = pre[k];
    }
  }
  const SpikeTrain peers(n, grid, counts);
  std::size_t total = 0;
  for (auto c : counts) total += c;
  ASSERT_GT(total, 5u);

  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> lam(n);
    for (std::size_t i = 0; i < n; ++i) lam[i] = bp.lambda(k, i);
    const auto trace = bsnn_closed_form(W.row(k), lam, inputs, peers, bp);
    for (std::size_t t = 0; t < grid.steps; ++t) {
      if (!integrating[k][t]) continue;
      ASSERT_NEAR(trace.at(0, t), u_pre[k * grid.steps + t], 1e-9) << k << " " << t;
    }
  }
}

TEST(RefractoryTest, KernelValues) {
  const LifParams p{1.0, 1.0, -0.5, 0.0, 2.0, 2.0};
  const std::vector<SpikeCount> s{1, 0, 0, 0, 0, 0};
  const auto eta = refractory_response(s, p, 1.0);
  EXPECT_DOUBLE_EQ(eta[0], -2.0);
  EXPECT_DOUBLE_EQ(eta[1], -2.0 * std::exp(-0.5));
  EXPECT_DOUBLE_EQ(eta[2], -2.0 * std::exp(-1.0));
  EXPECT_EQ(eta[3], 0.0);
}

TEST(RefractoryTest, KernelModeSubtractsThreshold) {
  // One input spike of weight 1.5 at step 0 fires once. The input integral
  // restarts after the spike, so what remains is eta alone, which is gone
  // once the refractory window has passed.
  const auto grid = make_time_grid(4.0, 1.0);
  const auto in = SpikeTrain::from_events(1, grid, {{0, 0}});
  const LifParams p{1.0, 1.0, -0.5, 0.0, 1.0, 2.0};
  const std::vector<double> w{1.5};
  const auto tr = lif_srm_response(w, in, p, KernelConvention::OdeConsistent,
                                   RefractoryMode::Kernel);
  EXPECT_DOUBLE_EQ(tr.at(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(tr.at(0, 1), -std::exp(-0.5));
  EXPECT_DOUBLE_EQ(tr.at(0, 2), -std::exp(-1.0));
  EXPECT_EQ(tr.at(0, 3), 0.0);
}

}  // namespace
}  // namespace bifsnn
