// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "fixtures.hpp"
#include "mrgnf/rollout.hpp"
#include "mrgnf/synth.hpp"

using namespace mrgnf;

namespace {

void residual_zero(Params<float>& p) {
  // zero block scales and output projections: the model returns its last input frame
  for (const auto& info : p.layout.tensors()) {
    const auto& n = info.name;
    const bool block_scale =
        n.rfind("block", 0) == 0 && (n.find(".ln.") != std::string::npos || n.find(".inject") != std::string::npos);
    if (block_scale || n.rfind("out.", 0) == 0 || n.rfind("head.", 0) == 0)
      std::fill_n(p.data.begin() + std::ptrdiff_t(info.offset), info.size(), 0.0f);
  }
}

struct World {
  GraphEdges graph = fixtures::lattice_graph(6, 5);
  ModelConfig cfg = tiny_config();
  Params<float> p = init_params<float>(tiny_config(), TokenLayout::standard(), 31);
  std::vector<float> history = fixtures::random_vector<float>(2 * 21 * 30, 32);
  std::vector<float> statics = fixtures::random_vector<float>(8 * 30, 33);
};

TriMesh strip_mesh(std::size_t n, std::size_t roi) {
  TriMesh m;
  for (std::size_t i = 0; i < n; ++i) {
    m.vertices.push_back(GeoPoint(double(i), 0.0));
    m.zone.push_back(i < roi ? Zone::Roi : Zone::Outer);
  }
  return m;
}

}  // namespace

TEST(Rollout, SingleStepEqualsForward) {
  World w;
  fixtures::jitter(w.p, 34, 0.05);
  const auto st = encode_statics(w.p, w.statics.data(), 30);
  const auto c = core_forward(w.p, w.history.data(), st, w.graph, false);
  const auto r = rollout(w.p, w.history.data(), st, w.graph, {1, false});
  ASSERT_EQ(r.frames, 1u);
  for (std::size_t i = 0; i < r.data.size(); ++i) EXPECT_EQ(r.data[i], c.prediction[i]);
}

TEST(Rollout, ResidualIdentityIsPersistence) {
  World w;
  residual_zero(w.p);
  const auto st = encode_statics(w.p, w.statics.data(), 30);
  for (bool sub : {false, true}) {
    const auto r = rollout(w.p, w.history.data(), st, w.graph, {4, sub});
    for (std::size_t k = 0; k < 4; ++k)
      for (std::size_t i = 0; i < 21 * 30; ++i) ASSERT_EQ(r.frame(k)[i], w.history[21 * 30 + i]);
  }
}

TEST(Rollout, SubstitutionTouchesOnlyHeadChannels) {
  World w;
  fixtures::jitter(w.p, 35, 0.1);
  const auto st = encode_statics(w.p, w.statics.data(), 30);
  const auto off = rollout(w.p, w.history.data(), st, w.graph, {3, false});
  const auto on = rollout(w.p, w.history.data(), st, w.graph, {3, true});
  std::size_t changed = 0;
  for (std::size_t c = 0; c < 21; ++c)
    for (std::size_t n = 0; n < 30; ++n) {
      const bool target = c == w.cfg.u10 || c == w.cfg.v10 || c == w.cfg.tp_log;
      if (target) {
        changed += off.at(0, c, n) != on.at(0, c, n);
      } else {
        ASSERT_EQ(off.at(0, c, n), on.at(0, c, n)) << c;
      }
    }
  EXPECT_GT(changed, 0u);
  // substituted values are the heads' outputs over the last frame
  const auto core = core_forward(w.p, w.history.data(), st, w.graph, false);
  const auto hw = head_forward(w.p, HeadKind::Wind, core.embeddings);
  EXPECT_FLOAT_EQ(on.at(0, w.cfg.u10, 4), w.history[21 * 30 + w.cfg.u10 * 30 + 4] + hw.out(4, 0));
}

TEST(Rollout, WarmHeadsPreserveRollout) {
  World w;
  fixtures::jitter(w.p, 36, 0.1);
  warm_start_head(w.p, HeadKind::Wind);
  warm_start_head(w.p, HeadKind::Precip);
  const auto st = encode_statics(w.p, w.statics.data(), 30);
  const auto off = rollout(w.p, w.history.data(), st, w.graph, {2, false});
  const auto on = rollout(w.p, w.history.data(), st, w.graph, {2, true});
  for (std::size_t i = 0; i < off.data.size(); ++i) EXPECT_NEAR(off.data[i], on.data[i], 1e-5);
}

TEST(Rollout, NonFiniteNamesStep) {
  World w;
  residual_zero(w.p);
  const auto st = encode_statics(w.p, w.statics.data(), 30);
  w.history[21 * 30 + 7] = std::numeric_limits<float>::quiet_NaN();
  try {
    rollout(w.p, w.history.data(), st, w.graph, {4, false});
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW((RolloutConfig{0, false}.validate()), std::invalid_argument);
}

TEST(Evaluate, PerfectAndConstantBias) {
  const auto m = strip_mesh(10, 6);
  NodeTensor<float> t(8, 3, 10, {"a", "b", "c"});
  std::mt19937_64 rng(1);
  std::normal_distribution<float> nd;
  for (auto& x : t.data) x = nd(rng);
  const auto z = evaluate(t, t, m, 4);
  for (double v : z.rmse) EXPECT_EQ(v, 0.0);
  auto p = t;
  for (auto& x : p.data) x += 0.75f;
  const auto e = evaluate(p, t, m, 4);
  EXPECT_EQ(e.samples, 2u);
  EXPECT_EQ(e.roi_nodes, 6u);
  for (std::size_t i = 0; i < e.rmse.size(); ++i) {
    EXPECT_NEAR(e.rmse[i], 0.75, 1e-6);
    EXPECT_NEAR(e.mae[i], 0.75, 1e-6);
  }
}

TEST(Evaluate, BruteForceOracleRoiOnly) {
  const auto m = strip_mesh(12, 5);
  NodeTensor<float> p(6, 2, 12, {"x", "y"}), t(6, 2, 12, {"x", "y"});
  std::mt19937_64 rng(2);
  std::normal_distribution<float> nd;
  for (auto& x : p.data) x = nd(rng);
  for (auto& x : t.data) x = nd(rng);
  for (std::size_t f = 0; f < 6; ++f)
    for (std::size_t n = 5; n < 12; ++n) p.at(f, 0, n) = 1e6f;  // outside the ROI, must not count
  const auto e = evaluate(p, t, m, 3);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t c = 0; c < 2; ++c) {
      double se = 0, ae = 0;
      for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t n = 0; n < 5; ++n) {
          const double d = double(p.at(s * 3 + k, c, n)) - double(t.at(s * 3 + k, c, n));
          se += d * d;
          ae += std::abs(d);
        }
      EXPECT_NEAR(e.rmse_at(k, c), std::sqrt(se / 10), 1e-12);
      EXPECT_NEAR(e.mae_at(k, c), ae / 10, 1e-12);
      EXPECT_GE(e.rmse_at(k, c), e.mae_at(k, c));
    }
}

TEST(Evaluate, AffineConsistency) {
  const auto m = strip_mesh(9, 9);
  NodeTensor<double> p(4, 2, 9, {"x", "y"}), t(4, 2, 9, {"x", "y"});
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (auto& x : p.data) x = nd(rng);
  for (auto& x : t.data) x = nd(rng);
  ChannelStats s{{"x", "y"}, {280.0, -3.0}, {12.5, 0.2}, {1, 1}};
  const auto std_space = evaluate(p, t, m, 2);
  const auto phys = evaluate(p, t, m, 2, s);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t c = 0; c < 2; ++c) {
      EXPECT_NEAR(phys.rmse_at(k, c), std_space.rmse_at(k, c) * s.std[c], 1e-9);
      EXPECT_NEAR(phys.mae_at(k, c), std_space.mae_at(k, c) * s.std[c], 1e-9);
    }
}

TEST(Evaluate, Errors) {
  const auto m = strip_mesh(4, 2);
  NodeTensor<float> a(4, 1, 4), b(4, 1, 5), c(3, 1, 4);
  EXPECT_THROW(evaluate(a, b, m, 2), std::invalid_argument);
  EXPECT_THROW(evaluate(c, c, m, 2), std::invalid_argument);
  const auto none = strip_mesh(4, 0);
  EXPECT_THROW(evaluate(a, a, none, 2), std::invalid_argument);
}

TEST(Evaluate, CsvIsStable) {
  const auto m = strip_mesh(4, 4);
  NodeTensor<float> p(2, 1, 4, {"t2m"}), t(2, 1, 4, {"t2m"});
  p.data = {1, 2, 3, 4, 5, 6, 7, 8};
  std::ostringstream os;
  evaluate(p, t, m, 2).write_csv(os);
  EXPECT_EQ(os.str(),
            "channel,lead,lead_hours,rmse,mae\n"
            "t2m,1,6,2.73861279,2.5\n"
            "t2m,2,12,6.59545298,6.5\n");
}

TEST(Synth, DeterministicAndChronological) {
  const auto mesh = build_mesh(Ellipsoid{}, RoiSpec{}, SpacingSpec{1.0, 2.0, 4.0}, 4);
  SynthConfig c;
  c.sequences = 10;
  c.frames = 4;
  const auto a = synth_dataset(mesh, c), b = synth_dataset(mesh, c);
  ASSERT_EQ(a.sequences.size(), 10u);
  for (std::size_t s = 0; s < 10; ++s) {
    EXPECT_EQ(a.sequences[s].data, b.sequences[s].data);
    EXPECT_EQ(a.sequences[s].timestamps, b.sequences[s].timestamps);
  }
  EXPECT_EQ(a.statics.data, b.statics.data);
  EXPECT_EQ(a.indices(Split::Train).size(), 7u);
  EXPECT_EQ(a.indices(Split::Val).size(), 1u);
  EXPECT_EQ(a.indices(Split::Test).size(), 2u);
  // splits are chronological
  for (auto i : a.indices(Split::Train)) EXPECT_LT(a.sequences[i].timestamps.back(), kValStartHours);
  for (auto i : a.indices(Split::Test)) EXPECT_GE(a.sequences[i].timestamps.front(), kTestStartHours);
  c.seed = 8;
  EXPECT_NE(synth_dataset(mesh, c).sequences[0].data, a.sequences[0].data);
}

TEST(Synth, PhysicalPlausibilityAndMotion) {
  const auto mesh = build_mesh(Ellipsoid{}, RoiSpec{}, SpacingSpec{1.0, 2.0, 4.0}, 4);
  SynthConfig c;
  c.sequences = 6;
  c.frames = 5;
  const auto d = synth_dataset(mesh, c);
  const auto& x = d.sequences[0];
  const auto tp = x.channel_index("tp_log");
  double persist = 0;
  bool wet = false;
  for (const auto& q : d.sequences) {
    ASSERT_TRUE(q.all_finite());
    for (std::size_t t = 0; t < q.frames; ++t)
      for (std::size_t n = 0; n < q.nodes; ++n) {
        ASSERT_GE(q.at(t, tp, n), 0.0f);
        wet = wet || q.at(t, tp, n) > 0.1f;
        const float t2m = q.at(t, 0, n);
        ASSERT_GT(t2m, 230.0f);
        ASSERT_LT(t2m, 330.0f);
        ASSERT_LE(q.at(t, 1, n), t2m);  // dewpoint below temperature
        if (t > 0) persist += std::pow(q.at(t, 0, n) - q.at(t - 1, 0, n), 2);
      }
  }
  EXPECT_TRUE(wet);
  EXPECT_GT(persist, 0.0);
  // persistence scored on ROI nodes over every sequence is strictly positive at lead 1
  const std::size_t F = x.frames - 1, CN = x.channels * x.nodes;
  NodeTensor<float> pred(d.sequences.size() * F, x.channels, x.nodes, x.channel_names), truth = pred;
  for (std::size_t s = 0; s < d.sequences.size(); ++s)
    for (std::size_t t = 0; t < F; ++t) {
      const auto& q = d.sequences[s];
      std::copy(q.frame(t), q.frame(t) + CN, pred.frame(s * F + t));
      std::copy(q.frame(t + 1), q.frame(t + 1) + CN, truth.frame(s * F + t));
    }
  const auto m = evaluate(pred, truth, mesh, 1);
  for (std::size_t c2 = 0; c2 < x.channels; ++c2) EXPECT_GT(m.rmse_at(0, c2), 0.0) << x.channel_names[c2];
}

TEST(Synth, StaticsAreStandardized) {
  const auto mesh = build_mesh(Ellipsoid{}, RoiSpec{}, SpacingSpec{1.0, 2.0, 4.0}, 4);
  const auto s = synth_statics(mesh);
  ASSERT_EQ(s.channels, 8u);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0, var = 0;
    for (std::size_t n = 0; n < s.nodes; ++n) mean += s.at(0, c, n);
    mean /= double(s.nodes);
    for (std::size_t n = 0; n < s.nodes; ++n) var += std::pow(s.at(0, c, n) - mean, 2);
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(var / double(s.nodes), 1.0, 1e-4);
  }
  for (std::size_t n = 0; n < s.nodes; ++n) {
    EXPECT_GE(s.at(0, 3, n), 0.0f);
    EXPECT_LE(s.at(0, 3, n), 1.0f);
    EXPECT_NEAR(std::pow(s.at(0, 4, n), 2) + std::pow(s.at(0, 5, n), 2), 1.0, 1e-6);
  }
}
