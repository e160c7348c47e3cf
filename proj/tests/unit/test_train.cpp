// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "fixtures.hpp"
#include "mrgnf/train.hpp"

using namespace mrgnf;

namespace {

struct Small {
  TriMesh mesh;
  GraphEdges graph;
  Dataset data;
  ChannelStats stats;
  StandardizedData train, val;
};

const Small& small() {
  static const Small s = [] {
    Small s;
    s.mesh = build_mesh(Ellipsoid{}, RoiSpec{}, SpacingSpec{1.0, 2.0, 4.0}, 3);
    s.graph = make_graph(s.mesh.vertices.size(), s.mesh.edges);
    SynthConfig sc;
    sc.sequences = 8;
    sc.frames = 6;
    s.data = synth_dataset(s.mesh, sc);
    WelfordState w;
    for (auto i : s.data.indices(Split::Train)) welford_accumulate(w, s.data.sequences[i]);
    s.stats = ChannelStats::from_welford(w, s.data.sequences[0].channel_names);
    s.train = StandardizedData::build(s.data, s.data.indices(Split::Train), s.stats);
    s.val = StandardizedData::build(s.data, s.data.indices(Split::Val), s.stats);
    return s;
  }();
  return s;
}

}  // namespace

TEST(Clip, ScalesOnlyAboveThreshold) {
  std::vector<double> g{3, 4};
  EXPECT_DOUBLE_EQ(clip_gradient(g, 10.0), 5.0);
  EXPECT_EQ(g[0], 3.0);
  EXPECT_DOUBLE_EQ(clip_gradient(g, 1.0), 5.0);
  EXPECT_NEAR(g[0], 0.6, 1e-15);
  EXPECT_NEAR(g[1], 0.8, 1e-15);
}

TEST(AdamOpt, FirstStepMovesByLearningRate) {
  // bias correction makes the first update lr * sign(g) (up to eps)
  TrainConfig c;
  c.learning_rate = 0.01;
  std::vector<double> p{1.0, -2.0, 0.5}, g{0.3, -7.0, 0.0};
  Adam opt;
  opt.step(p, g, c);
  EXPECT_NEAR(p[0], 0.99, 1e-9);
  EXPECT_NEAR(p[1], -1.99, 1e-9);
  EXPECT_EQ(p[2], 0.5);
}

TEST(AdamOpt, HandTwoSteps) {
  TrainConfig c;
  c.learning_rate = 0.1;
  std::vector<double> p{0.0}, g{1.0};
  Adam opt;
  opt.step(p, g, c);
  g[0] = -1.0;
  opt.step(p, g, c);
  const double p1 = -0.1 / (1.0 + 1e-8);
  const double m = 0.9 * 0.1 - 0.1, v = 0.999 * 0.001 + 0.001;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(p[0], p1 - 0.1 * mh / (std::sqrt(vh) + 1e-8), 1e-12);
}

TEST(AdamOpt, MaskFreezesEntries) {
  TrainConfig c;
  std::vector<float> p{1, 1}, g{1, 1};
  std::vector<std::uint8_t> mask{0, 1};
  Adam opt;
  opt.step(p, g, c, &mask);
  EXPECT_EQ(p[0], 1.0f);
  EXPECT_LT(p[1], 1.0f);
}

TEST(TrainConfigCheck, Rejects) {
  TrainConfig c;
  c.adam_beta1 = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.learning_rate = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Samples, WindowsPerSequence) {
  const auto& s = small();
  EXPECT_EQ(s.train.samples(2).size(), s.train.sequences.size() * 4);
  EXPECT_EQ(s.train.samples(2, 4).size(), s.train.sequences.size() * 1);
}

TEST(TrainStep, ZeroLearningRateKeepsParams) {
  const auto& s = small();
  auto p = init_params<float>(tiny_config(), TokenLayout::standard(), 1);
  const auto before = p.data;
  TrainConfig c;
  c.learning_rate = 0.0;
  Adam opt;
  Objective obj;
  const auto batch = s.train.samples(2);
  const auto L = train_step(p, opt, obj, {batch[0], batch[1]}, s.train.statics.data(), s.graph, c);
  EXPECT_EQ(p.data, before);
  EXPECT_GT(L.total, 0.0);
  EXPECT_NEAR(L.total, mean_loss(p, obj, {batch[0], batch[1]}, s.train.statics.data(), s.graph).total, 1e-7);
}

TEST(TrainStep, ReportsPreUpdateLossAndDescends) {
  const auto& s = small();
  auto p = init_params<float>(tiny_config(), TokenLayout::standard(), 2);
  TrainConfig c;
  Adam opt;
  Objective obj;
  const std::vector<Sample> batch{s.train.samples(2)[3]};
  const double l0 = mean_loss(p, obj, batch, s.train.statics.data(), s.graph).total;
  const auto L = train_step(p, opt, obj, batch, s.train.statics.data(), s.graph, c);
  EXPECT_NEAR(L.total, l0, 1e-7);
  for (int k = 0; k < 20; ++k) train_step(p, opt, obj, batch, s.train.statics.data(), s.graph, c);
  EXPECT_LT(mean_loss(p, obj, batch, s.train.statics.data(), s.graph).total, l0);
}

TEST(TrainStep, NonFiniteLossAborts) {
  const auto& s = small();
  auto p = init_params<float>(tiny_config(), TokenLayout::standard(), 3);
  p.mat("out.surface.w")(0, 0) = std::numeric_limits<float>::infinity();
  TrainConfig c;
  Adam opt;
  Objective obj;
  try {
    train_step(p, opt, obj, {s.train.samples(2)[0]}, s.train.statics.data(), s.graph, c, 17);
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("step 17"), std::string::npos) << e.what();
  }
}

TEST(TrainStep, HeadObjectiveNeedsStats) {
  const auto& s = small();
  auto p = init_params<float>(tiny_config(), TokenLayout::standard(), 3);
  Adam opt;
  Objective obj;
  obj.task = Task::Wind;
  EXPECT_THROW(train_step(p, opt, obj, {s.train.samples(2)[0]}, s.train.statics.data(), s.graph, {}),
               std::invalid_argument);
}

TEST(TrainLoop, DeterministicPerSeed) {
  const auto& s = small();
  const auto p = init_params<float>(tiny_config(), TokenLayout::standard(), 4);
  TrainConfig c;
  c.max_steps = 12;
  c.val_every = 5;
  std::ostringstream a, b, va, vb;
  const auto r1 = train_core(p, s.train, s.val, s.graph, c, &a, &va);
  const auto r2 = train_core(p, s.train, s.val, s.graph, c, &b, &vb);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(va.str(), vb.str());
  EXPECT_EQ(r1.params.data, r2.params.data);
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')), "step,loss,term1,term2,term3");
  c.seed = 99;
  std::ostringstream d;
  train_core(p, s.train, s.val, s.graph, c, &d);
  EXPECT_NE(a.str(), d.str());
}

TEST(TrainLoop, KeepsBestValidation) {
  const auto& s = small();
  const auto p = init_params<float>(tiny_config(), TokenLayout::standard(), 5);
  TrainConfig c;
  c.max_steps = 40;
  c.val_every = 10;
  const auto r = train_core(p, s.train, s.val, s.graph, c);
  EXPECT_LE(r.best_val, r.initial_val);
  Objective obj;
  EXPECT_NEAR(mean_loss(r.params, obj, s.val.samples(2), s.val.statics.data(), s.graph).total, r.best_val, 1e-6);
}

TEST(TrainLoop, EarlyStopsWhenStagnant) {
  const auto& s = small();
  const auto p = init_params<float>(tiny_config(), TokenLayout::standard(), 6);
  TrainConfig c;
  c.learning_rate = 0.0;  // nothing improves
  c.max_steps = 100;
  c.val_every = 2;
  c.patience = 3;
  const auto r = train_core(p, s.train, s.val, s.graph, c);
  EXPECT_TRUE(r.stopped_early);
  EXPECT_EQ(r.steps_run, 6u);
  EXPECT_EQ(r.params.data, p.data);
}

TEST(TrainLoop, RejectsMismatchedData) {
  const auto& s = small();
  auto cfg = tiny_config();
  cfg.statics = 3;
  const auto p = init_params<float>(cfg, TokenLayout::standard(), 7);
  EXPECT_THROW(train_core(p, s.train, s.val, s.graph, {}), std::invalid_argument);
}

TEST(FineTune, FrozenCoreOnlyMovesHead) {
  const auto& s = small();
  const auto p = init_params<float>(tiny_config(), TokenLayout::standard(), 8);
  TrainConfig c;
  c.max_steps = 10;
  c.val_every = 5;
  c.patience = 100;
  for (HeadKind kind : {HeadKind::Wind, HeadKind::Precip}) {
    const auto r = fine_tune_head(p, kind, s.train, s.val, s.stats, s.graph, c, {}, nullptr, nullptr);
    const std::string prefix = std::string("head.") + head_name(kind) + ".";
    bool head_moved = false;
    for (const auto& info : p.layout.tensors())
      for (std::size_t k = 0; k < info.size(); ++k) {
        const auto i = info.offset + k;
        if (info.name.rfind(prefix, 0) == 0) {
          head_moved = head_moved || r.params.data[i] != p.data[i];
        } else {
          ASSERT_EQ(r.params.data[i], p.data[i]) << info.name;
        }
      }
    EXPECT_TRUE(head_moved || r.best_step == 0);
  }
}

TEST(FineTune, WarmStartedHeadMatchesCore) {
  const auto& s = small();
  auto p = init_params<float>(tiny_config(), TokenLayout::standard(), 9);
  for (HeadKind kind : {HeadKind::Wind, HeadKind::Precip}) {
    warm_start_head(p, kind);
    const auto cmp = compare_head(p, kind, s.val, s.stats, s.graph);
    EXPECT_NEAR(cmp.head, cmp.core, 1e-5 * std::max(1.0, cmp.core)) << head_name(kind);
  }
}

TEST(FineTune, WindGradientMatchesDifferences) {
  // head loss in physical units, differentiated through destandardization
  const auto& s = small();
  auto p = init_params<float>(tiny_config(), TokenLayout::standard(), 10);
  warm_start_head(p, HeadKind::Wind);
  fixtures::jitter(p, 11, 0.05);
  const auto sample = s.train.samples(2)[1];
  // the training path is single precision, so probe the output biases with a coarse step
  Objective obj;
  obj.task = Task::Wind;
  obj.stats = &s.stats;
  auto grad = p.zeros_like();
  const auto st = encode_statics(p, s.train.statics.data(), s.graph.nodes);
  MatR<float> dg;
  detail::sample_loss(p, Task::Wind, s.stats, {}, false, sample, st, s.graph, 1.0, &grad, &dg);
  for (int o = 0; o < 2; ++o) {
    const float h = 1e-2f;
    auto q = p;
    q.vec("head.wind.b2")(o) += h;
    const double lp = mean_loss(q, obj, {sample}, s.train.statics.data(), s.graph).total;
    q.vec("head.wind.b2")(o) -= 2 * h;
    const double lm = mean_loss(q, obj, {sample}, s.train.statics.data(), s.graph).total;
    const double fd = (lp - lm) / (2 * h);
    EXPECT_NEAR(grad.vec("head.wind.b2")(o), fd, 2e-2 * std::max(1.0, std::abs(fd)));
  }
}
