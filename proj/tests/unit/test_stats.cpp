// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mrgnf/stats.hpp"

using namespace mrgnf;

namespace {

WelfordState stream(const std::vector<double>& xs) {
  WelfordState s(1);
  for (double x : xs) welford_update(s, &x);
  return s;
}

}  // namespace

TEST(Welford, SingleSample) {
  const auto s = welford_update(WelfordState{}, std::vector<double>{3.0});
  EXPECT_EQ(s.count, 1);
  EXPECT_EQ(s.mean[0], 3.0);
  EXPECT_EQ(s.m2[0], 0.0);
}

TEST(Welford, OneTwoThree) {
  const auto s = stream({1, 2, 3});
  EXPECT_DOUBLE_EQ(s.mean[0], 2.0);
  EXPECT_DOUBLE_EQ(s.variance(0), 2.0 / 3.0);
}

TEST(Welford, StandardNormal) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> nd;
  std::vector<double> xs(100000);
  for (auto& x : xs) x = nd(rng);
  const auto s = stream(xs);
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= double(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= double(xs.size());
  EXPECT_LT(std::abs(s.mean[0]), 0.02);
  EXPECT_LT(std::abs(s.variance(0) - 1.0), 0.02);
  EXPECT_LE(std::abs(s.mean[0] - mean), 1e-10 * std::abs(mean));
  EXPECT_LE(std::abs(s.variance(0) - var), 1e-10 * var);
}

TEST(Welford, MergeIdentity) {
  const auto s = stream({4, 8, 15, 16});
  const WelfordState empty;
  const auto a = welford_merge(empty, s), b = welford_merge(s, empty);
  EXPECT_EQ(a.count, s.count);
  EXPECT_EQ(a.mean, s.mean);
  EXPECT_EQ(b.m2, s.m2);
}

TEST(Welford, MergeHalves) {
  std::vector<double> lo, hi, all;
  for (int k = 1; k <= 100; ++k) (k <= 50 ? lo : hi).push_back(k), all.push_back(k);
  const auto m = welford_merge(stream(lo), stream(hi));
  const auto s = stream(all);
  EXPECT_EQ(m.count, s.count);
  EXPECT_DOUBLE_EQ(m.mean[0], 50.5);
  EXPECT_NEAR(m.m2[0], s.m2[0], 1e-9 * s.m2[0]);
  EXPECT_NEAR(m.variance(0), (100.0 * 100.0 - 1.0) / 12.0, 1e-9);
}

TEST(Welford, MergeAssociative) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50, 200);
  std::vector<double> a(321), b(17), c(1000);
  for (auto* v : {&a, &b, &c})
    for (auto& x : *v) x = u(rng);
  const auto l = welford_merge(welford_merge(stream(a), stream(b)), stream(c));
  const auto r = welford_merge(stream(a), welford_merge(stream(b), stream(c)));
  EXPECT_EQ(l.count, r.count);
  EXPECT_NEAR(l.mean[0], r.mean[0], 1e-12 * std::abs(r.mean[0]));
  EXPECT_NEAR(l.m2[0], r.m2[0], 1e-9 * r.m2[0]);
}

TEST(Standardize, MeanMapsToZero) {
  NodeTensor<float> x(2, 2, 5, {"a", "b"});
  WelfordState s;
  for (std::size_t n = 0; n < 5; ++n) {
    x.at(0, 0, n) = float(n);
    x.at(1, 0, n) = float(2 * n);
    x.at(0, 1, n) = x.at(1, 1, n) = 3.0f;
  }
  welford_accumulate(s, x);
  const auto st = ChannelStats::from_welford(s, x.channel_names);
  EXPECT_EQ(st.std[1], kStdFloor);
  NodeTensor<float> m(1, 2, 5, {"a", "b"});
  for (std::size_t n = 0; n < 5; ++n) m.at(0, 0, n) = float(st.mean[0]), m.at(0, 1, n) = float(st.mean[1]);
  const auto z = standardize(m, st);
  for (float v : z.data) EXPECT_EQ(v, 0.0f);
}

TEST(Standardize, FloorPathFiniteRoundTrip) {
  NodeTensor<double> x(1, 1, 4, {"c"});
  std::fill(x.data.begin(), x.data.end(), 2.5);
  WelfordState s;
  welford_accumulate(s, x);
  const auto st = ChannelStats::from_welford(s, x.channel_names);
  NodeTensor<double> y = x;
  y.at(0, 0, 0) = 2.5001;
  const auto z = standardize(y, st);
  EXPECT_TRUE(z.all_finite());
  EXPECT_NEAR(z.at(0, 0, 0), 100.0, 1e-6);
  const auto back = destandardize(z, st);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(back.data[k], y.data[k], 1e-12 * std::abs(y.data[k]));
}

TEST(Standardize, RandomRoundTrip) {
  std::mt19937_64 rng(8);
  std::normal_distribution<float> nd(280.0f, 9.0f);
  NodeTensor<float> x(3, 4, 64);
  for (auto& v : x.data) v = nd(rng);
  WelfordState s;
  welford_accumulate(s, x);
  const auto st = ChannelStats::from_welford(s, x.channel_names);
  const auto back = destandardize(standardize(x, st), st);
  for (std::size_t k = 0; k < x.data.size(); ++k) EXPECT_NEAR(back.data[k], x.data[k], 1e-6 * std::abs(x.data[k]));
}

TEST(Standardize, ChannelMismatch) {
  NodeTensor<float> x(1, 2, 3, {"a", "b"});
  ChannelStats st;
  st.channel_names = {"a", "c"};
  st.mean = {0, 0};
  st.std = {1, 1};
  EXPECT_THROW(standardize(x, st), std::invalid_argument);
}
