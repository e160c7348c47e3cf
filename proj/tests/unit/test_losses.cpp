// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "mrgnf/losses.hpp"

using namespace mrgnf;

namespace {

double wind_total(const std::vector<double>& u, const std::vector<double>& v, const std::vector<double>& ut,
                  const std::vector<double>& vt) {
  return loss_wind(u.data(), v.data(), ut.data(), vt.data(), u.size()).total;
}

}  // namespace

TEST(LossCore, Identity) {
  std::vector<double> a{1, 2, 3, -4};
  EXPECT_EQ(loss_core(a.data(), a.data(), a.size()), 0.0);
}

TEST(LossCore, ConstantOffset) {
  NodeTensor<double> p(1, 3, 5), t(1, 3, 5);
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    t.data[i] = double(i) * 0.37;
    p.data[i] = t.data[i] + 1.0;
  }
  EXPECT_NEAR(loss_core(p, t), 1.0, 1e-12);
}

TEST(LossCore, ElementwiseOracle) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  std::vector<double> p(257), t(257);
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = nd(rng);
    t[i] = nd(rng);
    s += (p[i] - t[i]) * (p[i] - t[i]);
  }
  EXPECT_NEAR(loss_core(p.data(), t.data(), p.size()), s / 257.0, 1e-12);
}

TEST(LossCore, ShapeMismatch) {
  NodeTensor<double> a(1, 2, 3), b(1, 3, 2);
  EXPECT_THROW(loss_core(a, b), std::invalid_argument);
}

TEST(LossWind, HandCases) {
  EXPECT_NEAR(wind_total({3}, {4}, {3}, {4}), 0.0, 1e-12);
  EXPECT_NEAR(wind_total({1}, {0}, {0}, {1}), 3.0, 1e-12);
  EXPECT_NEAR(wind_total({-1}, {0}, {1}, {0}), 6.0, 1e-12);
  const auto L = loss_wind<double>(std::vector<double>{1}.data(), std::vector<double>{0}.data(),
                                    std::vector<double>{0}.data(), std::vector<double>{1}.data(), 1);
  EXPECT_NEAR(L.term1, 2.0, 1e-12);
  EXPECT_NEAR(L.term2, 0.0, 1e-12);
  EXPECT_NEAR(L.term3, 1.0, 1e-12);
}

TEST(LossWind, AveragesPerNodeSums) {
  EXPECT_NEAR(wind_total({1, -1}, {0, 0}, {0, 1}, {1, 0}), (3.0 + 6.0) / 2.0, 1e-12);
}

TEST(LossWind, CalmGate) {
  // truth below threshold: cosine term off, first two terms remain
  const auto L = loss_wind<double>(std::vector<double>{1}.data(), std::vector<double>{0}.data(),
                                    std::vector<double>{0}.data(), std::vector<double>{0.05}.data(), 1);
  EXPECT_EQ(L.term3, 0.0);
  EXPECT_NEAR(L.term1, 1.0 + 0.0025, 1e-12);
  EXPECT_NEAR(L.term2, 0.95 * 0.95, 1e-12);
  // exact zero prediction stays finite
  std::vector<double> z{0}, g(1);
  const auto L0 = loss_wind<double>(z.data(), z.data(), z.data(), z.data(), 1, g.data(), g.data());
  EXPECT_EQ(L0.total, 0.0);
  EXPECT_TRUE(std::isfinite(g[0]));
}

TEST(LossWind, CosineTermBoundedAndNonNegative) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-20, 20);
  for (int k = 0; k < 10000; ++k) {
    const double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    const auto L = loss_wind(&a, &b, &c, &d, 1);
    EXPECT_GE(L.term3, 0.0);
    EXPECT_LE(L.term3, 2.0);
    EXPECT_GE(L.total, 0.0);
  }
}

TEST(LossWind, GradientMatchesDifferences) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0, 3);
  const std::size_t n = 40;
  std::vector<double> up(n), vp(n), ut(n), vt(n), gu(n), gv(n);
  for (std::size_t i = 0; i < n; ++i) {
    up[i] = nd(rng);
    vp[i] = nd(rng);
    ut[i] = nd(rng);
    vt[i] = nd(rng);
  }
  ut[0] = 0.02;  // one calm node
  vt[0] = 0.01;
  loss_wind(up.data(), vp.data(), ut.data(), vt.data(), n, gu.data(), gv.data());
  const double h = 1e-6;
  for (std::size_t i = 0; i < n; ++i)
    for (auto* x : {&up, &vp}) {
      const double keep = (*x)[i];
      (*x)[i] = keep + h;
      const double lp = wind_total(up, vp, ut, vt);
      (*x)[i] = keep - h;
      const double lm = wind_total(up, vp, ut, vt);
      (*x)[i] = keep;
      const double g = x == &up ? gu[i] : gv[i];
      EXPECT_NEAR((lp - lm) / (2 * h), g, 1e-7) << i;
    }
}

TEST(LossPrecip, HandCase) {
  std::vector<double> t{1.0, 0.0}, p{2.0, 1.0};
  EXPECT_NEAR(loss_precip(p.data(), t.data(), 2), 1.0, 1e-12);
  std::vector<double> p2{1.0, 2.0};  // wet node exact, dry node off by 2
  EXPECT_NEAR(loss_precip(p2.data(), t.data(), 2), 4.0 / 6.0, 1e-12);
}

TEST(LossPrecip, IdentityAndDryReducesToMse) {
  std::vector<double> t{0, 0, 0, 0}, p{0.3, -0.2, 0.5, 0.1};
  EXPECT_EQ(loss_precip(t.data(), t.data(), 4), 0.0);
  for (double alpha : {0.0, 4.0, 50.0})
    EXPECT_NEAR(loss_precip(p.data(), t.data(), 4, {alpha, 0.1}), loss_core(p.data(), t.data(), 4), 1e-12);
}

TEST(LossPrecip, AddingPerfectDryNodeRescales) {
  std::vector<double> t{1.2, 0.0, 0.4}, p{0.7, 0.3, 0.9};
  const double L = loss_precip(p.data(), t.data(), 3);
  const double sw = 5 + 1 + 5;
  t.push_back(0.0);
  p.push_back(0.0);
  EXPECT_NEAR(loss_precip(p.data(), t.data(), 4), L * sw / (sw + 1), 1e-12);
}

TEST(LossPrecip, GradientMatchesDifferences) {
  std::vector<double> t{0.0, 0.05, 0.2, 1.5, 0.0}, p{0.1, 0.4, 0.0, 1.0, 0.3}, g(5);
  loss_precip(p.data(), t.data(), 5, {}, g.data());
  for (std::size_t i = 0; i < 5; ++i) {
    const double keep = p[i], h = 1e-6;
    p[i] = keep + h;
    const double lp = loss_precip(p.data(), t.data(), 5);
    p[i] = keep - h;
    const double lm = loss_precip(p.data(), t.data(), 5);
    p[i] = keep;
    EXPECT_NEAR((lp - lm) / (2 * h), g[i], 1e-8);
  }
}

TEST(LossPrecip, BadConfig) {
  std::vector<double> a{0};
  EXPECT_THROW(loss_precip(a.data(), a.data(), 1, {-1.0, 0.1}), std::invalid_argument);
  EXPECT_THROW(loss_precip(a.data(), a.data(), 1, {4.0, -0.1}), std::invalid_argument);
}
