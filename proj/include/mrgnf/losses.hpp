// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "mrgnf/tensor.hpp"

namespace mrgnf {

/// Value plus the components logged per training step.
struct LossTerms {
  double total = 0.0;
  double term1 = 0.0;
  double term2 = 0.0;
  double term3 = 0.0;
};

/// Mean squared error over n values. `grad` (optional) receives dL/dpred.
template <typename Real>
double loss_core(const Real* pred, const Real* truth, std::size_t n, Real* grad = nullptr) {
  if (n == 0) throw std::invalid_argument("loss_core: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = double(pred[i]) - double(truth[i]);
    s += d * d;
    if (grad) grad[i] = static_cast<Real>(2.0 * d / double(n));
  }
  return s / double(n);
}

template <typename Real>
double loss_core(const NodeTensor<Real>& pred, const NodeTensor<Real>& truth) {
  if (!pred.same_shape(truth)) throw std::invalid_argument("loss_core: shape mismatch");
  return loss_core(pred.data.data(), truth.data.data(), pred.data.size());
}

inline constexpr double kCalmWind = 0.1;  ///< m/s; direction term skipped below this speed

/// Per node (du^2 + dv^2) + (|p| - |t|)^2 + (1 - cos angle), averaged over n nodes.
/// The direction term contributes zero where either speed is below the calm threshold.
template <typename Real>
LossTerms loss_wind(const Real* up, const Real* vp, const Real* ut, const Real* vt, std::size_t n,
                    Real* gu = nullptr, Real* gv = nullptr, double calm = kCalmWind) {
  if (n == 0) throw std::invalid_argument("loss_wind: empty input");
  LossTerms L;
  const double inv_n = 1.0 / double(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pu = up[i], pv = vp[i], tu = ut[i], tv = vt[i];
    const double du = pu - tu, dv = pv - tv;
    const double mp = std::hypot(pu, pv), mt = std::hypot(tu, tv);
    L.term1 += du * du + dv * dv;
    L.term2 += (mp - mt) * (mp - mt);
    double cu = 2.0 * du, cv = 2.0 * dv;
    if (mp > 0.0) {
      cu += 2.0 * (mp - mt) * pu / mp;
      cv += 2.0 * (mp - mt) * pv / mp;
    }
    if (mp >= calm && mt >= calm) {
      const double dot = pu * tu + pv * tv;
      const double cosang = dot / (mp * mt);
      L.term3 += 1.0 - cosang;
      // d(-cos)/dp = -(t / (|p||t|) - dot p / (|p|^3 |t|))
      cu -= tu / (mp * mt) - dot * pu / (mp * mp * mp * mt);
      cv -= tv / (mp * mt) - dot * pv / (mp * mp * mp * mt);
    }
    if (gu) gu[i] = static_cast<Real>(cu * inv_n);
    if (gv) gv[i] = static_cast<Real>(cv * inv_n);
  }
  L.term1 *= inv_n;
  L.term2 *= inv_n;
  L.term3 *= inv_n;
  L.total = L.term1 + L.term2 + L.term3;
  return L;
}

struct PrecipLossConfig {
  double alpha = 4.0;
  double tau = 0.1;

  void validate() const {
    if (!(alpha >= 0.0) || !(tau >= 0.0)) throw std::invalid_argument("precip loss needs alpha >= 0 and tau >= 0");
  }
};

/// sum w (pred - truth)^2 / sum w with w = 1 + alpha [truth > tau], both in tp_log units.
template <typename Real>
double loss_precip(const Real* pred, const Real* truth, std::size_t n, const PrecipLossConfig& cfg = {},
                   Real* grad = nullptr) {
  cfg.validate();
  if (n == 0) throw std::invalid_argument("loss_precip: empty input");
  double sw = 0.0, s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 1.0 + (double(truth[i]) > cfg.tau ? cfg.alpha : 0.0);
    const double d = double(pred[i]) - double(truth[i]);
    sw += w;
    s += w * d * d;
  }
  if (grad)
    for (std::size_t i = 0; i < n; ++i) {
      const double w = 1.0 + (double(truth[i]) > cfg.tau ? cfg.alpha : 0.0);
      grad[i] = static_cast<Real>(2.0 * w * (double(pred[i]) - double(truth[i])) / sw);
    }
  return s / sw;
}

}  // namespace mrgnf
