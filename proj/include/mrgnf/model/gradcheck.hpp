// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference audit of the analytic gradients, per parameter tensor.
#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mrgnf/model/heads.hpp"

namespace mrgnf {

struct GroupError {
  std::string name;
  double max_abs_diff = 0.0;
  double scale = 0.0;  ///< max of the analytic and numeric magnitudes
  double rel = 0.0;    ///< max_abs_diff / scale (0 when both vanish)
};

/// Probe objective: half squared error of the core prediction against a fixed target,
/// plus random linear read-outs of both heads, summed over a batch.
struct ProbeObjective {
  std::vector<std::vector<double>> histories;  ///< each [t_in, C, N]
  std::vector<double> statics;                 ///< [S, N]
  std::vector<std::vector<double>> targets;    ///< each [t_out, C, N]
  std::vector<double> wind_weights;            ///< [N, 2]
  std::vector<double> precip_weights;          ///< [N]

  static ProbeObjective random(const ModelConfig& c, std::size_t nodes, std::size_t batch, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    auto draw = [&](std::size_t n) {
      std::vector<double> v(n);
      for (auto& x : v) x = nd(rng);
      return v;
    };
    ProbeObjective o;
    for (std::size_t b = 0; b < batch; ++b) {
      o.histories.push_back(draw(c.t_in * c.channels * nodes));
      o.targets.push_back(draw(c.t_out * c.channels * nodes));
    }
    o.statics = draw(c.statics * nodes);
    o.wind_weights = draw(2 * nodes);
    o.precip_weights = draw(nodes);
    return o;
  }

  double evaluate(const Params<double>& p, const GraphEdges& g, Params<double>* grad = nullptr) const {
    const std::size_t N = g.nodes;
    const auto st = encode_statics(p, statics.data(), N);
    MatR<double> dg;
    double L = 0.0;
    for (std::size_t b = 0; b < histories.size(); ++b) {
      const auto c = core_forward(p, histories[b].data(), st, g, grad != nullptr);
      std::vector<double> dpred(c.prediction.size());
      for (std::size_t i = 0; i < dpred.size(); ++i) {
        const double d = c.prediction[i] - targets[b][i];
        L += 0.5 * d * d;
        dpred[i] = d;
      }
      const auto hw = head_forward(p, HeadKind::Wind, c.embeddings);
      const auto hp = head_forward(p, HeadKind::Precip, c.embeddings);
      MatR<double> dw(Eigen::Index(N), 2), dp(Eigen::Index(N), 1);
      for (std::size_t n = 0; n < N; ++n) {
        for (int o = 0; o < 2; ++o) {
          L += wind_weights[2 * n + std::size_t(o)] * hw.out(Eigen::Index(n), o);
          dw(Eigen::Index(n), o) = wind_weights[2 * n + std::size_t(o)];
        }
        L += precip_weights[n] * hp.out(Eigen::Index(n), 0);
        dp(Eigen::Index(n), 0) = precip_weights[n];
      }
      if (grad) {
        MatR<double> dembed;
        head_backward(p, HeadKind::Wind, hw, dw, *grad, &dembed);
        head_backward(p, HeadKind::Precip, hp, dp, *grad, &dembed);
        core_backward(p, c, st, g, dpred.data(), &dembed, *grad, dg);
      }
    }
    if (grad) encode_statics_backward(p, st, dg, *grad);
    return L;
  }
};

/// Compares analytic and central-difference gradients for every tensor; entries of each
/// tensor are probed up to `max_entries` (evenly strided) to bound the cost.
/// When a rectifier kink falls inside the step the difference disagrees with one taken
/// at a tenth of the step; such entries are re-probed with the finer step (up to 3 times).
inline std::vector<GroupError> gradient_check(const Params<double>& params, const GraphEdges& g,
                                              const ProbeObjective& obj, double step = 1e-4,
                                              std::size_t max_entries = 1u << 30) {
  Params<double> grad = params.zeros_like();
  obj.evaluate(params, g, &grad);
  Params<double> p = params;
  auto central = [&](std::size_t i, double h) {
    const double keep = p.data[i];
    p.data[i] = keep + h;
    const double lp = obj.evaluate(p, g);
    p.data[i] = keep - h;
    const double lm = obj.evaluate(p, g);
    p.data[i] = keep;
    return (lp - lm) / (2.0 * h);
  };
  std::vector<GroupError> out;
  for (const auto& info : params.layout.tensors()) {
    GroupError e;
    e.name = info.name;
    const std::size_t stride = std::max<std::size_t>(1, info.size() / std::max<std::size_t>(1, max_entries));
    for (std::size_t k = 0; k < info.size(); k += stride) {
      const std::size_t i = info.offset + k;
      double h = step, fd = central(i, h);
      for (int r = 0; r < 3; ++r) {
        const double finer = central(i, h / 10.0);
        if (std::abs(finer - fd) <= 1e-6 * std::max(1.0, std::abs(fd))) break;
        h /= 10.0;
        fd = finer;
      }
      e.max_abs_diff = std::max(e.max_abs_diff, std::abs(fd - grad.data[i]));
      e.scale = std::max({e.scale, std::abs(fd), std::abs(grad.data[i])});
    }
    e.rel = e.scale > 0.0 ? e.max_abs_diff / e.scale : 0.0;
    out.push_back(e);
  }
  return out;
}

}  // namespace mrgnf
