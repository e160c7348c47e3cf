// SPDX-License-Identifier: Apache-2.0
//
// Autoregressive rollout with optional head substitution, and per-lead scoring.
#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrgnf/mesh.hpp"
#include "mrgnf/model/heads.hpp"
#include "mrgnf/stats.hpp"
#include "mrgnf/tensor.hpp"

namespace mrgnf {

struct RolloutConfig {
  std::size_t steps = 4;
  bool substitute_heads = false;

  void validate() const {
    if (steps < 1) throw std::invalid_argument("rollout needs at least one step");
  }
};

/// Iterates the core K times on a sliding T_in window. With substitution the u10/v10 and
/// tp_log channels of each new frame come from the heads before it is fed back.
/// `history` is [t_in, C, N] standardized; returns [K, C, N] standardized.
inline NodeTensor<float> rollout(const Params<float>& p, const float* history, const StaticEncoding<float>& st,
                                 const GraphEdges& g, const RolloutConfig& rc,
                                 const std::vector<std::string>& channel_names = {}) {
  rc.validate();
  const auto& cfg = p.config;
  const std::size_t C = cfg.channels, N = g.nodes, F = C * N;
  std::vector<float> window(history, history + cfg.t_in * F);
  NodeTensor<float> out(rc.steps, C, N, channel_names);
  for (std::size_t k = 0; k < rc.steps; ++k) {
    const auto c = core_forward(p, window.data(), st, g, false);
    std::vector<float> next(c.prediction.begin(), c.prediction.begin() + std::ptrdiff_t(F));
    if (rc.substitute_heads) {
      for (HeadKind kind : {HeadKind::Wind, HeadKind::Precip}) {
        const auto h = head_forward(p, kind, c.embeddings);
        const auto chans = head_channels(cfg, kind);
        for (std::size_t j = 0; j < chans.size(); ++j)
          for (std::size_t n = 0; n < N; ++n)
            next[chans[j] * N + n] = c.last_frame[chans[j] * N + n] + h.out(Eigen::Index(n), Eigen::Index(j));
      }
    }
    for (std::size_t i = 0; i < F; ++i)
      if (!std::isfinite(next[i]))
        throw std::runtime_error("rollout produced a non-finite value at step " + std::to_string(k + 1) +
                                 " (channel " + std::to_string(i / N) + ", node " + std::to_string(i % N) + ")");
    std::copy(next.begin(), next.end(), out.frame(k));
    window.erase(window.begin(), window.begin() + std::ptrdiff_t(F));
    window.insert(window.end(), next.begin(), next.end());
  }
  return out;
}

/// Per channel and lead RMSE/MAE in physical units over ROI nodes.
struct LeadMetrics {
  std::vector<std::string> channels;
  std::size_t leads = 0;
  std::size_t roi_nodes = 0;
  std::size_t samples = 0;
  std::vector<double> rmse;  ///< [lead][channel]
  std::vector<double> mae;

  double rmse_at(std::size_t lead, std::size_t c) const { return rmse[lead * channels.size() + c]; }
  double mae_at(std::size_t lead, std::size_t c) const { return mae[lead * channels.size() + c]; }

  /// rmse >= mae >= 0 in every cell, up to rounding of the square root.
  void check() const {
    for (std::size_t i = 0; i < rmse.size(); ++i)
      if (!(mae[i] >= 0.0) || !(rmse[i] >= mae[i] * (1.0 - 1e-12)))
        throw std::logic_error("metric cell " + std::to_string(i) + " violates rmse >= mae >= 0");
  }

  /// channel,lead,lead_hours,rmse,mae with fixed 9-significant-digit formatting.
  void write_csv(std::ostream& os) const {
    os << "channel,lead,lead_hours,rmse,mae\n";
    char buf[64];
    for (std::size_t k = 0; k < leads; ++k)
      for (std::size_t c = 0; c < channels.size(); ++c) {
        os << channels[c] << ',' << (k + 1) << ',' << 6 * (k + 1) << ',';
        std::snprintf(buf, sizeof buf, "%.9g,%.9g", rmse_at(k, c), mae_at(k, c));
        os << buf << '\n';
      }
  }
};

/// Scores `pred` against `truth` (both physical, [S*K, C, N], frame s*K + k holds lead k+1
/// of sample s) on the mesh's ROI nodes.
template <typename T>
LeadMetrics evaluate(const NodeTensor<T>& pred, const NodeTensor<T>& truth, const TriMesh& mesh, std::size_t leads) {
  if (!pred.same_shape(truth)) throw std::invalid_argument("evaluate: prediction and truth shapes differ");
  if (pred.channel_names != truth.channel_names) throw std::invalid_argument("evaluate: channel names differ");
  if (pred.nodes != mesh.vertices.size() || mesh.zone.size() != pred.nodes)
    throw std::invalid_argument("evaluate: node count does not match the mesh zones");
  if (leads == 0 || pred.frames % leads != 0) throw std::invalid_argument("evaluate: frames are not a multiple of leads");
  std::vector<std::size_t> roi;
  for (std::size_t n = 0; n < pred.nodes; ++n)
    if (mesh.zone[n] == Zone::Roi) roi.push_back(n);
  if (roi.empty()) throw std::invalid_argument("evaluate: mesh has no ROI nodes");
  LeadMetrics m;
  m.channels = pred.channel_names;
  m.leads = leads;
  m.roi_nodes = roi.size();
  m.samples = pred.frames / leads;
  const std::size_t C = pred.channels;
  std::vector<double> se(leads * C, 0.0), ae(leads * C, 0.0);
  for (std::size_t f = 0; f < pred.frames; ++f) {
    const std::size_t k = f % leads;
    for (std::size_t c = 0; c < C; ++c)
      for (auto n : roi) {
        const double e = double(pred.at(f, c, n)) - double(truth.at(f, c, n));
        se[k * C + c] += e * e;
        ae[k * C + c] += std::abs(e);
      }
  }
  const double count = double(m.samples * roi.size());
  for (std::size_t i = 0; i < se.size(); ++i) {
    m.rmse.push_back(std::sqrt(se[i] / count));
    m.mae.push_back(ae[i] / count);
  }
  m.check();
  return m;
}

/// Standardized-space convenience overload: both tensors are destandardized first.
template <typename T>
LeadMetrics evaluate(const NodeTensor<T>& pred_std, const NodeTensor<T>& truth_std, const TriMesh& mesh,
                     std::size_t leads, const ChannelStats& stats) {
  return evaluate(destandardize(pred_std, stats), destandardize(truth_std, stats), mesh, leads);
}

}  // namespace mrgnf
