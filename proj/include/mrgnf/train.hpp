// SPDX-License-Identifier: Apache-2.0
//
// One-step training of the core and fine-tuning of the heads.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mrgnf/losses.hpp"
#include "mrgnf/model/heads.hpp"
#include "mrgnf/stats.hpp"
#include "mrgnf/synth.hpp"

namespace mrgnf {

struct TrainConfig {
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 4;
  std::size_t max_steps = 2000;
  std::uint64_t seed = 1;
  double gradient_clip_norm = 1.0;
  std::size_t val_every = 200;
  std::size_t patience = 5;  ///< validations without improvement before stopping
  bool joint = false;        ///< head fine-tuning also updates the core

  void validate() const {
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be non-negative");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0))
      throw std::invalid_argument("adam betas must lie in (0, 1)");
    if (!(adam_eps > 0.0)) throw std::invalid_argument("adam_eps must be positive");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (max_steps == 0) throw std::invalid_argument("max_steps must be positive");
    if (!(gradient_clip_norm > 0.0)) throw std::invalid_argument("gradient_clip_norm must be positive");
    if (val_every == 0 || patience == 0) throw std::invalid_argument("val_every and patience must be positive");
  }
};

/// What a run optimizes: the core on all channels, or one head.
enum class Task { Core, Wind, Precip };

inline Task head_task(HeadKind k) { return k == HeadKind::Wind ? Task::Wind : Task::Precip; }

/// Scales the gradient to `max_norm` (L2 over the whole set) when it is larger; returns the
/// norm before clipping.
template <typename Real>
double clip_gradient(std::vector<Real>& g, double max_norm) {
  double s = 0.0;
  for (const auto& x : g) s += double(x) * double(x);
  const double norm = std::sqrt(s);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& x : g) x = static_cast<Real>(double(x) * f);
  }
  return norm;
}

/// Adaptive moment estimation over a flat parameter vector. Entries outside `mask`
/// (when given) keep their value and their moments.
class Adam {
 public:
  explicit Adam(std::size_t n = 0) : m_(n, 0.0), v_(n, 0.0) {}

  std::size_t steps() const { return t_; }

  template <typename Real>
  void step(std::vector<Real>& p, const std::vector<Real>& g, const TrainConfig& c,
            const std::vector<std::uint8_t>* mask = nullptr) {
    if (m_.size() != p.size()) {
      m_.assign(p.size(), 0.0);
      v_.assign(p.size(), 0.0);
    }
    ++t_;
    const double b1 = c.adam_beta1, b2 = c.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, double(t_)), c2 = 1.0 - std::pow(b2, double(t_));
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (mask && !(*mask)[i]) continue;
      const double gi = g[i];
      m_[i] = b1 * m_[i] + (1.0 - b1) * gi;
      v_[i] = b2 * v_[i] + (1.0 - b2) * gi * gi;
      const double mh = m_[i] / c1, vh = v_[i] / c2;
      p[i] = static_cast<Real>(double(p[i]) - c.learning_rate * mh / (std::sqrt(vh) + c.adam_eps));
    }
  }

 private:
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

/// One training example: T_in standardized frames and the standardized next frame.
struct Sample {
  const float* history;  ///< [t_in, C, N]
  const float* target;   ///< [C, N]
};

/// Dataset split held in standardized units, with (sequence, start) windows.
struct StandardizedData {
  std::size_t channels = 0, nodes = 0;
  std::vector<std::vector<float>> sequences;  ///< each [T, C, N]
  std::vector<std::size_t> frames;
  std::vector<float> statics;  ///< [S, N]

  static StandardizedData build(const Dataset& d, const std::vector<std::size_t>& which, const ChannelStats& stats) {
    StandardizedData s;
    s.statics = d.statics.data;
    for (auto i : which) {
      const auto x = standardize(d.sequences.at(i), stats);
      s.channels = x.channels;
      s.nodes = x.nodes;
      s.frames.push_back(x.frames);
      s.sequences.push_back(x.data);
    }
    if (s.sequences.empty()) {
      s.channels = stats.channels();
      s.nodes = d.statics.nodes;
    }
    return s;
  }

  /// Every window of `t_in` inputs followed by `horizon` further frames.
  std::vector<Sample> samples(std::size_t t_in, std::size_t horizon = 1) const {
    std::vector<Sample> out;
    const std::size_t F = channels * nodes;
    for (std::size_t s = 0; s < sequences.size(); ++s)
      for (std::size_t t0 = 0; t0 + t_in + horizon <= frames[s]; ++t0)
        out.push_back({sequences[s].data() + t0 * F, sequences[s].data() + (t0 + t_in) * F});
    return out;
  }
};

/// Per-channel affine map from standardized to physical units.
struct Affine {
  double mean = 0.0, std = 1.0;
  double operator()(double z) const { return mean + std * z; }
};

namespace detail {

// Loss of one sample for `task`; when `grad` is set, adds `weight` times its gradient.
inline LossTerms sample_loss(const Params<float>& p, Task task, const ChannelStats& stats,
                             const PrecipLossConfig& precip, bool joint, const Sample& s,
                             const StaticEncoding<float>& st, const GraphEdges& g, double weight,
                             Params<float>* grad, MatR<float>* dg) {
  const auto& cfg = p.config;
  const std::size_t N = g.nodes, C = cfg.channels;
  const bool need_core_grad = grad && (task == Task::Core || joint);
  const auto c = core_forward(p, s.history, st, g, need_core_grad);
  LossTerms L;
  std::vector<float> dpred;
  if (task == Task::Core || joint) {
    dpred.assign(C * N, 0.0f);
    const double lc = loss_core(c.prediction.data(), s.target, C * N, grad ? dpred.data() : nullptr);
    for (auto& x : dpred) x = static_cast<float>(double(x) * weight);
    if (task == Task::Core) {
      L.total = L.term1 = lc;
    } else {
      L.total += lc;
    }
  }
  MatR<float> dembed;
  if (task != Task::Core) {
    const HeadKind kind = task == Task::Wind ? HeadKind::Wind : HeadKind::Precip;
    const auto h = head_forward(p, kind, c.embeddings);
    const auto chans = head_channels(cfg, kind);
    std::vector<Affine> aff;
    for (auto ch : chans) aff.push_back({stats.mean.at(ch), stats.std.at(ch)});
    MatR<float> dout(Eigen::Index(N), Eigen::Index(chans.size()));
    if (task == Task::Wind) {
      std::vector<double> up(N), vp(N), ut(N), vt(N), gu(N), gv(N);
      for (std::size_t n = 0; n < N; ++n) {
        up[n] = aff[0](double(c.last_frame[chans[0] * N + n]) + double(h.out(Eigen::Index(n), 0)));
        vp[n] = aff[1](double(c.last_frame[chans[1] * N + n]) + double(h.out(Eigen::Index(n), 1)));
        ut[n] = aff[0](double(s.target[chans[0] * N + n]));
        vt[n] = aff[1](double(s.target[chans[1] * N + n]));
      }
      const auto lw = loss_wind(up.data(), vp.data(), ut.data(), vt.data(), N, gu.data(), gv.data());
      L.total += lw.total;
      L.term1 = lw.term1;
      L.term2 = lw.term2;
      L.term3 = lw.term3;
      for (std::size_t n = 0; n < N; ++n) {
        dout(Eigen::Index(n), 0) = static_cast<float>(gu[n] * aff[0].std * weight);
        dout(Eigen::Index(n), 1) = static_cast<float>(gv[n] * aff[1].std * weight);
      }
    } else {
      std::vector<double> yp(N), yt(N), gy(N);
      for (std::size_t n = 0; n < N; ++n) {
        yp[n] = aff[0](double(c.last_frame[chans[0] * N + n]) + double(h.out(Eigen::Index(n), 0)));
        yt[n] = aff[0](double(s.target[chans[0] * N + n]));
      }
      const double lp = loss_precip(yp.data(), yt.data(), N, precip, gy.data());
      L.total += lp;
      L.term1 = lp;
      for (std::size_t n = 0; n < N; ++n) dout(Eigen::Index(n), 0) = static_cast<float>(gy[n] * aff[0].std * weight);
    }
    if (grad) head_backward(p, kind, h, dout, *grad, joint ? &dembed : nullptr);
  }
  if (need_core_grad)
    core_backward(p, c, st, g, dpred.empty() ? nullptr : dpred.data(), dembed.size() ? &dembed : nullptr, *grad, *dg);
  return L;
}

inline std::vector<std::uint8_t> update_mask(const Params<float>& p, Task task, bool joint) {
  std::vector<std::uint8_t> mask(p.data.size(), 1);
  if (task == Task::Core || joint) return mask;
  const std::string prefix = std::string("head.") + (task == Task::Wind ? "wind." : "precip.");
  std::fill(mask.begin(), mask.end(), 0);
  for (const auto& info : p.layout.tensors())
    if (info.name.rfind(prefix, 0) == 0) std::fill_n(mask.begin() + std::ptrdiff_t(info.offset), info.size(), 1);
  return mask;
}

}  // namespace detail

/// Objective shared by the training loop and validation.
struct Objective {
  Task task = Task::Core;
  const ChannelStats* stats = nullptr;
  PrecipLossConfig precip;
  bool joint = false;
};

/// Mean loss over `samples` without gradients.
inline LossTerms mean_loss(const Params<float>& p, const Objective& obj, const std::vector<Sample>& samples,
                           const float* statics, const GraphEdges& g) {
  if (samples.empty()) throw std::invalid_argument("mean_loss: no samples");
  const auto st = encode_statics(p, statics, g.nodes);
  LossTerms acc;
  for (const auto& s : samples) {
    const auto L = detail::sample_loss(p, obj.task, *obj.stats, obj.precip, false, s, st, g, 1.0, nullptr, nullptr);
    acc.total += L.total;
    acc.term1 += L.term1;
    acc.term2 += L.term2;
    acc.term3 += L.term3;
  }
  const double k = double(samples.size());
  acc.total /= k;
  acc.term1 /= k;
  acc.term2 /= k;
  acc.term3 /= k;
  return acc;
}

/// Forward, loss, backward, clip, update. Returns the pre-update mean loss of the batch.
/// Throws std::runtime_error when the loss or gradient is not finite.
inline LossTerms train_step(Params<float>& p, Adam& opt, const Objective& obj, const std::vector<Sample>& batch,
                            const float* statics, const GraphEdges& g, const TrainConfig& cfg,
                            std::size_t step_index = 0) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  if (obj.task != Task::Core && !obj.stats) throw std::invalid_argument("head objectives need channel statistics");
  static const ChannelStats kNoStats;
  const ChannelStats& stats = obj.stats ? *obj.stats : kNoStats;
  auto grad = p.zeros_like();
  const auto st = encode_statics(p, statics, g.nodes);
  MatR<float> dg;
  LossTerms acc;
  const double w = 1.0 / double(batch.size());
  const bool core_grad = obj.task == Task::Core || obj.joint;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto L = detail::sample_loss(p, obj.task, stats, obj.precip, obj.joint, batch[b], st, g, w, &grad, &dg);
    if (!std::isfinite(L.total)) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << step_index << " (batch item " << b << ", loss " << L.total << ")";
      throw std::runtime_error(msg.str());
    }
    acc.total += w * L.total;
    acc.term1 += w * L.term1;
    acc.term2 += w * L.term2;
    acc.term3 += w * L.term3;
  }
  if (core_grad && dg.size()) encode_statics_backward(p, st, dg, grad);
  const double norm = clip_gradient(grad.data, cfg.gradient_clip_norm);
  if (!std::isfinite(norm)) {
    std::ostringstream msg;
    msg << "non-finite gradient norm at step " << step_index << " (loss " << acc.total << ")";
    throw std::runtime_error(msg.str());
  }
  const auto mask = detail::update_mask(p, obj.task, obj.joint);
  opt.step(p.data, grad.data, cfg, &mask);
  return acc;
}

struct TrainResult {
  Params<float> params;  ///< best-validation parameters
  double initial_val = 0.0;
  double best_val = 0.0;
  std::size_t best_step = 0;
  std::size_t steps_run = 0;
  bool stopped_early = false;
};

/// Minibatch loop with validation every `val_every` steps (and before the first step),
/// keeping the best parameters and stopping after `patience` validations without gain.
/// `log` receives step,loss,term1,term2,term3; `val_log` receives step,val_loss.
inline TrainResult train_loop(Params<float> p, const Objective& obj, const StandardizedData& train,
                              const StandardizedData& val, const GraphEdges& g, const TrainConfig& cfg,
                              std::ostream* log = nullptr, std::ostream* val_log = nullptr) {
  cfg.validate();
  if (p.config.t_out != 1) throw std::invalid_argument("one-step training needs t_out = 1");
  if (train.channels != p.config.channels || train.nodes != g.nodes)
    throw std::invalid_argument("dataset channels/nodes do not match the model and mesh");
  if (train.statics.size() != p.config.statics * g.nodes)
    throw std::invalid_argument("dataset statics do not match the model");
  const auto train_samples = train.samples(p.config.t_in);
  const auto val_samples = val.samples(p.config.t_in);
  if (train_samples.empty() || val_samples.empty()) throw std::invalid_argument("train and validation splits need samples");

  auto fmt = [](double x) {
    std::ostringstream s;
    s.precision(9);
    s << x;
    return s.str();
  };
  if (log) *log << "step,loss,term1,term2,term3\n";
  if (val_log) *val_log << "step,val_loss\n";

  TrainResult r;
  r.initial_val = r.best_val = mean_loss(p, obj, val_samples, val.statics.data(), g).total;
  r.params = p;
  if (val_log) *val_log << 0 << ',' << fmt(r.initial_val) << '\n';

  Adam opt(p.data.size());
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0, stale = 0;
  for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
    std::vector<Sample> batch;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(train_samples[order[cursor++]]);
    }
    const auto L = train_step(p, opt, obj, batch, train.statics.data(), g, cfg, step);
    r.steps_run = step;
    if (log) {
      *log << step << ',' << fmt(L.total);
      if (obj.task == Task::Wind)
        *log << ',' << fmt(L.term1) << ',' << fmt(L.term2) << ',' << fmt(L.term3) << '\n';
      else
        *log << ",,,\n";
    }
    if (step % cfg.val_every == 0 || step == cfg.max_steps) {
      const double v = mean_loss(p, obj, val_samples, val.statics.data(), g).total;
      if (val_log) *val_log << step << ',' << fmt(v) << '\n';
      if (v < r.best_val) {
        r.best_val = v;
        r.best_step = step;
        r.params = p;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        r.stopped_early = true;
        break;
      }
    }
  }
  return r;
}

/// Core training on L_core over all channels.
inline TrainResult train_core(const Params<float>& init, const StandardizedData& train, const StandardizedData& val,
                              const GraphEdges& g, const TrainConfig& cfg, std::ostream* log = nullptr,
                              std::ostream* val_log = nullptr) {
  Objective obj;
  obj.task = Task::Core;
  return train_loop(init, obj, train, val, g, cfg, log, val_log);
}

/// Head fine-tuning on its own loss in physical units. The head is warm-started from the
/// core's output projection first; the core stays frozen unless `cfg.joint`.
inline TrainResult fine_tune_head(Params<float> p, HeadKind kind, const StandardizedData& train,
                                  const StandardizedData& val, const ChannelStats& stats, const GraphEdges& g,
                                  const TrainConfig& cfg, const PrecipLossConfig& precip = {},
                                  std::ostream* log = nullptr, std::ostream* val_log = nullptr,
                                  bool warm_start = true) {
  if (warm_start) warm_start_head(p, kind);
  Objective obj;
  obj.task = head_task(kind);
  obj.stats = &stats;
  obj.precip = precip;
  obj.joint = cfg.joint;
  return train_loop(std::move(p), obj, train, val, g, cfg, log, val_log);
}

/// Validation comparison for a head: the frozen core's own channels scored with the
/// head's loss versus the head's outputs, both in physical units.
struct HeadComparison {
  double core = 0.0;
  double head = 0.0;
};

inline HeadComparison compare_head(const Params<float>& p, HeadKind kind, const StandardizedData& data,
                                   const ChannelStats& stats, const GraphEdges& g, const PrecipLossConfig& precip = {}) {
  const auto samples = data.samples(p.config.t_in);
  if (samples.empty()) throw std::invalid_argument("compare_head: no samples");
  const auto st = encode_statics(p, data.statics.data(), g.nodes);
  const auto chans = head_channels(p.config, kind);
  const std::size_t N = g.nodes;
  HeadComparison r;
  for (const auto& s : samples) {
    const auto c = core_forward(p, s.history, st, g, false);
    const auto h = head_forward(p, kind, c.embeddings);
    std::vector<std::vector<double>> core_p(chans.size(), std::vector<double>(N)), head_p = core_p, truth = core_p;
    for (std::size_t k = 0; k < chans.size(); ++k) {
      const Affine a{stats.mean.at(chans[k]), stats.std.at(chans[k])};
      for (std::size_t n = 0; n < N; ++n) {
        core_p[k][n] = a(double(c.prediction[chans[k] * N + n]));
        head_p[k][n] = a(double(c.last_frame[chans[k] * N + n]) + double(h.out(Eigen::Index(n), Eigen::Index(k))));
        truth[k][n] = a(double(s.target[chans[k] * N + n]));
      }
    }
    if (kind == HeadKind::Wind) {
      r.core += loss_wind(core_p[0].data(), core_p[1].data(), truth[0].data(), truth[1].data(), N).total;
      r.head += loss_wind(head_p[0].data(), head_p[1].data(), truth[0].data(), truth[1].data(), N).total;
    } else {
      r.core += loss_precip(core_p[0].data(), truth[0].data(), N, precip);
      r.head += loss_precip(head_p[0].data(), truth[0].data(), N, precip);
    }
  }
  r.core /= double(samples.size());
  r.head /= double(samples.size());
  return r;
}

}  // namespace mrgnf
