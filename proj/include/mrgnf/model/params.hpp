// SPDX-License-Identifier: Apache-2.0
//
// Flat, named parameter storage for the forecaster core and its heads.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrgnf/model/config.hpp"

namespace mrgnf {

template <typename Real>
using MatR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using VecR = Eigen::Matrix<Real, 1, Eigen::Dynamic, Eigen::RowMajor>;

struct ParamInfo {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return rows * cols; }
};

/// Ordered tensor table; every tensor is a rows x cols matrix (vectors have rows = 1).
class ParamLayout {
 public:
  ParamLayout() = default;
  ParamLayout(const ModelConfig& cfg, const TokenLayout& layout) { build(cfg, layout); }

  const std::vector<ParamInfo>& tensors() const { return tensors_; }
  std::size_t total() const { return total_; }
  bool has(const std::string& name) const { return index_.count(name) != 0; }

  const ParamInfo& at(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter tensor '" + name + "'");
    return tensors_[it->second];
  }

  bool operator==(const ParamLayout& o) const {
    if (tensors_.size() != o.tensors_.size()) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      const auto &a = tensors_[i], &b = o.tensors_[i];
      if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) return false;
    }
    return true;
  }

  void add(const std::string& name, std::size_t rows, std::size_t cols) {
    if (index_.count(name)) throw std::logic_error("duplicate parameter tensor '" + name + "'");
    index_[name] = tensors_.size();
    tensors_.push_back({name, rows, cols, total_});
    total_ += rows * cols;
  }

 private:
  void build(const ModelConfig& c, const TokenLayout& layout) {
    c.validate();
    layout.validate(c.channels);
    const std::size_t E = c.embed, F = c.ffn, H = c.heads, V = layout.size();
    for (const auto& t : layout.tokens) {
      add("stage." + t.name + ".w", c.t_in * t.channels.size(), E);
      add("stage." + t.name + ".b", 1, E);
    }
    add("static.w1", c.statics, E);
    add("static.b1", 1, E);
    add("static.ln.g", 1, E);
    add("static.ln.b", 1, E);
    add("static.w2", E, E);
    add("static.b2", 1, E);
    for (std::size_t l = 0; l < c.blocks; ++l) {
      const std::string p = "block" + std::to_string(l) + ".";
      add(p + "inject", 1, E);
      for (const char* m : {"q", "k", "v", "o"}) {
        add(p + "vert.w" + m, E, E);
        // a key bias only shifts each query's logits uniformly, so it is left out
        if (*m != 'k') add(p + "vert.b" + m, 1, E);
      }
      add(p + "vert.ln.g", 1, E);
      add(p + "vert.ln.b", 1, E);
      add(p + "horiz.w", H * E, E);
      add(p + "horiz.a_src", H, E);
      add(p + "horiz.a_dst", H, E);
      add(p + "horiz.ln.g", 1, E);
      add(p + "horiz.ln.b", 1, E);
      add(p + "ffn.w1", E, F);
      add(p + "ffn.b1", 1, F);
      add(p + "ffn.w2", F, E);
      add(p + "ffn.b2", 1, E);
      add(p + "ffn.ln.g", 1, E);
      add(p + "ffn.ln.b", 1, E);
    }
    for (const auto& t : layout.tokens) {
      add("out." + t.name + ".w", E, c.t_out * t.channels.size());
      add("out." + t.name + ".b", 1, c.t_out * t.channels.size());
    }
    for (const auto& [kind, outs] : {std::pair<const char*, std::size_t>{"wind", 2}, {"precip", 1}}) {
      const std::string p = std::string("head.") + kind + ".";
      add(p + "w1", V * E, c.head_hidden);
      add(p + "b1", 1, c.head_hidden);
      add(p + "w2", c.head_hidden, outs);
      add(p + "b2", 1, outs);
    }
  }

  std::vector<ParamInfo> tensors_;
  std::map<std::string, std::size_t> index_;
  std::size_t total_ = 0;
};

/// Scalars owned by one Graph-Axial block.
inline std::size_t block_param_count(const ModelConfig& c) {
  const std::size_t E = c.embed, F = c.ffn, H = c.heads;
  const std::size_t vertical = 4 * E * E + 3 * E + 2 * E;
  const std::size_t horizontal = H * E * E + 2 * H * E + 2 * E;
  const std::size_t ffn = E * F + F + F * E + E + 2 * E;
  return E + vertical + horizontal + ffn;
}

/// Closed-form parameter total (core plus both heads).
inline std::size_t param_count(const ModelConfig& c, const TokenLayout& layout) {
  const std::size_t E = c.embed, V = layout.size(), C = layout.channel_count(), Hd = c.head_hidden;
  const std::size_t stage = c.t_in * C * E + V * E;
  const std::size_t statics = c.statics * E + E + 2 * E + E * E + E;
  const std::size_t out = E * c.t_out * C + c.t_out * C;
  const std::size_t heads = (V * E * Hd + Hd + Hd * 2 + 2) + (V * E * Hd + Hd + Hd + 1);
  return stage + statics + c.blocks * block_param_count(c) + out + heads;
}

/// Parameters of the common case split into the core and the two heads.
inline std::size_t core_param_count(const ModelConfig& c, const TokenLayout& layout) {
  const std::size_t E = c.embed, V = layout.size(), Hd = c.head_hidden;
  return param_count(c, layout) - (V * E * Hd + Hd + Hd * 2 + 2) - (V * E * Hd + Hd + Hd + 1);
}

template <typename Real>
struct Params {
  ModelConfig config;
  TokenLayout tokens;
  ParamLayout layout;
  std::vector<Real> data;

  Params() = default;
  Params(const ModelConfig& c, const TokenLayout& t) : config(c), tokens(t), layout(c, t), data(layout.total(), Real(0)) {}

  Eigen::Map<MatR<Real>> mat(const std::string& name) {
    const auto& i = layout.at(name);
    return {data.data() + i.offset, Eigen::Index(i.rows), Eigen::Index(i.cols)};
  }
  Eigen::Map<const MatR<Real>> mat(const std::string& name) const {
    const auto& i = layout.at(name);
    return {data.data() + i.offset, Eigen::Index(i.rows), Eigen::Index(i.cols)};
  }
  Eigen::Map<VecR<Real>> vec(const std::string& name) {
    const auto& i = layout.at(name);
    return {data.data() + i.offset, Eigen::Index(i.size())};
  }
  Eigen::Map<const VecR<Real>> vec(const std::string& name) const {
    const auto& i = layout.at(name);
    return {data.data() + i.offset, Eigen::Index(i.size())};
  }

  /// Zeroed tensor set with the same layout (gradient accumulator).
  Params zeros_like() const {
    Params p;
    p.config = config;
    p.tokens = tokens;
    p.layout = layout;
    p.data.assign(data.size(), Real(0));
    return p;
  }

  void set_zero() { std::fill(data.begin(), data.end(), Real(0)); }

  template <typename Other>
  Params<Other> cast() const {
    Params<Other> p;
    p.config = config;
    p.tokens = tokens;
    p.layout = layout;
    p.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) p.data[i] = static_cast<Other>(data[i]);
    return p;
  }
};

/// Fan-in uniform weights, zero biases, unit norm gains, small attention vectors.
/// Output projections start at a tenth of the fan-in scale so the model begins close to persistence.
template <typename Real>
Params<Real> init_params(const ModelConfig& c, const TokenLayout& t, std::uint64_t seed) {
  Params<Real> p(c, t);
  std::mt19937_64 rng(seed);
  auto fill_uniform = [&](const ParamInfo& info, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t k = 0; k < info.size(); ++k) p.data[info.offset + k] = static_cast<Real>(u(rng));
  };
  auto ends_with = [](const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (const auto& info : p.layout.tensors()) {
    const auto& n = info.name;
    if (ends_with(n, ".ln.g") || ends_with(n, ".inject")) {
      for (std::size_t k = 0; k < info.size(); ++k) p.data[info.offset + k] = Real(1);
    } else if (ends_with(n, ".a_src") || ends_with(n, ".a_dst")) {
      fill_uniform(info, 0.1);
    } else if (n.rfind("out.", 0) == 0 && ends_with(n, ".w")) {
      fill_uniform(info, 0.1 / std::sqrt(double(info.rows)));
    } else if (n.rfind("head.", 0) == 0 && ends_with(n, ".w2")) {
      fill_uniform(info, 0.1 / std::sqrt(double(info.rows)));
    } else if (n == "static.w1" || n == "static.w2" || ends_with(n, ".w") || ends_with(n, ".w1") ||
               ends_with(n, ".w2") || ends_with(n, ".wq") || ends_with(n, ".wk") || ends_with(n, ".wv") ||
               ends_with(n, ".wo")) {
      // horizontal projections are stacked per head; fan-in is the embedding width
      const double fan_in = ends_with(n, "horiz.w") ? double(info.cols) : double(info.rows);
      fill_uniform(info, 1.0 / std::sqrt(fan_in));
    }
  }
  return p;
}

}  // namespace mrgnf
