// SPDX-License-Identifier: Apache-2.0
//
// Task heads reading the concatenated token embeddings of each node.
#pragma once

#include <string>
#include <type_traits>
#include <vector>

#include "mrgnf/model/core.hpp"

namespace mrgnf {

enum class HeadKind { Wind, Precip };

inline const char* head_name(HeadKind k) { return k == HeadKind::Wind ? "wind" : "precip"; }

inline HeadKind parse_head(const std::string& s) {
  if (s == "wind") return HeadKind::Wind;
  if (s == "precip") return HeadKind::Precip;
  throw std::invalid_argument("unknown head '" + s + "' (expected wind or precip)");
}

/// Dynamic channels a head overwrites.
inline std::vector<std::size_t> head_channels(const ModelConfig& c, HeadKind k) {
  if (k == HeadKind::Wind) return {c.u10, c.v10};
  return {c.tp_log};
}

template <typename Real>
struct HeadCache {
  MatR<Real> input;   ///< [N, V*E]
  MatR<Real> hidden;  ///< [N, hidden] after the rectifier
  MatR<Real> out;     ///< [N, outputs]
};

/// Two-layer per-node map from [V*N, E] embeddings to 2 (wind) or 1 (precip) outputs.
/// Outputs are increments over the last input frame in standardized units.
template <typename Real>
HeadCache<Real> head_forward(const Params<Real>& p, HeadKind kind, const std::type_identity_t<MatR<Real>>& embeddings) {
  const std::string pre = std::string("head.") + head_name(kind) + ".";
  const std::size_t V = p.tokens.size(), E = p.config.embed;
  if (std::size_t(embeddings.cols()) != E || embeddings.rows() % Eigen::Index(V) != 0)
    throw std::invalid_argument("head input does not match the token layout");
  const auto N = embeddings.rows() / Eigen::Index(V);
  HeadCache<Real> c;
  c.input.resize(N, Eigen::Index(V * E));
  for (std::size_t k = 0; k < V; ++k)
    c.input.middleCols(Eigen::Index(k * E), Eigen::Index(E)) = embeddings.middleRows(Eigen::Index(k) * N, N);
  MatR<Real> a = c.input * p.mat(pre + "w1");
  a.rowwise() += p.vec(pre + "b1");
  c.hidden = a.cwiseMax(Real(0));
  c.out = c.hidden * p.mat(pre + "w2");
  c.out.rowwise() += p.vec(pre + "b2");
  return c;
}

/// Accumulates head gradients; returns the gradient on the embeddings when requested.
template <typename Real>
void head_backward(const Params<Real>& p, HeadKind kind, const HeadCache<Real>& c, const MatR<Real>& dout,
                   Params<Real>& grad, MatR<Real>* dembed = nullptr) {
  const std::string pre = std::string("head.") + head_name(kind) + ".";
  grad.mat(pre + "w2") += c.hidden.transpose() * dout;
  grad.vec(pre + "b2") += dout.colwise().sum();
  MatR<Real> da = dout * p.mat(pre + "w2").transpose();
  for (Eigen::Index i = 0; i < da.size(); ++i)
    if (!(c.hidden.data()[i] > Real(0))) da.data()[i] = Real(0);
  grad.mat(pre + "w1") += c.input.transpose() * da;
  grad.vec(pre + "b1") += da.colwise().sum();
  if (dembed) {
    const std::size_t V = p.tokens.size(), E = p.config.embed;
    const auto N = c.input.rows();
    const MatR<Real> dz = da * p.mat(pre + "w1").transpose();
    if (dembed->rows() != N * Eigen::Index(V)) *dembed = MatR<Real>::Zero(N * Eigen::Index(V), Eigen::Index(E));
    for (std::size_t k = 0; k < V; ++k)
      dembed->middleRows(Eigen::Index(k) * N, N) += dz.middleCols(Eigen::Index(k * E), Eigen::Index(E));
  }
}

/// Sets a head so its output equals the core's first-frame projection for the head's channels.
/// Two hidden units per output carry +x and -x through the rectifier; the rest start silent.
template <typename Real>
void warm_start_head(Params<Real>& p, HeadKind kind) {
  const std::string pre = std::string("head.") + head_name(kind) + ".";
  const auto chans = head_channels(p.config, kind);
  const std::size_t E = p.config.embed;
  auto w1 = p.mat(pre + "w1");
  auto b1 = p.vec(pre + "b1");
  auto w2 = p.mat(pre + "w2");
  auto b2 = p.vec(pre + "b2");
  if (std::size_t(w1.cols()) < 2 * chans.size()) throw std::invalid_argument("head hidden width too small to warm start");
  w2.setZero();
  b2.setZero();
  for (std::size_t o = 0; o < chans.size(); ++o) {
    std::size_t tok = 0, col = 0;
    bool found = false;
    for (std::size_t k = 0; k < p.tokens.size() && !found; ++k)
      for (std::size_t j = 0; j < p.tokens.tokens[k].channels.size(); ++j)
        if (p.tokens.tokens[k].channels[j] == chans[o]) {
          tok = k;
          col = j;
          found = true;
          break;
        }
    const auto& name = p.tokens.tokens[tok].name;
    const auto wout = p.mat("out." + name + ".w").col(Eigen::Index(col)).eval();
    const Real bout = p.vec("out." + name + ".b")(Eigen::Index(col));
    for (int sgn = 0; sgn < 2; ++sgn) {
      const auto u = Eigen::Index(2 * o + std::size_t(sgn));
      const Real s = sgn == 0 ? Real(1) : Real(-1);
      w1.col(u).setZero();
      w1.col(u).segment(Eigen::Index(tok * E), Eigen::Index(E)) = s * wout;
      b1(u) = s * bout;
      w2(u, Eigen::Index(o)) = s;
    }
  }
}

}  // namespace mrgnf
