// SPDX-License-Identifier: Apache-2.0
//
// Axial graph-attention forecaster: input staging, static encoder, Graph-Axial blocks
// and per-token output projection, with hand-written reverse mode.
//
// Activations of one sample are stacked token-major: row k*N + n holds token k of node n.
// Each sublayer is x + LN(branch(x)); the static injection is x + inject .* g.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "mrgnf/model/graph.hpp"
#include "mrgnf/model/params.hpp"

namespace mrgnf {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kLeakySlope = 0.2;

namespace detail {

template <typename Real>
struct LnCache {
  MatR<Real> xhat;
  std::vector<Real> inv;
};

template <typename Real>
MatR<Real> layer_norm(const MatR<Real>& x, const Eigen::Ref<const VecR<Real>>& g,
                      const Eigen::Ref<const VecR<Real>>& b, LnCache<Real>& c) {
  const Eigen::Index R = x.rows(), E = x.cols();
  c.xhat.resize(R, E);
  c.inv.resize(std::size_t(R));
  MatR<Real> y(R, E);
  for (Eigen::Index r = 0; r < R; ++r) {
    const Real mu = x.row(r).mean();
    const auto d = (x.row(r).array() - mu).eval();
    const Real var = d.square().mean();
    const Real inv = Real(1) / std::sqrt(var + Real(kLayerNormEps));
    c.inv[std::size_t(r)] = inv;
    c.xhat.row(r) = d * inv;
    y.row(r) = c.xhat.row(r).cwiseProduct(g) + b;
  }
  return y;
}

template <typename Real>
MatR<Real> layer_norm_backward(const MatR<Real>& dy, const Eigen::Ref<const VecR<Real>>& g, const LnCache<Real>& c,
                               Eigen::Map<VecR<Real>> dg, Eigen::Map<VecR<Real>> db) {
  const Eigen::Index R = dy.rows(), E = dy.cols();
  MatR<Real> dx(R, E);
  for (Eigen::Index r = 0; r < R; ++r) {
    const auto dxh = dy.row(r).cwiseProduct(g).eval();
    const Real m1 = dxh.mean();
    const Real m2 = dxh.cwiseProduct(c.xhat.row(r)).mean();
    dx.row(r) = c.inv[std::size_t(r)] * (dxh.array() - m1 - c.xhat.row(r).array() * m2).matrix();
    dg += dy.row(r).cwiseProduct(c.xhat.row(r));
    db += dy.row(r);
  }
  return dx;
}

template <typename Real>
void add_row(MatR<Real>& m, const Eigen::Ref<const VecR<Real>>& b) {
  m.rowwise() += b;
}

template <typename Real>
Real leaky(Real x) {
  return x > Real(0) ? x : Real(kLeakySlope) * x;
}

}  // namespace detail

/// Per-node static encoding g = W2 relu(LN(W1 s + b1)) + b2, shared by every sample.
template <typename Real>
struct StaticEncoding {
  MatR<Real> input;  ///< [N, S]
  MatR<Real> act;    ///< relu output [N, E]
  detail::LnCache<Real> ln;
  MatR<Real> g;  ///< [N, E]
};

/// `statics` is [S, N] row-major.
template <typename Real>
StaticEncoding<Real> encode_statics(const Params<Real>& p, const Real* statics, std::size_t nodes) {
  const std::size_t S = p.config.statics;
  StaticEncoding<Real> s;
  s.input.resize(Eigen::Index(nodes), Eigen::Index(S));
  for (std::size_t c = 0; c < S; ++c)
    for (std::size_t n = 0; n < nodes; ++n) s.input(Eigen::Index(n), Eigen::Index(c)) = statics[c * nodes + n];
  MatR<Real> pre = s.input * p.mat("static.w1");
  detail::add_row<Real>(pre, p.vec("static.b1"));
  s.act = detail::layer_norm<Real>(pre, p.vec("static.ln.g"), p.vec("static.ln.b"), s.ln).cwiseMax(Real(0));
  s.g = s.act * p.mat("static.w2");
  detail::add_row<Real>(s.g, p.vec("static.b2"));
  return s;
}

template <typename Real>
void encode_statics_backward(const Params<Real>& p, const StaticEncoding<Real>& s, const MatR<Real>& dg,
                             Params<Real>& grad) {
  grad.mat("static.w2") += s.act.transpose() * dg;
  grad.vec("static.b2") += dg.colwise().sum();
  MatR<Real> dact = dg * p.mat("static.w2").transpose();
  for (Eigen::Index i = 0; i < dact.size(); ++i)
    if (!(s.act.data()[i] > Real(0))) dact.data()[i] = Real(0);
  const MatR<Real> dpre =
      detail::layer_norm_backward<Real>(dact, p.vec("static.ln.g"), s.ln, grad.vec("static.ln.g"), grad.vec("static.ln.b"));
  grad.mat("static.w1") += s.input.transpose() * dpre;
  grad.vec("static.b1") += dpre.colwise().sum();
}

template <typename Real>
struct BlockCache {
  MatR<Real> x1;             ///< after static injection
  MatR<Real> q, k, v, o;     ///< vertical projections and concatenated head outputs
  std::vector<Real> att;     ///< vertical weights [N][H][V][V]
  detail::LnCache<Real> ln_v;
  MatR<Real> x2;
  std::vector<MatR<Real>> z;  ///< horizontal per-head projections
  std::vector<Real> alpha;    ///< horizontal weights [H][V][nnz]
  std::vector<Real> pre;      ///< horizontal logits before the leaky rectifier
  detail::LnCache<Real> ln_h;
  MatR<Real> x3;
  MatR<Real> hidden;  ///< feed-forward activations after the rectifier
  detail::LnCache<Real> ln_f;
};

template <typename Real>
struct SampleCache {
  std::vector<MatR<Real>> staged_inputs;  ///< per token [N, t_in * m]
  std::vector<BlockCache<Real>> blocks;
  MatR<Real> embeddings;      ///< last block output [V*N, E]
  std::vector<Real> prediction;  ///< [t_out, C, N]
  std::vector<Real> last_frame;  ///< [C, N]
  bool has_cache = false;
};

namespace detail {

template <typename Real>
void vertical_forward(const Params<Real>& p, const std::string& pre, std::size_t N, std::size_t V, BlockCache<Real>& c) {
  const std::size_t E = p.config.embed, H = p.config.heads, D = E / H;
  const Real scale = Real(1) / std::sqrt(Real(D));
  c.q = c.x1 * p.mat(pre + "vert.wq");
  add_row<Real>(c.q, p.vec(pre + "vert.bq"));
  c.k = c.x1 * p.mat(pre + "vert.wk");
  c.v = c.x1 * p.mat(pre + "vert.wv");
  add_row<Real>(c.v, p.vec(pre + "vert.bv"));
  c.o = MatR<Real>::Zero(c.x1.rows(), Eigen::Index(E));
  c.att.assign(N * H * V * V, Real(0));
  std::vector<Real> s(V);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t h = 0; h < H; ++h) {
      const auto off = Eigen::Index(h * D);
      for (std::size_t a = 0; a < V; ++a) {
        const auto ra = Eigen::Index(a * N + n);
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t b = 0; b < V; ++b) {
          s[b] = c.q.row(ra).segment(off, Eigen::Index(D)).dot(c.k.row(Eigen::Index(b * N + n)).segment(off, Eigen::Index(D))) * scale;
          mx = std::max(mx, s[b]);
        }
        Real sum = 0;
        for (std::size_t b = 0; b < V; ++b) sum += (s[b] = std::exp(s[b] - mx));
        Real* w = &c.att[((n * H + h) * V + a) * V];
        for (std::size_t b = 0; b < V; ++b) {
          w[b] = s[b] / sum;
          c.o.row(ra).segment(off, Eigen::Index(D)) += w[b] * c.v.row(Eigen::Index(b * N + n)).segment(off, Eigen::Index(D));
        }
      }
    }
  MatR<Real> out = c.o * p.mat(pre + "vert.wo");
  add_row<Real>(out, p.vec(pre + "vert.bo"));
  c.x2 = c.x1 + layer_norm<Real>(out, p.vec(pre + "vert.ln.g"), p.vec(pre + "vert.ln.b"), c.ln_v);
}

// Returns d x1 (residual included).
template <typename Real>
MatR<Real> vertical_backward(const Params<Real>& p, const std::string& pre, std::size_t N, std::size_t V,
                             const BlockCache<Real>& c, const MatR<Real>& dx2, Params<Real>& grad) {
  const std::size_t E = p.config.embed, H = p.config.heads, D = E / H;
  const Real scale = Real(1) / std::sqrt(Real(D));
  const MatR<Real> dout =
      layer_norm_backward<Real>(dx2, p.vec(pre + "vert.ln.g"), c.ln_v, grad.vec(pre + "vert.ln.g"), grad.vec(pre + "vert.ln.b"));
  grad.mat(pre + "vert.wo") += c.o.transpose() * dout;
  grad.vec(pre + "vert.bo") += dout.colwise().sum();
  const MatR<Real> d_o = dout * p.mat(pre + "vert.wo").transpose();
  MatR<Real> dq = MatR<Real>::Zero(c.q.rows(), c.q.cols());
  MatR<Real> dk = dq, dv = dq;
  std::vector<Real> dA(V);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t h = 0; h < H; ++h) {
      const auto off = Eigen::Index(h * D);
      const auto seg = Eigen::Index(D);
      for (std::size_t a = 0; a < V; ++a) {
        const auto ra = Eigen::Index(a * N + n);
        const Real* w = &c.att[((n * H + h) * V + a) * V];
        Real dot = 0;
        for (std::size_t b = 0; b < V; ++b) {
          const auto rb = Eigen::Index(b * N + n);
          dA[b] = d_o.row(ra).segment(off, seg).dot(c.v.row(rb).segment(off, seg));
          dot += w[b] * dA[b];
          dv.row(rb).segment(off, seg) += w[b] * d_o.row(ra).segment(off, seg);
        }
        for (std::size_t b = 0; b < V; ++b) {
          const auto rb = Eigen::Index(b * N + n);
          const Real ds = w[b] * (dA[b] - dot) * scale;
          dq.row(ra).segment(off, seg) += ds * c.k.row(rb).segment(off, seg);
          dk.row(rb).segment(off, seg) += ds * c.q.row(ra).segment(off, seg);
        }
      }
    }
  MatR<Real> dx1 = dx2;
  const std::pair<const char*, const MatR<Real>*> parts[] = {{"q", &dq}, {"k", &dk}, {"v", &dv}};
  for (const auto& [m, d] : parts) {
    grad.mat(pre + "vert.w" + m) += c.x1.transpose() * (*d);
    if (*m != 'k') grad.vec(pre + "vert.b" + m) += d->colwise().sum();
    dx1 += (*d) * p.mat(pre + "vert.w" + m).transpose();
  }
  return dx1;
}

template <typename Real>
void horizontal_forward(const Params<Real>& p, const std::string& pre, const GraphEdges& g, std::size_t V,
                        BlockCache<Real>& c) {
  const std::size_t E = p.config.embed, H = p.config.heads, N = g.nodes, nnz = g.nnz();
  const auto W = p.mat(pre + "horiz.w");
  const auto As = p.mat(pre + "horiz.a_src");
  const auto Ad = p.mat(pre + "horiz.a_dst");
  c.z.resize(H);
  c.alpha.assign(H * V * nnz, Real(0));
  c.pre.assign(H * V * nnz, Real(0));
  MatR<Real> agg = MatR<Real>::Zero(c.x2.rows(), Eigen::Index(E));
  const Real inv_h = Real(1) / Real(H);
  for (std::size_t h = 0; h < H; ++h) {
    c.z[h] = c.x2 * W.middleRows(Eigen::Index(h * E), Eigen::Index(E));
    const Eigen::Matrix<Real, Eigen::Dynamic, 1> s = c.z[h] * As.row(Eigen::Index(h)).transpose();
    const Eigen::Matrix<Real, Eigen::Dynamic, 1> t = c.z[h] * Ad.row(Eigen::Index(h)).transpose();
    for (std::size_t k = 0; k < V; ++k) {
      Real* al = &c.alpha[(h * V + k) * nnz];
      Real* pr = &c.pre[(h * V + k) * nnz];
      for (std::size_t i = 0; i < N; ++i) {
        const auto r = Eigen::Index(k * N + i);
        const auto e0 = std::size_t(g.offsets[i]), e1 = std::size_t(g.offsets[i + 1]);
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t e = e0; e < e1; ++e) {
          pr[e] = s(r) + t(Eigen::Index(k * N + std::size_t(g.neighbors[e])));
          al[e] = leaky(pr[e]);
          mx = std::max(mx, al[e]);
        }
        Real sum = 0;
        for (std::size_t e = e0; e < e1; ++e) sum += (al[e] = std::exp(al[e] - mx));
        for (std::size_t e = e0; e < e1; ++e) {
          al[e] /= sum;
          agg.row(r) += (inv_h * al[e]) * c.z[h].row(Eigen::Index(k * N + std::size_t(g.neighbors[e])));
        }
      }
    }
  }
  c.x3 = c.x2 + layer_norm<Real>(agg, p.vec(pre + "horiz.ln.g"), p.vec(pre + "horiz.ln.b"), c.ln_h);
}

template <typename Real>
MatR<Real> horizontal_backward(const Params<Real>& p, const std::string& pre, const GraphEdges& g, std::size_t V,
                               const BlockCache<Real>& c, const MatR<Real>& dx3, Params<Real>& grad) {
  const std::size_t E = p.config.embed, H = p.config.heads, N = g.nodes, nnz = g.nnz();
  const auto W = p.mat(pre + "horiz.w");
  const auto As = p.mat(pre + "horiz.a_src");
  const auto Ad = p.mat(pre + "horiz.a_dst");
  auto gW = grad.mat(pre + "horiz.w");
  auto gAs = grad.mat(pre + "horiz.a_src");
  auto gAd = grad.mat(pre + "horiz.a_dst");
  const MatR<Real> dagg =
      layer_norm_backward<Real>(dx3, p.vec(pre + "horiz.ln.g"), c.ln_h, grad.vec(pre + "horiz.ln.g"), grad.vec(pre + "horiz.ln.b"));
  MatR<Real> dx2 = dx3;
  const Real inv_h = Real(1) / Real(H);
  const Real slope = Real(kLeakySlope);
  for (std::size_t h = 0; h < H; ++h) {
    const MatR<Real>& z = c.z[h];
    MatR<Real> dz = MatR<Real>::Zero(z.rows(), z.cols());
    Eigen::Matrix<Real, Eigen::Dynamic, 1> ds = Eigen::Matrix<Real, Eigen::Dynamic, 1>::Zero(z.rows());
    Eigen::Matrix<Real, Eigen::Dynamic, 1> dt = ds;
    std::vector<Real> dal;
    for (std::size_t k = 0; k < V; ++k) {
      const Real* al = &c.alpha[(h * V + k) * nnz];
      const Real* pr = &c.pre[(h * V + k) * nnz];
      for (std::size_t i = 0; i < N; ++i) {
        const auto r = Eigen::Index(k * N + i);
        const auto e0 = std::size_t(g.offsets[i]), e1 = std::size_t(g.offsets[i + 1]);
        dal.assign(e1 - e0, Real(0));
        Real dot = 0;
        for (std::size_t e = e0; e < e1; ++e) {
          const auto rj = Eigen::Index(k * N + std::size_t(g.neighbors[e]));
          dal[e - e0] = inv_h * dagg.row(r).dot(z.row(rj));
          dot += al[e] * dal[e - e0];
          dz.row(rj) += (inv_h * al[e]) * dagg.row(r);
        }
        for (std::size_t e = e0; e < e1; ++e) {
          const auto rj = Eigen::Index(k * N + std::size_t(g.neighbors[e]));
          const Real dpre = al[e] * (dal[e - e0] - dot) * (pr[e] > Real(0) ? Real(1) : slope);
          ds(r) += dpre;
          dt(rj) += dpre;
        }
      }
    }
    gAs.row(Eigen::Index(h)) += ds.transpose() * z;
    gAd.row(Eigen::Index(h)) += dt.transpose() * z;
    dz += ds * As.row(Eigen::Index(h));
    dz += dt * Ad.row(Eigen::Index(h));
    gW.middleRows(Eigen::Index(h * E), Eigen::Index(E)) += c.x2.transpose() * dz;
    dx2 += dz * W.middleRows(Eigen::Index(h * E), Eigen::Index(E)).transpose();
  }
  return dx2;
}

template <typename Real>
MatR<Real> ffn_forward(const Params<Real>& p, const std::string& pre, BlockCache<Real>& c) {
  MatR<Real> a = c.x3 * p.mat(pre + "ffn.w1");
  add_row<Real>(a, p.vec(pre + "ffn.b1"));
  c.hidden = a.cwiseMax(Real(0));
  MatR<Real> f = c.hidden * p.mat(pre + "ffn.w2");
  add_row<Real>(f, p.vec(pre + "ffn.b2"));
  return c.x3 + layer_norm<Real>(f, p.vec(pre + "ffn.ln.g"), p.vec(pre + "ffn.ln.b"), c.ln_f);
}

template <typename Real>
MatR<Real> ffn_backward(const Params<Real>& p, const std::string& pre, const BlockCache<Real>& c, const MatR<Real>& dx4,
                        Params<Real>& grad) {
  const MatR<Real> df =
      layer_norm_backward<Real>(dx4, p.vec(pre + "ffn.ln.g"), c.ln_f, grad.vec(pre + "ffn.ln.g"), grad.vec(pre + "ffn.ln.b"));
  grad.mat(pre + "ffn.w2") += c.hidden.transpose() * df;
  grad.vec(pre + "ffn.b2") += df.colwise().sum();
  MatR<Real> da = df * p.mat(pre + "ffn.w2").transpose();
  for (Eigen::Index i = 0; i < da.size(); ++i)
    if (!(c.hidden.data()[i] > Real(0))) da.data()[i] = Real(0);
  grad.mat(pre + "ffn.w1") += c.x3.transpose() * da;
  grad.vec(pre + "ffn.b1") += da.colwise().sum();
  return dx4 + da * p.mat(pre + "ffn.w1").transpose();
}

}  // namespace detail

/// One Graph-Axial block: injection, vertical attention, horizontal attention, feed-forward.
template <typename Real>
MatR<Real> graph_axial_block(const Params<Real>& p, std::size_t l, const MatR<Real>& x, const MatR<Real>& g_static,
                             const GraphEdges& g, BlockCache<Real>& c) {
  const std::string pre = "block" + std::to_string(l) + ".";
  const std::size_t N = g.nodes, V = p.tokens.size();
  const MatR<Real> inj = (g_static.array().rowwise() * p.vec(pre + "inject").array()).matrix();
  c.x1 = x;
  for (std::size_t k = 0; k < V; ++k) c.x1.middleRows(Eigen::Index(k * N), Eigen::Index(N)) += inj;
  detail::vertical_forward(p, pre, N, V, c);
  detail::horizontal_forward(p, pre, g, V, c);
  return detail::ffn_forward(p, pre, c);
}

template <typename Real>
MatR<Real> graph_axial_block_backward(const Params<Real>& p, std::size_t l, const MatR<Real>& g_static,
                                      const GraphEdges& g, const BlockCache<Real>& c, const MatR<Real>& dy,
                                      Params<Real>& grad, MatR<Real>& dg_static) {
  const std::string pre = "block" + std::to_string(l) + ".";
  const std::size_t N = g.nodes, V = p.tokens.size();
  const MatR<Real> dx3 = detail::ffn_backward(p, pre, c, dy, grad);
  const MatR<Real> dx2 = detail::horizontal_backward(p, pre, g, V, c, dx3, grad);
  const MatR<Real> dx1 = detail::vertical_backward(p, pre, N, V, c, dx2, grad);
  MatR<Real> dsum = MatR<Real>::Zero(Eigen::Index(N), dx1.cols());
  for (std::size_t k = 0; k < V; ++k) dsum += dx1.middleRows(Eigen::Index(k * N), Eigen::Index(N));
  grad.vec(pre + "inject") += dsum.cwiseProduct(g_static).colwise().sum();
  dg_static += (dsum.array().rowwise() * p.vec(pre + "inject").array()).matrix();
  return dx1;
}

/// Per-token projection of the stacked T_in history, `history` being [t_in, C, N].
template <typename Real>
MatR<Real> stage_inputs(const Params<Real>& p, const Real* history, std::size_t N, SampleCache<Real>* cache = nullptr) {
  const auto& cfg = p.config;
  const std::size_t V = p.tokens.size(), C = cfg.channels, E = cfg.embed;
  MatR<Real> x(Eigen::Index(V * N), Eigen::Index(E));
  if (cache) cache->staged_inputs.resize(V);
  for (std::size_t k = 0; k < V; ++k) {
    const auto& tok = p.tokens.tokens[k];
    const std::size_t m = tok.channels.size();
    MatR<Real> u(Eigen::Index(N), Eigen::Index(cfg.t_in * m));
    for (std::size_t t = 0; t < cfg.t_in; ++t)
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t n = 0; n < N; ++n)
          u(Eigen::Index(n), Eigen::Index(t * m + j)) = history[(t * C + tok.channels[j]) * N + n];
    auto xs = x.middleRows(Eigen::Index(k * N), Eigen::Index(N));
    xs = u * p.mat("stage." + tok.name + ".w");
    xs.rowwise() += p.vec("stage." + tok.name + ".b");
    if (cache) cache->staged_inputs[k] = std::move(u);
  }
  return x;
}

/// Full forward for one sample. `history` is [t_in, C, N] in standardized units; the
/// prediction adds each token's projection to the last input frame.
template <typename Real>
SampleCache<Real> core_forward(const Params<Real>& p, const Real* history, const StaticEncoding<Real>& st,
                               const GraphEdges& g, bool keep_cache = true) {
  const auto& cfg = p.config;
  const std::size_t N = g.nodes, C = cfg.channels;
  if (std::size_t(st.g.rows()) != N) throw std::invalid_argument("static encoding node count does not match graph");
  SampleCache<Real> c;
  c.has_cache = keep_cache;
  MatR<Real> x = stage_inputs(p, history, N, keep_cache ? &c : nullptr);
  c.blocks.resize(keep_cache ? cfg.blocks : 1);
  for (std::size_t l = 0; l < cfg.blocks; ++l) x = graph_axial_block(p, l, x, st.g, g, c.blocks[keep_cache ? l : 0]);
  if (!keep_cache) c.blocks.clear();
  c.last_frame.assign(history + (cfg.t_in - 1) * C * N, history + cfg.t_in * C * N);
  c.prediction.assign(cfg.t_out * C * N, Real(0));
  for (std::size_t k = 0; k < p.tokens.size(); ++k) {
    const auto& tok = p.tokens.tokens[k];
    const std::size_t m = tok.channels.size();
    MatR<Real> y = x.middleRows(Eigen::Index(k * N), Eigen::Index(N)) * p.mat("out." + tok.name + ".w");
    y.rowwise() += p.vec("out." + tok.name + ".b");
    for (std::size_t t = 0; t < cfg.t_out; ++t)
      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t ch = tok.channels[j];
        for (std::size_t n = 0; n < N; ++n)
          c.prediction[(t * C + ch) * N + n] = c.last_frame[ch * N + n] + y(Eigen::Index(n), Eigen::Index(t * m + j));
      }
  }
  c.embeddings = std::move(x);
  return c;
}

/// Accumulates parameter gradients for one sample. `dpred` is [t_out, C, N] (may be null);
/// `dembed` is an extra gradient on the last block output (may be null, e.g. from heads).
template <typename Real>
void core_backward(const Params<Real>& p, const SampleCache<Real>& c, const StaticEncoding<Real>& st,
                   const GraphEdges& g, const std::type_identity_t<Real>* dpred,
                   const std::type_identity_t<MatR<Real>>* dembed, Params<Real>& grad,
                   MatR<Real>& dg_static) {
  if (!c.has_cache) throw std::logic_error("backward called without a cached forward pass");
  const auto& cfg = p.config;
  const std::size_t N = g.nodes, C = cfg.channels, V = p.tokens.size();
  MatR<Real> dx = dembed ? *dembed : MatR<Real>::Zero(c.embeddings.rows(), c.embeddings.cols());
  if (dpred) {
    for (std::size_t k = 0; k < V; ++k) {
      const auto& tok = p.tokens.tokens[k];
      const std::size_t m = tok.channels.size();
      MatR<Real> dy(Eigen::Index(N), Eigen::Index(cfg.t_out * m));
      for (std::size_t t = 0; t < cfg.t_out; ++t)
        for (std::size_t j = 0; j < m; ++j)
          for (std::size_t n = 0; n < N; ++n)
            dy(Eigen::Index(n), Eigen::Index(t * m + j)) = dpred[(t * C + tok.channels[j]) * N + n];
      const auto xk = c.embeddings.middleRows(Eigen::Index(k * N), Eigen::Index(N));
      grad.mat("out." + tok.name + ".w") += xk.transpose() * dy;
      grad.vec("out." + tok.name + ".b") += dy.colwise().sum();
      dx.middleRows(Eigen::Index(k * N), Eigen::Index(N)) += dy * p.mat("out." + tok.name + ".w").transpose();
    }
  }
  if (dg_static.rows() != Eigen::Index(N)) dg_static = MatR<Real>::Zero(Eigen::Index(N), Eigen::Index(cfg.embed));
  for (std::size_t l = cfg.blocks; l-- > 0;) dx = graph_axial_block_backward(p, l, st.g, g, c.blocks[l], dx, grad, dg_static);
  for (std::size_t k = 0; k < V; ++k) {
    const auto& tok = p.tokens.tokens[k];
    const auto dk = dx.middleRows(Eigen::Index(k * N), Eigen::Index(N));
    grad.mat("stage." + tok.name + ".w") += c.staged_inputs[k].transpose() * dk;
    grad.vec("stage." + tok.name + ".b") += dk.colwise().sum();
  }
}

}  // namespace mrgnf
