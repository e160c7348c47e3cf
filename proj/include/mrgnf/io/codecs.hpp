// SPDX-License-Identifier: Apache-2.0
//
// File formats: mesh and stats JSON, RGRID fields, MGNT node tensors, MGNF checkpoints.
#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrgnf/grid.hpp"
#include "mrgnf/io/binary.hpp"
#include "mrgnf/mesh.hpp"
#include "mrgnf/model/params.hpp"
#include "mrgnf/regrid.hpp"
#include "mrgnf/stats.hpp"
#include "mrgnf/tensor.hpp"

namespace mrgnf::io {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------- mesh JSON

inline constexpr int kMeshVersion = 1;

inline std::string mesh_to_json(const TriMesh& m) {
  std::string s;
  char buf[96];
  auto num = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    s += buf;
  };
  s += "{\n  \"version\": " + std::to_string(kMeshVersion) + ",\n  \"ellipsoid\": {\"a\": ";
  num(m.ellipsoid.a);
  s += ", \"b\": ";
  num(m.ellipsoid.b);
  s += "},\n  \"roi\": {";
  const std::pair<const char*, double> roi[] = {{"lon_min", m.roi.lon_min},     {"lon_max", m.roi.lon_max},
                                                {"lat_min", m.roi.lat_min},     {"lat_max", m.roi.lat_max},
                                                {"belt_dlon", m.roi.belt_dlon}, {"belt_dlat", m.roi.belt_dlat},
                                                {"outer_dlon", m.roi.outer_dlon}, {"outer_dlat", m.roi.outer_dlat}};
  for (std::size_t i = 0; i < std::size(roi); ++i) {
    s += (i ? ", \"" : "\"") + std::string(roi[i].first) + "\": ";
    num(roi[i].second);
  }
  s += "},\n  \"spacing\": {\"roi\": ";
  num(m.spacing.s_roi);
  s += ", \"belt\": ";
  num(m.spacing.s_belt);
  s += ", \"outer\": ";
  num(m.spacing.s_outer);
  s += "},\n  \"vertices\": [";
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s[%.9f, %.9f]", i ? ", " : "", m.vertices[i].lon, m.vertices[i].lat);
    s += buf;
  }
  s += "],\n  \"triangles\": [";
  for (std::size_t i = 0; i < m.triangles.size(); ++i) {
    const auto& t = m.triangles[i];
    s += (i ? ", [" : "[") + std::to_string(t[0]) + ", " + std::to_string(t[1]) + ", " + std::to_string(t[2]) + "]";
  }
  s += "],\n  \"zones\": [";
  for (std::size_t i = 0; i < m.zone.size(); ++i) s += (i ? ", \"" : "\"") + std::string(zone_name(m.zone[i])) + "\"";
  s += "]\n}\n";
  return s;
}

inline Zone parse_zone(const std::string& s) {
  if (s == "roi") return Zone::Roi;
  if (s == "belt") return Zone::Belt;
  if (s == "outer") return Zone::Outer;
  throw FormatError("mesh: unknown zone label '" + s + "'");
}

inline TriMesh mesh_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw FormatError(std::string("mesh: invalid JSON: ") + e.what());
  }
  try {
    if (j.at("version").get<int>() != kMeshVersion)
      throw FormatError("mesh: unsupported version " + j.at("version").dump());
    TriMesh m;
    m.ellipsoid = Ellipsoid(j.at("ellipsoid").at("a").get<double>(), j.at("ellipsoid").at("b").get<double>());
    if (j.contains("roi")) {
      const auto& r = j["roi"];
      m.roi = {r.at("lon_min").get<double>(),   r.at("lon_max").get<double>(),   r.at("lat_min").get<double>(),
               r.at("lat_max").get<double>(),   r.at("belt_dlon").get<double>(), r.at("belt_dlat").get<double>(),
               r.at("outer_dlon").get<double>(), r.at("outer_dlat").get<double>()};
    }
    if (j.contains("spacing")) {
      const auto& s = j["spacing"];
      m.spacing = {s.at("roi").get<double>(), s.at("belt").get<double>(), s.at("outer").get<double>()};
    }
    for (const auto& v : j.at("vertices")) {
      GeoPoint p;
      p.lon = v.at(0).get<double>();
      p.lat = v.at(1).get<double>();
      m.vertices.push_back(p);
    }
    for (const auto& t : j.at("triangles"))
      m.triangles.push_back({t.at(0).get<std::int32_t>(), t.at(1).get<std::int32_t>(), t.at(2).get<std::int32_t>()});
    for (const auto& z : j.at("zones")) m.zone.push_back(parse_zone(z.get<std::string>()));
    m.validate();
    m.derive_edges();
    return m;
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("mesh: ") + e.what());
  }
}

inline void write_mesh(const std::string& path, const TriMesh& m) { write_file(path, mesh_to_json(m)); }
inline TriMesh read_mesh(const std::string& path) { return mesh_from_json(read_file(path)); }

// ---------------------------------------------------------------- stats JSON

inline std::string stats_to_json(const ChannelStats& s) {
  ordered_json j = ordered_json::object();
  for (std::size_t c = 0; c < s.channels(); ++c)
    j[s.channel_names[c]] = {{"mean", s.mean[c]}, {"std", s.std[c]}, {"count", s.count[c]}};
  return j.dump(2) + "\n";
}

inline ChannelStats stats_from_json(const std::string& text) {
  try {
    const auto j = ordered_json::parse(text);
    ChannelStats s;
    for (const auto& [name, v] : j.items()) {
      s.channel_names.push_back(name);
      s.mean.push_back(v.at("mean").get<double>());
      s.std.push_back(v.at("std").get<double>());
      s.count.push_back(v.at("count").get<std::int64_t>());
      if (!(s.std.back() > 0.0)) throw FormatError("stats: channel '" + name + "' has non-positive std");
    }
    return s;
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("stats: ") + e.what());
  }
}

inline void write_stats(const std::string& path, const ChannelStats& s) { write_file(path, stats_to_json(s)); }
inline ChannelStats read_stats(const std::string& path) { return stats_from_json(read_file(path)); }

// ---------------------------------------------------------------- RGRID

inline constexpr std::uint32_t kRgridVersion = 1;

/// RGRD, u32 version, u32 C, H, W, f64 resolution, f64 lats[H], f64 lons[W], names,
/// f32 payload [C, H, W], u8 mask flag then H*W mask bytes.
inline std::string encode_rgrid(const RectGrid<float>& g) {
  g.validate();
  ByteWriter w;
  w.magic("RGRD");
  w.put<std::uint32_t>(kRgridVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(g.channels()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(g.height()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(g.width()));
  w.put<double>(g.resolution);
  w.array(g.lats.data(), g.lats.size());
  w.array(g.lons.data(), g.lons.size());
  for (const auto& n : g.channel_names) w.str(n);
  w.array(g.data.data(), g.data.size());
  w.put<std::uint8_t>(g.has_mask() ? 1 : 0);
  if (g.has_mask()) w.array(g.water_mask.data(), g.water_mask.size());
  return w.data();
}

/// Non-finite payload values are kept and reported through `warnings`.
inline RectGrid<float> decode_rgrid(std::string bytes, std::vector<std::string>* warnings = nullptr,
                                    const std::string& what = "rgrid") {
  ByteReader r(std::move(bytes), what);
  r.magic("RGRD");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kRgridVersion) throw FormatError(what + ": unsupported version " + std::to_string(version));
  RectGrid<float> g;
  const auto C = r.get<std::uint32_t>("channel count");
  const auto H = r.get<std::uint32_t>("height");
  const auto W = r.get<std::uint32_t>("width");
  g.resolution = r.get<double>("resolution");
  if ((std::size_t(H) + W) > r.remaining() / sizeof(double)) throw FormatError(what + ": truncated while reading axes");
  g.lats.resize(H);
  g.lons.resize(W);
  r.array(g.lats.data(), H, "latitude axis");
  r.array(g.lons.data(), W, "longitude axis");
  for (std::uint32_t c = 0; c < C; ++c) g.channel_names.push_back(r.str("channel name"));
  if (H && W && C && std::size_t(C) * H > r.remaining() / sizeof(float) / W)
    throw FormatError(what + ": truncated while reading payload");
  g.data.resize(std::size_t(C) * H * W);
  r.array(g.data.data(), g.data.size(), "payload");
  if (r.get<std::uint8_t>("mask flag")) {
    g.water_mask.resize(std::size_t(H) * W);
    r.array(g.water_mask.data(), g.water_mask.size(), "mask");
  }
  if (r.remaining()) throw FormatError(what + ": " + std::to_string(r.remaining()) + " trailing bytes");
  try {
    g.validate();
  } catch (const std::exception& e) {
    throw FormatError(what + ": " + e.what());
  }
  std::size_t bad = 0;
  for (float v : g.data) bad += std::isfinite(v) ? 0 : 1;
  if (bad && warnings)
    warnings->push_back(what + ": " + std::to_string(bad) + " non-finite payload value(s)");
  return g;
}

inline void write_rgrid(const std::string& path, const RectGrid<float>& g) { write_file(path, encode_rgrid(g)); }
inline RectGrid<float> read_rgrid(const std::string& path, std::vector<std::string>* warnings = nullptr) {
  return decode_rgrid(read_file(path), warnings, path);
}

// ---------------------------------------------------------------- node tensors

inline constexpr std::uint32_t kTensorVersion = 1;

/// MGNT, u32 version, u64 T, C, N, names, i64 timestamps[T], f32 payload [T, C, N].
inline std::string encode_tensor(const NodeTensor<float>& x) {
  if (x.data.size() != x.frames * x.channels * x.nodes || x.channel_names.size() != x.channels ||
      x.timestamps.size() != x.frames)
    throw std::invalid_argument("node tensor is internally inconsistent");
  ByteWriter w;
  w.magic("MGNT");
  w.put<std::uint32_t>(kTensorVersion);
  w.put<std::uint64_t>(x.frames);
  w.put<std::uint64_t>(x.channels);
  w.put<std::uint64_t>(x.nodes);
  for (const auto& n : x.channel_names) w.str(n);
  w.array(x.timestamps.data(), x.timestamps.size());
  w.array(x.data.data(), x.data.size());
  return w.data();
}

inline NodeTensor<float> decode_tensor(std::string bytes, const std::string& what = "tensor") {
  ByteReader r(std::move(bytes), what);
  r.magic("MGNT");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kTensorVersion) throw FormatError(what + ": unsupported version " + std::to_string(version));
  const auto T = r.get<std::uint64_t>("frames"), C = r.get<std::uint64_t>("channels"), N = r.get<std::uint64_t>("nodes");
  if (C > r.remaining() || (T && N && C && T * C > r.remaining() / 4 / N)) throw FormatError(what + ": truncated payload");
  NodeTensor<float> x;
  x.frames = T;
  x.channels = C;
  x.nodes = N;
  for (std::uint64_t c = 0; c < C; ++c) x.channel_names.push_back(r.str("channel name"));
  x.timestamps.resize(T);
  r.array(x.timestamps.data(), T, "timestamps");
  x.data.resize(T * C * N);
  r.array(x.data.data(), x.data.size(), "payload");
  if (r.remaining()) throw FormatError(what + ": " + std::to_string(r.remaining()) + " trailing bytes");
  return x;
}

inline void write_tensor(const std::string& path, const NodeTensor<float>& x) { write_file(path, encode_tensor(x)); }
inline NodeTensor<float> read_tensor(const std::string& path) { return decode_tensor(read_file(path), path); }

// ---------------------------------------------------------------- checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline ordered_json config_to_json(const ModelConfig& c, const TokenLayout& t) {
  ordered_json j{{"embed", c.embed},   {"blocks", c.blocks},   {"heads", c.heads},     {"ffn", c.ffn},
                 {"t_in", c.t_in},     {"t_out", c.t_out},     {"dropout", c.dropout}, {"channels", c.channels},
                 {"statics", c.statics}, {"head_hidden", c.head_hidden}, {"u10", c.u10}, {"v10", c.v10},
                 {"tp_log", c.tp_log}};
  ordered_json toks = ordered_json::array();
  for (const auto& tok : t.tokens) toks.push_back({{"name", tok.name}, {"channels", tok.channels}});
  j["tokens"] = toks;
  return j;
}

inline std::pair<ModelConfig, TokenLayout> config_from_json(const ordered_json& j) {
  ModelConfig c;
  c.embed = j.at("embed").get<std::size_t>();
  c.blocks = j.at("blocks").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ffn = j.at("ffn").get<std::size_t>();
  c.t_in = j.at("t_in").get<std::size_t>();
  c.t_out = j.at("t_out").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.channels = j.at("channels").get<std::size_t>();
  c.statics = j.at("statics").get<std::size_t>();
  c.head_hidden = j.at("head_hidden").get<std::size_t>();
  c.u10 = j.at("u10").get<std::size_t>();
  c.v10 = j.at("v10").get<std::size_t>();
  c.tp_log = j.at("tp_log").get<std::size_t>();
  TokenLayout t;
  for (const auto& tok : j.at("tokens"))
    t.tokens.push_back({tok.at("name").get<std::string>(), tok.at("channels").get<std::vector<std::size_t>>()});
  c.validate();
  t.validate(c.channels);
  return {c, t};
}

/// MGNF, u32 version, config JSON, u32 blob count, then per blob: name, u32 rows, u32 cols,
/// f32 payload, u32 crc32 of the payload bytes.
inline std::string encode_checkpoint(const Params<float>& p) {
  ByteWriter w;
  w.magic("MGNF");
  w.put<std::uint32_t>(kCheckpointVersion);
  w.str(config_to_json(p.config, p.tokens).dump());
  const auto& tensors = p.layout.tensors();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& info : tensors) {
    w.str(info.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(info.rows));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(info.cols));
    const float* v = p.data.data() + info.offset;
    ByteWriter blob;
    blob.array(v, info.size());
    w.bytes(blob.data().data(), blob.size());
    w.put<std::uint32_t>(crc32_of(blob.data().data(), blob.size()));
  }
  return w.data();
}

inline Params<float> decode_checkpoint(std::string bytes, const std::string& what = "checkpoint") {
  ByteReader r(std::move(bytes), what);
  r.magic("MGNF");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) throw FormatError(what + ": unsupported version " + std::to_string(version));
  std::pair<ModelConfig, TokenLayout> ct;
  try {
    ct = config_from_json(ordered_json::parse(r.str("config block")));
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(what + ": bad config block: " + e.what());
  }
  Params<float> p(ct.first, ct.second);
  const auto count = r.get<std::uint32_t>("blob count");
  if (count != p.layout.tensors().size())
    throw FormatError(what + ": " + std::to_string(count) + " blobs, layout expects " +
                      std::to_string(p.layout.tensors().size()));
  for (const auto& info : p.layout.tensors()) {
    // name length, name, rows, cols, payload, checksum
    const std::size_t nbytes = info.size() * sizeof(float);
    if (r.remaining() < 4 + info.name.size() + 8 + nbytes + 4)
      throw FormatError(what + ": checksum error in blob '" + info.name + "' (payload truncated)");
    const auto name = r.str("blob name after '" + info.name + "'");
    if (name != info.name) throw FormatError(what + ": blob '" + name + "' where '" + info.name + "' was expected");
    const auto rows = r.get<std::uint32_t>("rows of blob '" + name + "'");
    const auto cols = r.get<std::uint32_t>("cols of blob '" + name + "'");
    if (rows != info.rows || cols != info.cols)
      throw FormatError(what + ": blob '" + name + "' has shape " + std::to_string(rows) + "x" + std::to_string(cols));
    const std::string raw = r.peek(nbytes);
    r.skip(nbytes);
    if (raw.size() < nbytes || r.remaining() < 4)
      throw FormatError(what + ": checksum error in blob '" + name + "' (payload truncated)");
    const auto stored = r.get<std::uint32_t>("checksum");
    if (crc32_of(raw.data(), raw.size()) != stored) throw FormatError(what + ": checksum error in blob '" + name + "'");
    ByteReader br(raw, what);
    br.array(p.data.data() + info.offset, info.size(), "blob '" + name + "'");
  }
  if (r.remaining()) throw FormatError(what + ": " + std::to_string(r.remaining()) + " trailing bytes");
  return p;
}

inline void write_checkpoint(const std::string& path, const Params<float>& p) { write_file(path, encode_checkpoint(p)); }
inline Params<float> read_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path), path); }

// ---------------------------------------------------------------- channel specs

namespace detail {

template <typename E, std::size_t K>
E enum_from(const std::string& s, const std::array<const char*, K>& names, const char* what) {
  for (std::size_t i = 0; i < K; ++i)
    if (s == names[i]) return E(i);
  throw FormatError(std::string("channels: unknown ") + what + " '" + s + "'");
}

inline constexpr std::array<const char*, 4> kKindNames{"surface", "pressure_level", "static", "positional"};
inline constexpr std::array<const char*, 2> kTransformNames{"identity", "tp_log"};
inline constexpr std::array<const char*, 3> kMaskNames{"any", "land", "water"};

}  // namespace detail

/// [{name, source, kind, level, transform, mask}, ...]; only `name` is required.
inline std::string channel_specs_to_json(const std::vector<ChannelSpec>& specs) {
  ordered_json a = ordered_json::array();
  for (const auto& s : specs) {
    ordered_json j{{"name", s.name}};
    if (!s.source.empty()) j["source"] = s.source;
    j["kind"] = detail::kKindNames[std::size_t(s.kind)];
    if (s.level) j["level"] = *s.level;
    j["transform"] = detail::kTransformNames[std::size_t(s.transform)];
    j["mask"] = detail::kMaskNames[std::size_t(s.mask_class)];
    a.push_back(j);
  }
  return a.dump(2) + "\n";
}

inline std::vector<ChannelSpec> channel_specs_from_json(const std::string& text) {
  std::vector<ChannelSpec> out;
  try {
    for (const auto& j : ordered_json::parse(text)) {
      ChannelSpec s;
      s.name = j.at("name").get<std::string>();
      s.source = j.value("source", std::string());
      s.kind = detail::enum_from<ChannelKind>(j.value("kind", std::string("surface")), detail::kKindNames, "kind");
      if (j.contains("level")) s.level = j.at("level").get<int>();
      s.transform =
          detail::enum_from<Transform>(j.value("transform", std::string("identity")), detail::kTransformNames, "transform");
      s.mask_class = detail::enum_from<MaskClass>(j.value("mask", std::string("any")), detail::kMaskNames, "mask");
      s.validate();
      out.push_back(std::move(s));
    }
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("channels: ") + e.what());
  }
  if (out.empty()) throw FormatError("channels: no channels listed");
  return out;
}

}  // namespace mrgnf::io
