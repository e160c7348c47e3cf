// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale synthetic weather: analytic fields that translate with a per-sequence
// drift, rendered on one grid per zone and sampled to mesh nodes.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "mrgnf/grid.hpp"
#include "mrgnf/mesh.hpp"
#include "mrgnf/regrid.hpp"
#include "mrgnf/tensor.hpp"

namespace mrgnf {

enum class Split : std::uint8_t { Train, Val, Test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "test";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + s + "' (expected train, val or test)");
}

/// Days since 1970-01-01 for a proleptic Gregorian date.
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline constexpr std::int64_t kValStartHours = days_from_civil(2019, 1, 1) * 24;
inline constexpr std::int64_t kTestStartHours = days_from_civil(2024, 1, 1) * 24;

/// Chronological split of a timestamp (hours since the epoch): train before 2019,
/// validation 2019-2023, test from 2024.
inline Split split_of(std::int64_t hours) {
  if (hours < kValStartHours) return Split::Train;
  if (hours < kTestStartHours) return Split::Val;
  return Split::Test;
}

/// The 21 dynamic channels and how they are read from the grids.
inline std::vector<ChannelSpec> default_channel_specs() {
  std::vector<ChannelSpec> s;
  for (const char* n : {"t2m", "d2m", "msl", "u10", "v10"}) s.push_back({n, "", ChannelKind::Surface});
  s.push_back({"tp_log", "tp", ChannelKind::Surface, std::nullopt, Transform::TpLog});
  for (int level : {850, 500, 300})
    for (const char* v : {"t", "u", "v", "r", "z"})
      s.push_back({std::string(v) + std::to_string(level), v, ChannelKind::PressureLevel, level});
  return s;
}

inline std::vector<std::string> synth_grid_channels() {
  std::vector<std::string> n{"t2m", "d2m", "msl", "u10", "v10", "tp"};
  for (const char* v : {"t", "u", "v", "r", "z"})
    for (int level : {850, 500, 300}) n.push_back(std::string(v) + "@" + std::to_string(level));
  return n;
}

struct SynthConfig {
  std::size_t sequences = 64;
  std::size_t frames = 12;  ///< 6-hourly frames per sequence
  std::uint64_t seed = 7;
  double min_drift = 0.4;   ///< degrees per step
  double max_drift = 1.2;
  double train_fraction = 0.7;
  double val_fraction = 0.15;

  void validate() const {
    if (sequences < 3) throw std::invalid_argument("synth needs at least 3 sequences (one per split)");
    if (frames < 2) throw std::invalid_argument("synth needs at least 2 frames per sequence");
    if (!(min_drift >= 0.0 && min_drift <= max_drift)) throw std::invalid_argument("drift range must satisfy 0 <= min <= max");
    if (!(train_fraction > 0.0 && val_fraction > 0.0 && train_fraction + val_fraction < 1.0))
      throw std::invalid_argument("split fractions must be positive and leave room for a test split");
  }
};

struct Dataset {
  std::vector<NodeTensor<float>> sequences;  ///< physical units (tp as tp_log), each [T, C, N]
  NodeTensor<float> statics;                 ///< [1, S, N]

  Split split(std::size_t s) const { return split_of(sequences.at(s).timestamps.at(0)); }

  std::vector<std::size_t> indices(Split sp) const {
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s < sequences.size(); ++s)
      if (split(s) == sp) out.push_back(s);
    return out;
  }
};

namespace detail {

struct Blob {
  double x, y;    ///< planar degrees at t = 0
  double sigma;   ///< degrees
  double amp;
};

// One sequence's analytic state. Every feature translates rigidly with the drift.
class SynthSequence {
 public:
  SynthSequence(const RoiSpec& roi, std::uint64_t seed, std::uint64_t index, const SynthConfig& cfg)
      : lat_ref_(roi.center_lat()), lon_ref_(roi.center_lon()),
        coslat_(std::cos(roi.center_lat() * kDegToRad)) {
    std::seed_seq ss{seed, index, std::uint64_t(0x51e7)};
    std::mt19937_64 rng(ss);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const double theta = 2.0 * std::numbers::pi * U(rng);
    const double speed = cfg.min_drift + (cfg.max_drift - cfg.min_drift) * U(rng);
    cx_ = speed * std::cos(theta);
    cy_ = speed * std::sin(theta);
    // blobs start anywhere they can reach the domain during the sequence
    const double travel = speed * double(cfg.frames);
    const double hx = (roi.half_lon() + roi.belt_dlon + roi.outer_dlon) * coslat_ + travel;
    const double hy = roi.half_lat() + roi.belt_dlat + roi.outer_dlat + travel;
    auto blob = [&](double smin, double smax, double amp) {
      Blob b;
      b.x = (2.0 * U(rng) - 1.0) * hx - cx_ * 0.5 * double(cfg.frames);
      b.y = lat_ref_ + (2.0 * U(rng) - 1.0) * hy - cy_ * 0.5 * double(cfg.frames);
      b.sigma = smin + (smax - smin) * U(rng);
      b.amp = amp;
      return b;
    };
    const std::size_t area_scale = std::size_t(std::max(1.0, hx * hy / 400.0));
    for (std::size_t k = 0; k < 6 * area_scale; ++k) temp_.push_back(blob(3.0, 7.0, (U(rng) < 0.5 ? -1 : 1) * (2.0 + 4.0 * U(rng))));
    for (std::size_t k = 0; k < 4 * area_scale; ++k) pres_.push_back(blob(4.0, 9.0, (U(rng) < 0.5 ? -1 : 1) * (400.0 + 900.0 * U(rng))));
    for (std::size_t k = 0; k < 3 * area_scale; ++k) moist_.push_back(blob(3.0, 8.0, (U(rng) < 0.5 ? -1 : 1) * U(rng)));
    std::lognormal_distribution<double> rain(0.5, 0.8);
    for (std::size_t k = 0; k < 5 * area_scale; ++k) rain_.push_back(blob(1.0, 2.5, rain(rng)));
  }

  /// All grid channels (synth_grid_channels order) at one point and step.
  std::array<double, 21> sample(double lon, double lat, double t) const {
    const double x = wrap_lon(lon - lon_ref_) * coslat_, y = lat;
    const double sx = cx_ * t, sy = cy_ * t;
    double T = 0, P = 0, M = 0, R = 0, pu = 0, pv = 0, tu = 0, tv = 0;
    auto eval = [&](const std::vector<Blob>& bs, double& sum, double* gx, double* gy) {
      for (const auto& b : bs) {
        const double dx = x - (b.x + sx), dy = y - (b.y + sy);
        const double e = b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
        sum += e;
        if (gx) *gx += -e * dx / (b.sigma * b.sigma);
        if (gy) *gy += -e * dy / (b.sigma * b.sigma);
      }
    };
    eval(temp_, T, &tu, &tv);
    eval(pres_, P, &pu, &pv);
    eval(moist_, M, nullptr, nullptr);
    for (const auto& b : rain_) {
      const double dx = x - (b.x + sx), dy = y - (b.y + sy);
      const double e = std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
      R += b.amp * std::max(0.0, e - 0.25) / 0.75;
    }
    // steering flow plus a rotational part around pressure centres and a weak divergent part
    constexpr double kMsPerDegStep = 111195.0 / 21600.0;
    const double u0 = 0.8 * cx_ * kMsPerDegStep, v0 = 0.8 * cy_ * kMsPerDegStep;
    const double u10 = u0 - 0.004 * pv + 0.15 * tu;
    const double v10 = v0 + 0.004 * pu + 0.15 * tv;
    const double t2m = 288.0 - 0.7 * (lat - lat_ref_) + T;
    const double d2m = t2m - (5.0 - 3.0 * std::tanh(M));
    const double msl = 101300.0 + P;
    std::array<double, 21> out{};
    out[0] = t2m;
    out[1] = d2m;
    out[2] = msl;
    out[3] = u10;
    out[4] = v10;
    out[5] = R;
    const double lapse[3] = {10.0, 30.0, 50.0}, wscale[3] = {1.5, 2.5, 3.5}, ztop[3] = {1500.0, 5600.0, 9200.0};
    for (int l = 0; l < 3; ++l) {
      const double decay = std::pow(0.8, l + 1);
      out[std::size_t(6 + l)] = t2m - lapse[l] + (decay - 1.0) * T;
      out[std::size_t(9 + l)] = wscale[l] * u10;
      out[std::size_t(12 + l)] = wscale[l] * v10;
      out[std::size_t(15 + l)] = std::clamp(60.0 + 30.0 * std::tanh(M + 0.1 * T) - 10.0 * l, 0.0, 100.0);
      out[std::size_t(18 + l)] = 9.80665 * (ztop[l] + 0.08 * P + 10.0 * decay * T);
    }
    return out;
  }

 private:
  double lat_ref_, lon_ref_, coslat_;
  double cx_ = 0, cy_ = 0;
  std::vector<Blob> temp_, pres_, moist_, rain_;
};

struct GridBox {
  double lon0, lat0, res;
  std::size_t w, h;
};

// Box of zone z padded by one cell, at the zone's spacing.
inline GridBox zone_box(const RoiSpec& roi, const SpacingSpec& sp, Zone z) {
  double dlon = 0, dlat = 0, res = sp.s_roi;
  if (z == Zone::Belt) {
    dlon = roi.belt_dlon;
    dlat = roi.belt_dlat;
    res = sp.s_belt;
  } else if (z == Zone::Outer) {
    dlon = roi.belt_dlon + roi.outer_dlon;
    dlat = roi.belt_dlat + roi.outer_dlat;
    res = sp.s_outer;
  }
  GridBox b;
  b.res = res;
  b.lon0 = roi.lon_min - dlon - res;
  b.lat0 = std::max(-90.0, roi.lat_min - dlat - res);
  const double lat1 = std::min(90.0, roi.lat_max + dlat + res);
  b.w = std::size_t(std::ceil((roi.lon_max + dlon + res - b.lon0) / res - 1e-9)) + 1;
  b.h = std::size_t(std::ceil((lat1 - b.lat0) / res - 1e-9)) + 1;
  b.lon0 = wrap_lon(b.lon0);
  return b;
}

// Fixed land/sea pattern and terrain: two elliptical islands with a few hills.
inline void land_and_height(const RoiSpec& roi, double lon, double lat, bool& water, double& elev) {
  const double cl = roi.center_lon(), ca = roi.center_lat();
  const double islands[2][4] = {{cl + 3.0, ca, 3.0, 5.0}, {cl - 4.5, ca - 0.5, 2.0, 2.5}};
  double best = -1.0;
  for (const auto& is : islands) {
    const double dx = (wrap_lon(lon - is[0])) / is[2], dy = (lat - is[1]) / is[3];
    best = std::max(best, 1.0 - (dx * dx + dy * dy));
  }
  water = best <= 0.0;
  elev = water ? 0.0 : 600.0 * best + 300.0 * std::max(0.0, std::sin(lon * 0.9) * std::cos(lat * 1.3));
}

}  // namespace detail

/// Renders the three zone grids of sequence `index` at step `t` (hours 6t after its start).
inline std::array<RectGrid<float>, 3> synth_grids(const RoiSpec& roi, const SpacingSpec& sp,
                                                const detail::SynthSequence& seq, double t) {
  std::array<RectGrid<float>, 3> out;
  for (std::size_t z = 0; z < 3; ++z) {
    const auto b = detail::zone_box(roi, sp, Zone(z));
    auto g = make_grid<float>(b.lon0, b.lat0, b.res, b.w, b.h, synth_grid_channels());
    g.water_mask.assign(b.w * b.h, 0);
    for (std::size_t i = 0; i < b.h; ++i)
      for (std::size_t j = 0; j < b.w; ++j) {
        const double lon = g.lons[j], lat = g.lats[i];
        const auto v = seq.sample(lon, lat, t);
        for (std::size_t c = 0; c < v.size(); ++c) g.at(c, i, j) = static_cast<float>(v[c]);
        bool water;
        double elev;
        detail::land_and_height(roi, lon, lat, water, elev);
        g.water_mask[i * b.w + j] = water ? 1 : 0;
      }
    out[z] = std::move(g);
  }
  return out;
}

/// Static node features: standardized elevation, slope and relief, land fraction and
/// the four positional encodings, [1, 8, N].
inline NodeTensor<float> synth_statics(const TriMesh& mesh) {
  const auto& roi = mesh.roi;
  std::array<RectGrid<double>, 3> terr;
  std::array<RectGrid<double>, 3> land;
  for (std::size_t z = 0; z < 3; ++z) {
    const auto b = detail::zone_box(roi, mesh.spacing, Zone(z));
    auto e = make_grid<double>(b.lon0, b.lat0, b.res, b.w, b.h, {"elev"});
    auto l = make_grid<double>(b.lon0, b.lat0, b.res, b.w, b.h, {"land"});
    for (std::size_t i = 0; i < b.h; ++i)
      for (std::size_t j = 0; j < b.w; ++j) {
        bool water;
        double h;
        detail::land_and_height(roi, e.lons[j], e.lats[i], water, h);
        e.at(0, i, j) = h;
        l.at(0, i, j) = water ? 0.0 : 1.0;
      }
    terr[z] = terrain_derivatives(e);
    land[z] = std::move(l);
  }
  const std::size_t N = mesh.vertices.size();
  NodeTensor<float> out(1, 8, N, {"elev_std", "slope_std", "relief_std", "land_frac", "pe_sin_lat", "pe_cos_lat",
                                  "pe_sin_lon", "pe_cos_lon"});
  std::vector<double> raw(3 * N);
  const double lat_bar = domain_mean_latitude(mesh);
  for (std::size_t n = 0; n < N; ++n) {
    const auto z = static_cast<std::size_t>(mesh.zone[n]);
    const auto& p = mesh.vertices[n];
    for (std::size_t c = 0; c < 3; ++c) raw[c * N + n] = bilinear_sample(terr[z], p, c);
    out.at(0, 3, n) = static_cast<float>(bilinear_sample(land[z], p, 0));
    const auto pe = positional_encodings(p, lat_bar);
    for (std::size_t k = 0; k < 4; ++k) out.at(0, 4 + k, n) = static_cast<float>(pe[k]);
  }
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0, var = 0;
    for (std::size_t n = 0; n < N; ++n) mean += raw[c * N + n];
    mean /= double(N);
    for (std::size_t n = 0; n < N; ++n) var += (raw[c * N + n] - mean) * (raw[c * N + n] - mean);
    const double sd = std::sqrt(var / double(N));
    for (std::size_t n = 0; n < N; ++n)
      out.at(0, c, n) = static_cast<float>(sd > 1e-12 ? (raw[c * N + n] - mean) / sd : 0.0);
  }
  return out;
}

/// Start time (hours since the epoch) of sequence `s`: train sequences spread over
/// 1990-2018, validation over 2019-2023, test over 2024-2025.
inline std::int64_t synth_start_hours(const SynthConfig& cfg, std::size_t s) {
  const auto n_train = std::size_t(std::floor(double(cfg.sequences) * cfg.train_fraction));
  const auto n_val = std::max<std::size_t>(1, std::size_t(std::floor(double(cfg.sequences) * cfg.val_fraction)));
  const std::int64_t day = 24;
  auto spread = [&](std::int64_t from, std::int64_t to, std::size_t k, std::size_t count) {
    const std::int64_t span_days = (to - from) / day;
    return from + day * (span_days * std::int64_t(k) / std::int64_t(std::max<std::size_t>(1, count)));
  };
  if (s < n_train) return spread(days_from_civil(1990, 1, 1) * day, kValStartHours, s, n_train);
  if (s < n_train + n_val) return spread(kValStartHours, kTestStartHours, s - n_train, n_val);
  return spread(kTestStartHours, days_from_civil(2026, 1, 1) * day, s - n_train - n_val,
                cfg.sequences - n_train - n_val);
}

inline detail::SynthSequence synth_sequence(const TriMesh& mesh, const SynthConfig& cfg, std::size_t s) {
  return detail::SynthSequence(mesh.roi, cfg.seed, s, cfg);
}

/// Generates `cfg.sequences` sequences on `mesh` (which must carry its ROI and spacing).
inline Dataset synth_dataset(const TriMesh& mesh, const SynthConfig& cfg) {
  cfg.validate();
  Dataset d;
  d.statics = synth_statics(mesh);
  const auto specs = default_channel_specs();
  for (std::size_t s = 0; s < cfg.sequences; ++s) {
    const auto seq = synth_sequence(mesh, cfg, s);
    NodeTensor<float> x(cfg.frames, specs.size(), mesh.vertices.size());
    for (std::size_t c = 0; c < specs.size(); ++c) x.channel_names[c] = specs[c].name;
    const std::int64_t t0 = synth_start_hours(cfg, s);
    for (std::size_t t = 0; t < cfg.frames; ++t) {
      const auto grids = synth_grids(mesh.roi, mesh.spacing, seq, double(t));
      ZoneGrids<float> zg;
      for (std::size_t z = 0; z < 3; ++z) zg.set(Zone(z), grids[z]);
      const auto slice = zone_sample(mesh, zg, specs);
      std::copy(slice.data.begin(), slice.data.end(), x.frame(t));
      x.timestamps[t] = t0 + 6 * std::int64_t(t);
    }
    d.sequences.push_back(std::move(x));
  }
  return d;
}

}  // namespace mrgnf
