// SPDX-License-Identifier: Apache-2.0
//
// Zone-aware transfer of rectilinear fields onto mesh nodes.
#pragma once

#include <array>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mrgnf/grid.hpp"
#include "mrgnf/mesh.hpp"
#include "mrgnf/tensor.hpp"

namespace mrgnf {

enum class ChannelKind : std::uint8_t { Surface, PressureLevel, Static, Positional };
enum class Transform : std::uint8_t { Identity, TpLog };

/// How one output channel is produced. Pressure-level channels read the grid channel
/// `<source>@<level>` at the level nearest to `level`. Positional channels are computed
/// from node coordinates (`source` is one of pe_sin_lat, pe_cos_lat, pe_sin_lon, pe_cos_lon).
struct ChannelSpec {
  std::string name;
  std::string source;  ///< grid variable; defaults to `name`
  ChannelKind kind = ChannelKind::Surface;
  std::optional<int> level;  ///< hPa, pressure-level channels only
  Transform transform = Transform::Identity;
  MaskClass mask_class = MaskClass::Any;

  const std::string& variable() const { return source.empty() ? name : source; }

  void validate() const {
    if (name.empty()) throw std::invalid_argument("channel spec needs a name");
    if (kind == ChannelKind::PressureLevel) {
      if (!level || (*level != 850 && *level != 500 && *level != 300))
        throw std::invalid_argument("pressure-level channel '" + name + "' needs level 850, 500 or 300");
    } else if (level) {
      throw std::invalid_argument("channel '" + name + "' is not pressure-level but carries a level");
    }
  }
};

/// Index of the level closest to `target`; ties go to the lower pressure (higher altitude).
inline std::size_t nearest_level(const std::vector<int>& levels, int target) {
  if (levels.empty()) throw std::invalid_argument("nearest_level: no levels");
  std::size_t best = 0;
  for (std::size_t k = 1; k < levels.size(); ++k) {
    const int d = std::abs(levels[k] - target), db = std::abs(levels[best] - target);
    if (d < db || (d == db && levels[k] < levels[best])) best = k;
  }
  return best;
}

inline double tp_to_log(double tp) { return std::log1p(std::max(tp, 0.0)); }
inline double log_to_tp(double y) { return std::expm1(y); }

/// {sin lat, cos lat, sin(lon cos lat_bar), cos(lon cos lat_bar)}, angles in radians.
/// Longitude is used as given; the GeoPoint overload sees it wrapped into [-180, 180).
inline std::array<double, 4> positional_encodings(double lon_deg, double lat_deg, double lat_bar_deg) {
  const double lat = lat_deg * kDegToRad;
  const double arg = lon_deg * kDegToRad * std::cos(lat_bar_deg * kDegToRad);
  return {std::sin(lat), std::cos(lat), std::sin(arg), std::cos(arg)};
}

inline std::array<double, 4> positional_encodings(const GeoPoint& p, double lat_bar_deg) {
  return positional_encodings(p.lon, p.lat, lat_bar_deg);
}

inline double domain_mean_latitude(const TriMesh& m) {
  if (m.vertices.empty()) return 0.0;
  double s = 0.0;
  for (const auto& v : m.vertices) s += v.lat;
  return s / static_cast<double>(m.vertices.size());
}

/// The three native grids, one per zone (indexed by Zone).
template <typename T = float>
struct ZoneGrids {
  std::array<const RectGrid<T>*, 3> grid{nullptr, nullptr, nullptr};

  const RectGrid<T>& of(Zone z) const { return *grid[static_cast<std::size_t>(z)]; }
  void set(Zone z, const RectGrid<T>& g) { grid[static_cast<std::size_t>(z)] = &g; }
};

namespace detail {

struct ResolvedChannel {
  std::size_t grid_channel = 0;
  int pe_index = -1;
};

template <typename T>
std::vector<ResolvedChannel> resolve_channels(const RectGrid<T>& g, const std::vector<ChannelSpec>& specs) {
  std::vector<ResolvedChannel> out;
  for (const auto& s : specs) {
    s.validate();
    ResolvedChannel r;
    if (s.kind == ChannelKind::Positional) {
      static const std::array<const char*, 4> names{"pe_sin_lat", "pe_cos_lat", "pe_sin_lon", "pe_cos_lon"};
      for (int k = 0; k < 4; ++k)
        if (s.variable() == names[k]) r.pe_index = k;
      if (r.pe_index < 0) throw SamplingError("unknown positional encoding '" + s.variable() + "'");
    } else if (s.kind == ChannelKind::PressureLevel) {
      const std::string prefix = s.variable() + "@";
      std::vector<int> levels;
      std::vector<std::size_t> idx;
      for (std::size_t c = 0; c < g.channels(); ++c) {
        const auto& n = g.channel_names[c];
        if (n.rfind(prefix, 0) == 0) {
          levels.push_back(std::stoi(n.substr(prefix.size())));
          idx.push_back(c);
        }
      }
      if (levels.empty()) throw SamplingError("grid has no levels for variable '" + s.variable() + "'");
      r.grid_channel = idx[nearest_level(levels, *s.level)];
    } else {
      r.grid_channel = g.channel_index(s.variable());
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace detail

/// Samples every node from its own zone's grid. Returns a one-frame tensor [1, C, N].
template <typename T>
NodeTensor<float> zone_sample(const TriMesh& mesh, const ZoneGrids<T>& grids, const std::vector<ChannelSpec>& specs) {
  for (std::size_t z = 0; z < 3; ++z)
    if (!grids.grid[z]) throw SamplingError("missing grid for zone '" + std::string(zone_name(Zone(z))) + "'");
  const auto& ref = *grids.grid[0];
  for (std::size_t z = 1; z < 3; ++z)
    if (grids.grid[z]->channel_names != ref.channel_names)
      throw SamplingError("channel-name mismatch between the " + std::string(zone_name(Zone(0))) + " and " +
                          std::string(zone_name(Zone(z))) + " grids");
  const auto resolved = detail::resolve_channels(ref, specs);
  const double lat_bar = domain_mean_latitude(mesh);

  std::vector<std::string> names;
  for (const auto& s : specs) names.push_back(s.name);
  NodeTensor<float> out(1, specs.size(), mesh.vertices.size(), names);
  for (std::size_t n = 0; n < mesh.vertices.size(); ++n) {
    const auto& p = mesh.vertices[n];
    const auto& g = grids.of(mesh.zone[n]);
    for (std::size_t c = 0; c < specs.size(); ++c) {
      double v;
      if (resolved[c].pe_index >= 0) {
        v = positional_encodings(p, lat_bar)[static_cast<std::size_t>(resolved[c].pe_index)];
      } else {
        v = coast_mask_sample(g, p, resolved[c].grid_channel, specs[c].mask_class);
        if (specs[c].transform == Transform::TpLog) v = tp_to_log(v);
      }
      if (!std::isfinite(v))
        throw SamplingError("non-finite sample for channel '" + specs[c].name + "' at node " + std::to_string(n));
      out.at(0, c, n) = static_cast<float>(v);
    }
  }
  return out;
}

/// Samples a sequence of per-zone grid sets into [T, C, N]; frame t uses `sets[t]`.
template <typename T>
NodeTensor<float> zone_sample_frames(const TriMesh& mesh, const std::vector<ZoneGrids<T>>& sets,
                                     const std::vector<ChannelSpec>& specs) {
  NodeTensor<float> out(sets.size(), specs.size(), mesh.vertices.size());
  for (std::size_t c = 0; c < specs.size(); ++c) out.channel_names[c] = specs[c].name;
  for (std::size_t t = 0; t < sets.size(); ++t) {
    const auto slice = zone_sample(mesh, sets[t], specs);
    std::copy(slice.data.begin(), slice.data.end(), out.frame(t));
  }
  return out;
}

/// Raw terrain derivatives of a single-channel elevation grid (meters): elevation,
/// central-difference slope magnitude (one-sided on the border) and 3x3 relief.
template <typename T>
RectGrid<double> terrain_derivatives(const RectGrid<T>& elev, double radius_m = 6371008.8) {
  if (elev.channels() != 1) throw std::invalid_argument("elevation grid must have exactly one channel");
  const std::size_t h = elev.height(), w = elev.width();
  if (h < 3 || w < 3) throw std::invalid_argument("elevation grid must be at least 3x3");
  RectGrid<double> out;
  out.lons = elev.lons;
  out.lats = elev.lats;
  out.resolution = elev.resolution;
  out.channel_names = {"elev", "slope", "relief"};
  out.data.assign(3 * h * w, 0.0);
  out.water_mask = elev.water_mask;
  auto e = [&](std::size_t i, std::size_t j) { return static_cast<double>(elev.at(0, i, j)); };
  for (std::size_t i = 0; i < h; ++i) {
    const double lat = elev.lats[i] * kDegToRad;
    const std::size_t ia = i == 0 ? 0 : i - 1, ib = i + 1 == h ? i : i + 1;
    const double dy = radius_m * (elev.lats[ib] - elev.lats[ia]) * kDegToRad;
    for (std::size_t j = 0; j < w; ++j) {
      const std::size_t ja = j == 0 ? 0 : j - 1, jb = j + 1 == w ? j : j + 1;
      const double dx = radius_m * std::cos(lat) * (elev.lons[jb] - elev.lons[ja]) * kDegToRad;
      const double gx = (e(i, jb) - e(i, ja)) / dx;
      const double gy = (e(ib, j) - e(ia, j)) / dy;
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t a = (i == 0 ? 0 : i - 1); a <= std::min(h - 1, i + 1); ++a)
        for (std::size_t b = (j == 0 ? 0 : j - 1); b <= std::min(w - 1, j + 1); ++b) {
          lo = std::min(lo, e(a, b));
          hi = std::max(hi, e(a, b));
        }
      out.at(0, i, j) = e(i, j);
      out.at(1, i, j) = std::hypot(gx, gy);
      out.at(2, i, j) = hi - lo;
    }
  }
  return out;
}

/// Standardized elevation, slope and relief (zero mean, unit variance per channel).
/// A constant channel standardizes to zero.
template <typename T>
RectGrid<double> compute_static_features(const RectGrid<T>& elev, double radius_m = 6371008.8) {
  RectGrid<double> g = terrain_derivatives(elev, radius_m);
  const std::size_t plane = g.height() * g.width();
  for (std::size_t c = 0; c < 3; ++c) {
    double* v = g.data.data() + c * plane;
    double mean = 0.0;
    for (std::size_t k = 0; k < plane; ++k) mean += v[k];
    mean /= static_cast<double>(plane);
    double var = 0.0;
    for (std::size_t k = 0; k < plane; ++k) var += (v[k] - mean) * (v[k] - mean);
    var /= static_cast<double>(plane);
    const double sd = std::sqrt(var);
    for (std::size_t k = 0; k < plane; ++k) v[k] = sd > 1e-12 ? (v[k] - mean) / sd : 0.0;
  }
  g.channel_names = {"elev_std", "slope_std", "relief_std"};
  return g;
}

}  // namespace mrgnf
