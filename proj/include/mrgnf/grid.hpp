// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrgnf/geo.hpp"

namespace mrgnf {

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class MaskClass : std::uint8_t { Any = 0, Land = 1, Water = 2 };

/// Rectilinear lat-lon multi-channel field at one resolution. `data` is [C, H, W]
/// row-major with H = |lats| and W = |lons|; `water_mask` is [H, W] (true = water) or empty.
template <typename T = float>
struct RectGrid {
  std::vector<double> lons;
  std::vector<double> lats;
  double resolution = 0.0;
  std::vector<std::string> channel_names;
  std::vector<T> data;
  std::vector<std::uint8_t> water_mask;

  std::size_t channels() const { return channel_names.size(); }
  std::size_t height() const { return lats.size(); }
  std::size_t width() const { return lons.size(); }
  bool has_mask() const { return !water_mask.empty(); }

  T& at(std::size_t c, std::size_t i, std::size_t j) { return data[(c * height() + i) * width() + j]; }
  const T& at(std::size_t c, std::size_t i, std::size_t j) const { return data[(c * height() + i) * width() + j]; }
  bool water(std::size_t i, std::size_t j) const { return water_mask[i * width() + j] != 0; }

  /// True when the longitude axis closes around the globe.
  bool wraps() const { return std::abs(static_cast<double>(width()) * resolution - 360.0) < 1e-6; }

  std::size_t channel_index(const std::string& name) const {
    for (std::size_t c = 0; c < channel_names.size(); ++c)
      if (channel_names[c] == name) return c;
    throw SamplingError("grid has no channel '" + name + "'");
  }

  void validate() const {
    if (lons.size() < 2 || lats.size() < 2) throw std::invalid_argument("grid axes need at least two points");
    if (!(resolution > 0.0)) throw std::invalid_argument("grid resolution must be positive");
    for (std::size_t j = 1; j < lons.size(); ++j)
      if (std::abs(lons[j] - lons[j - 1] - resolution) > 1e-9)
        throw std::invalid_argument("longitude axis is not uniform at the stated resolution");
    for (std::size_t i = 1; i < lats.size(); ++i)
      if (std::abs(lats[i] - lats[i - 1] - resolution) > 1e-9)
        throw std::invalid_argument("latitude axis is not uniform at the stated resolution");
    if (lons.front() < -180.0 || lons.front() >= 180.0)
      throw std::invalid_argument("longitudes must start in [-180, 180)");
    if (data.size() != channels() * height() * width()) throw std::invalid_argument("grid payload size mismatch");
    if (has_mask() && water_mask.size() != height() * width()) throw std::invalid_argument("mask size mismatch");
  }
};

/// Uniform grid with `w` longitudes from `lon0` and `h` latitudes from `lat0`, zero-filled.
template <typename T = float>
RectGrid<T> make_grid(double lon0, double lat0, double res, std::size_t w, std::size_t h,
                      std::vector<std::string> names) {
  RectGrid<T> g;
  g.resolution = res;
  g.lons.resize(w);
  g.lats.resize(h);
  for (std::size_t j = 0; j < w; ++j) g.lons[j] = lon0 + res * static_cast<double>(j);
  for (std::size_t i = 0; i < h; ++i) g.lats[i] = lat0 + res * static_cast<double>(i);
  g.channel_names = std::move(names);
  g.data.assign(g.channels() * h * w, T{});
  return g;
}

/// Four-point stencil and normalized offsets for a sample location.
struct Stencil {
  std::size_t i0 = 0, i1 = 0, j0 = 0, j1 = 0;
  double tx = 0.0, ty = 0.0;

  std::array<double, 4> weights() const {
    return {(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty};
  }
};

namespace detail {

// Index of the cell [axis[k], axis[k+1]] containing v given a first guess; axis ascending.
inline std::size_t bracket(const std::vector<double>& axis, double v, std::ptrdiff_t guess) {
  const auto last = static_cast<std::ptrdiff_t>(axis.size()) - 2;
  std::ptrdiff_t k = std::clamp<std::ptrdiff_t>(guess, 0, last);
  while (k > 0 && v < axis[static_cast<std::size_t>(k)]) --k;
  while (k < last && v >= axis[static_cast<std::size_t>(k + 1)]) ++k;
  return static_cast<std::size_t>(k);
}

}  // namespace detail

template <typename T>
Stencil locate(const RectGrid<T>& g, const GeoPoint& p) {
  Stencil s;
  const double lat0 = g.lats.front(), lat1 = g.lats.back();
  if (!(p.lat >= lat0 && p.lat <= lat1))
    throw SamplingError("latitude " + std::to_string(p.lat) + " outside grid range [" + std::to_string(lat0) + ", " +
                        std::to_string(lat1) + "]");
  s.i0 = detail::bracket(g.lats, p.lat, static_cast<std::ptrdiff_t>(std::floor((p.lat - lat0) / g.resolution)));
  s.i1 = s.i0 + 1;
  s.ty = (p.lat - g.lats[s.i0]) / (g.lats[s.i1] - g.lats[s.i0]);

  // Longitude offset from the first column on the wrapped axis.
  double d = p.lon - g.lons.front();
  d = std::fmod(d, 360.0);
  if (d < 0.0) d += 360.0;
  const std::size_t w = g.width();
  if (g.wraps()) {
    auto j0 = static_cast<std::size_t>(std::floor(d / g.resolution));
    if (j0 >= w) j0 = w - 1;
    s.j0 = j0;
    s.j1 = (j0 + 1) % w;
    s.tx = std::clamp(d / g.resolution - static_cast<double>(j0), 0.0, 1.0);
    return s;
  }
  const double lon = g.lons.front() + d;
  if (lon > g.lons.back())
    throw SamplingError("longitude " + std::to_string(p.lon) + " outside grid range [" +
                        std::to_string(g.lons.front()) + ", " + std::to_string(g.lons.back()) + "]");
  s.j0 = detail::bracket(g.lons, lon, static_cast<std::ptrdiff_t>(std::floor(d / g.resolution)));
  s.j1 = s.j0 + 1;
  s.tx = (lon - g.lons[s.j0]) / (g.lons[s.j1] - g.lons[s.j0]);
  return s;
}

namespace detail {

template <typename T>
double bilinear_at(const RectGrid<T>& g, const Stencil& s, std::size_t c) {
  const double f00 = static_cast<double>(g.at(c, s.i0, s.j0));
  const double f01 = static_cast<double>(g.at(c, s.i0, s.j1));
  const double f10 = static_cast<double>(g.at(c, s.i1, s.j0));
  const double f11 = static_cast<double>(g.at(c, s.i1, s.j1));
  const double tx = s.tx, ty = s.ty;
  return (1.0 - tx) * (1.0 - ty) * f00 + tx * (1.0 - ty) * f01 + (1.0 - tx) * ty * f10 + tx * ty * f11;
}

inline bool class_matches(bool is_water, MaskClass mc) {
  return mc == MaskClass::Any || (mc == MaskClass::Water) == is_water;
}

}  // namespace detail

/// Bilinear interpolation of one channel at `p`; no latitude extrapolation.
template <typename T>
double bilinear_sample(const RectGrid<T>& g, const GeoPoint& p, std::size_t channel) {
  return detail::bilinear_at(g, locate(g, p), channel);
}

/// Bilinear sample restricted to stencil cells of one land/water class.
///
/// Mismatching corners get zero weight and the rest are renormalized. When no matching
/// corner carries weight, the nearest matching cell in the 5x5 window around the closest
/// grid point is used, and plain bilinear if there is none.
template <typename T>
double coast_mask_sample(const RectGrid<T>& g, const GeoPoint& p, std::size_t channel, MaskClass mc) {
  const Stencil s = locate(g, p);
  if (mc == MaskClass::Any || !g.has_mask()) return detail::bilinear_at(g, s, channel);
  const std::array<std::size_t, 4> ii{s.i0, s.i0, s.i1, s.i1};
  const std::array<std::size_t, 4> jj{s.j0, s.j1, s.j0, s.j1};
  std::array<bool, 4> ok{};
  bool all = true;
  for (int k = 0; k < 4; ++k) {
    ok[k] = detail::class_matches(g.water(ii[k], jj[k]), mc);
    all = all && ok[k];
  }
  if (all) return detail::bilinear_at(g, s, channel);

  const auto w = s.weights();
  double wsum = 0.0, acc = 0.0;
  for (int k = 0; k < 4; ++k) {
    if (!ok[k]) continue;
    wsum += w[k];
    acc += w[k] * static_cast<double>(g.at(channel, ii[k], jj[k]));
  }
  if (wsum > 0.0) return acc / wsum;

  // Nearest same-class cell around the closest grid point.
  const std::size_t ic = s.ty < 0.5 ? s.i0 : s.i1;
  const std::size_t jc = s.tx < 0.5 ? s.j0 : s.j1;
  const auto h = static_cast<std::ptrdiff_t>(g.height());
  const auto wd = static_cast<std::ptrdiff_t>(g.width());
  const double coslat = std::cos(p.lat * kDegToRad);
  double best = 1e300;
  double value = 0.0;
  bool found = false;
  for (std::ptrdiff_t di = -2; di <= 2; ++di) {
    const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(ic) + di;
    if (i < 0 || i >= h) continue;
    for (std::ptrdiff_t dj = -2; dj <= 2; ++dj) {
      std::ptrdiff_t j = static_cast<std::ptrdiff_t>(jc) + dj;
      if (g.wraps()) j = ((j % wd) + wd) % wd;
      if (j < 0 || j >= wd) continue;
      const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
      if (!detail::class_matches(g.water(ui, uj), mc)) continue;
      const double dy = g.lats[ui] - p.lat;
      const double dx = wrap_lon(g.lons[uj] - p.lon) * coslat;
      const double d2 = dx * dx + dy * dy;
      if (d2 < best) {
        best = d2;
        value = static_cast<double>(g.at(channel, ui, uj));
        found = true;
      }
    }
  }
  return found ? value : detail::bilinear_at(g, s, channel);
}

}  // namespace mrgnf
