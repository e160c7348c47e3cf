// SPDX-License-Identifier: Apache-2.0
//
// Tri-band regional mesh: spacing field, zone labels and a spacing-driven
// generator (Poisson-disk seeding, planar Delaunay on a conformal projection,
// density-weighted Lloyd relaxation, centroid crop).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mrgnf/delaunay.hpp"
#include "mrgnf/geo.hpp"

namespace mrgnf {

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Zone : std::uint8_t { Roi = 0, Belt = 1, Outer = 2 };

inline std::string_view zone_name(Zone z) {
  switch (z) {
    case Zone::Roi: return "roi";
    case Zone::Belt: return "belt";
    case Zone::Outer: return "outer";
  }
  return "outer";
}

inline Zone parse_zone(std::string_view s) {
  if (s == "roi") return Zone::Roi;
  if (s == "belt") return Zone::Belt;
  if (s == "outer") return Zone::Outer;
  throw std::invalid_argument("unknown zone label '" + std::string(s) + "'");
}

/// Region of interest B plus the margins of the context belt and the outer band.
/// The mesh covers B expanded by belt and outer margins; the outer margins may be zero.
struct RoiSpec {
  double lon_min = -11.0;
  double lon_max = 2.0;
  double lat_min = 49.0;
  double lat_max = 59.0;
  double belt_dlon = 6.0;
  double belt_dlat = 4.0;
  double outer_dlon = 18.0;
  double outer_dlat = 10.0;

  void validate() const {
    if (!(lon_min < lon_max) || !(lat_min < lat_max)) throw std::invalid_argument("ROI bounds must satisfy min < max");
    if (!(belt_dlon > 0.0) || !(belt_dlat > 0.0)) throw std::invalid_argument("belt margins must be positive");
    if (outer_dlon < 0.0 || outer_dlat < 0.0) throw std::invalid_argument("outer margins must be non-negative");
  }

  double center_lon() const { return 0.5 * (lon_min + lon_max); }
  double center_lat() const { return 0.5 * (lat_min + lat_max); }
  double half_lon() const { return 0.5 * (lon_max - lon_min); }
  double half_lat() const { return 0.5 * (lat_max - lat_min); }

  /// Closed-rectangle test for B grown by (dlon, dlat); longitude measured across the seam.
  bool contains(const GeoPoint& p, double dlon = 0.0, double dlat = 0.0) const {
    const double dl = std::abs(wrap_lon(p.lon - center_lon()));
    return dl <= half_lon() + dlon && p.lat >= lat_min - dlat && p.lat <= lat_max + dlat;
  }
  bool in_roi(const GeoPoint& p) const { return contains(p); }
  bool in_belt_box(const GeoPoint& p) const { return contains(p, belt_dlon, belt_dlat); }
  bool in_domain(const GeoPoint& p) const {
    return contains(p, belt_dlon + outer_dlon, belt_dlat + outer_dlat);
  }

  /// Approximate arc distance (degrees) from p to B grown by (dlon, dlat); zero inside.
  double distance_deg(const GeoPoint& p, double dlon = 0.0, double dlat = 0.0) const {
    const double dl = std::abs(wrap_lon(p.lon - center_lon())) - (half_lon() + dlon);
    const double dy = std::max({lat_min - dlat - p.lat, p.lat - (lat_max + dlat), 0.0});
    const double dx = std::max(dl, 0.0) * std::cos(p.lat * kDegToRad);
    return std::hypot(dx, dy);
  }
};

struct SpacingSpec {
  double s_roi = 0.25;
  double s_belt = 0.5;
  double s_outer = 1.0;

  void validate() const {
    if (!(s_roi > 0.0 && s_roi <= s_belt && s_belt <= s_outer))
      throw std::invalid_argument("spacing must satisfy 0 < s_roi <= s_belt <= s_outer");
  }
};

/// Zone label; points on a band boundary take the finer zone.
inline Zone zone_of(const RoiSpec& roi, const GeoPoint& p) {
  if (roi.in_roi(p)) return Zone::Roi;
  if (roi.in_belt_box(p)) return Zone::Belt;
  return Zone::Outer;
}

inline double spacing_for(const SpacingSpec& spec, Zone z) {
  switch (z) {
    case Zone::Roi: return spec.s_roi;
    case Zone::Belt: return spec.s_belt;
    case Zone::Outer: return spec.s_outer;
  }
  return spec.s_outer;
}

/// Target node spacing (degrees of arc), piecewise constant over the three bands.
inline double spacing_at(const RoiSpec& roi, const SpacingSpec& spec, const GeoPoint& p) {
  return spacing_for(spec, zone_of(roi, p));
}

struct TriMesh {
  Ellipsoid ellipsoid;
  std::vector<GeoPoint> vertices;
  std::vector<Triangle> triangles;
  std::vector<Zone> zone;
  std::vector<std::pair<std::int32_t, std::int32_t>> edges;  ///< sorted, i < j
  RoiSpec roi;          ///< bands the mesh was generated for
  SpacingSpec spacing;

  std::size_t vertex_count() const { return vertices.size(); }

  /// Rebuilds `edges` as the deduplicated union of triangle sides.
  void derive_edges() {
    edges.clear();
    edges.reserve(triangles.size() * 3);
    for (const auto& t : triangles) {
      for (int k = 0; k < 3; ++k) {
        auto a = t[k], b = t[(k + 1) % 3];
        if (a > b) std::swap(a, b);
        edges.emplace_back(a, b);
      }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  }

  /// Checks index validity, degeneracy and label count; throws MeshError.
  void validate() const {
    const auto n = static_cast<std::int32_t>(vertices.size());
    if (zone.size() != vertices.size()) throw MeshError("zone label count does not match vertex count");
    for (const auto& t : triangles) {
      for (auto i : t)
        if (i < 0 || i >= n) throw MeshError("triangle index out of range");
      if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) throw MeshError("degenerate triangle");
    }
  }

  long euler_characteristic() const {
    return static_cast<long>(vertices.size()) - static_cast<long>(edges.size()) +
           static_cast<long>(triangles.size());
  }
};

struct MeshBuildOptions {
  int relax_iterations = 25;       ///< iteration cap for Lloyd relaxation
  double convergence_tol = 0.02;   ///< RMS node displacement per sweep, in units of local spacing
  double gradation = 0.3;          ///< max growth of the generation size field per degree of arc
  double min_separation = 0.7;     ///< Poisson-disk radius, in units of local spacing
  double overrelaxation = 1.8;     ///< Lloyd step multiplier; values in (1, 2) converge faster
};

namespace detail {

// Smooth size field used for generation: the zone spacing, limited so it grows
// by at most `gradation` degrees per degree of distance from each finer band.
inline double generation_size(const RoiSpec& roi, const SpacingSpec& spec, double gradation,
                              const GeoPoint& p) {
  double h = spacing_at(roi, spec, p);
  h = std::min(h, spec.s_roi + gradation * roi.distance_deg(p));
  h = std::min(h, spec.s_belt + gradation * roi.distance_deg(p, roi.belt_dlon, roi.belt_dlat));
  return h;
}

class MeshGenerator {
 public:
  MeshGenerator(const Ellipsoid& e, const RoiSpec& roi, const SpacingSpec& spec, std::uint64_t seed,
                const MeshBuildOptions& opt)
      : ell_(e),
        roi_(roi),
        spec_(spec),
        opt_(opt),
        rng_(seed),
        proj_(roi.center_lon(), roi.center_lat()) {
    dlon_ = roi.belt_dlon + roi.outer_dlon;
    dlat_ = roi.belt_dlat + roi.outer_dlat;
    lon0_ = roi.lon_min - dlon_;
    lon1_ = roi.lon_max + dlon_;
    lat0_ = roi.lat_min - dlat_;
    lat1_ = roi.lat_max + dlat_;
  }

  TriMesh build() {
    check_domain();
    place_boundary();
    seed_interior();
    relax();
    return finish();
  }

 private:
  void check_domain() const {
    // The projection and the crop both need the domain to stay well inside one hemisphere.
    const bool too_wide = (lon1_ - lon0_) >= 180.0;
    const bool too_tall = lat0_ <= -89.0 || lat1_ >= 89.0;
    if (too_wide || too_tall)
      throw MeshError("mesh relaxation cannot converge within the iteration cap: domain [" +
                      std::to_string(lon0_) + ", " + std::to_string(lon1_) + "] x [" + std::to_string(lat0_) +
                      ", " + std::to_string(lat1_) + "] exceeds a hemisphere");
  }

  double size_deg(double lon, double lat) const {
    return generation_size(roi_, spec_, opt_.gradation, GeoPoint(lon, lat));
  }

  // Planar target size at a plane point.
  double size_plane(const Vec2& x) const {
    const auto ll = proj_.inverse(x[0], x[1]);
    return size_deg(ll[0], ll[1]) * kDegToRad * Stereographic::scale_at(x[0], x[1]);
  }

  Vec2 to_plane(double lon, double lat) const {
    const auto p = proj_.forward(lon, lat);
    return {p[0], p[1]};
  }

  void add_boundary_edge(double lon_a, double lat_a, double lon_b, double lat_b) {
    // Place nodes at equal increments of the integral of ds / h along the edge.
    constexpr int kSamples = 2000;
    std::vector<double> cum(kSamples + 1, 0.0);
    for (int i = 0; i < kSamples; ++i) {
      const double t = (i + 0.5) / kSamples;
      const double lon = lon_a + t * (lon_b - lon_a);
      const double lat = lat_a + t * (lat_b - lat_a);
      const double ds = std::hypot((lon_b - lon_a) * std::cos(lat * kDegToRad), lat_b - lat_a) / kSamples;
      cum[i + 1] = cum[i] + ds / size_deg(lon, lat);
    }
    const int n = std::max(1, static_cast<int>(std::lround(cum.back())));
    int j = 0;
    for (int k = 0; k < n; ++k) {  // excludes the end corner, added by the next edge
      const double target = cum.back() * k / n;
      while (j < kSamples && cum[j + 1] < target) ++j;
      const double frac = (cum[j + 1] > cum[j]) ? (target - cum[j]) / (cum[j + 1] - cum[j]) : 0.0;
      const double t = (j + frac) / kSamples;
      const double lon = lon_a + t * (lon_b - lon_a);
      const double lat = lat_a + t * (lat_b - lat_a);
      geo_.push_back({lon, lat});
    }
  }

  void place_boundary() {
    add_boundary_edge(lon0_, lat0_, lon1_, lat0_);
    add_boundary_edge(lon1_, lat0_, lon1_, lat1_);
    add_boundary_edge(lon1_, lat1_, lon0_, lat1_);
    add_boundary_edge(lon0_, lat1_, lon0_, lat0_);
    n_fixed_ = geo_.size();
    for (const auto& g : geo_) pos_.push_back(to_plane(g[0], g[1]));
  }

  // Expected node count for an equilateral packing: 2 / (sqrt(3) h^2) per unit area.
  double expected_nodes() const {
    const int nl = 400, nf = 400;
    const double dl = (lon1_ - lon0_) / nl, df = (lat1_ - lat0_) / nf;
    double total = 0.0;
    for (int i = 0; i < nf; ++i) {
      const double lat = lat0_ + (i + 0.5) * df;
      const double area = dl * df * std::cos(lat * kDegToRad);
      for (int j = 0; j < nl; ++j) {
        const double h = size_deg(lon0_ + (j + 0.5) * dl, lat);
        total += area * 2.0 / (std::sqrt(3.0) * h * h);
      }
    }
    return total;
  }

  struct Hash {
    double cell;
    double x0, y0;
    int nx, ny;
    std::vector<std::vector<std::int32_t>> bins;
    int cx(double x) const { return std::clamp(static_cast<int>((x - x0) / cell), 0, nx - 1); }
    int cy(double y) const { return std::clamp(static_cast<int>((y - y0) / cell), 0, ny - 1); }
  };

  void seed_interior() {
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& p : pos_) {
      xmin = std::min(xmin, p[0]);
      xmax = std::max(xmax, p[0]);
      ymin = std::min(ymin, p[1]);
      ymax = std::max(ymax, p[1]);
    }
    const double hmin = spec_.s_roi * kDegToRad;
    Hash hash{hmin, xmin, ymin, 0, 0, {}};
    hash.nx = std::max(1, static_cast<int>((xmax - xmin) / hmin) + 1);
    hash.ny = std::max(1, static_cast<int>((ymax - ymin) / hmin) + 1);
    hash.bins.resize(static_cast<std::size_t>(hash.nx) * hash.ny);
    auto bin = [&](const Vec2& p) -> auto& {
      return hash.bins[static_cast<std::size_t>(hash.cy(p[1])) * hash.nx + hash.cx(p[0])];
    };
    for (std::size_t i = 0; i < pos_.size(); ++i) bin(pos_[i]).push_back(static_cast<std::int32_t>(i));

    const double target = expected_nodes() - 0.5 * static_cast<double>(n_fixed_);
    const auto wanted = static_cast<std::size_t>(std::max(0.0, std::round(target)));
    const double sin0 = std::sin(lat0_ * kDegToRad), sin1 = std::sin(lat1_ * kDegToRad);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t max_attempts = 400 * (wanted + 10);
    std::size_t placed = 0;
    for (std::size_t attempt = 0; attempt < max_attempts && placed < wanted; ++attempt) {
      // Area-uniform candidate, thinned to density proportional to 1/h^2.
      const double lon = lon0_ + (lon1_ - lon0_) * unit(rng_);
      const double lat = std::asin(sin0 + (sin1 - sin0) * unit(rng_)) * kRadToDeg;
      const double h = size_deg(lon, lat);
      const double keep = (spec_.s_roi / h) * (spec_.s_roi / h);
      if (unit(rng_) > keep) continue;
      const Vec2 p = to_plane(lon, lat);
      const double r = opt_.min_separation * h * kDegToRad * Stereographic::scale_at(p[0], p[1]);
      const int reach = static_cast<int>(std::ceil(r / hash.cell));
      const int ix = hash.cx(p[0]), iy = hash.cy(p[1]);
      bool ok = true;
      for (int y = std::max(0, iy - reach); ok && y <= std::min(hash.ny - 1, iy + reach); ++y) {
        for (int x = std::max(0, ix - reach); ok && x <= std::min(hash.nx - 1, ix + reach); ++x) {
          for (auto q : hash.bins[static_cast<std::size_t>(y) * hash.nx + x]) {
            const double dx = pos_[q][0] - p[0], dy = pos_[q][1] - p[1];
            if (dx * dx + dy * dy < r * r) {
              ok = false;
              break;
            }
          }
        }
      }
      if (!ok) continue;
      bin(p).push_back(static_cast<std::int32_t>(pos_.size()));
      pos_.push_back(p);
      ++placed;
    }
  }

  // Keeps a relaxed interior node inside the domain, at least a fraction of a spacing
  // away from the fixed boundary.
  Vec2 clamp_inside(const Vec2& p) const {
    auto ll = proj_.inverse(p[0], p[1]);
    const double h = size_deg(wrap_lon(ll[0]), ll[1]);
    const double lat_m = 0.4 * h;
    const double lon_m = lat_m / std::max(0.05, std::cos(ll[1] * kDegToRad));
    const double lon = std::clamp(ll[0], lon0_ + lon_m, lon1_ - lon_m);
    const double lat = std::clamp(ll[1], lat0_ + lat_m, lat1_ - lat_m);
    if (lon == ll[0] && lat == ll[1]) return p;
    return to_plane(lon, lat);
  }

  static Vec2 circumcenter(const Vec2& a, const Vec2& b, const Vec2& c) {
    const double bx = b[0] - a[0], by = b[1] - a[1];
    const double cx = c[0] - a[0], cy = c[1] - a[1];
    const double d = 2.0 * (bx * cy - by * cx);
    const double b2 = bx * bx + by * by, c2 = cx * cx + cy * cy;
    return {a[0] + (cy * b2 - by * c2) / d, a[1] + (bx * c2 - cx * b2) / d};
  }

  // Incident triangles of every vertex, ordered counter-clockwise; `closed` marks full fans.
  void build_fans(const std::vector<Triangle>& tris, std::vector<std::vector<std::int32_t>>& fans,
                  std::vector<char>& closed) const {
    const std::size_t n = pos_.size();
    fans.assign(n, {});
    closed.assign(n, 0);
    for (std::size_t t = 0; t < tris.size(); ++t)
      for (auto v : tris[t]) fans[static_cast<std::size_t>(v)].push_back(static_cast<std::int32_t>(t));
    for (std::size_t v = 0; v < n; ++v) {
      auto& f = fans[v];
      if (f.size() < 3) continue;
      // For a vertex v in CCW triangle (v, a, b), the next triangle around v contains (v, b, ·).
      auto next_of = [&](std::int32_t t) {
        const auto& tr = tris[static_cast<std::size_t>(t)];
        int k = 0;
        while (tr[k] != static_cast<std::int32_t>(v)) ++k;
        return tr[(k + 2) % 3];
      };
      auto prev_of = [&](std::int32_t t) {
        const auto& tr = tris[static_cast<std::size_t>(t)];
        int k = 0;
        while (tr[k] != static_cast<std::int32_t>(v)) ++k;
        return tr[(k + 1) % 3];
      };
      std::vector<std::int32_t> ordered;
      ordered.reserve(f.size());
      ordered.push_back(f[0]);
      std::vector<char> used(f.size(), 0);
      used[0] = 1;
      bool ok = true;
      for (std::size_t step = 1; step < f.size(); ++step) {
        const auto want = next_of(ordered.back());
        bool found = false;
        for (std::size_t i = 0; i < f.size(); ++i) {
          if (!used[i] && prev_of(f[i]) == want) {
            used[i] = 1;
            ordered.push_back(f[i]);
            found = true;
            break;
          }
        }
        if (!found) {
          ok = false;
          break;
        }
      }
      if (ok && next_of(ordered.back()) == prev_of(ordered.front())) {
        f = std::move(ordered);
        closed[v] = 1;
      }
    }
  }

  // One density-weighted Lloyd sweep; returns the RMS displacement in units of local spacing.
  double lloyd_sweep() {
    const auto tris = delaunay_triangulate(pos_);
    std::vector<std::vector<std::int32_t>> fans;
    std::vector<char> closed;
    build_fans(tris, fans, closed);
    std::vector<Vec2> cc(tris.size());
    for (std::size_t t = 0; t < tris.size(); ++t)
      cc[t] = circumcenter(pos_[tris[t][0]], pos_[tris[t][1]], pos_[tris[t][2]]);

    std::vector<Vec2> next = pos_;
    double sum_sq = 0.0;
    std::size_t moved = 0;
    for (std::size_t v = n_fixed_; v < pos_.size(); ++v) {
      if (!closed[v]) continue;
      const auto& f = fans[v];
      const Vec2& x = pos_[v];
      double wsum = 0.0, gx = 0.0, gy = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) {
        const Vec2& c0 = cc[static_cast<std::size_t>(f[i])];
        const Vec2& c1 = cc[static_cast<std::size_t>(f[(i + 1) % f.size()])];
        const double area = 0.5 * orient2d(x, c0, c1);
        const Vec2 g{(x[0] + c0[0] + c1[0]) / 3.0, (x[1] + c0[1] + c1[1]) / 3.0};
        const double h = size_plane(g);
        const double rho = 1.0 / (h * h * h * h);
        wsum += rho * area;
        gx += rho * area * g[0];
        gy += rho * area * g[1];
      }
      if (!(wsum > 0.0)) continue;
      const double w = opt_.overrelaxation;
      const Vec2 target = clamp_inside({x[0] + w * (gx / wsum - x[0]), x[1] + w * (gy / wsum - x[1])});
      const double h = size_plane(x);
      const double dx = target[0] - x[0], dy = target[1] - x[1];
      sum_sq += (dx * dx + dy * dy) / (h * h);
      ++moved;
      next[v] = target;
    }
    pos_ = std::move(next);
    return moved ? std::sqrt(sum_sq / static_cast<double>(moved)) : 0.0;
  }

  void relax() {
    double rms = opt_.relax_iterations > 0 ? 1e300 : 0.0;
    for (int it = 0; it < opt_.relax_iterations; ++it) {
      rms = lloyd_sweep();
      if (!std::isfinite(rms) || rms < 0.1 * opt_.convergence_tol) break;
    }
    if (!(rms <= opt_.convergence_tol))
      throw MeshError("mesh relaxation did not converge within " + std::to_string(opt_.relax_iterations) +
                      " iterations (last RMS displacement " + std::to_string(rms) +
                      " spacings); check the spacing specification");
  }

  TriMesh finish() {
    auto tris = delaunay_triangulate(pos_);
    // Keep a triangle iff its centroid falls inside the crop domain.
    std::vector<char> keep(tris.size(), 0);
    std::vector<std::array<double, 2>> ll(pos_.size());
    for (std::size_t i = 0; i < pos_.size(); ++i) ll[i] = proj_.inverse(pos_[i][0], pos_[i][1]);
    for (std::size_t t = 0; t < tris.size(); ++t) {
      const Vec2 c{(pos_[tris[t][0]][0] + pos_[tris[t][1]][0] + pos_[tris[t][2]][0]) / 3.0,
                   (pos_[tris[t][0]][1] + pos_[tris[t][1]][1] + pos_[tris[t][2]][1]) / 3.0};
      const auto cl = proj_.inverse(c[0], c[1]);
      keep[t] = roi_.in_domain(GeoPoint(cl[0], cl[1])) ? 1 : 0;
    }
    std::vector<std::int32_t> remap(pos_.size(), -1);
    TriMesh m;
    m.ellipsoid = ell_;
    for (std::size_t t = 0; t < tris.size(); ++t) {
      if (!keep[t]) continue;
      Triangle out{};
      for (int k = 0; k < 3; ++k) {
        const auto v = static_cast<std::size_t>(tris[t][k]);
        if (remap[v] < 0) {
          remap[v] = static_cast<std::int32_t>(m.vertices.size());
          m.vertices.emplace_back(quantize(wrap_lon(ll[v][0])), quantize(ll[v][1]));
        }
        out[k] = remap[v];
      }
      m.triangles.push_back(out);
    }
    m.zone.reserve(m.vertices.size());
    for (const auto& p : m.vertices) m.zone.push_back(zone_of(roi_, p));
    m.derive_edges();
    m.validate();
    return m;
  }

  // Coordinates are stored at 1e-9 degree so the text mesh format round-trips exactly.
  static double quantize(double deg) { return std::round(deg * 1e9) / 1e9; }

  Ellipsoid ell_;
  RoiSpec roi_;
  SpacingSpec spec_;
  MeshBuildOptions opt_;
  std::mt19937_64 rng_;
  Stereographic proj_;
  double dlon_, dlat_, lon0_, lon1_, lat0_, lat1_;
  std::vector<std::array<double, 2>> geo_;
  std::vector<Vec2> pos_;
  std::size_t n_fixed_ = 0;
};

}  // namespace detail

/// Builds the cropped, zone-labelled tri-band mesh. Deterministic for a fixed seed.
/// Rounds coordinates to a 1e-9 degree grid, the precision of the mesh file format, so a
/// saved mesh reads back bit-identical.
inline void snap_coordinates(TriMesh& m) {
  for (auto& v : m.vertices) {
    v.lon = std::round(v.lon * 1e9) / 1e9;
    v.lat = std::round(v.lat * 1e9) / 1e9;
    if (v.lon >= 180.0) v.lon -= 360.0;
  }
}

inline TriMesh build_mesh(const Ellipsoid& e, const RoiSpec& roi, const SpacingSpec& spec, std::uint64_t seed,
                          const MeshBuildOptions& options = {}) {
  roi.validate();
  spec.validate();
  detail::MeshGenerator gen(e, roi, spec, seed, options);
  TriMesh m = gen.build();
  snap_coordinates(m);
  m.roi = roi;
  m.spacing = spec;
  return m;
}

}  // namespace mrgnf
