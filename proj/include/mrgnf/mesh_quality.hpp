// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <vector>

#include "mrgnf/geo.hpp"
#include "mrgnf/mesh.hpp"

namespace mrgnf {

struct TriangleShape {
  std::array<double, 3> angles_deg{};  ///< interior angles at vertices 0, 1, 2
  double area = 0.0;
  double compactness = 0.0;  ///< 4 sqrt(3) A / sum l^2; 1 for equilateral
};

/// Shape measures of a triangle from its Cartesian (chord) corners.
inline TriangleShape triangle_shape(const Vec3& a, const Vec3& b, const Vec3& c) {
  TriangleShape s;
  const std::array<const Vec3*, 3> p{&a, &b, &c};
  double sum_l2 = 0.0;
  for (int k = 0; k < 3; ++k) {
    const Vec3 u = *p[(k + 1) % 3] - *p[k];
    const Vec3 w = *p[(k + 2) % 3] - *p[k];
    s.angles_deg[k] = std::atan2(norm(cross(u, w)), dot(u, w)) * kRadToDeg;
    sum_l2 += dot(u, u);
  }
  s.area = 0.5 * norm(cross(b - a, c - a));
  s.compactness = sum_l2 > 0.0 ? 4.0 * std::sqrt(3.0) * s.area / sum_l2 : 0.0;
  return s;
}

struct MeshQualityReport {
  double min_angle_mean = 0.0;
  double max_angle_mean = 0.0;
  double min_angle_p5 = 0.0;
  double min_angle_p95 = 0.0;
  double min_angle_min = 0.0;
  double compactness_mean = 0.0;
  double h_r_mean = 0.0;
  double degree_mean = 0.0;
  std::map<int, std::size_t> degree_histogram;
  std::size_t V = 0, E = 0, F = 0;
};

namespace detail {

// Linear-interpolated percentile of an ascending sample.
inline double percentile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return 0.0;
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

}  // namespace detail

/// Ratio of an edge's chord length to the target spacing at its midpoint.
inline double edge_length_ratio(const TriMesh& m, const RoiSpec& roi, const SpacingSpec& spec, std::size_t a,
                                std::size_t b) {
  const Vec3 pa = geo_to_ecef(m.ellipsoid, m.vertices[a]);
  const Vec3 pb = geo_to_ecef(m.ellipsoid, m.vertices[b]);
  const double dlon = wrap_lon(m.vertices[b].lon - m.vertices[a].lon);
  const GeoPoint mid(m.vertices[a].lon + 0.5 * dlon, 0.5 * (m.vertices[a].lat + m.vertices[b].lat));
  const double target = spacing_at(roi, spec, mid) * kDegToRad * m.ellipsoid.gaussian_radius(mid.lat * kDegToRad);
  return norm(pb - pa) / target;
}

/// Aggregated triangle, edge and degree statistics; sums run in index order.
inline MeshQualityReport compute_quality(const TriMesh& m, const RoiSpec& roi, const SpacingSpec& spec) {
  MeshQualityReport r;
  r.V = m.vertices.size();
  r.E = m.edges.size();
  r.F = m.triangles.size();

  std::vector<Vec3> xyz(m.vertices.size());
  for (std::size_t i = 0; i < xyz.size(); ++i) xyz[i] = geo_to_ecef(m.ellipsoid, m.vertices[i]);

  std::vector<double> min_angles;
  min_angles.reserve(r.F);
  double sum_min = 0.0, sum_max = 0.0, sum_q = 0.0;
  for (const auto& t : m.triangles) {
    const auto s = triangle_shape(xyz[t[0]], xyz[t[1]], xyz[t[2]]);
    const double mn = std::min({s.angles_deg[0], s.angles_deg[1], s.angles_deg[2]});
    const double mx = std::max({s.angles_deg[0], s.angles_deg[1], s.angles_deg[2]});
    min_angles.push_back(mn);
    sum_min += mn;
    sum_max += mx;
    sum_q += s.compactness;
  }
  if (r.F > 0) {
    const auto f = static_cast<double>(r.F);
    r.min_angle_mean = sum_min / f;
    r.max_angle_mean = sum_max / f;
    r.compactness_mean = sum_q / f;
    std::vector<double> sorted = min_angles;
    std::sort(sorted.begin(), sorted.end());
    r.min_angle_p5 = detail::percentile_sorted(sorted, 0.05);
    r.min_angle_p95 = detail::percentile_sorted(sorted, 0.95);
    r.min_angle_min = sorted.front();
  }

  double sum_hr = 0.0;
  std::vector<int> degree(m.vertices.size(), 0);
  for (const auto& [a, b] : m.edges) {
    sum_hr += edge_length_ratio(m, roi, spec, static_cast<std::size_t>(a), static_cast<std::size_t>(b));
    ++degree[static_cast<std::size_t>(a)];
    ++degree[static_cast<std::size_t>(b)];
  }
  if (r.E > 0) r.h_r_mean = sum_hr / static_cast<double>(r.E);
  if (r.V > 0) r.degree_mean = 2.0 * static_cast<double>(r.E) / static_cast<double>(r.V);
  for (int d : degree) ++r.degree_histogram[d];
  return r;
}

}  // namespace mrgnf
