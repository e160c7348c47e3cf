// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mrgnf {

inline constexpr double kDegToRad = std::numbers::pi / 180.0;
inline constexpr double kRadToDeg = 180.0 / std::numbers::pi;

/// Wraps a longitude into [-180, 180).
inline double wrap_lon(double lon) {
  if (lon >= -180.0 && lon < 180.0) return lon;
  double w = std::fmod(lon + 180.0, 360.0);
  if (w < 0.0) w += 360.0;
  w -= 180.0;
  // fmod rounding can land exactly on +180
  if (w >= 180.0) w -= 360.0;
  return w;
}

struct GeoPoint {
  double lon = 0.0;  ///< degrees, [-180, 180)
  double lat = 0.0;  ///< degrees, [-90, 90]

  GeoPoint() = default;
  GeoPoint(double lon_deg, double lat_deg) : lon(wrap_lon(lon_deg)), lat(lat_deg) {}
};

using Vec3 = std::array<double, 3>;

inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

/// Ellipsoid of revolution with semi-major axis `a` and semi-minor axis `b`, meters.
struct Ellipsoid {
  double a = 6378137.0;
  double b = 6356752.3;

  Ellipsoid() = default;
  Ellipsoid(double semi_major, double semi_minor) : a(semi_major), b(semi_minor) {
    if (!(b > 0.0) || !(a >= b)) throw std::invalid_argument("ellipsoid requires a >= b > 0");
  }

  double e2() const { return 1.0 - (b * b) / (a * a); }

  /// Prime-vertical radius of curvature at geodetic latitude (radians).
  double prime_vertical_radius(double lat_rad) const {
    const double s = std::sin(lat_rad);
    return a / std::sqrt(1.0 - e2() * s * s);
  }

  /// Meridional radius of curvature at geodetic latitude (radians).
  double meridional_radius(double lat_rad) const {
    const double s = std::sin(lat_rad);
    const double w = 1.0 - e2() * s * s;
    return a * (1.0 - e2()) / (w * std::sqrt(w));
  }

  /// Gaussian mean radius sqrt(M N); used to turn an angular spacing into meters.
  double gaussian_radius(double lat_rad) const {
    return std::sqrt(meridional_radius(lat_rad) * prime_vertical_radius(lat_rad));
  }
};

/// Geodetic (height zero) to Earth-centred Cartesian coordinates, meters.
inline Vec3 geo_to_ecef(const Ellipsoid& e, const GeoPoint& p) {
  const double lat = p.lat * kDegToRad;
  const double lon = p.lon * kDegToRad;
  const double n = e.prime_vertical_radius(lat);
  const double cl = std::cos(lat);
  const double ratio = (e.b * e.b) / (e.a * e.a);
  return {n * cl * std::cos(lon), n * cl * std::sin(lon), n * ratio * std::sin(lat)};
}

/// Central angle between two points on the unit sphere, radians (haversine).
inline double central_angle(const GeoPoint& p, const GeoPoint& q) {
  const double dlat = (q.lat - p.lat) * kDegToRad;
  const double dlon = (q.lon - p.lon) * kDegToRad;
  const double s1 = std::sin(0.5 * dlat);
  const double s2 = std::sin(0.5 * dlon);
  const double h = s1 * s1 + std::cos(p.lat * kDegToRad) * std::cos(q.lat * kDegToRad) * s2 * s2;
  return 2.0 * std::asin(std::min(1.0, std::sqrt(h)));
}

/// Oblique stereographic projection of the unit sphere about a centre point.
/// Conformal, so triangle shape quality carries over between the plane and the sphere.
class Stereographic {
 public:
  Stereographic(double lon0_deg, double lat0_deg)
      : lon0_(lon0_deg * kDegToRad),
        sin0_(std::sin(lat0_deg * kDegToRad)),
        cos0_(std::cos(lat0_deg * kDegToRad)) {}

  std::array<double, 2> forward(double lon_deg, double lat_deg) const {
    const double lat = lat_deg * kDegToRad;
    const double dl = lon_deg * kDegToRad - lon0_;
    const double sl = std::sin(lat), cl = std::cos(lat);
    const double k = 2.0 / (1.0 + sin0_ * sl + cos0_ * cl * std::cos(dl));
    return {k * cl * std::sin(dl), k * (cos0_ * sl - sin0_ * cl * std::cos(dl))};
  }

  /// Returns {lon, lat} in degrees (lon not wrapped).
  std::array<double, 2> inverse(double x, double y) const {
    const double rho = std::hypot(x, y);
    if (rho < 1e-15) return {lon0_ * kRadToDeg, std::asin(sin0_) * kRadToDeg};
    const double c = 2.0 * std::atan(0.5 * rho);
    const double sc = std::sin(c), cc = std::cos(c);
    const double lat = std::asin(std::clamp(cc * sin0_ + y * sc * cos0_ / rho, -1.0, 1.0));
    const double lon = lon0_ + std::atan2(x * sc, rho * cos0_ * cc - y * sin0_ * sc);
    return {lon * kRadToDeg, lat * kRadToDeg};
  }

  /// Local scale factor (planar length per unit arc length) at a plane point.
  static double scale_at(double x, double y) { return 1.0 + 0.25 * (x * x + y * y); }

 private:
  double lon0_;
  double sin0_;
  double cos0_;
};

}  // namespace mrgnf
