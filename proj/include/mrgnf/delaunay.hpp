// SPDX-License-Identifier: Apache-2.0
//
// Incremental Bowyer-Watson Delaunay triangulation in the plane.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace mrgnf {

using Vec2 = std::array<double, 2>;
using Triangle = std::array<std::int32_t, 3>;

namespace detail {

inline double orient2d(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
}

// > 0 when d lies strictly inside the circumcircle of the CCW triangle (a, b, c).
inline double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double adx = a[0] - d[0], ady = a[1] - d[1];
  const double bdx = b[0] - d[0], bdy = b[1] - d[1];
  const double cdx = c[0] - d[0], cdy = c[1] - d[1];
  const double alift = adx * adx + ady * ady;
  const double blift = bdx * bdx + bdy * bdy;
  const double clift = cdx * cdx + cdy * cdy;
  return alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) +
         clift * (adx * bdy - bdx * ady);
}

class BowyerWatson {
 public:
  explicit BowyerWatson(const std::vector<Vec2>& points) : pts_(points) {
    const auto n = static_cast<std::int32_t>(pts_.size());
    if (n < 3) throw std::invalid_argument("triangulation needs at least three points");
    double xmin = pts_[0][0], xmax = xmin, ymin = pts_[0][1], ymax = ymin;
    for (const auto& p : pts_) {
      xmin = std::min(xmin, p[0]);
      xmax = std::max(xmax, p[0]);
      ymin = std::min(ymin, p[1]);
      ymax = std::max(ymax, p[1]);
    }
    const double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);
    const double r = std::max({xmax - xmin, ymax - ymin, 1e-9}) * 64.0;
    pts_.push_back({cx - 2.0 * r, cy - r});
    pts_.push_back({cx + 2.0 * r, cy - r});
    pts_.push_back({cx, cy + 2.0 * r});
    tris_.push_back({{n, n + 1, n + 2}, {-1, -1, -1}, true});
    real_count_ = n;
  }

  void run() {
    // Insert along a serpentine sweep of coarse cells so point location walks stay short.
    std::vector<std::int32_t> order(static_cast<std::size_t>(real_count_));
    std::iota(order.begin(), order.end(), 0);
    double xmin = pts_[0][0], xmax = xmin, ymin = pts_[0][1], ymax = ymin;
    for (std::int32_t i = 0; i < real_count_; ++i) {
      xmin = std::min(xmin, pts_[i][0]);
      xmax = std::max(xmax, pts_[i][0]);
      ymin = std::min(ymin, pts_[i][1]);
      ymax = std::max(ymax, pts_[i][1]);
    }
    const int bands = std::max(1, static_cast<int>(std::sqrt(real_count_ / 4.0)));
    const double bh = std::max(ymax - ymin, 1e-12) / bands;
    auto band_of = [&](std::int32_t i) {
      return std::min(bands - 1, static_cast<int>((pts_[i][1] - ymin) / bh));
    };
    std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
      const int ba = band_of(a), bb = band_of(b);
      if (ba != bb) return ba < bb;
      const bool fwd = (ba % 2) == 0;
      if (pts_[a][0] != pts_[b][0]) return fwd ? pts_[a][0] < pts_[b][0] : pts_[a][0] > pts_[b][0];
      return a < b;
    });
    for (auto i : order) insert(i);
  }

  /// Triangles not touching the bounding super-triangle, CCW.
  std::vector<Triangle> triangles() const {
    std::vector<Triangle> out;
    for (const auto& t : tris_) {
      if (!t.alive) continue;
      if (t.v[0] >= real_count_ || t.v[1] >= real_count_ || t.v[2] >= real_count_) continue;
      out.push_back(t.v);
    }
    return out;
  }

 private:
  struct Tri {
    Triangle v;
    std::array<std::int32_t, 3> nb;  // nb[k] is across the edge opposite v[k]
    bool alive;
  };

  std::int32_t locate(const Vec2& p) {
    std::int32_t t = last_;
    if (t < 0 || !tris_[t].alive) {
      t = 0;
      while (!tris_[t].alive) ++t;
    }
    std::size_t guard = 0;
    while (guard++ < 4 * tris_.size() + 16) {
      const Tri& tr = tris_[t];
      bool moved = false;
      for (int s = 0; s < 3; ++s) {
        const int k = (s + rot_) % 3;
        const auto& a = pts_[tr.v[(k + 1) % 3]];
        const auto& b = pts_[tr.v[(k + 2) % 3]];
        if (orient2d(a, b, p) < 0.0 && tr.nb[k] >= 0) {
          t = tr.nb[k];
          moved = true;
          break;
        }
      }
      rot_ = (rot_ + 1) % 3;
      if (!moved) return t;
    }
    // Walk failed to terminate (numerically degenerate input); fall back to a scan.
    for (std::int32_t i = 0; i < static_cast<std::int32_t>(tris_.size()); ++i) {
      if (!tris_[i].alive) continue;
      const Tri& tr = tris_[i];
      if (orient2d(pts_[tr.v[0]], pts_[tr.v[1]], p) >= 0 && orient2d(pts_[tr.v[1]], pts_[tr.v[2]], p) >= 0 &&
          orient2d(pts_[tr.v[2]], pts_[tr.v[0]], p) >= 0)
        return i;
    }
    throw std::runtime_error("delaunay: point location failed");
  }

  bool in_circle(std::int32_t t, const Vec2& p) const {
    const Tri& tr = tris_[t];
    return incircle(pts_[tr.v[0]], pts_[tr.v[1]], pts_[tr.v[2]], p) > 0.0;
  }

  std::int32_t new_tri(const Tri& tr) {
    if (!free_.empty()) {
      const auto id = free_.back();
      free_.pop_back();
      tris_[id] = tr;
      return id;
    }
    tris_.push_back(tr);
    return static_cast<std::int32_t>(tris_.size() - 1);
  }

  void insert(std::int32_t pi) {
    const Vec2& p = pts_[pi];
    const std::int32_t start = locate(p);

    bad_.clear();
    boundary_.clear();
    bad_.push_back(start);
    mark_.resize(tris_.size(), 0);
    ++epoch_;
    mark_[start] = epoch_;
    for (std::size_t q = 0; q < bad_.size(); ++q) {
      const std::int32_t t = bad_[q];
      // Copy: tris_ may not grow here, but keep the loop independent of references.
      const Tri tr = tris_[t];
      for (int k = 0; k < 3; ++k) {
        const std::int32_t nb = tr.nb[k];
        if (nb >= 0 && mark_[nb] == epoch_) continue;
        if (nb >= 0 && in_circle(nb, p)) {
          mark_[nb] = epoch_;
          bad_.push_back(nb);
        } else {
          boundary_.push_back({tr.v[(k + 1) % 3], tr.v[(k + 2) % 3], nb});
        }
      }
    }

    for (auto t : bad_) {
      tris_[t].alive = false;
      free_.push_back(t);
    }

    created_.clear();
    for (const auto& e : boundary_) {
      const std::int32_t id = new_tri({{e.a, e.b, pi}, {-1, -1, e.outside}, true});
      created_.push_back(id);
      if (e.outside >= 0) {
        Tri& o = tris_[e.outside];
        for (int k = 0; k < 3; ++k) {
          if (o.v[(k + 1) % 3] == e.b && o.v[(k + 2) % 3] == e.a) o.nb[k] = id;
        }
      }
    }
    if (mark_.size() < tris_.size()) mark_.resize(tris_.size(), 0);
    // Link the fan: (a, b, p) meets (b, c, p) across edge (b, p).
    for (auto id : created_) {
      Tri& t = tris_[id];
      for (auto other : created_) {
        if (other == id) continue;
        const Tri& o = tris_[other];
        if (o.v[0] == t.v[1]) t.nb[0] = other;
        if (o.v[1] == t.v[0]) t.nb[1] = other;
      }
    }
    last_ = created_.empty() ? last_ : created_.front();
  }

  struct BoundaryEdge {
    std::int32_t a, b, outside;
  };

  std::vector<Vec2> pts_;
  std::vector<Tri> tris_;
  std::vector<std::int32_t> free_;
  std::vector<std::int32_t> bad_;
  std::vector<BoundaryEdge> boundary_;
  std::vector<std::int32_t> created_;
  std::vector<std::uint32_t> mark_;
  std::uint32_t epoch_ = 0;
  std::int32_t last_ = -1;
  std::int32_t real_count_ = 0;
  int rot_ = 0;
};

}  // namespace detail

/// Delaunay triangulation of a planar point set; triangles are CCW and index into `points`.
inline std::vector<Triangle> delaunay_triangulate(const std::vector<Vec2>& points) {
  detail::BowyerWatson bw(points);
  bw.run();
  return bw.triangles();
}

}  // namespace mrgnf
