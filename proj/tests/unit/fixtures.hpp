// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <utility>
#include <vector>

#include "mrgnf/model/graph.hpp"
#include "mrgnf/model/params.hpp"

namespace fixtures {

// Triangulated w x h lattice: right and down neighbours plus one diagonal per cell.
inline mrgnf::GraphEdges lattice_graph(int w, int h) {
  std::vector<std::pair<std::int32_t, std::int32_t>> e;
  auto id = [w](int i, int j) { return std::int32_t(i * w + j); };
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      if (j + 1 < w) e.emplace_back(id(i, j), id(i, j + 1));
      if (i + 1 < h) e.emplace_back(id(i, j), id(i + 1, j));
      if (i + 1 < h && j + 1 < w) e.emplace_back(id(i, j), id(i + 1, j + 1));
    }
  return mrgnf::make_graph(std::size_t(w * h), e);
}

template <typename Real>
std::vector<Real> random_vector(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<Real> v(n);
  for (auto& x : v) x = Real(nd(rng));
  return v;
}

// Random perturbation of every tensor so that no group is trivially zero.
template <typename Real>
void jitter(mrgnf::Params<Real>& p, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  for (auto& x : p.data) x += Real(nd(rng));
}

}  // namespace fixtures
