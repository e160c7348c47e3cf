// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mrgnf {

/// Horizontal neighbourhoods in CSR form. Every node lists itself plus its undirected
/// mesh neighbours in ascending order.
struct GraphEdges {
  std::size_t nodes = 0;
  std::vector<std::int32_t> offsets;
  std::vector<std::int32_t> neighbors;

  std::size_t nnz() const { return neighbors.size(); }

  void validate() const {
    if (offsets.size() != nodes + 1) throw std::invalid_argument("graph offsets size mismatch");
    for (std::size_t i = 0; i < nodes; ++i) {
      bool self = false;
      for (auto e = offsets[i]; e < offsets[i + 1]; ++e) {
        const auto j = neighbors[std::size_t(e)];
        if (j < 0 || std::size_t(j) >= nodes) throw std::invalid_argument("graph neighbour out of range");
        self = self || std::size_t(j) == i;
      }
      if (!self) throw std::invalid_argument("graph node " + std::to_string(i) + " lacks a self-loop");
    }
  }
};

inline GraphEdges make_graph(std::size_t nodes, const std::vector<std::pair<std::int32_t, std::int32_t>>& edges) {
  std::vector<std::vector<std::int32_t>> adj(nodes);
  for (std::size_t i = 0; i < nodes; ++i) adj[i].push_back(static_cast<std::int32_t>(i));
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || std::size_t(a) >= nodes || std::size_t(b) >= nodes)
      throw std::invalid_argument("edge endpoint out of range");
    if (a == b) continue;
    adj[std::size_t(a)].push_back(b);
    adj[std::size_t(b)].push_back(a);
  }
  GraphEdges g;
  g.nodes = nodes;
  g.offsets.push_back(0);
  for (auto& l : adj) {
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
    g.neighbors.insert(g.neighbors.end(), l.begin(), l.end());
    g.offsets.push_back(static_cast<std::int32_t>(g.neighbors.size()));
  }
  return g;
}

}  // namespace mrgnf
