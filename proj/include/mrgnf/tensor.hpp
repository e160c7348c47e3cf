// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mrgnf {

/// Dense per-node channel values, [T, C, N] row-major, with per-frame timestamps
/// (hours since 1970-01-01 UTC).
template <typename T = float>
struct NodeTensor {
  std::size_t frames = 0;
  std::size_t channels = 0;
  std::size_t nodes = 0;
  std::vector<std::string> channel_names;
  std::vector<std::int64_t> timestamps;
  std::vector<T> data;

  NodeTensor() = default;
  NodeTensor(std::size_t t, std::size_t c, std::size_t n, std::vector<std::string> names = {})
      : frames(t), channels(c), nodes(n), channel_names(std::move(names)), timestamps(t, 0), data(t * c * n, T{}) {
    if (channel_names.empty())
      for (std::size_t i = 0; i < c; ++i) channel_names.push_back("ch" + std::to_string(i));
    if (channel_names.size() != c) throw std::invalid_argument("channel name count does not match C");
  }

  T& at(std::size_t t, std::size_t c, std::size_t n) { return data[(t * channels + c) * nodes + n]; }
  const T& at(std::size_t t, std::size_t c, std::size_t n) const { return data[(t * channels + c) * nodes + n]; }

  T* frame(std::size_t t) { return data.data() + t * channels * nodes; }
  const T* frame(std::size_t t) const { return data.data() + t * channels * nodes; }

  std::size_t channel_index(const std::string& name) const {
    for (std::size_t c = 0; c < channel_names.size(); ++c)
      if (channel_names[c] == name) return c;
    throw std::out_of_range("tensor has no channel '" + name + "'");
  }

  bool all_finite() const {
    for (const auto& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool same_shape(const NodeTensor& o) const {
    return frames == o.frames && channels == o.channels && nodes == o.nodes;
  }
};

}  // namespace mrgnf
