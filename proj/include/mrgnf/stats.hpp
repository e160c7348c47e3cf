// SPDX-License-Identifier: Apache-2.0
//
// Streaming per-channel moments (Welford update, Chan merge) and standardization.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrgnf/tensor.hpp"

namespace mrgnf {

/// One sample counter shared by all channels; m2 is the sum of squared deviations.
struct WelfordState {
  std::int64_t count = 0;
  std::vector<double> mean;
  std::vector<double> m2;

  WelfordState() = default;
  explicit WelfordState(std::size_t channels) : mean(channels, 0.0), m2(channels, 0.0) {}

  std::size_t channels() const { return mean.size(); }

  /// Population variance m2 / count (zero when empty).
  double variance(std::size_t c) const { return count > 0 ? m2[c] / static_cast<double>(count) : 0.0; }
};

/// Adds one sample (one value per channel).
inline void welford_update(WelfordState& s, const double* x) {
  ++s.count;
  const double n = static_cast<double>(s.count);
  for (std::size_t c = 0; c < s.channels(); ++c) {
    const double d = x[c] - s.mean[c];
    s.mean[c] += d / n;
    s.m2[c] += d * (x[c] - s.mean[c]);
  }
}

inline WelfordState welford_update(WelfordState s, const std::vector<double>& x) {
  if (s.channels() == 0 && s.count == 0) s = WelfordState(x.size());
  if (x.size() != s.channels()) throw std::invalid_argument("welford_update: channel count mismatch");
  welford_update(s, x.data());
  return s;
}

inline WelfordState welford_merge(const WelfordState& a, const WelfordState& b) {
  if (a.count == 0) return b;
  if (b.count == 0) return a;
  if (a.channels() != b.channels()) throw std::invalid_argument("welford_merge: channel count mismatch");
  WelfordState r(a.channels());
  r.count = a.count + b.count;
  const double na = static_cast<double>(a.count), nb = static_cast<double>(b.count);
  const double n = static_cast<double>(r.count);
  for (std::size_t c = 0; c < a.channels(); ++c) {
    const double d = b.mean[c] - a.mean[c];
    r.mean[c] = a.mean[c] + d * (nb / n);
    r.m2[c] = a.m2[c] + b.m2[c] + d * d * (na * nb / n);
  }
  return r;
}

/// Streams every (frame, node) of `x` as one sample of its C channels.
template <typename T>
void welford_accumulate(WelfordState& s, const NodeTensor<T>& x) {
  if (s.count == 0 && s.channels() == 0) s = WelfordState(x.channels);
  if (s.channels() != x.channels) throw std::invalid_argument("welford_accumulate: channel count mismatch");
  std::vector<double> sample(x.channels);
  for (std::size_t t = 0; t < x.frames; ++t)
    for (std::size_t n = 0; n < x.nodes; ++n) {
      for (std::size_t c = 0; c < x.channels; ++c) sample[c] = static_cast<double>(x.at(t, c, n));
      welford_update(s, sample.data());
    }
}

constexpr double kStdFloor = 1e-6;

struct ChannelStats {
  std::vector<std::string> channel_names;
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<std::int64_t> count;

  std::size_t channels() const { return channel_names.size(); }

  std::size_t index(const std::string& name) const {
    for (std::size_t c = 0; c < channel_names.size(); ++c)
      if (channel_names[c] == name) return c;
    throw std::out_of_range("stats have no channel '" + name + "'");
  }

  static ChannelStats from_welford(const WelfordState& s, std::vector<std::string> names, double eps = kStdFloor) {
    if (names.size() != s.channels()) throw std::invalid_argument("stats: channel name count mismatch");
    ChannelStats r;
    r.channel_names = std::move(names);
    r.mean = s.mean;
    for (std::size_t c = 0; c < s.channels(); ++c) r.std.push_back(std::max(std::sqrt(s.variance(c)), eps));
    r.count.assign(s.channels(), s.count);
    return r;
  }
};

namespace detail {

template <typename T>
void check_alignment(const NodeTensor<T>& x, const ChannelStats& s) {
  if (x.channel_names != s.channel_names)
    throw std::invalid_argument("channel mismatch between tensor and statistics");
}

}  // namespace detail

template <typename T>
NodeTensor<T> standardize(NodeTensor<T> x, const ChannelStats& s) {
  detail::check_alignment(x, s);
  for (std::size_t t = 0; t < x.frames; ++t)
    for (std::size_t c = 0; c < x.channels; ++c) {
      T* v = &x.at(t, c, 0);
      for (std::size_t n = 0; n < x.nodes; ++n)
        v[n] = static_cast<T>((static_cast<double>(v[n]) - s.mean[c]) / s.std[c]);
    }
  return x;
}

template <typename T>
NodeTensor<T> destandardize(NodeTensor<T> x, const ChannelStats& s) {
  detail::check_alignment(x, s);
  for (std::size_t t = 0; t < x.frames; ++t)
    for (std::size_t c = 0; c < x.channels; ++c) {
      T* v = &x.at(t, c, 0);
      for (std::size_t n = 0; n < x.nodes; ++n) v[n] = static_cast<T>(static_cast<double>(v[n]) * s.std[c] + s.mean[c]);
    }
  return x;
}

}  // namespace mrgnf
