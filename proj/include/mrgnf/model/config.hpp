// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mrgnf {

/// Default dynamic channel order: six surface fields, then t/u/v/r/z at 850, 500, 300 hPa.
inline std::vector<std::string> default_channel_names() {
  std::vector<std::string> c{"t2m", "d2m", "msl", "u10", "v10", "tp_log"};
  for (const char* lv : {"850", "500", "300"})
    for (const char* v : {"t", "u", "v", "r", "z"}) c.push_back(std::string(v) + lv);
  return c;
}

inline std::vector<std::string> default_static_names() {
  return {"elev_std", "slope_std", "relief_std", "land_frac", "pe_sin_lat", "pe_cos_lat", "pe_sin_lon", "pe_cos_lon"};
}

struct Token {
  std::string name;
  std::vector<std::size_t> channels;
};

/// Assignment of dynamic channels to vertical tokens; must partition 0..C-1.
struct TokenLayout {
  std::vector<Token> tokens;

  static TokenLayout standard() {
    TokenLayout l;
    l.tokens.push_back({"surface", {0, 1, 2, 3, 4, 5}});
    std::size_t c = 6;
    for (const char* lv : {"L850", "L500", "L300"}) {
      Token t{lv, {}};
      for (int k = 0; k < 5; ++k) t.channels.push_back(c++);
      l.tokens.push_back(t);
    }
    return l;
  }

  /// A single token holding every channel.
  static TokenLayout single(std::size_t channels) {
    TokenLayout l;
    Token t{"all", {}};
    for (std::size_t c = 0; c < channels; ++c) t.channels.push_back(c);
    l.tokens.push_back(t);
    return l;
  }

  std::size_t size() const { return tokens.size(); }

  std::size_t channel_count() const {
    std::size_t n = 0;
    for (const auto& t : tokens) n += t.channels.size();
    return n;
  }

  void validate(std::size_t channels) const {
    if (tokens.empty()) throw std::invalid_argument("token layout is empty");
    std::vector<int> seen(channels, 0);
    for (const auto& t : tokens) {
      if (t.channels.empty()) throw std::invalid_argument("token '" + t.name + "' has no channels");
      for (auto c : t.channels) {
        if (c >= channels) throw std::invalid_argument("token '" + t.name + "' references channel out of range");
        ++seen[c];
      }
    }
    for (std::size_t c = 0; c < channels; ++c)
      if (seen[c] != 1) throw std::invalid_argument("token layout does not partition channel " + std::to_string(c));
  }
};

struct ModelConfig {
  std::size_t embed = 128;
  std::size_t blocks = 8;
  std::size_t heads = 4;
  std::size_t ffn = 256;
  std::size_t t_in = 2;
  std::size_t t_out = 1;
  double dropout = 0.0;
  std::size_t channels = 21;
  std::size_t statics = 8;
  std::size_t head_hidden = 32;
  // Channel indices the task heads predict.
  std::size_t u10 = 3;
  std::size_t v10 = 4;
  std::size_t tp_log = 5;

  void validate() const {
    if (embed == 0 || heads == 0 || embed % heads != 0) throw std::invalid_argument("embed width must be divisible by heads");
    if (blocks < 1) throw std::invalid_argument("need at least one block");
    if (t_in < 1 || t_out < 1) throw std::invalid_argument("t_in and t_out must be at least 1");
    if (ffn < 1 || statics < 1 || head_hidden < 2) throw std::invalid_argument("ffn, statics and head_hidden must be positive");
    if (dropout != 0.0) throw std::invalid_argument("only dropout = 0 is supported");
    if (u10 >= channels || v10 >= channels || tp_log >= channels) throw std::invalid_argument("head channel out of range");
  }
};

/// Small configuration for derivative checks and quick tests.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.embed = 8;
  c.blocks = 1;
  c.heads = 2;
  c.ffn = 16;
  c.head_hidden = 6;
  return c;
}

}  // namespace mrgnf
