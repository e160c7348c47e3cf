// SPDX-License-Identifier: Apache-2.0
//
// Plain-text key=value run configuration. Unknown keys, duplicates and malformed values
// are errors; omitted keys keep their defaults.
#pragma once

#include <charconv>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "mrgnf/io/binary.hpp"
#include "mrgnf/losses.hpp"
#include "mrgnf/model/config.hpp"
#include "mrgnf/rollout.hpp"
#include "mrgnf/train.hpp"

namespace mrgnf::io {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  ModelConfig model;
  std::uint64_t model_seed = 1;
  TrainConfig train;
  RolloutConfig rollout;
  PrecipLossConfig precip;

  void validate() const {
    model.validate();
    train.validate();
    rollout.validate();
    precip.validate();
  }
};

namespace detail {

// seeds share the size_t slot, which holds on LP64 targets
static_assert(std::is_same_v<std::size_t, std::uint64_t>);
using Slot = std::variant<std::size_t*, double*, bool*>;

struct Key {
  const char* name;
  Slot slot;
};

inline std::vector<Key> keys(RunConfig& c) {
  return {
      {"embed", &c.model.embed},
      {"blocks", &c.model.blocks},
      {"heads", &c.model.heads},
      {"ffn", &c.model.ffn},
      {"head_hidden", &c.model.head_hidden},
      {"t_in", &c.model.t_in},
      {"model_seed", &c.model_seed},
      {"learning_rate", &c.train.learning_rate},
      {"adam_beta1", &c.train.adam_beta1},
      {"adam_beta2", &c.train.adam_beta2},
      {"adam_eps", &c.train.adam_eps},
      {"batch_size", &c.train.batch_size},
      {"max_steps", &c.train.max_steps},
      {"seed", &c.train.seed},
      {"gradient_clip_norm", &c.train.gradient_clip_norm},
      {"val_every", &c.train.val_every},
      {"patience", &c.train.patience},
      {"joint", &c.train.joint},
      {"steps", &c.rollout.steps},
      {"substitute_heads", &c.rollout.substitute_heads},
      {"precip_alpha", &c.precip.alpha},
      {"precip_tau", &c.precip.tau},
  };
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || v.empty() || v[0] == '-')
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double d = 0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (v.empty() || pos != v.size()) throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  return d;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

}  // namespace detail

/// Parses config text; '#' starts a comment. Errors name the line and key.
inline RunConfig parse_config_text(const std::string& text, const std::string& what = "config") {
  RunConfig c;
  auto table = detail::keys(c);
  std::vector<std::string> seen;
  std::istringstream in(text);
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(what + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
    const detail::Key* hit = nullptr;
    for (const auto& k : table)
      if (key == k.name) hit = &k;
    if (!hit) throw ConfigError(what + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    for (const auto& s : seen)
      if (s == key) throw ConfigError(what + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    seen.push_back(key);
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, bool>)
            *p = detail::parse_bool(key, value);
          else if constexpr (std::is_same_v<T, double>)
            *p = detail::parse_double(key, value);
          else
            *p = detail::parse_int<T>(key, value);
        },
        hit->slot);
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(what + ": " + e.what());
  }
  return c;
}

inline RunConfig parse_config(const std::string& path) { return parse_config_text(read_file(path), path); }

/// Resolved configuration, one key=value per line in a fixed order.
inline std::string dump_config(RunConfig c) {
  std::string out;
  char buf[64];
  for (const auto& k : detail::keys(c)) {
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, bool>)
            std::snprintf(buf, sizeof buf, "%s", *p ? "true" : "false");
          else if constexpr (std::is_same_v<T, double>)
            std::snprintf(buf, sizeof buf, "%.17g", *p);
          else
            std::snprintf(buf, sizeof buf, "%llu", static_cast<unsigned long long>(*p));
        },
        k.slot);
    out += std::string(k.name) + "=" + buf + "\n";
  }
  return out;
}

}  // namespace mrgnf::io
