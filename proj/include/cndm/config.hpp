#pragma once

// Training/run configuration as a flat key-value record. Files hold one
// `key = value` per line with `#` comments; command-line overrides use the
// same keys.

#include <algorithm>
#include <charconv>
#include <type_traits>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "cndm/common.hpp"
#include "cndm/model.hpp"
#include "cndm/spectral.hpp"

namespace cndm {

struct TrainConfig {
  // Optimization.
  std::size_t epochs = 300;
  std::size_t batch_size = 1024;
  double peak_lr = 2e-4;
  double init_lr = 1e-7;
  double end_lr = 1e-7;
  double warmup_fraction = 0.10;
  double q = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double smooth_l1_beta = 1.0;
  std::uint64_t seed = 0;

  // Structure.
  std::size_t estimation_length = 128;
  std::size_t prediction_length = 8;
  std::size_t hidden_size = 32;
  std::size_t hidden_layers = 2;
  std::size_t state_size = 16;
  double r_min = 0.9;
  double r_max = 1.0;
  double phi = 0.1 * kPi;

  // Data.
  std::size_t downsample = 8;
  std::string val_profiles = "58";
  std::string test_profiles = "65,72";
  double train_subset = 1.0;  // fraction of training profiles used
  std::string dataset;
  std::string column_map;

  // Execution; not part of the fingerprint.
  std::size_t workers = 0;  // 0: all hardware threads
  bool time_parallel = false;
  std::string out_dir = "runs/default";
  bool chained_eval = false;

  ModelShape model_shape() const {
    ModelShape s;
    s.history = prediction_length;
    s.state = state_size;
    s.hidden = hidden_size;
    s.layers = hidden_layers;
    return s;
  }

  InitConfig ring() const {
    InitConfig r;
    r.r_min = r_min;
    r.r_max = r_max;
    r.phi = phi;
    r.m = state_size;
    r.seed = seed;
    return r;
  }
};

namespace detail {

// seed shares the size_t alternative.
static_assert(std::is_same_v<std::size_t, std::uint64_t>, "64-bit size_t expected");
using FieldRef = std::variant<std::size_t TrainConfig::*, double TrainConfig::*, bool TrainConfig::*,
                              std::string TrainConfig::*>;

struct Field {
  const char* key;
  FieldRef ref;
  bool fingerprinted;
};

inline const std::vector<Field>& config_fields() {
  static const std::vector<Field> fields = {
      {"epochs", &TrainConfig::epochs, true},
      {"batch_size", &TrainConfig::batch_size, true},
      {"peak_lr", &TrainConfig::peak_lr, true},
      {"init_lr", &TrainConfig::init_lr, true},
      {"end_lr", &TrainConfig::end_lr, true},
      {"warmup_fraction", &TrainConfig::warmup_fraction, true},
      {"q", &TrainConfig::q, true},
      {"beta1", &TrainConfig::beta1, true},
      {"beta2", &TrainConfig::beta2, true},
      {"adam_eps", &TrainConfig::adam_eps, true},
      {"smooth_l1_beta", &TrainConfig::smooth_l1_beta, true},
      {"seed", &TrainConfig::seed, true},
      {"estimation_length", &TrainConfig::estimation_length, true},
      {"prediction_length", &TrainConfig::prediction_length, true},
      {"hidden_size", &TrainConfig::hidden_size, true},
      {"hidden_layers", &TrainConfig::hidden_layers, true},
      {"state_size", &TrainConfig::state_size, true},
      {"r_min", &TrainConfig::r_min, true},
      {"r_max", &TrainConfig::r_max, true},
      {"phi", &TrainConfig::phi, true},
      {"downsample", &TrainConfig::downsample, true},
      {"val_profiles", &TrainConfig::val_profiles, true},
      {"test_profiles", &TrainConfig::test_profiles, true},
      {"train_subset", &TrainConfig::train_subset, true},
      {"dataset", &TrainConfig::dataset, false},
      {"column_map", &TrainConfig::column_map, false},
      {"workers", &TrainConfig::workers, false},
      {"time_parallel", &TrainConfig::time_parallel, false},
      {"out_dir", &TrainConfig::out_dir, false},
      {"chained_eval", &TrainConfig::chained_eval, false},
  };
  return fields;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : detail::config_fields()) keys.emplace_back(f.key);
  return keys;
}

/// Parses a double, accepting a trailing "pi" multiplier ("0.1pi", "pi").
inline bool parse_real_with_pi(std::string_view text, double& out) {
  std::string s = detail::trim(text);
  if (s.size() >= 2 && s.compare(s.size() - 2, 2, "pi") == 0) {
    std::string head = detail::trim(s.substr(0, s.size() - 2));
    if (!head.empty() && head.back() == '*') head = detail::trim(head.substr(0, head.size() - 1));
    double k = 1.0;
    if (!head.empty() && !parse_double(head, k)) return false;
    out = k * kPi;
    return true;
  }
  return parse_double(s, out);
}

inline void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& raw) {
  const auto& fields = detail::config_fields();
  const auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return key == f.key; });
  if (it == fields.end()) throw Error(ErrorCategory::config, "unknown config key '" + key + "'");
  const std::string value = detail::trim(raw);
  const auto bad = [&](const char* kind) {
    return Error(ErrorCategory::config, "config key '" + key + "' expects " + kind + ", got '" + value + "'");
  };
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(cfg.*member)>;
        if constexpr (std::is_same_v<T, double>) {
          double v;
          if (!parse_real_with_pi(value, v)) throw bad("a real number");
          cfg.*member = v;
        } else if constexpr (std::is_same_v<T, bool>) {
          if (value == "true" || value == "1") cfg.*member = true;
          else if (value == "false" || value == "0") cfg.*member = false;
          else throw bad("true/false");
        } else if constexpr (std::is_same_v<T, std::string>) {
          cfg.*member = value;
        } else {
          T v{};
          const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
          if (value.empty() || res.ec != std::errc() || res.ptr != value.data() + value.size())
            throw bad("a non-negative integer");
          cfg.*member = v;
        }
      },
      it->ref);
}

/// Fully resolved key-value pairs in canonical order.
inline std::vector<std::pair<std::string, std::string>> to_key_values(const TrainConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : detail::config_fields()) {
    std::string v = std::visit(
        [&](auto member) -> std::string {
          using T = std::remove_cvref_t<decltype(cfg.*member)>;
          if constexpr (std::is_same_v<T, double>) return format_double(cfg.*member);
          else if constexpr (std::is_same_v<T, bool>) return cfg.*member ? "true" : "false";
          else if constexpr (std::is_same_v<T, std::string>) return cfg.*member;
          else return std::to_string(cfg.*member);
        },
        f.ref);
    out.emplace_back(f.key, std::move(v));
  }
  return out;
}

/// Hash of every key that influences the trained parameters.
inline std::string config_fingerprint(const TrainConfig& cfg) {
  std::string canon;
  const auto kv = to_key_values(cfg);
  const auto& fields = detail::config_fields();
  for (std::size_t i = 0; i < kv.size(); ++i)
    if (fields[i].fingerprinted) canon += kv[i].first + "=" + kv[i].second + "\n";
  return hex64(fnv1a(canon));
}

inline void apply_config_text(TrainConfig& cfg, std::istream& in, const std::string& origin) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCategory::config,
                  origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    set_config_value(cfg, detail::trim(t.substr(0, eq)), t.substr(eq + 1));
  }
}

inline TrainConfig load_config_file(const std::string& path, TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCategory::io, "cannot open config file '" + path + "'");
  apply_config_text(base, in, path);
  return base;
}

inline std::string config_text(const TrainConfig& cfg) {
  std::ostringstream os;
  for (const auto& [k, v] : to_key_values(cfg)) os << k << " = " << v << '\n';
  return os.str();
}

inline void validate(const TrainConfig& cfg) {
  const auto fail = [](const std::string& what) { throw Error(ErrorCategory::config, what); };
  if (cfg.batch_size == 0) fail("batch_size must be >= 1");
  if (cfg.estimation_length == 0) fail("estimation_length must be >= 1");
  if (cfg.prediction_length == 0) fail("prediction_length must be >= 1");
  if (cfg.state_size == 0) fail("state_size must be >= 1");
  if (cfg.hidden_size == 0) fail("hidden_size must be >= 1");
  if (cfg.downsample == 0) fail("downsample must be >= 1");
  if (!(cfg.warmup_fraction > 0.0 && cfg.warmup_fraction < 1.0)) fail("warmup_fraction must be in (0, 1)");
  if (!(cfg.peak_lr > 0.0)) fail("peak_lr must be positive");
  if (!(cfg.init_lr >= 0.0 && cfg.init_lr <= cfg.peak_lr)) fail("init_lr must be in [0, peak_lr]");
  if (!(cfg.end_lr >= 0.0 && cfg.end_lr <= cfg.peak_lr)) fail("end_lr must be in [0, peak_lr]");
  if (!(cfg.q >= 0.0)) fail("q must be >= 0");
  if (!(cfg.smooth_l1_beta > 0.0)) fail("smooth_l1_beta must be positive");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
    fail("beta1 and beta2 must be in [0, 1)");
  if (!(cfg.adam_eps > 0.0)) fail("adam_eps must be positive");
  if (!(cfg.train_subset > 0.0 && cfg.train_subset <= 1.0)) fail("train_subset must be in (0, 1]");
  validate(cfg.ring());
}

/// "58" or "65,72" -> ids.
inline std::vector<long> parse_id_list(const std::string& text) {
  std::vector<long> ids;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = detail::trim(item);
    if (t.empty()) continue;
    long v = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size())
      throw Error(ErrorCategory::config, "bad profile id '" + t + "'");
    ids.push_back(v);
  }
  return ids;
}

}  // namespace cndm
