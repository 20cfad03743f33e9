#pragma once

// Motor temperature dataset handling: CSV ingestion with derived voltage and
// current magnitudes, block-mean downsampling, normalization, profile splits,
// window extraction and sliding-window evaluation in Kelvin.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cndm/common.hpp"
#include "cndm/config.hpp"
#include "cndm/model.hpp"
#include "cndm/parallel.hpp"
#include "cndm/random.hpp"

namespace cndm {

inline constexpr std::size_t kNumControls = 10;
inline constexpr std::size_t kNumTargets = 4;
inline constexpr std::size_t kNumMeasuredControls = 8;

// Control feature order: 8 measured inputs, then the 2 derived magnitudes.
inline const std::array<std::string, kNumControls>& control_names() {
  static const std::array<std::string, kNumControls> n = {
      "ambient", "coolant", "u_d", "u_q", "i_d", "i_q", "torque", "motor_speed", "u_s", "i_s"};
  return n;
}

inline const std::array<std::string, kNumTargets>& target_names() {
  static const std::array<std::string, kNumTargets> n = {"pm", "stator_tooth", "stator_winding",
                                                         "stator_yoke"};
  return n;
}

// Temperature-valued controls are scaled like the targets.
inline constexpr std::array<bool, kNumControls> kControlIsTemperature = {
    true, true, false, false, false, false, false, false, false, false};

inline constexpr double kMinPlausibleC = -50.0;
inline constexpr double kMaxPlausibleC = 250.0;

struct Profile {
  long id = 0;
  std::size_t rows = 0;
  std::vector<double> controls;  // rows x kNumControls
  std::vector<double> targets;   // rows x kNumTargets

  std::span<const double> control_row(std::size_t r) const {
    return {controls.data() + r * kNumControls, kNumControls};
  }
  std::span<const double> target_row(std::size_t r) const {
    return {targets.data() + r * kNumTargets, kNumTargets};
  }
};

/// Canonical column -> CSV header name. Defaults follow the public
/// electric-motor-temperature release (measures_v2.csv).
struct ColumnMap {
  std::map<std::string, std::string> names;

  static ColumnMap defaults() {
    ColumnMap m;
    for (std::size_t i = 0; i < kNumMeasuredControls; ++i) m.names[control_names()[i]] = control_names()[i];
    for (const auto& t : target_names()) m.names[t] = t;
    m.names["profile_id"] = "profile_id";
    return m;
  }

  /// Lines of `canonical = csv_name`; unspecified columns keep their defaults.
  static ColumnMap load(const std::string& path) {
    ColumnMap m = defaults();
    std::ifstream in(path);
    if (!in) throw Error(ErrorCategory::io, "cannot open column map '" + path + "'");
    std::string line;
    while (std::getline(in, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string t = detail::trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw Error(ErrorCategory::config, "column map: expected 'canonical = name'");
      const std::string key = detail::trim(t.substr(0, eq));
      if (!m.names.count(key)) throw Error(ErrorCategory::config, "column map: unknown column '" + key + "'");
      m.names[key] = detail::trim(t.substr(eq + 1));
    }
    return m;
  }
};

struct IngestResult {
  std::vector<Profile> profiles;  // sorted by id
  std::vector<std::string> warnings;
  std::size_t total_rows = 0;
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

inline void derive_magnitudes(std::span<double> row) {
  row[8] = std::hypot(row[2], row[3]);  // u_s from u_d, u_q
  row[9] = std::hypot(row[4], row[5]);  // i_s from i_d, i_q
}

inline void check_plausible(const Profile& p, std::vector<std::string>& warnings) {
  std::size_t bad = 0;
  double worst = 0.0;
  const auto check = [&](double v) {
    if (v < kMinPlausibleC || v > kMaxPlausibleC) {
      if (bad == 0) worst = v;
      ++bad;
    }
  };
  for (std::size_t r = 0; r < p.rows; ++r) {
    for (double v : p.target_row(r)) check(v);
    for (std::size_t c = 0; c < kNumControls; ++c)
      if (kControlIsTemperature[c]) check(p.control_row(r)[c]);
  }
  if (bad)
    warnings.push_back("profile " + std::to_string(p.id) + ": " + std::to_string(bad) +
                       " temperature values outside [-50, 250] C (first " + format_double(worst) + ")");
}

}  // namespace detail

/// Builds a profile from measured columns (8 controls, 4 targets per row) and
/// appends u_s and i_s.
inline Profile make_profile(long id, std::span<const double> measured_controls,
                            std::span<const double> targets) {
  require_shape(measured_controls.size() % kNumMeasuredControls == 0 &&
                    targets.size() % kNumTargets == 0 &&
                    measured_controls.size() / kNumMeasuredControls == targets.size() / kNumTargets,
                "make_profile: row counts differ");
  Profile p;
  p.id = id;
  p.rows = targets.size() / kNumTargets;
  p.controls.assign(p.rows * kNumControls, 0.0);
  p.targets.assign(targets.begin(), targets.end());
  for (std::size_t r = 0; r < p.rows; ++r) {
    std::span<double> row(p.controls.data() + r * kNumControls, kNumControls);
    std::copy_n(measured_controls.begin() + static_cast<std::ptrdiff_t>(r * kNumMeasuredControls),
                kNumMeasuredControls, row.begin());
    detail::derive_magnitudes(row);
  }
  return p;
}

inline IngestResult ingest_csv(std::istream& in, const ColumnMap& map = ColumnMap::defaults(),
                               const std::string& origin = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCategory::data, origin + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  const auto column_of = [&](const std::string& canonical) -> std::size_t {
    const std::string& want = map.names.at(canonical);
    for (std::size_t i = 0; i < header.size(); ++i)
      if (detail::trim(header[i]) == want) return i;
    throw Error(ErrorCategory::data,
                origin + ": missing column '" + want + "' (canonical '" + canonical + "')");
  };
  const std::size_t id_col = column_of("profile_id");
  std::array<std::size_t, kNumMeasuredControls> ctrl_cols{};
  for (std::size_t i = 0; i < kNumMeasuredControls; ++i) ctrl_cols[i] = column_of(control_names()[i]);
  std::array<std::size_t, kNumTargets> tgt_cols{};
  for (std::size_t i = 0; i < kNumTargets; ++i) tgt_cols[i] = column_of(target_names()[i]);

  struct Accum {
    std::vector<double> measured;
    std::vector<double> targets;
  };
  std::map<long, Accum> groups;
  IngestResult result;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw Error(ErrorCategory::data, origin + ":" + std::to_string(lineno) + ": expected " +
                                           std::to_string(header.size()) + " cells, found " +
                                           std::to_string(cells.size()));
    const auto number = [&](std::size_t col) {
      double v;
      if (!parse_double(cells[col], v) || !std::isfinite(v))
        throw Error(ErrorCategory::data, origin + ":" + std::to_string(lineno) + ": non-numeric value '" +
                                             std::string(cells[col]) + "' in column '" +
                                             std::string(detail::trim(header[col])) + "'");
      return v;
    };
    const double id_value = number(id_col);
    const long id = static_cast<long>(id_value);
    if (static_cast<double>(id) != id_value)
      throw Error(ErrorCategory::data, origin + ":" + std::to_string(lineno) + ": profile_id is not an integer");
    Accum& acc = groups[id];
    for (std::size_t c : ctrl_cols) acc.measured.push_back(number(c));
    for (std::size_t c : tgt_cols) acc.targets.push_back(number(c));
    ++result.total_rows;
  }
  if (groups.empty()) throw Error(ErrorCategory::data, origin + ": no data rows");
  for (auto& [id, acc] : groups) {
    result.profiles.push_back(make_profile(id, acc.measured, acc.targets));
    detail::check_plausible(result.profiles.back(), result.warnings);
  }
  return result;
}

inline IngestResult ingest_csv(const std::string& path, const ColumnMap& map = ColumnMap::defaults()) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCategory::io, "cannot open dataset '" + path + "'");
  return ingest_csv(in, map, path);
}

/// Writes profiles in the public-release column layout (measured columns only).
inline void write_dataset_csv(std::ostream& os, std::span<const Profile> profiles) {
  for (std::size_t i = 0; i < kNumMeasuredControls; ++i) os << control_names()[i] << ',';
  for (const auto& t : target_names()) os << t << ',';
  os << "profile_id\n";
  for (const Profile& p : profiles)
    for (std::size_t r = 0; r < p.rows; ++r) {
      for (std::size_t i = 0; i < kNumMeasuredControls; ++i) os << format_g17(p.control_row(r)[i]) << ',';
      for (double v : p.target_row(r)) os << format_g17(v) << ',';
      os << p.id << '\n';
    }
}

/// Replaces non-overlapping blocks of `factor` rows by their column means; a
/// trailing partial block is dropped.
inline Profile downsample(const Profile& p, std::size_t factor = 8) {
  if (factor == 0) throw Error(ErrorCategory::config, "downsample: factor must be >= 1");
  if (p.rows < factor)
    throw Error(ErrorCategory::data, "downsample: profile " + std::to_string(p.id) + " has " +
                                         std::to_string(p.rows) + " rows, fewer than factor " +
                                         std::to_string(factor));
  if (factor == 1) return p;
  Profile out;
  out.id = p.id;
  out.rows = p.rows / factor;
  out.controls.assign(out.rows * kNumControls, 0.0);
  out.targets.assign(out.rows * kNumTargets, 0.0);
  const double inv = 1.0 / static_cast<double>(factor);
  for (std::size_t b = 0; b < out.rows; ++b) {
    for (std::size_t k = 0; k < factor; ++k) {
      const std::size_t r = b * factor + k;
      for (std::size_t c = 0; c < kNumControls; ++c) out.controls[b * kNumControls + c] += p.control_row(r)[c];
      for (std::size_t c = 0; c < kNumTargets; ++c) out.targets[b * kNumTargets + c] += p.target_row(r)[c];
    }
    for (std::size_t c = 0; c < kNumControls; ++c) out.controls[b * kNumControls + c] *= inv;
    for (std::size_t c = 0; c < kNumTargets; ++c) out.targets[b * kNumTargets + c] *= inv;
  }
  return out;
}

struct NormStats {
  double temperature_divisor = 100.0;
  std::vector<double> control_divisors = std::vector<double>(kNumControls, 1.0);
};

/// Temperatures (targets, ambient, coolant) are divided by 100 C; every other
/// control by its max-abs over `profiles`. An all-zero column gets divisor 1.
inline NormStats fit_norm_stats(std::span<const Profile> profiles,
                                std::vector<std::string>* warnings = nullptr) {
  NormStats s;
  std::vector<double> max_abs(kNumControls, 0.0);
  for (const Profile& p : profiles)
    for (std::size_t r = 0; r < p.rows; ++r)
      for (std::size_t c = 0; c < kNumControls; ++c)
        max_abs[c] = std::max(max_abs[c], std::abs(p.control_row(r)[c]));
  for (std::size_t c = 0; c < kNumControls; ++c) {
    if (kControlIsTemperature[c]) {
      s.control_divisors[c] = s.temperature_divisor;
    } else if (max_abs[c] > 0.0) {
      s.control_divisors[c] = max_abs[c];
    } else {
      s.control_divisors[c] = 1.0;
      if (warnings) warnings->push_back("control '" + control_names()[c] + "' is all zero; divisor clamped to 1");
    }
  }
  return s;
}

inline void validate(const NormStats& s) {
  bool ok = std::isfinite(s.temperature_divisor) && s.temperature_divisor > 0.0 &&
            s.control_divisors.size() == kNumControls;
  for (double d : s.control_divisors) ok = ok && std::isfinite(d) && d > 0.0;
  if (!ok) throw Error(ErrorCategory::data, "normalization statistics must be finite and positive");
}

inline Profile normalize(const Profile& p, const NormStats& s) {
  validate(s);
  Profile out = p;
  for (std::size_t r = 0; r < p.rows; ++r)
    for (std::size_t c = 0; c < kNumControls; ++c) out.controls[r * kNumControls + c] /= s.control_divisors[c];
  for (double& v : out.targets) v /= s.temperature_divisor;
  return out;
}

inline double denormalize_temperature(double v, const NormStats& s) { return v * s.temperature_divisor; }

struct DatasetSplit {
  std::vector<Profile> train;
  std::vector<Profile> val;
  std::vector<Profile> test;
  NormStats stats;
  std::vector<std::string> warnings;
};

/// Partitions profiles by id: val and test ids as given, everything else is
/// training data.
inline DatasetSplit make_splits(std::vector<Profile> profiles, const std::vector<long>& val_ids,
                                const std::vector<long>& test_ids) {
  const auto contains = [](const std::vector<long>& ids, long id) {
    return std::find(ids.begin(), ids.end(), id) != ids.end();
  };
  for (long id : val_ids)
    if (std::none_of(profiles.begin(), profiles.end(), [&](const Profile& p) { return p.id == id; }))
      throw Error(ErrorCategory::data, "validation profile " + std::to_string(id) + " not found");
  for (long id : test_ids)
    if (std::none_of(profiles.begin(), profiles.end(), [&](const Profile& p) { return p.id == id; }))
      throw Error(ErrorCategory::data, "test profile " + std::to_string(id) + " not found");
  DatasetSplit s;
  for (Profile& p : profiles) {
    if (contains(val_ids, p.id)) s.val.push_back(std::move(p));
    else if (contains(test_ids, p.id)) s.test.push_back(std::move(p));
    else s.train.push_back(std::move(p));
  }
  return s;
}

/// Deterministic subset of training profiles (at least one), chosen by a
/// seeded shuffle and returned in id order.
inline std::vector<Profile> profile_subset(std::vector<Profile> profiles, double fraction, std::uint64_t seed) {
  if (fraction >= 1.0 || profiles.empty()) return profiles;
  const std::size_t keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(profiles.size()))));
  Rng rng(derive_seed(seed, 77));
  for (std::size_t i = profiles.size(); i > 1; --i) std::swap(profiles[i - 1], profiles[rng() % i]);
  profiles.resize(keep);
  std::sort(profiles.begin(), profiles.end(), [](const Profile& a, const Profile& b) { return a.id < b.id; });
  return profiles;
}

/// Downsamples everything, splits, fits statistics on the training split only
/// and normalizes all three splits with them. With `fixed`, those statistics
/// are used instead of fitting (evaluation of a stored checkpoint).
inline DatasetSplit prepare_dataset(const std::vector<Profile>& raw, const TrainConfig& cfg,
                                    const NormStats* fixed = nullptr) {
  std::vector<Profile> reduced;
  std::vector<std::string> warnings;
  for (const Profile& p : raw) {
    if (p.rows < cfg.downsample) {
      warnings.push_back("profile " + std::to_string(p.id) + " shorter than the downsampling factor; dropped");
      continue;
    }
    reduced.push_back(downsample(p, cfg.downsample));
  }
  DatasetSplit s = make_splits(std::move(reduced), parse_id_list(cfg.val_profiles), parse_id_list(cfg.test_profiles));
  s.train = profile_subset(std::move(s.train), cfg.train_subset, cfg.seed);
  if (fixed) {
    validate(*fixed);
    s.stats = *fixed;
  } else {
    if (s.train.empty()) throw Error(ErrorCategory::data, "no training profiles");
    s.stats = fit_norm_stats(s.train, &warnings);
  }
  for (auto* part : {&s.train, &s.val, &s.test})
    for (Profile& p : *part) p = normalize(p, s.stats);
  s.warnings = std::move(warnings);
  return s;
}

/// A window is history rows [start, start + h), then N estimated rows.
struct WindowRef {
  std::size_t profile = 0;  // index into the profile list
  std::size_t start = 0;
};

inline std::size_t window_count(std::size_t rows, std::size_t h, std::size_t n, std::size_t stride) {
  if (rows < h + n) return 0;
  return (rows - (h + n)) / stride + 1;
}

inline std::vector<WindowRef> make_windows(std::span<const Profile> profiles, std::size_t h, std::size_t n,
                                           std::size_t stride, std::vector<std::string>* warnings = nullptr) {
  std::vector<WindowRef> refs;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const std::size_t count = window_count(profiles[i].rows, h, n, stride);
    if (count == 0 && warnings)
      warnings->push_back("profile " + std::to_string(profiles[i].id) + " has " +
                          std::to_string(profiles[i].rows) + " rows, too short for one window");
    for (std::size_t k = 0; k < count; ++k) refs.push_back({i, k * stride});
  }
  return refs;
}

inline WindowView window_view(const Profile& p, std::size_t start, std::size_t h, std::size_t n) {
  require_shape(start + h + n <= p.rows, "window crosses the end of profile " + std::to_string(p.id));
  WindowView w;
  w.history = std::span<const double>(p.targets.data() + start * kNumTargets, h * kNumTargets);
  w.controls = std::span<const double>(p.controls.data() + (start + h) * kNumControls, n * kNumControls);
  w.targets = std::span<const double>(p.targets.data() + (start + h) * kNumTargets, n * kNumTargets);
  return w;
}

struct Metrics {
  double mse_K2 = 0.0;
  double rmse_K = 0.0;
  double linf_K = 0.0;
  std::size_t count = 0;
};

struct PredictionRow {
  long profile_id;
  std::size_t t_index;  // row index within the (downsampled) profile
  std::size_t target;
  double truth_K;
  double pred_K;
};

struct EvalResult {
  Metrics overall;
  std::array<Metrics, kNumTargets> per_target{};
  std::size_t n_windows = 0;
  std::vector<PredictionRow> predictions;
};

/// Normalized predictions (N x targets) for one window.
using Predictor = std::function<std::vector<double>(const WindowView&, const Profile&, std::size_t start)>;

struct EvalOptions {
  std::size_t h = 8;
  std::size_t n = 128;
  bool chained = false;  // feed each window's last h predictions to the next window
  std::size_t workers = 1;
};

/// Non-overlapping windows with stride N per profile. Each window is seeded
/// with measured history (or, when chained, with the previous window's
/// predictions). Errors are in Kelvin over all targets, steps and profiles.
inline EvalResult evaluate(std::span<const Profile> profiles, const Predictor& predict, const NormStats& stats,
                           const EvalOptions& opt) {
  struct Job {
    std::size_t profile;
    std::size_t start;
  };
  std::vector<std::vector<Job>> per_profile(profiles.size());
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const std::size_t count = window_count(profiles[i].rows, opt.h, opt.n, opt.n);
    for (std::size_t k = 0; k < count; ++k) per_profile[i].push_back({i, k * opt.n});
  }
  std::vector<std::vector<std::vector<double>>> outputs(profiles.size());
  const auto run_profile = [&](std::size_t i) {
    const Profile& p = profiles[i];
    outputs[i].resize(per_profile[i].size());
    std::vector<double> history;
    for (std::size_t k = 0; k < per_profile[i].size(); ++k) {
      WindowView w = window_view(p, per_profile[i][k].start, opt.h, opt.n);
      if (opt.chained && k > 0) {
        const std::vector<double>& prev = outputs[i][k - 1];
        history.assign(prev.end() - static_cast<std::ptrdiff_t>(opt.h * kNumTargets), prev.end());
        w.history = history;
      }
      outputs[i][k] = predict(w, p, per_profile[i][k].start);
      require_shape(outputs[i][k].size() == opt.n * kNumTargets, "evaluate: predictor returned the wrong size");
    }
  };
  if (opt.chained) {
    parallel_for(profiles.size(), opt.workers, run_profile);
  } else {
    // Flatten so that windows, not profiles, are spread over workers.
    std::vector<Job> jobs;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
      outputs[i].resize(per_profile[i].size());
      for (const Job& j : per_profile[i]) jobs.push_back(j);
    }
    std::vector<std::size_t> first(profiles.size(), 0);
    for (std::size_t i = 1; i < profiles.size(); ++i) first[i] = first[i - 1] + per_profile[i - 1].size();
    parallel_for(jobs.size(), opt.workers, [&](std::size_t j) {
      const Job& job = jobs[j];
      const WindowView w = window_view(profiles[job.profile], job.start, opt.h, opt.n);
      auto out = predict(w, profiles[job.profile], job.start);
      require_shape(out.size() == opt.n * kNumTargets, "evaluate: predictor returned the wrong size");
      outputs[job.profile][(job.start) / opt.n] = std::move(out);
    });
  }

  // Ordered reduction.
  EvalResult r;
  double sq = 0.0;
  std::array<double, kNumTargets> sq_t{};
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const Profile& p = profiles[i];
    for (std::size_t k = 0; k < per_profile[i].size(); ++k) {
      ++r.n_windows;
      const std::size_t base = per_profile[i][k].start + opt.h;
      for (std::size_t t = 0; t < opt.n; ++t)
        for (std::size_t c = 0; c < kNumTargets; ++c) {
          const double truth = denormalize_temperature(p.target_row(base + t)[c], stats);
          const double pred = denormalize_temperature(outputs[i][k][t * kNumTargets + c], stats);
          const double e = pred - truth;
          sq += e * e;
          sq_t[c] += e * e;
          r.overall.linf_K = std::max(r.overall.linf_K, std::abs(e));
          r.per_target[c].linf_K = std::max(r.per_target[c].linf_K, std::abs(e));
          ++r.overall.count;
          ++r.per_target[c].count;
          r.predictions.push_back({p.id, base + t, c, truth, pred});
        }
    }
  }
  const auto finish = [](Metrics& m, double sum) {
    m.mse_K2 = m.count ? sum / static_cast<double>(m.count) : 0.0;
    m.rmse_K = std::sqrt(m.mse_K2);
  };
  finish(r.overall, sq);
  for (std::size_t c = 0; c < kNumTargets; ++c) finish(r.per_target[c], sq_t[c]);
  return r;
}

/// Predictor backed by the model's forward pass.
inline Predictor model_predictor(const ModelParams& params, const ExecOptions& exec = {}) {
  return [&params, exec](const WindowView& w, const Profile&, std::size_t) {
    WindowView inputs = w;
    inputs.targets = {};
    return forward(params, inputs, exec).outputs;
  };
}

inline void write_predictions_csv(std::ostream& os, const EvalResult& r) {
  os << "profile_id,t_index,target,truth_K,pred_K\n";
  for (const PredictionRow& p : r.predictions)
    os << p.profile_id << ',' << p.t_index << ',' << target_names()[p.target] << ',' << format_g17(p.truth_K)
       << ',' << format_g17(p.pred_K) << '\n';
}

}  // namespace cndm
