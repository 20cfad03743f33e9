// cndm: train, evaluate, benchmark and inspect complexNDM models.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cndm/checkpoint.hpp"
#include "cndm/config.hpp"
#include "cndm/data.hpp"
#include "cndm/model.hpp"
#include "cndm/scan.hpp"
#include "cndm/spectral.hpp"
#include "cndm/synth.hpp"
#include "cndm/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace cndm;

namespace {

constexpr const char* kDataDirEnv = "CNDM_DATA_DIR";
constexpr const char* kDefaultDatasetFile = "measures_v2.csv";

std::string resolve_dataset(const std::string& configured) {
  if (!configured.empty()) return configured;
  if (const char* dir = std::getenv(kDataDirEnv))
    return (fs::path(dir) / kDefaultDatasetFile).string();
  throw Error(ErrorCategory::config, std::string("no dataset given; set 'dataset' or ") + kDataDirEnv);
}

std::vector<Profile> load_raw(const TrainConfig& cfg) {
  const ColumnMap map = cfg.column_map.empty() ? ColumnMap::defaults() : ColumnMap::load(cfg.column_map);
  IngestResult r = ingest_csv(resolve_dataset(cfg.dataset), map);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  return std::move(r.profiles);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCategory::io, "cannot write '" + path.string() + "'");
  out << text;
}

json metrics_json(const EvalResult& r) {
  json j;
  j["mse_K2"] = r.overall.mse_K2;
  j["rmse_K"] = r.overall.rmse_K;
  j["linf_K"] = r.overall.linf_K;
  j["n_windows"] = r.n_windows;
  json per = json::object();
  for (std::size_t c = 0; c < kNumTargets; ++c)
    per[target_names()[c]] = {{"mse_K2", r.per_target[c].mse_K2},
                              {"rmse_K", r.per_target[c].rmse_K},
                              {"linf_K", r.per_target[c].linf_K}};
  j["per_target"] = per;
  return j;
}

EvalResult run_eval(const ModelParams& params, std::span<const Profile> profiles, const NormStats& stats,
                    const TrainConfig& cfg, bool chained) {
  EvalOptions eo;
  eo.h = cfg.prediction_length;
  eo.n = cfg.estimation_length;
  eo.chained = chained;
  eo.workers = resolved_workers(cfg);
  return evaluate(profiles, model_predictor(params), stats, eo);
}

// Config keys as "--key value" flags plus repeatable "--set key=value".
struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> sets;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_path, "key = value config file");
    app->add_option("--set", sets, "override as key=value (repeatable)");
    for (const std::string& key : config_keys()) {
      app->add_option("--" + key, values[key], "config key " + key)->group("Config keys");
    }
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!config_path.empty()) cfg = load_config_file(config_path);
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw Error(ErrorCategory::config, "--set expects key=value, got '" + s + "'");
      set_config_value(cfg, detail::trim(s.substr(0, eq)), s.substr(eq + 1));
    }
    for (const auto& [k, v] : values)
      if (!v.empty()) set_config_value(cfg, k, v);
    validate(cfg);
    return cfg;
  }
};

json train_to_dir(const TrainConfig& cfg, const DatasetSplit& data, bool quiet) {
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  write_text(dir / "config.txt", config_text(cfg));
  for (const auto& w : data.warnings) std::cerr << "warning: " << w << '\n';

  std::ofstream log(dir / "train_log.csv");
  if (!log) throw Error(ErrorCategory::io, "cannot write training log in '" + dir.string() + "'");
  log << kTrainLogHeader << '\n';
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochLog& e) {
    write_log_row(log, e);
    log.flush();
    if (!quiet)
      std::cerr << "epoch " << e.epoch << "/" << cfg.epochs << " loss " << format_double(e.loss_total)
                << " val_rmse_K " << format_double(e.val_rmse_K) << " (" << format_double(e.wall_s) << " s)\n";
  };
  const TrainResult result = train(cfg, data, hooks);
  save_checkpoint(result.best, (dir / "checkpoint_best.cndm").string());
  save_checkpoint(result.final, (dir / "checkpoint_final.cndm").string());

  json j;
  j["config_hash"] = config_fingerprint(cfg);
  j["parameter_count"] = parameter_count(result.final.params);
  j["train_windows"] = result.train_windows;
  j["total_steps"] = result.total_steps;
  j["best_epoch"] = result.best.epoch;
  j["untrained_val_rmse_K"] = result.log.front().val_rmse_K;
  j["final_val_rmse_K"] = result.log.back().val_rmse_K;
  j["spectral_radius"] = spectral_radius(eigenvalues(result.best.params.eig));
  if (!data.test.empty()) {
    const EvalResult test = run_eval(result.best.params, data.test, data.stats, cfg, cfg.chained_eval);
    j["test"] = metrics_json(test);
    j["test"]["config_hash"] = j["config_hash"];
  }
  write_text(dir / "metrics.json", j.dump(2) + "\n");
  return j;
}

int cmd_train(const ConfigFlags& flags, bool quiet) {
  const TrainConfig cfg = flags.resolve();
  const DatasetSplit data = prepare_dataset(load_raw(cfg), cfg);
  const json j = train_to_dir(cfg, data, quiet);
  std::cout << j.dump(2) << '\n';
  return 0;
}

struct EvalFlags {
  std::string checkpoint;
  std::string dataset;
  std::string config_path;
  std::string out_dir;
  std::string split = "test";
  bool chained = false;
};

int cmd_eval(const EvalFlags& f) {
  const Checkpoint ck = load_checkpoint(f.checkpoint);
  TrainConfig cfg = checkpoint_config(ck);
  if (config_fingerprint(cfg) != ck.config_hash)
    std::cerr << "warning: checkpoint config does not reproduce its stored config_hash " << ck.config_hash << '\n';
  if (!f.config_path.empty()) {
    const TrainConfig other = load_config_file(f.config_path);
    if (config_fingerprint(other) != ck.config_hash)
      std::cerr << "warning: config hash mismatch: '" << f.config_path << "' has " << config_fingerprint(other)
                << ", checkpoint has " << ck.config_hash << '\n';
  }
  if (!f.dataset.empty()) cfg.dataset = f.dataset;
  require_shape(ck.params.shape == cfg.model_shape(), "checkpoint parameters do not match its stored config");
  const DatasetSplit data = prepare_dataset(load_raw(cfg), cfg, &ck.norm);
  const std::vector<Profile>* profiles = nullptr;
  if (f.split == "test") profiles = &data.test;
  else if (f.split == "val") profiles = &data.val;
  else if (f.split == "train") profiles = &data.train;
  else throw Error(ErrorCategory::config, "--split must be test, val or train");
  if (profiles->empty()) throw Error(ErrorCategory::data, "split '" + f.split + "' has no profiles");

  const EvalResult r = run_eval(ck.params, *profiles, ck.norm, cfg, false);
  json j = metrics_json(r);
  j["config_hash"] = ck.config_hash;
  j["split"] = f.split;
  EvalResult chained;
  if (f.chained) {
    chained = run_eval(ck.params, *profiles, ck.norm, cfg, true);
    j["chained"] = metrics_json(chained);
  }
  const fs::path dir = f.out_dir.empty() ? fs::path(f.checkpoint).parent_path() / ("eval_" + f.split)
                                         : fs::path(f.out_dir);
  fs::create_directories(dir);
  write_text(dir / "metrics.json", j.dump(2) + "\n");
  {
    std::ofstream out(dir / "predictions.csv");
    write_predictions_csv(out, r);
  }
  if (f.chained) {
    std::ofstream out(dir / "predictions_chained.csv");
    write_predictions_csv(out, chained);
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

struct BenchFlags {
  std::vector<std::size_t> lengths = {128, 256, 384, 512, 640, 768};
  std::vector<std::size_t> workers;
  std::size_t repeats = 5;
  std::size_t warmup = 1;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
  std::string out = "bench.csv";
};

struct Timing {
  double mean_ms = 0.0;
  double std_ms = 0.0;
};

template <class F>
Timing time_it(std::size_t warmup, std::size_t repeats, F&& f) {
  for (std::size_t i = 0; i < warmup; ++i) f();
  std::vector<double> ms;
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  Timing t;
  t.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  double var = 0.0;
  for (double v : ms) var += (v - t.mean_ms) * (v - t.mean_ms);
  t.std_ms = ms.size() > 1 ? std::sqrt(var / static_cast<double>(ms.size() - 1)) : 0.0;
  return t;
}

// Serial: every window processed time-sequentially on one thread.
// Parallel: every window processed parallel in time (per-step networks and
// the tree scan) on `workers` threads.
int cmd_bench(BenchFlags f) {
  if (f.workers.empty()) f.workers = {hardware_workers()};
  if (f.repeats == 0 || f.batch == 0) throw Error(ErrorCategory::config, "--repeats and --batch must be >= 1");
  const ModelShape shape;
  const ModelParams params = init_model(shape, InitConfig{}, f.seed);
  std::ofstream step_csv(f.out);
  if (!step_csv) throw Error(ErrorCategory::io, "cannot write '" + f.out + "'");
  const fs::path scan_path = fs::path(f.out).replace_extension("").string() + "_scan.csv";
  std::ofstream scan_csv(scan_path);
  if (!scan_csv) throw Error(ErrorCategory::io, "cannot write '" + scan_path.string() + "'");
  step_csv << "length,mode,workers,mean_ms,std_ms\n";
  scan_csv << "length,mode,workers,mean_ms,std_ms\n";

  std::cout << "forward+backward per batch of " << f.batch << " windows\n";
  std::cout << "length workers serial_ms parallel_ms speedup scan_speedup\n";
  for (std::size_t w : f.workers) {
    for (std::size_t len : f.lengths) {
      Rng rng(derive_seed(f.seed, len));
      std::vector<std::vector<double>> hist(f.batch), ctrl(f.batch), tgt(f.batch);
      std::vector<WindowView> views(f.batch);
      for (std::size_t k = 0; k < f.batch; ++k) {
        hist[k].resize(shape.history * shape.targets);
        ctrl[k].resize(len * shape.controls);
        tgt[k].resize(len * shape.targets);
        for (double& v : hist[k]) v = uniform(rng, 0.2, 1.0);
        for (double& v : ctrl[k]) v = uniform(rng, -1.0, 1.0);
        for (double& v : tgt[k]) v = uniform(rng, 0.2, 1.0);
        views[k] = WindowView{hist[k], ctrl[k], tgt[k]};
      }
      const BatchOptions serial{1, false, len + 1};
      const BatchOptions parallel{w, true, 1};
      const Timing ts = time_it(f.warmup, f.repeats, [&] { (void)batch_gradient(params, views, 0.1, 1.0, serial); });
      const Timing tp = time_it(f.warmup, f.repeats, [&] { (void)batch_gradient(params, views, 0.1, 1.0, parallel); });
      step_csv << len << ",serial,1," << format_g17(ts.mean_ms) << ',' << format_g17(ts.std_ms) << '\n';
      step_csv << len << ",parallel," << w << ',' << format_g17(tp.mean_ms) << ',' << format_g17(tp.std_ms) << '\n';

      // Scan kernel alone: forward states and adjoint for every window.
      const std::size_t m = shape.state;
      const Spectrum spec = eigenvalues(params.eig);
      std::vector<ScanSequence> seqs;
      std::vector<std::vector<cplx>> x0s(f.batch, std::vector<cplx>(m)), grads(f.batch);
      for (std::size_t k = 0; k < f.batch; ++k) {
        std::vector<cplx> inc(len * m);
        for (cplx& c : inc) c = cplx(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
        for (cplx& c : x0s[k]) c = cplx(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
        grads[k].resize(len * m);
        for (cplx& c : grads[k]) c = cplx(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
        seqs.push_back(ScanSequence::time_invariant(spec.lambdas, inc));
      }
      const auto kernel = [&](const ScanOptions& so) {
        for (std::size_t k = 0; k < f.batch; ++k) {
          const StateTrajectory traj = parallel_scan(x0s[k], seqs[k], so);
          (void)adjoint_scan(seqs[k], traj, grads[k], so);
        }
      };
      const Timing ks = time_it(f.warmup, f.repeats, [&] { kernel(ScanOptions{1, len + 1, nullptr}); });
      const Timing kp = time_it(f.warmup, f.repeats, [&] { kernel(ScanOptions{w, 1, nullptr}); });
      scan_csv << len << ",serial,1," << format_g17(ks.mean_ms) << ',' << format_g17(ks.std_ms) << '\n';
      scan_csv << len << ",parallel," << w << ',' << format_g17(kp.mean_ms) << ',' << format_g17(kp.std_ms) << '\n';

      std::cout << len << ' ' << w << ' ' << format_double(ts.mean_ms) << ' ' << format_double(tp.mean_ms) << ' '
                << format_double(ts.mean_ms / tp.mean_ms) << ' ' << format_double(ks.mean_ms / kp.mean_ms) << '\n';
    }
  }
  std::cout << "wrote " << f.out << " and " << scan_path.string() << '\n';
  return 0;
}

int cmd_inspect_eigen(const std::string& checkpoint, const std::string& out) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const Spectrum s = eigenvalues(ck.params.eig);
  const auto rows = eigen_report(s);
  if (out.empty()) {
    write_eigen_csv(std::cout, rows);
  } else {
    std::ofstream os(out);
    if (!os) throw Error(ErrorCategory::io, "cannot write '" + out + "'");
    write_eigen_csv(os, rows);
  }
  std::cerr << "spectral_radius " << format_double(spectral_radius(s)) << '\n';
  return 0;
}

struct SynthFlags {
  std::string kind = "linear";
  std::string out = "synthetic.csv";
  std::size_t profiles = 12;
  std::size_t length = 2000;
  std::uint64_t seed = 0;
  double noise = 0.001;
  std::size_t state = 16;
  double r_min = 0.9;
  double r_max = 0.99;
  std::string phi = "0.1pi";
};

int cmd_synth(const SynthFlags& f) {
  std::ofstream os(f.out);
  if (!os) throw Error(ErrorCategory::io, "cannot write '" + f.out + "'");
  if (f.kind == "linear") {
    InitConfig ring;
    ring.r_min = f.r_min;
    ring.r_max = f.r_max;
    if (!parse_real_with_pi(f.phi, ring.phi)) throw Error(ErrorCategory::config, "bad --phi '" + f.phi + "'");
    ring.m = f.state;
    ring.seed = derive_seed(f.seed, 3);
    validate(ring);
    const Spectrum spec = eigenvalues(sample_ring_init(ring));
    const SynthDataset ds = synth_generate(spec, f.seed, f.profiles, f.length, f.noise);
    write_dataset_csv(os, ds.profiles);
    json truth;
    truth["noise_sigma_normalized"] = f.noise;
    truth["seed"] = f.seed;
    json eig = json::array();
    for (const EigenRow& r : eigen_report(spec)) eig.push_back({{"magnitude", r.magnitude}, {"phase_rad", r.phase}});
    truth["eigenvalues"] = eig;
    const std::string truth_path = fs::path(f.out).replace_extension("").string() + "_truth.json";
    write_text(truth_path, truth.dump(2) + "\n");
    std::cerr << "wrote " << f.out << " and " << truth_path << " (train with downsample = 1)\n";
  } else if (f.kind == "pmsm") {
    PmsmSimConfig pc;
    pc.n_profiles = f.profiles;
    pc.min_rows = f.length;
    pc.max_rows = 2 * f.length;
    pc.seed = f.seed;
    write_dataset_csv(os, synth_pmsm(pc));
    std::cerr << "wrote " << f.out << '\n';
  } else {
    throw Error(ErrorCategory::config, "--kind must be linear or pmsm");
  }
  return 0;
}

struct SweepFlags {
  ConfigFlags base;
  std::string sweep_file;
  std::string out = "runs/sweep";
  std::vector<std::uint64_t> seeds;
};

// Sweep files: one run per non-comment line, as whitespace-separated
// key=value overrides on top of the base config.
int cmd_sweep(const SweepFlags& f) {
  const TrainConfig base = f.base.resolve();
  std::vector<std::vector<std::pair<std::string, std::string>>> cells;
  {
    std::ifstream in(f.sweep_file);
    if (!in) throw Error(ErrorCategory::io, "cannot open sweep file '" + f.sweep_file + "'");
    std::string line;
    while (std::getline(in, line)) {
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream ss(line);
      std::string tok;
      std::vector<std::pair<std::string, std::string>> cell;
      while (ss >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw Error(ErrorCategory::config, "sweep: expected key=value, got '" + tok + "'");
        cell.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
      }
      if (!cell.empty()) cells.push_back(std::move(cell));
    }
  }
  if (cells.empty()) throw Error(ErrorCategory::config, "sweep file has no runs");
  const std::vector<std::uint64_t> seeds = f.seeds.empty() ? std::vector<std::uint64_t>{base.seed} : f.seeds;
  const std::vector<Profile> raw = load_raw(base);
  fs::create_directories(f.out);
  std::ofstream summary(fs::path(f.out) / "summary.csv");
  summary << "cell,seed,phi,r_min,r_max,best_epoch,val_rmse_K,test_rmse_K,test_mse_K2,test_linf_K,config_hash,out_dir\n";
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = base;
      for (const auto& [k, v] : cells[c]) set_config_value(cfg, k, v);
      cfg.seed = seed;
      cfg.out_dir = (fs::path(f.out) / ("cell" + std::to_string(c) + "_seed" + std::to_string(seed))).string();
      validate(cfg);
      std::cerr << "sweep cell " << c << " seed " << seed << " -> " << cfg.out_dir << '\n';
      const DatasetSplit data = prepare_dataset(raw, cfg);
      const json j = train_to_dir(cfg, data, true);
      const auto num = [&](const char* a, const char* b) {
        return j.contains(a) && j[a].contains(b) && j[a][b].is_number() ? format_g17(j[a][b].get<double>()) : "";
      };
      summary << c << ',' << seed << ',' << format_g17(cfg.phi) << ',' << format_g17(cfg.r_min) << ','
              << format_g17(cfg.r_max) << ',' << j["best_epoch"].get<std::size_t>() << ','
              << (j["final_val_rmse_K"].is_number() ? format_g17(j["final_val_rmse_K"].get<double>()) : "") << ','
              << num("test", "rmse_K") << ',' << num("test", "mse_K2") << ',' << num("test", "linf_K") << ','
              << j["config_hash"].get<std::string>() << ',' << cfg.out_dir << '\n';
      summary.flush();
    }
  }
  std::cout << "wrote " << (fs::path(f.out) / "summary.csv").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"complexNDM motor temperature estimation"};
  app.require_subcommand(1);

  ConfigFlags train_flags;
  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "train a model; writes config, log, checkpoints and metrics");
  train_flags.attach(train_cmd);
  train_cmd->add_flag("--quiet", quiet, "no per-epoch progress on stderr");

  EvalFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint with sliding windows");
  eval_cmd->add_option("checkpoint", eval_flags.checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--dataset", eval_flags.dataset, "dataset CSV (default: the checkpoint's)");
  eval_cmd->add_option("-c,--config", eval_flags.config_path, "config to compare against the checkpoint hash");
  eval_cmd->add_option("-o,--out", eval_flags.out_dir, "output directory");
  eval_cmd->add_option("--split", eval_flags.split, "test, val or train");
  eval_cmd->add_flag("--chained", eval_flags.chained, "also report chained-prediction metrics");

  BenchFlags bench_flags;
  auto* bench_cmd = app.add_subcommand("bench", "time serial vs time-parallel forward+backward");
  bench_cmd->add_option("--lengths", bench_flags.lengths, "estimation lengths")->delimiter(',');
  bench_cmd->add_option("--workers", bench_flags.workers, "worker counts (default: hardware threads)")->delimiter(',');
  bench_cmd->add_option("--repeats", bench_flags.repeats, "timed repetitions");
  bench_cmd->add_option("--warmup", bench_flags.warmup, "untimed warmup repetitions");
  bench_cmd->add_option("--batch", bench_flags.batch, "windows per batch");
  bench_cmd->add_option("--seed", bench_flags.seed);
  bench_cmd->add_option("-o,--out", bench_flags.out, "CSV for full steps; the scan kernel goes to <out>_scan.csv");

  std::string eig_ckpt, eig_out;
  auto* eig_cmd = app.add_subcommand("inspect-eigen", "eigenvalue report of a checkpoint");
  eig_cmd->add_option("checkpoint", eig_ckpt, "checkpoint file")->required();
  eig_cmd->add_option("-o,--out", eig_out, "CSV path (default stdout)");

  SynthFlags synth_flags;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset in the motor CSV layout");
  synth_cmd->add_option("--kind", synth_flags.kind, "linear (known spectrum) or pmsm (thermal network)");
  synth_cmd->add_option("-o,--out", synth_flags.out);
  synth_cmd->add_option("--profiles", synth_flags.profiles);
  synth_cmd->add_option("--length", synth_flags.length, "rows per profile (pmsm: minimum)");
  synth_cmd->add_option("--seed", synth_flags.seed);
  synth_cmd->add_option("--noise", synth_flags.noise, "linear: observation noise in normalized units");
  synth_cmd->add_option("--state", synth_flags.state, "linear: number of eigenvalues");
  synth_cmd->add_option("--r-min", synth_flags.r_min, "linear: truth magnitude range");
  synth_cmd->add_option("--r-max", synth_flags.r_max);
  synth_cmd->add_option("--phi", synth_flags.phi, "linear: truth phase bound, e.g. 0.1pi");

  SweepFlags sweep_flags;
  auto* sweep_cmd = app.add_subcommand("sweep", "train every run of a sweep file; one summary CSV");
  sweep_flags.base.attach(sweep_cmd);
  sweep_cmd->add_option("--sweep", sweep_flags.sweep_file, "sweep file")->required();
  sweep_cmd->add_option("-o,--out", sweep_flags.out, "output directory");
  sweep_cmd->add_option("--seeds", sweep_flags.seeds, "seeds per cell")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*train_cmd) return cmd_train(train_flags, quiet);
    if (*eval_cmd) return cmd_eval(eval_flags);
    if (*bench_cmd) return cmd_bench(bench_flags);
    if (*eig_cmd) return cmd_inspect_eigen(eig_ckpt, eig_out);
    if (*synth_cmd) return cmd_synth(synth_flags);
    if (*sweep_cmd) return cmd_sweep(sweep_flags);
  } catch (const Error& e) {
    std::cerr << "error: " << category_name(e.category()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
