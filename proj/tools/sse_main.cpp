// Command-line front end: synth, stats, train, eval, predict, verify, bench.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "sse/checkpoint.hpp"
#include "sse/errors.hpp"
#include "sse/length_stats.hpp"
#include "sse/oracle.hpp"
#include "sse/run.hpp"
#include "sse/run_manifest.hpp"
#include "sse/synthetic.hpp"
#include "sse/trainer.hpp"

namespace fs = std::filesystem;
using namespace sse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerify = 3;

std::string real(double v, int digits = 6) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

std::uint64_t resolve_seed(const CLI::Option* flag, std::uint64_t value) {
  if (flag->count() > 0) return value;
  if (auto s = env_seed()) return *s;
  return value;
}

void ensure_parent(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::vector<Session> load_sessions(const std::string& path, bool strict) {
  ParseOptions opts;
  opts.strict = strict;
  ParseResult r = parse_sessions_file(path, opts);
  if (r.malformed_rows > 0) {
    std::cerr << "warning: skipped " << r.malformed_rows << " malformed row(s) in " << path << '\n';
    for (const auto& p : r.problems) std::cerr << "  " << p << '\n';
  }
  return std::move(r.sessions);
}

// ---- synth ----

struct SynthArgs {
  SyntheticConfig config;
  std::string out;
  std::string manifest;
  CLI::Option* seed_flag = nullptr;
};

int run_synth(SynthArgs& a) {
  a.config.seed = resolve_seed(a.seed_flag, a.config.seed);
  RunManifest manifest(a.manifest.empty() ? a.out + ".manifest.json" : a.manifest, "synth");
  manifest.set_config({{"sessions", std::to_string(a.config.sessions)},
                       {"cities", std::to_string(a.config.cities)},
                       {"blocks", std::to_string(a.config.blocks)},
                       {"within_block", real(a.config.within_block, 17)},
                       {"out", a.out}});
  manifest.set_seed("seed", a.config.seed);
  if (a.config.sessions == 0) std::cerr << "warning: --sessions 0 writes a header-only file\n";
  const auto sessions = generate_synthetic(a.config);
  ensure_parent(a.out);
  {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw IoError("cannot write '" + a.out + "'");
    write_sessions_csv(out, sessions);
  }
  manifest.add_artifact(a.out);
  manifest.finish("ok");
  std::size_t bookings = 0;
  for (const auto& s : sessions) bookings += s.length();
  std::cout << "wrote " << sessions.size() << " sessions (" << bookings << " bookings) to " << a.out << '\n';
  return kExitOk;
}

// ---- stats ----

struct StatsArgs {
  std::string data;
  std::string out;
  bool strict = false;
};

int run_stats(const StatsArgs& a) {
  std::optional<RunManifest> manifest;
  if (!a.out.empty()) {
    manifest.emplace(a.out + ".manifest.json", "stats");
    manifest->add_input(a.data);
  }
  const auto sessions = load_sessions(a.data, a.strict);
  const DatasetSummary d = describe(sessions);
  std::cout << "users=" << d.users << " sessions=" << d.sessions << " cities=" << d.cities
            << " bookings=" << d.bookings << " min_length=" << d.min_length << " max_length=" << d.max_length
            << " median_length=" << real(d.median_length) << '\n';
  const LengthReport report = length_distribution_report(sessions);
  std::cout << "steps=" << report.steps.total << " prefixes=" << report.prefixes.total
            << " dropped_single=" << report.dropped_single;
  if (report.steps.total > 0) std::cout << " augmentation_factor=" << real(report.augmentation_factor());
  std::cout << '\n';
  write_length_table(std::cout, report);
  if (manifest) {
    ensure_parent(a.out);
    std::ofstream out(a.out);
    if (!out) throw IoError("cannot write '" + a.out + "'");
    write_length_table(out, report);
    out.close();
    manifest->add_artifact(a.out);
    manifest->finish("ok");
  }
  return kExitOk;
}

// ---- train ----

struct TrainArgs {
  std::string data;
  std::string config_file;
  std::string out;
  std::map<std::string, std::string> flags;  // explicit flags, applied last
  CLI::Option* seed_flag = nullptr;
  std::uint64_t seed = 0;
  std::string precision = "float32";
  bool strict = false;
};

std::set<std::string> known_keys() {
  std::set<std::string> keys;
  for (const auto& [k, v] : ModelConfig{}.to_map()) keys.insert(k);
  for (const auto& [k, v] : TrainConfig{}.to_map()) keys.insert(k);
  keys.insert("precision");
  return keys;
}

int run_train(TrainArgs& a) {
  std::map<std::string, std::string> kv;
  if (!a.config_file.empty()) kv = parse_config_file(a.config_file);
  const auto keys = known_keys();
  for (const auto& [k, v] : kv) {
    if (!keys.contains(k)) throw ConfigError("unknown config key '" + k + "'");
  }
  for (const auto& [k, v] : a.flags) kv[k] = v;
  if (a.seed_flag->count() > 0 || !kv.contains("seed")) kv["seed"] = std::to_string(resolve_seed(a.seed_flag, a.seed));

  ModelConfig model;
  TrainConfig train;
  model.apply(kv);
  train.apply(kv);
  if (kv.contains("precision")) a.precision = kv["precision"];
  if (a.precision != "float32" && a.precision != "float64") throw ConfigError("precision must be float32 or float64");
  model.validate();
  train.validate();

  fs::create_directories(a.out);
  RunManifest manifest((fs::path(a.out) / "manifest.json").string(), "train");
  std::map<std::string, std::string> resolved = model.to_map();
  for (const auto& [k, v] : train.to_map()) resolved[k] = v;
  resolved["precision"] = a.precision;
  resolved["data"] = a.data;
  manifest.set_config(resolved);
  manifest.set_seed("seed", train.seed);
  manifest.add_input(a.data);
  if (!a.config_file.empty()) manifest.add_input(a.config_file);
  {
    std::ofstream cfg(fs::path(a.out) / "config.txt");
    for (const auto& [k, v] : resolved) cfg << k << '=' << v << '\n';
  }
  manifest.add_artifact((fs::path(a.out) / "config.txt").string());

  const auto sessions = load_sessions(a.data, a.strict);
  PrecisionScope scope(a.precision == "float32" ? Precision::kFloat32 : Precision::kFloat64);
  CrossValidationOptions opts;
  opts.run_dir = a.out;
  opts.on_epoch = [](const FoldResult& fold, const EpochStats& e) {
    std::cout << metrics_line(e.epoch, fold.fold, "train", std::nullopt, e.train_loss) << '\n'
              << metrics_line(e.epoch, fold.fold, "val", e.val_recall, e.val_loss) << std::endl;
  };
  const CrossValidationResult cv = cross_validate(sessions, model, train, opts);
  bool all_ok = true;
  for (std::size_t i = 0; i < cv.folds.size(); ++i) {
    const FoldResult& f = cv.folds[i];
    if (!f.ok) {
      all_ok = false;
      std::cerr << "fold " << f.fold << " failed: " << f.error << '\n';
      continue;
    }
    manifest.add_artifact(f.checkpoint);
    std::cout << "fold=" << f.fold << " best_epoch=" << f.best_epoch << " recall_at_" << train.eval_k << '='
              << real(f.best_recall) << " popularity=" << real(cv.popularity_recall[i]) << '\n';
  }
  manifest.add_artifact((fs::path(a.out) / "metrics.csv").string());
  manifest.add_artifact((fs::path(a.out) / "folds.csv").string());
  std::cout << "mean_best_recall=" << real(cv.mean_best_recall()) << " skipped_sessions=" << cv.skipped_sessions
            << '\n';
  manifest.finish(all_ok ? "ok" : "partial");
  return all_ok ? kExitOk : kExitData;
}

// ---- eval / predict ----

struct EvalArgs {
  std::string run;
  std::string data;
  std::size_t k = 4;
  std::string manifest;
  bool strict = false;
};

int run_eval(const EvalArgs& a) {
  RunManifest manifest(a.manifest.empty() ? (fs::path(a.run) / "eval.manifest.json").string() : a.manifest, "eval");
  manifest.set_config({{"run", a.run}, {"data", a.data}, {"k", std::to_string(a.k)}});
  manifest.add_input(a.data);
  const LoadedRun run = load_run(a.run);
  const auto sessions = load_sessions(a.data, a.strict);

  Ensemble best;
  best.add(run.ensemble.member(run.best_member));
  const SessionEval single = evaluate_sessions(best, sessions, a.k);
  const SessionEval ens = evaluate_sessions(run.ensemble, sessions, a.k);
  std::cout << "model=fold" << run.folds[run.best_member] << " trips=" << single.trips << " recall_at_" << a.k << '='
            << real(single.recall) << '\n';
  std::cout << "model=ensemble members=" << run.ensemble.size() << " trips=" << ens.trips << " recall_at_" << a.k
            << '=' << real(ens.recall) << '\n';
  if (ens.skipped > 0) std::cerr << "warning: skipped " << ens.skipped << " session(s) without a scorable final booking\n";
  if (ens.unknown_truth > 0) std::cerr << "warning: " << ens.unknown_truth << " final city id(s) unseen in training\n";
  manifest.finish("ok");
  return kExitOk;
}

struct PredictArgs {
  std::string run;
  std::string data;
  std::string out;
  std::size_t k = 4;
  bool strict = false;
};

int run_predict(const PredictArgs& a) {
  RunManifest manifest(a.out + ".manifest.json", "predict");
  manifest.set_config({{"run", a.run}, {"data", a.data}, {"out", a.out}, {"k", std::to_string(a.k)}});
  manifest.add_input(a.data);
  const LoadedRun run = load_run(a.run);
  const auto sessions = load_sessions(a.data, a.strict);
  std::size_t skipped = 0;
  const auto recs = recommend(run.ensemble, sessions, a.k, &skipped);
  if (skipped > 0) std::cerr << "warning: skipped " << skipped << " session(s) with fewer than two bookings\n";
  ensure_parent(a.out);
  {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw IoError("cannot write '" + a.out + "'");
    write_recommendations_csv(out, recs, a.k);
  }
  manifest.add_artifact(a.out);
  manifest.finish("ok");
  std::cout << "wrote " << recs.size() << " recommendation row(s) to " << a.out << '\n';
  return kExitOk;
}

// ---- verify / bench ----

struct VerifyArgs {
  std::size_t max_length = 16;
  std::size_t trials = 20;
  std::uint64_t seed = 0;
  CLI::Option* seed_flag = nullptr;
  double tolerance = 1e-9;
  double grad_tolerance = 1e-7;
  std::size_t hidden = 16;
  std::size_t cities = 40;
  double scale = 0.5;
  std::string report = "verify_report.csv";
};

int run_verify(VerifyArgs& a) {
  if (a.max_length < 1 || a.trials < 1) throw ConfigError("verify: --max-length and --trials must be >= 1");
  a.seed = resolve_seed(a.seed_flag, a.seed);
  RunManifest manifest(a.report + ".manifest.json", "verify");
  manifest.set_config({{"max_length", std::to_string(a.max_length)},
                       {"trials", std::to_string(a.trials)},
                       {"tolerance", real(a.tolerance, 17)},
                       {"grad_tolerance", real(a.grad_tolerance, 17)},
                       {"hidden", std::to_string(a.hidden)},
                       {"cities", std::to_string(a.cities)},
                       {"scale", real(a.scale, 17)}});
  manifest.set_seed("seed", a.seed);
  ensure_parent(a.report);
  std::ofstream csv(a.report);
  if (!csv) throw IoError("cannot write '" + a.report + "'");
  write_report_header(csv);
  SweepOptions opt;
  opt.max_length = a.max_length;
  opt.trials = a.trials;
  opt.seed = a.seed;
  opt.tolerance = a.tolerance;
  opt.grad_tolerance = a.grad_tolerance;
  opt.hidden = a.hidden;
  opt.cities = a.cities;
  opt.scale = a.scale;
  const SweepSummary sum = equivalence_sweep(opt, [&](const PrefixOracleReport& r) { write_report_rows(csv, r); });
  csv.close();
  manifest.add_artifact(a.report);
  const bool ok = sum.passed();
  std::cout << (ok ? "PASS" : "FAIL") << " runs=" << sum.runs << " failures=" << sum.failures
            << " max_pmf_dev=" << real(sum.max_pmf_dev, 3) << " max_loss_dev=" << real(sum.max_loss_dev, 3)
            << " max_grad_dev=" << real(sum.max_grad_dev, 3) << '\n';
  if (!ok) {
    std::cout << "first failure: " << sum.first_failure << '\n' << "report: " << a.report << '\n';
  }
  manifest.finish(ok ? "pass" : "fail");
  return ok ? kExitOk : kExitVerify;
}

struct BenchArgs {
  std::vector<std::size_t> lengths{1, 4, 16, 48};
  std::size_t reps = 5;
  std::string out;
  std::string cell = "gru";
  std::size_t cities = 1000;
  std::uint64_t seed = 0;
  CLI::Option* seed_flag = nullptr;
};

int run_bench(BenchArgs& a) {
  a.seed = resolve_seed(a.seed_flag, a.seed);
  std::optional<RunManifest> manifest;
  if (!a.out.empty()) {
    manifest.emplace(a.out + ".manifest.json", "bench");
    manifest->set_config({{"reps", std::to_string(a.reps)}, {"cell", a.cell}, {"cities", std::to_string(a.cities)}});
    manifest->set_seed("seed", a.seed);
  }
  ModelConfig config;
  config.cell = parse_cell(a.cell);
  const ModelParams params = ModelParams::initialize(config, probe_cardinalities(a.cities), a.seed);
  const auto rows = benchmark_complexity(a.lengths, params, a.reps, a.seed);
  std::ostringstream table;
  table << "T,oracle_ops,engine_ops,op_ratio,oracle_seconds,engine_seconds,time_ratio\n";
  for (const ComplexityRow& r : rows) {
    table << r.steps << ',' << r.oracle_ops << ',' << r.engine_ops << ',' << real(r.op_ratio()) << ','
          << real(r.oracle_seconds) << ',' << real(r.engine_seconds) << ',' << real(r.time_ratio()) << '\n';
  }
  std::cout << table.str();
  if (manifest) {
    ensure_parent(a.out);
    std::ofstream out(a.out);
    if (!out) throw IoError("cannot write '" + a.out + "'");
    out << table.str();
    out.close();
    manifest->add_artifact(a.out);
    manifest->finish("ok");
  }
  return kExitOk;
}

CLI::Option* flag_to(CLI::App* app, std::map<std::string, std::string>& flags, const std::string& name,
                     const std::string& key, const std::string& help) {
  return app->add_option_function<std::string>(
      name, [&flags, key](const std::string& v) { flags[key] = v; }, help);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Session-aware next-destination recommender"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* sc = app.add_subcommand("synth", "Generate a synthetic booking corpus");
  sc->add_option("--sessions", synth.config.sessions, "Number of trips")->capture_default_str();
  sc->add_option("--cities", synth.config.cities, "Number of cities")->capture_default_str();
  sc->add_option("--blocks", synth.config.blocks, "Country blocks")->capture_default_str();
  sc->add_option("--within-block", synth.config.within_block, "Within-block transition mass")->capture_default_str();
  synth.seed_flag = sc->add_option("--seed", synth.config.seed, "Seed (default: SSE_SEED or 7)");
  sc->add_option("--out", synth.out, "Output CSV")->required();
  sc->add_option("--manifest", synth.manifest, "Manifest path (default: <out>.manifest.json)");

  StatsArgs stats;
  auto* st = app.add_subcommand("stats", "Describe a booking file and its length distribution");
  st->add_option("--data", stats.data, "Booking CSV")->required();
  st->add_option("--out", stats.out, "Write the length table here");
  st->add_flag("--strict", stats.strict, "Fail on the first malformed row");

  TrainArgs train;
  auto* tr = app.add_subcommand("train", "Cross-validated training");
  tr->add_option("--data", train.data, "Booking CSV")->required();
  tr->add_option("--config", train.config_file, "key=value config file");
  tr->add_option("--out", train.out, "Run directory")->required();
  flag_to(tr, train.flags, "--model", "model_type", "m2m or m2o");
  flag_to(tr, train.flags, "--cell", "cell", "gru or lstm");
  flag_to(tr, train.flags, "--decoder", "decoder", "tied or ff");
  flag_to(tr, train.flags, "--weighting", "weighting", "on or off");
  flag_to(tr, train.flags, "--weight-scheme", "weight_scheme", "length_share or inverse_cumulative");
  flag_to(tr, train.flags, "--epochs", "epochs", "Epochs per fold");
  flag_to(tr, train.flags, "--folds", "folds", "Cross-validation folds");
  flag_to(tr, train.flags, "--batch-size", "batch_size", "Batch size");
  flag_to(tr, train.flags, "--lr", "learning_rate", "Adam learning rate");
  flag_to(tr, train.flags, "--layers", "layers", "Recurrent layers");
  flag_to(tr, train.flags, "--hidden", "hidden_dim", "Hidden width");
  flag_to(tr, train.flags, "--city-dim", "city_dim", "City embedding width");
  flag_to(tr, train.flags, "--jobs", "jobs", "Folds trained in parallel");
  flag_to(tr, train.flags, "--precision", "precision", "float32 or float64 parameter storage");
  train.seed_flag = tr->add_option("--seed", train.seed, "Seed (default: SSE_SEED or 0)");
  tr->add_flag("--strict", train.strict, "Fail on the first malformed row");

  EvalArgs eval;
  auto* ev = app.add_subcommand("eval", "recall@k of the best fold and of the ensemble");
  ev->add_option("--run", eval.run, "Run directory")->required();
  ev->add_option("--data", eval.data, "Booking CSV")->required();
  ev->add_option("--k", eval.k, "Cut-off")->capture_default_str()->check(CLI::PositiveNumber);
  ev->add_option("--manifest", eval.manifest, "Manifest path (default: <run>/eval.manifest.json)");
  ev->add_flag("--strict", eval.strict, "Fail on the first malformed row");

  PredictArgs predict;
  auto* pr = app.add_subcommand("predict", "Top-k next-city recommendations");
  pr->add_option("--run", predict.run, "Run directory")->required();
  pr->add_option("--data", predict.data, "Booking CSV; final city may be empty")->required();
  pr->add_option("--out", predict.out, "Output CSV")->required();
  pr->add_option("--k", predict.k, "Recommendations per trip")->capture_default_str()->check(CLI::PositiveNumber);
  pr->add_flag("--strict", predict.strict, "Fail on the first malformed row");

  VerifyArgs verify;
  auto* ve = app.add_subcommand("verify", "Check many-to-many against the per-prefix many-to-one oracle");
  ve->add_option("--max-length", verify.max_length, "Session lengths 1..N")->capture_default_str();
  ve->add_option("--trials", verify.trials, "Random models per configuration")->capture_default_str();
  verify.seed_flag = ve->add_option("--seed", verify.seed, "Seed (default: SSE_SEED or 0)");
  ve->add_option("--tolerance", verify.tolerance, "pmf and loss tolerance")->capture_default_str();
  ve->add_option("--grad-tolerance", verify.grad_tolerance, "Gradient tolerance")->capture_default_str();
  ve->add_option("--hidden", verify.hidden, "Hidden width of the probe models")->capture_default_str();
  ve->add_option("--cities", verify.cities, "City vocabulary of the probe models")->capture_default_str();
  ve->add_option("--scale", verify.scale, "Probe parameters uniform in [-scale, scale]")->capture_default_str();
  ve->add_option("--report", verify.report, "CSV report path")->capture_default_str();

  BenchArgs bench;
  auto* be = app.add_subcommand("bench", "Sequential cell steps and wall time, oracle vs engine");
  be->add_option("--lengths", bench.lengths, "Session lengths")->delimiter(',')->capture_default_str();
  be->add_option("--reps", bench.reps, "Repetitions (median reported)")->capture_default_str()->check(CLI::PositiveNumber);
  be->add_option("--cell", bench.cell, "gru or lstm")->capture_default_str();
  be->add_option("--cities", bench.cities, "City vocabulary")->capture_default_str();
  bench.seed_flag = be->add_option("--seed", bench.seed, "Seed (default: SSE_SEED or 0)");
  be->add_option("--out", bench.out, "Also write the table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*sc) return run_synth(synth);
    if (*st) return run_stats(stats);
    if (*tr) return run_train(train);
    if (*ev) return run_eval(eval);
    if (*pr) return run_predict(predict);
    if (*ve) return run_verify(verify);
    if (*be) return run_bench(bench);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
