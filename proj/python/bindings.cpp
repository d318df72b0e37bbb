#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sse/errors.hpp"
#include "sse/length_stats.hpp"
#include "sse/objective.hpp"
#include "sse/oracle.hpp"
#include "sse/run.hpp"
#include "sse/synthetic.hpp"
#include "sse/trainer.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;

namespace {

std::vector<sse::Session> read_sessions(const std::string& path, bool strict) {
  sse::ParseOptions opt;
  opt.strict = strict;
  return sse::parse_sessions_file(path, opt).sessions;
}

std::size_t synth(const std::string& out, std::size_t sessions, std::size_t cities, std::size_t blocks,
                  double within_block, std::uint64_t seed) {
  sse::SyntheticConfig c;
  c.sessions = sessions;
  c.cities = cities;
  c.blocks = blocks;
  c.within_block = within_block;
  c.seed = seed;
  const auto data = sse::generate_synthetic(c);
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  std::ofstream f(out);
  if (!f) throw sse::IoError("cannot write '" + out + "'");
  sse::write_sessions_csv(f, data);
  return data.size();
}

py::dict length_report(const std::string& data, bool strict) {
  const auto report = sse::length_distribution_report(read_sessions(data, strict));
  py::dict d;
  d["steps"] = report.steps.counts;
  d["prefixes"] = report.prefixes.counts;
  d["sessions"] = report.steps.total;
  d["prefix_total"] = report.prefixes.total;
  d["dropped_single"] = report.dropped_single;
  d["augmentation_factor"] = report.augmentation_factor();
  return d;
}

py::dict fold_dict(const sse::FoldResult& f, double popularity) {
  py::dict d;
  d["fold"] = f.fold;
  d["ok"] = f.ok;
  d["error"] = f.error;
  d["best_epoch"] = f.best_epoch;
  d["best_recall"] = f.best_recall;
  d["popularity_recall"] = popularity;
  d["checkpoint"] = f.checkpoint;
  py::list history;
  for (const auto& e : f.history) {
    py::dict h;
    h["epoch"] = e.epoch;
    h["train_loss"] = e.train_loss;
    h["loss_steps"] = e.loss_steps;
    h["val_recall"] = e.val_recall;
    h["val_loss"] = e.val_loss;
    history.append(h);
  }
  d["history"] = history;
  return d;
}

py::dict train(const std::string& data, const std::string& out, const std::map<std::string, std::string>& config,
               bool strict) {
  sse::ModelConfig model;
  sse::TrainConfig cfg;
  std::string precision = "float32";
  std::set<std::string> known{"precision"};
  for (const auto& [k, v] : model.to_map()) known.insert(k);
  for (const auto& [k, v] : cfg.to_map()) known.insert(k);
  for (const auto& [k, v] : config) {
    if (!known.contains(k)) throw sse::ConfigError("unknown config key '" + k + "'");
  }
  model.apply(config);
  cfg.apply(config);
  if (config.contains("precision")) precision = config.at("precision");
  if (precision != "float32" && precision != "float64") throw sse::ConfigError("precision must be float32 or float64");
  model.validate();
  cfg.validate();
  const auto sessions = read_sessions(data, strict);

  sse::CrossValidationResult cv;
  {
    py::gil_scoped_release release;
    sse::PrecisionScope scope(precision == "float32" ? sse::Precision::kFloat32 : sse::Precision::kFloat64);
    fs::create_directories(out);
    std::ofstream c(fs::path(out) / "config.txt");
    auto resolved = model.to_map();
    for (const auto& [k, v] : cfg.to_map()) resolved[k] = v;
    resolved["precision"] = precision;
    resolved["data"] = data;
    for (const auto& [k, v] : resolved) c << k << '=' << v << '\n';
    sse::CrossValidationOptions opt;
    opt.run_dir = out;
    cv = sse::cross_validate(sessions, model, cfg, opt);
  }
  py::dict d;
  py::list folds;
  for (std::size_t i = 0; i < cv.folds.size(); ++i) folds.append(fold_dict(cv.folds[i], cv.popularity_recall[i]));
  d["folds"] = folds;
  d["mean_best_recall"] = cv.mean_best_recall();
  d["skipped_sessions"] = cv.skipped_sessions;
  return d;
}

py::dict evaluate(const std::string& run_dir, const std::string& data, std::size_t k, bool strict) {
  const auto run = sse::load_run(run_dir);
  const auto sessions = read_sessions(data, strict);
  sse::Ensemble best;
  best.add(run.ensemble.member(run.best_member));
  const auto single = sse::evaluate_sessions(best, sessions, k);
  const auto ens = sse::evaluate_sessions(run.ensemble, sessions, k);
  py::dict d;
  d["k"] = k;
  d["best_fold"] = run.folds[run.best_member];
  d["best_fold_recall"] = single.recall;
  d["ensemble_recall"] = ens.recall;
  d["ensemble_hit_rate"] = ens.hit_rate;
  d["members"] = run.ensemble.size();
  d["trips"] = ens.trips;
  d["skipped"] = ens.skipped;
  d["unknown_truth"] = ens.unknown_truth;
  return d;
}

std::vector<std::pair<std::string, std::vector<std::string>>> predict(const std::string& run_dir,
                                                                      const std::string& data, std::size_t k,
                                                                      bool strict) {
  const auto run = sse::load_run(run_dir);
  const auto recs = sse::recommend(run.ensemble, read_sessions(data, strict), k);
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  for (const auto& r : recs) out.emplace_back(r.utrip_id, r.city_ids);
  return out;
}

py::dict verify(std::size_t max_length, std::size_t trials, std::uint64_t seed, double tolerance,
                double grad_tolerance, std::size_t hidden, std::size_t cities, double scale) {
  sse::SweepOptions opt;
  opt.max_length = max_length;
  opt.trials = trials;
  opt.seed = seed;
  opt.tolerance = tolerance;
  opt.grad_tolerance = grad_tolerance;
  opt.hidden = hidden;
  opt.cities = cities;
  opt.scale = scale;
  sse::SweepSummary sum;
  {
    py::gil_scoped_release release;
    sum = sse::equivalence_sweep(opt);
  }
  py::dict d;
  d["passed"] = sum.passed();
  d["runs"] = sum.runs;
  d["failures"] = sum.failures;
  d["max_pmf_dev"] = sum.max_pmf_dev;
  d["max_loss_dev"] = sum.max_loss_dev;
  d["max_grad_dev"] = sum.max_grad_dev;
  d["first_failure"] = sum.first_failure;
  return d;
}

std::vector<py::dict> bench(const std::vector<std::size_t>& lengths, std::size_t reps, std::size_t cities,
                            const std::string& cell, std::uint64_t seed) {
  sse::PrecisionScope scope(sse::Precision::kFloat64);
  sse::ModelConfig c;
  c.cell = sse::parse_cell(cell);
  c = c.without_dropout();
  std::vector<sse::ComplexityRow> rows;
  {
    py::gil_scoped_release release;
    const auto params = sse::ModelParams::initialize(c, sse::probe_cardinalities(cities), seed);
    rows = sse::benchmark_complexity(lengths, params, reps, seed);
  }
  std::vector<py::dict> out;
  for (const auto& r : rows) {
    py::dict d;
    d["steps"] = r.steps;
    d["oracle_ops"] = r.oracle_ops;
    d["engine_ops"] = r.engine_ops;
    d["op_ratio"] = r.op_ratio();
    d["oracle_seconds"] = r.oracle_seconds;
    d["engine_seconds"] = r.engine_seconds;
    d["time_ratio"] = r.time_ratio();
    out.push_back(d);
  }
  return out;
}

py::dict length_weights(const std::map<std::size_t, std::size_t>& counts, const std::string& scheme) {
  sse::LengthHistogram h;
  for (const auto& [t, n] : counts) h.add(t, n);
  sse::WeightScheme s;
  if (scheme == "length_share") s = sse::WeightScheme::kLengthShare;
  else if (scheme == "inverse_cumulative") s = sse::WeightScheme::kInverseCumulative;
  else throw sse::ConfigError("scheme must be length_share or inverse_cumulative");
  const auto w = sse::compute_length_weights(h, s);
  std::map<std::size_t, double> raw, scaled;
  for (std::size_t t = 1; t <= w.max_length(); ++t) {
    raw[t] = w.raw_weight(t);
    scaled[t] = w.weight(t);
  }
  py::dict d;
  d["raw"] = raw;
  d["weight"] = scaled;
  d["rescale"] = w.rescale;
  return d;
}

}  // namespace

PYBIND11_MODULE(_sse, m) {
  m.doc() = "Native core of session_seq";

  static py::exception<sse::Error> error(m, "Error", PyExc_RuntimeError);
  static py::exception<sse::ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
  static py::exception<sse::DataError> data_error(m, "DataError", PyExc_ValueError);
  static py::exception<sse::IoError> io_error(m, "IoError", PyExc_OSError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const sse::ConfigError& e) {
      PyErr_SetString(config_error.ptr(), e.what());
    } catch (const sse::DataError& e) {
      PyErr_SetString(data_error.ptr(), e.what());
    } catch (const sse::IoError& e) {
      PyErr_SetString(io_error.ptr(), e.what());
    } catch (const sse::Error& e) {
      PyErr_SetString(error.ptr(), e.what());
    }
  });

  m.def("synth", &synth, py::arg("out"), py::arg("sessions") = 1000, py::arg("cities") = 50, py::arg("blocks") = 5,
        py::arg("within_block") = 0.85, py::arg("seed") = 7, "Write a synthetic booking CSV; returns the trip count.");
  m.def("length_report", &length_report, py::arg("data"), py::arg("strict") = false,
        "Prediction-step and prefix histograms of a booking CSV.");
  m.def("train", &train, py::arg("data"), py::arg("out"), py::arg("config") = std::map<std::string, std::string>{},
        py::arg("strict") = false, "Cross-validated training into a run directory.");
  m.def("evaluate", &evaluate, py::arg("run"), py::arg("data"), py::arg("k") = 4, py::arg("strict") = false);
  m.def("predict", &predict, py::arg("run"), py::arg("data"), py::arg("k") = 4, py::arg("strict") = false,
        "Top-k city ids per trip, best first.");
  m.def("verify", &verify, py::arg("max_length") = 16, py::arg("trials") = 20, py::arg("seed") = 0,
        py::arg("tolerance") = 1e-9, py::arg("grad_tolerance") = 1e-7, py::arg("hidden") = 16, py::arg("cities") = 40,
        py::arg("scale") = 0.5, "Compare the many-to-many engine with the per-prefix many-to-one oracle.");
  m.def("bench", &bench, py::arg("lengths") = std::vector<std::size_t>{1, 4, 16, 48}, py::arg("reps") = 3,
        py::arg("cities") = 1000, py::arg("cell") = "gru", py::arg("seed") = 0);
  m.def("length_weights", &length_weights, py::arg("counts"), py::arg("scheme") = "length_share");
  m.def("softmax", [](const std::vector<double>& z) { return sse::softmax(z); });
  m.def("top_k", [](const std::vector<double>& p, std::size_t k) { return sse::top_k(p, k); });
}
