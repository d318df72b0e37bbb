#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sse/features.hpp"
#include "sse/model.hpp"

namespace sse {

// Leading slices of lengths 1..T.
std::vector<FeatureFrame> enumerate_prefixes(const FeatureFrame& frame);

// Reference path: a separate scan from zero state over the prefix, one cell
// call per step and layer, decoding only the final hidden state. Eval mode.
Var many_to_one_logits(const FeatureFrame& prefix, const ModelVars& vars, const ModelParams& params,
                       OpCounter* counter = nullptr);
std::vector<double> many_to_one_forward(const FeatureFrame& prefix, const ModelParams& params,
                                        OpCounter* counter = nullptr);

struct PrefixComparison {
  std::size_t t = 0;  // prefix length
  std::vector<double> oracle_pmf;
  std::vector<double> engine_pmf;
  double max_dev = 0.0;
  std::size_t worst_city = 0;
  std::uint64_t oracle_ops = 0;  // per layer, this prefix
  std::uint64_t engine_ops = 0;  // per layer, whole many-to-many pass
};

struct PrefixOracleReport {
  std::size_t steps = 0;
  std::vector<PrefixComparison> prefixes;
  std::uint64_t oracle_ops = 0;  // per layer, all prefixes
  std::uint64_t engine_ops = 0;  // per layer
  double oracle_loss = 0.0;      // mean of per-prefix final-step losses
  double engine_loss = 0.0;      // flat mean over every step
  double loss_dev = 0.0;
  double grad_dev = 0.0;  // max over every parameter entry
  std::string grad_worst;
  double tolerance = 0.0;
  double grad_tolerance = 0.0;
  bool passed = true;
  std::vector<std::string> failures;

  std::string summary() const;
};

// Engine: one many-to-many pass with `engine`. Oracle: many_to_one_forward
// with `oracle` over every prefix. Requires 64-bit storage precision. The two
// parameter sets normally match; passing a perturbed copy as `oracle` is the
// fault-injection path.
PrefixOracleReport check_equivalence(const FeatureFrame& frame, const ModelParams& engine, const ModelParams& oracle,
                                     double tolerance = 1e-9, double grad_tolerance = 1e-7);
PrefixOracleReport check_equivalence(const FeatureFrame& frame, const ModelParams& params, double tolerance = 1e-9,
                                     double grad_tolerance = 1e-7);

// T,prefix_t,max_dev,oracle_ops,engine_ops
void write_report_header(std::ostream& out);
void write_report_rows(std::ostream& out, const PrefixOracleReport& report);

// Frame of `steps` steps with feature indices drawn uniformly from each
// cardinality (UNKNOWN included).
FeatureFrame random_frame(const Cardinalities& cardinalities, std::size_t steps, Rng& rng);

// Every parameter entry uniform in [-scale, scale]. Initial embeddings are
// small enough to leave the pmf near uniform, which makes a weak probe.
ModelParams random_params(const ModelConfig& config, const Cardinalities& cardinalities, std::uint64_t seed,
                          double scale = 0.5);

// Small probe models for the verification sweep; equivalence does not
// depend on width.
ModelConfig probe_config(CellType cell, DecoderType decoder, std::size_t hidden);
Cardinalities probe_cardinalities(std::size_t cities);

struct SweepOptions {
  std::size_t max_length = 16;  // lengths 1..max_length
  std::size_t trials = 20;      // random models per cell/decoder pair
  std::uint64_t seed = 0;
  double tolerance = 1e-9;
  double grad_tolerance = 1e-7;
  std::size_t hidden = 16;
  std::size_t cities = 40;
  double scale = 0.5;
};

struct SweepSummary {
  std::size_t runs = 0;
  std::size_t failures = 0;
  double max_pmf_dev = 0.0;
  double max_loss_dev = 0.0;
  double max_grad_dev = 0.0;
  std::string first_failure;

  bool passed() const { return failures == 0; }
};

// check_equivalence over trials x {GRU, LSTM} x {tied, feedforward} x
// lengths. `on_report` sees every report. Runs at 64-bit precision.
SweepSummary equivalence_sweep(const SweepOptions& options,
                               const std::function<void(const PrefixOracleReport&)>& on_report = {});

struct ComplexityRow {
  std::size_t steps = 0;
  std::uint64_t oracle_ops = 0;  // per layer
  std::uint64_t engine_ops = 0;  // per layer
  double oracle_seconds = 0.0;   // median
  double engine_seconds = 0.0;   // median
  double op_ratio() const { return static_cast<double>(oracle_ops) / static_cast<double>(engine_ops); }
  double time_ratio() const { return oracle_seconds / engine_seconds; }
};

std::vector<ComplexityRow> benchmark_complexity(std::span<const std::size_t> lengths, const ModelParams& params,
                                                std::size_t repetitions, std::uint64_t seed = 0);

}  // namespace sse
