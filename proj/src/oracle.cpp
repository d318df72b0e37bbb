#include "sse/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "sse/batching.hpp"
#include "sse/errors.hpp"
#include "sse/objective.hpp"

namespace sse {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::vector<Tensor> gradients(Tape& tape, const ModelVars& vars) {
  std::vector<Tensor> g;
  g.reserve(vars.all.size());
  for (const Var& v : vars.all) g.push_back(tape.grad(v));
  return g;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<FeatureFrame> enumerate_prefixes(const FeatureFrame& frame) {
  std::vector<FeatureFrame> out;
  out.reserve(frame.steps);
  for (std::size_t t = 1; t <= frame.steps; ++t) out.push_back(frame.prefix(t));
  return out;
}

Var many_to_one_logits(const FeatureFrame& prefix, const ModelVars& vars, const ModelParams& params,
                       OpCounter* counter) {
  if (prefix.steps == 0) throw ContractError("many_to_one_logits: empty prefix");
  const ModelConfig& config = params.config();
  Tape& tape = *vars.all.front().tape();
  std::vector<LayerVars> layers;
  for (std::size_t l = 0; l < config.layers; ++l) layers.push_back(layer_vars(vars, params, l));

  // Layer-major: the whole prefix runs through layer 0, then layer 1, ...
  std::vector<Var> inputs;
  for (std::size_t t = 0; t < prefix.steps; ++t) inputs.push_back(embed_step(prefix.row(t), vars, config));
  for (std::size_t l = 0; l < config.layers; ++l) {
    Var h = tape.constant(Tensor(1, config.hidden_dim));
    Var c = h;
    for (std::size_t t = 0; t < prefix.steps; ++t) {
      if (config.cell == CellType::kGru) {
        h = gru_step(h, inputs[t], layers[l], nullptr);
      } else {
        const LstmState s = lstm_step(h, c, inputs[t], layers[l], nullptr);
        h = s.h;
        c = s.c;
      }
      if (counter != nullptr) counter->tick(l);
      inputs[t] = h;
    }
  }
  return decode(inputs.back(), vars, params);
}

std::vector<double> many_to_one_forward(const FeatureFrame& prefix, const ModelParams& params, OpCounter* counter) {
  Tape tape;
  const ModelVars vars = bind(tape, params);
  const Var logits = many_to_one_logits(prefix, vars, params, counter);
  return softmax(logits.value().row(0));
}

std::string PrefixOracleReport::summary() const {
  std::ostringstream os;
  double worst = 0.0;
  for (const auto& p : prefixes) worst = std::max(worst, p.max_dev);
  os << (passed ? "PASS" : "FAIL") << " T=" << steps << " max_dev=" << num(worst) << " loss_dev=" << num(loss_dev)
     << " grad_dev=" << num(grad_dev) << " oracle_ops=" << oracle_ops << " engine_ops=" << engine_ops;
  return os.str();
}

PrefixOracleReport check_equivalence(const FeatureFrame& frame, const ModelParams& engine, const ModelParams& oracle,
                                     double tolerance, double grad_tolerance) {
  if (precision() != Precision::kFloat64) throw ContractError("check_equivalence: requires 64-bit precision");
  if (frame.steps == 0) throw ContractError("check_equivalence: frame has no steps");
  if (engine.names() != oracle.names()) throw ContractError("check_equivalence: parameter layouts differ");
  const std::size_t layers = engine.config().layers;

  PrefixOracleReport report;
  report.steps = frame.steps;
  report.tolerance = tolerance;
  report.grad_tolerance = grad_tolerance;

  // Engine: one batched many-to-many pass.
  Tape etape;
  const ModelVars evars = bind(etape, engine);
  const std::vector<FeatureFrame> single{frame};
  const Batch batch = pack_batch(single);
  OpCounter ecount(layers);
  const StepLogits sl = forward_many_to_many(batch, evars, engine, Mode::kEval, 0, &ecount);
  const LossInputs inputs = loss_inputs(batch, LossConfig{}, StepSelection::kAllSteps);
  const Var eloss = sequence_loss(sl.logits, inputs);
  etape.backward(eloss);
  const std::vector<Tensor> egrad = gradients(etape, evars);
  report.engine_loss = eloss.value()(0, 0);
  report.engine_ops = ecount.count(0);

  // Oracle: one many-to-one pass per prefix.
  std::vector<Tensor> ograd;
  for (const Tensor& g : egrad) ograd.emplace_back(g.rows(), g.cols());
  const auto n = static_cast<double>(frame.steps);
  const std::vector<double> unit{1.0};
  for (const FeatureFrame& prefix : enumerate_prefixes(frame)) {
    Tape otape;
    const ModelVars ovars = bind(otape, oracle);
    OpCounter ocount(layers);
    const Var logits = many_to_one_logits(prefix, ovars, oracle, &ocount);
    const std::vector<std::int32_t> target{prefix.targets.back()};
    const Var loss = cross_entropy(logits, target, unit);
    otape.backward(loss);
    for (std::size_t i = 0; i < ograd.size(); ++i) {
      const Tensor g = otape.grad(ovars.all[i]);
      auto acc = ograd[i].values();
      const auto src = g.values();
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += src[k] / n;
    }
    report.oracle_loss += loss.value()(0, 0) / n;

    PrefixComparison cmp;
    cmp.t = prefix.steps;
    cmp.oracle_pmf = softmax(logits.value().row(0));
    cmp.engine_pmf = softmax(sl.logits.value().row(sl.row_of(0, prefix.steps - 1)));
    for (std::size_t c = 0; c < cmp.oracle_pmf.size(); ++c) {
      const double d = std::fabs(cmp.oracle_pmf[c] - cmp.engine_pmf[c]);
      if (d > cmp.max_dev || c == 0) {
        cmp.max_dev = d;
        cmp.worst_city = c;
      }
    }
    cmp.oracle_ops = ocount.count(0);
    cmp.engine_ops = report.engine_ops;
    report.oracle_ops += cmp.oracle_ops;
    for (std::size_t l = 1; l < layers; ++l) {
      if (ocount.count(l) != cmp.oracle_ops) report.failures.push_back("oracle op count differs between layers");
    }
    if (!(cmp.max_dev < tolerance)) {
      std::ostringstream os;
      os << "pmf deviation at t=" << cmp.t << " city=" << cmp.worst_city << " oracle=" << num(cmp.oracle_pmf[cmp.worst_city])
         << " engine=" << num(cmp.engine_pmf[cmp.worst_city]) << " dev=" << num(cmp.max_dev);
      report.failures.push_back(os.str());
    }
    report.prefixes.push_back(std::move(cmp));
  }

  report.loss_dev = std::fabs(report.oracle_loss - report.engine_loss);
  if (!(report.loss_dev < tolerance)) {
    report.failures.push_back("loss deviation: oracle=" + num(report.oracle_loss) + " engine=" + num(report.engine_loss));
  }
  for (std::size_t i = 0; i < egrad.size(); ++i) {
    const auto a = egrad[i].values();
    const auto b = ograd[i].values();
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = std::fabs(a[k] - b[k]);
      if (d > report.grad_dev) {
        report.grad_dev = d;
        report.grad_worst = engine.names()[i] + "[" + std::to_string(k) + "]";
      }
    }
  }
  if (!(report.grad_dev < grad_tolerance)) {
    report.failures.push_back("gradient deviation " + num(report.grad_dev) + " at " + report.grad_worst);
  }
  const std::uint64_t t = frame.steps;
  if (report.engine_ops != t || report.oracle_ops != t * (t + 1) / 2) {
    report.failures.push_back("op counts oracle=" + std::to_string(report.oracle_ops) +
                              " engine=" + std::to_string(report.engine_ops));
  }
  for (std::size_t l = 1; l < layers; ++l) {
    if (ecount.count(l) != report.engine_ops) report.failures.push_back("engine op count differs between layers");
  }
  report.passed = report.failures.empty();
  return report;
}

PrefixOracleReport check_equivalence(const FeatureFrame& frame, const ModelParams& params, double tolerance,
                                     double grad_tolerance) {
  return check_equivalence(frame, params, params, tolerance, grad_tolerance);
}

void write_report_header(std::ostream& out) { out << "T,prefix_t,max_dev,oracle_ops,engine_ops\n"; }

void write_report_rows(std::ostream& out, const PrefixOracleReport& report) {
  for (const PrefixComparison& p : report.prefixes) {
    char dev[32];
    std::snprintf(dev, sizeof(dev), "%.3e", p.max_dev);
    out << report.steps << ',' << p.t << ',' << dev << ',' << p.oracle_ops << ',' << p.engine_ops << '\n';
  }
}

FeatureFrame random_frame(const Cardinalities& cardinalities, std::size_t steps, Rng& rng) {
  FeatureFrame f;
  f.utrip_id = "random";
  f.steps = steps;
  f.features.resize(steps * kNumFeatures);
  f.targets.resize(steps);
  f.mask.assign(steps, 1);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t j = 0; j < kNumFeatures; ++j) {
      f.features[t * kNumFeatures + j] = static_cast<std::int32_t>(rng.below(cardinalities[j]));
    }
    const std::size_t v = cardinalities[index_of(Feature::kCity)];
    f.targets[t] = static_cast<std::int32_t>(v > 1 ? 1 + rng.below(v - 1) : 0);
  }
  return f;
}

ModelParams random_params(const ModelConfig& config, const Cardinalities& cardinalities, std::uint64_t seed,
                          double scale) {
  ModelParams params(config, cardinalities);
  Rng rng(seed);
  for (Tensor& t : params.tensors()) {
    for (double& v : t.values()) v = to_storage(rng.uniform(-scale, scale));
  }
  return params;
}

ModelConfig probe_config(CellType cell, DecoderType decoder, std::size_t hidden) {
  ModelConfig c;
  c.cell = cell;
  c.decoder = decoder;
  c.hidden_dim = hidden;
  c.city_dim = hidden;
  c.categorical_dim = 6;
  c.device_dim = 3;
  c.numerical_dim = 4;
  return c.without_dropout();
}

Cardinalities probe_cardinalities(std::size_t cities) {
  Cardinalities cards{};
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    switch (feature_kind(static_cast<Feature>(f))) {
      case FeatureKind::kCity: cards[f] = cities; break;
      case FeatureKind::kCategorical: cards[f] = 12; break;
      case FeatureKind::kDevice: cards[f] = 4; break;
      case FeatureKind::kNumerical: cards[f] = 32; break;
    }
  }
  return cards;
}

SweepSummary equivalence_sweep(const SweepOptions& options,
                               const std::function<void(const PrefixOracleReport&)>& on_report) {
  if (options.max_length < 1 || options.trials < 1) {
    throw ConfigError("verify: max_length and trials must be >= 1");
  }
  PrecisionScope scope(Precision::kFloat64);
  const Cardinalities cards = probe_cardinalities(options.cities);
  SweepSummary out;
  for (std::size_t trial = 0; trial < options.trials; ++trial) {
    for (CellType cell : {CellType::kGru, CellType::kLstm}) {
      for (DecoderType dec : {DecoderType::kTied, DecoderType::kFeedforward}) {
        const std::uint64_t s = derive_seed(options.seed, trial * 4 + (cell == CellType::kLstm ? 2 : 0) +
                                                              (dec == DecoderType::kFeedforward ? 1 : 0));
        const ModelParams params = random_params(probe_config(cell, dec, options.hidden), cards, s, options.scale);
        Rng rng(derive_seed(s, 1));
        for (std::size_t T = 1; T <= options.max_length; ++T) {
          const PrefixOracleReport rep =
              check_equivalence(random_frame(cards, T, rng), params, options.tolerance, options.grad_tolerance);
          if (on_report) on_report(rep);
          ++out.runs;
          for (const auto& p : rep.prefixes) out.max_pmf_dev = std::max(out.max_pmf_dev, p.max_dev);
          out.max_loss_dev = std::max(out.max_loss_dev, rep.loss_dev);
          out.max_grad_dev = std::max(out.max_grad_dev, rep.grad_dev);
          if (!rep.passed) {
            ++out.failures;
            if (out.first_failure.empty()) {
              out.first_failure = std::string(to_string(cell)) + "/" + to_string(dec) + " trial " +
                                  std::to_string(trial) + " T=" + std::to_string(T) + ": " + rep.failures.front();
            }
          }
        }
      }
    }
  }
  return out;
}

std::vector<ComplexityRow> benchmark_complexity(std::span<const std::size_t> lengths, const ModelParams& params,
                                                std::size_t repetitions, std::uint64_t seed) {
  if (repetitions == 0) throw ContractError("benchmark_complexity: repetitions must be >= 1");
  using Clock = std::chrono::steady_clock;
  const std::size_t layers = params.config().layers;
  Rng rng(derive_seed(seed, 77));
  std::vector<ComplexityRow> rows;
  for (std::size_t T : lengths) {
    if (T == 0) throw ContractError("benchmark_complexity: lengths must be >= 1");
    const std::vector<FeatureFrame> frame{random_frame(params.cardinalities(), T, rng)};
    const Batch batch = pack_batch(frame);
    const auto prefixes = enumerate_prefixes(frame.front());
    ComplexityRow row;
    row.steps = T;
    std::vector<double> engine_t;
    std::vector<double> oracle_t;
    for (std::size_t r = 0; r < repetitions; ++r) {
      OpCounter ec(layers);
      auto start = Clock::now();
      {
        Tape tape;
        const ModelVars vars = bind(tape, params);
        const StepLogits sl = forward_many_to_many(batch, vars, params, Mode::kEval, 0, &ec);
        for (std::size_t t = 0; t < T; ++t) softmax(sl.logits.value().row(sl.row_of(0, t)));
      }
      engine_t.push_back(std::chrono::duration<double>(Clock::now() - start).count());

      OpCounter oc(layers);
      start = Clock::now();
      for (const FeatureFrame& p : prefixes) many_to_one_forward(p, params, &oc);
      oracle_t.push_back(std::chrono::duration<double>(Clock::now() - start).count());
      row.engine_ops = ec.count(0);
      row.oracle_ops = oc.count(0);
    }
    row.engine_seconds = median(engine_t);
    row.oracle_seconds = median(oracle_t);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace sse
