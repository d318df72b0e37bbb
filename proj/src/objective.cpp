#include "sse/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sse/errors.hpp"

namespace sse {

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) return {};
  double mx = logits[0];
  for (double v : logits) {
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite logit");
    mx = std::max(mx, v);
  }
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

double LengthWeights::weight(std::size_t t) const { return t < raw.size() ? raw[t] * rescale : 0.0; }

std::pair<std::uint64_t, std::uint64_t> LengthWeights::exact(std::size_t t) const {
  if (t == 0 || t >= raw.size() || reverse_cumulative[t] == 0) return {0, 1};
  const std::uint64_t num = scheme == WeightScheme::kLengthShare ? counts[t] : 1;
  return {num, reverse_cumulative[t]};
}

LengthWeights compute_length_weights(const LengthHistogram& steps, WeightScheme scheme) {
  if (steps.total == 0) throw ContractError("compute_length_weights: empty histogram");
  LengthWeights w;
  w.scheme = scheme;
  const std::size_t max_t = steps.counts.rbegin()->first;
  w.counts.assign(max_t + 1, 0);
  w.reverse_cumulative.assign(max_t + 2, 0);
  w.raw.assign(max_t + 1, 0.0);
  for (const auto& [t, n] : steps.counts) {
    if (t == 0) continue;
    w.counts[t] = n;
  }
  for (std::size_t t = max_t; t >= 1; --t) w.reverse_cumulative[t] = w.reverse_cumulative[t + 1] + w.counts[t];
  w.reverse_cumulative.resize(max_t + 1);

  double sum_c = 0.0;
  double sum_cw = 0.0;
  for (std::size_t t = 1; t <= max_t; ++t) {
    const auto c = static_cast<double>(w.reverse_cumulative[t]);
    if (c == 0.0) continue;
    w.raw[t] = scheme == WeightScheme::kLengthShare ? static_cast<double>(w.counts[t]) / c : 1.0 / c;
    sum_c += c;
    sum_cw += c * w.raw[t];
  }
  if (!(sum_cw > 0.0)) throw ContractError("compute_length_weights: histogram has no step of length >= 1");
  w.rescale = sum_c / sum_cw;
  return w;
}

LossInputs loss_inputs(const Batch& batch, const LossConfig& config, StepSelection selection) {
  const std::size_t rows = batch.size();
  const std::size_t steps = batch.max_steps;
  LossInputs in;
  in.targets.assign(rows * steps, 0);
  in.weights.assign(rows * steps, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t last = steps;
    for (std::size_t t = 0; t < steps; ++t) {
      if (batch.valid(r, t)) last = t;
    }
    for (std::size_t t = 0; t < steps; ++t) {
      const std::size_t row = t * rows + r;
      in.targets[row] = batch.target(r, t);
      if (!batch.valid(r, t)) continue;
      if (selection == StepSelection::kFinalStep && t != last) continue;
      in.weights[row] = config.step_weight(t + 1);
      ++in.counted_steps;
    }
  }
  return in;
}

Var sequence_loss(Var logits, const LossInputs& inputs) {
  if (inputs.counted_steps == 0) throw ContractError("sequence_loss: every step is masked");
  return cross_entropy(logits, inputs.targets, inputs.weights);
}

double sequence_loss(const Tensor& logits, std::size_t rows, std::span<const std::int32_t> targets,
                     std::span<const std::uint8_t> mask, const LossConfig& config) {
  if (rows == 0 || logits.rows() % rows != 0) throw DimensionError("sequence_loss: logits rows not a multiple of batch");
  const std::size_t steps = logits.rows() / rows;
  if (targets.size() != rows * steps || mask.size() != rows * steps) {
    throw DimensionError("sequence_loss: targets/mask do not match logits " + logits.shape_string());
  }
  double num = 0.0;
  double den = 0.0;
  std::size_t valid = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < steps; ++t) {
      if (!mask[r * steps + t]) continue;
      ++valid;
      const double w = config.step_weight(t + 1);
      if (w == 0.0) continue;
      const std::vector<double> p = softmax(logits.row(t * rows + r));
      const auto target = static_cast<std::size_t>(targets[r * steps + t]);
      if (target >= p.size()) throw DimensionError("sequence_loss: target outside vocabulary");
      num += w * -std::log(p[target]);
      den += w;
    }
  }
  if (valid == 0) throw ContractError("sequence_loss: every step is masked");
  if (!(den > 0.0)) throw ContractError("sequence_loss: valid steps carry zero total weight");
  return num / den;
}

std::vector<std::size_t> top_k(std::span<const double> pmf, std::size_t k) {
  if (k == 0) throw ContractError("top_k: k must be >= 1");
  std::vector<std::size_t> idx(pmf.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t n = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                    [&](std::size_t a, std::size_t b) { return pmf[a] > pmf[b] || (pmf[a] == pmf[b] && a < b); });
  idx.resize(n);
  return idx;
}

RankingResult rank_cities(std::span<const double> pmf, std::size_t truth, std::size_t k) {
  std::vector<double> masked(pmf.begin(), pmf.end());
  std::vector<std::size_t> top;
  if (masked.size() > 1) {
    top = top_k(std::span<const double>(masked).subspan(1), k);
    for (std::size_t& i : top) ++i;
  }
  RankingResult r;
  r.top = std::move(top);
  r.truth = truth;
  r.hit = std::find(r.top.begin(), r.top.end(), truth) != r.top.end();
  return r;
}

namespace {

std::size_t retrieved(const RankingResult& r, std::size_t k) {
  const std::size_t n = std::min(k, r.top.size());
  return std::find(r.top.begin(), r.top.begin() + static_cast<std::ptrdiff_t>(n), r.truth) !=
                 r.top.begin() + static_cast<std::ptrdiff_t>(n)
             ? 1
             : 0;
}

void check_results(std::span<const RankingResult> results, std::size_t k, const char* what) {
  if (results.empty()) throw ContractError(std::string(what) + ": no results");
  if (k == 0) throw ContractError(std::string(what) + ": k must be >= 1");
}

}  // namespace

double recall_at_k(std::span<const RankingResult> results, std::size_t k) {
  check_results(results, k, "recall_at_k");
  double total = 0.0;
  for (const RankingResult& r : results) {
    const double relevant = 1.0;
    total += static_cast<double>(retrieved(r, k)) / relevant;
  }
  return total / static_cast<double>(results.size());
}

double hit_rate_at_k(std::span<const RankingResult> results, std::size_t k) {
  check_results(results, k, "hit_rate_at_k");
  std::size_t hits = 0;
  for (const RankingResult& r : results) hits += retrieved(r, k) > 0 ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

double precision_at_k(std::span<const RankingResult> results, std::size_t k) {
  check_results(results, k, "precision_at_k");
  std::size_t hits = 0;
  for (const RankingResult& r : results) hits += retrieved(r, k);
  return static_cast<double>(hits) / (static_cast<double>(k) * static_cast<double>(results.size()));
}

}  // namespace sse
