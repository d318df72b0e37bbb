#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "sse/batching.hpp"
#include "sse/length_stats.hpp"
#include "sse/tape.hpp"

namespace sse {

// Max-subtracted softmax. Non-finite input is a NumericError.
std::vector<double> softmax(std::span<const double> logits);

enum class WeightMode { kUnweighted, kWeighted };

// How a prediction at prefix length t is weighted, given N_t sessions with
// exactly t steps and C(t) = sum_{l >= t} N_l sessions with at least t.
enum class WeightScheme {
  // N_t / C(t): all length-t prefixes together weigh N_t, as in the
  // non-augmented data.
  kLengthShare,
  // 1 / C(t).
  kInverseCumulative,
};

struct LengthWeights {
  WeightScheme scheme = WeightScheme::kLengthShare;
  // Indexed by prefix length t; entry 0 unused.
  std::vector<std::uint64_t> counts;              // N_t
  std::vector<std::uint64_t> reverse_cumulative;  // C(t)
  std::vector<double> raw;                        // weight before rescaling
  // Makes sum_t C(t) * w(t) equal sum_t C(t).
  double rescale = 1.0;

  std::size_t max_length() const { return raw.empty() ? 0 : raw.size() - 1; }
  // Rescaled weight; 0 beyond the histogram.
  double weight(std::size_t t) const;
  double raw_weight(std::size_t t) const { return t < raw.size() ? raw[t] : 0.0; }
  // Pre-rescale weight as an exact fraction (numerator, denominator).
  std::pair<std::uint64_t, std::uint64_t> exact(std::size_t t) const;
};

LengthWeights compute_length_weights(const LengthHistogram& steps, WeightScheme scheme = WeightScheme::kLengthShare);

struct LossConfig {
  WeightMode mode = WeightMode::kUnweighted;
  LengthWeights weights;

  double step_weight(std::size_t prefix_length) const {
    return mode == WeightMode::kUnweighted ? 1.0 : weights.weight(prefix_length);
  }
};

enum class StepSelection {
  kAllSteps,   // many-to-many
  kFinalStep,  // many-to-one: only the last valid step of each row
};

// Targets and weights in StepLogits row order (step-major). Masked steps get
// weight 0.
struct LossInputs {
  std::vector<std::int32_t> targets;
  std::vector<double> weights;
  std::size_t counted_steps = 0;
};

LossInputs loss_inputs(const Batch& batch, const LossConfig& config, StepSelection selection = StepSelection::kAllSteps);

// Differentiable weighted mean cross-entropy over valid steps. An all-masked
// batch is a ContractError.
Var sequence_loss(Var logits, const LossInputs& inputs);

// Untracked evaluation of the same quantity. `logits` rows follow step-major
// order for a batch of `rows` rows; `mask` and `targets` use the Batch layout
// (row-major).
double sequence_loss(const Tensor& logits, std::size_t rows, std::span<const std::int32_t> targets,
                     std::span<const std::uint8_t> mask, const LossConfig& config);

// Descending probability, ties by ascending index; length min(k, size).
std::vector<std::size_t> top_k(std::span<const double> pmf, std::size_t k);

struct RankingResult {
  std::vector<std::size_t> top;
  std::size_t truth = 0;
  bool hit = false;
};

// Ranks `pmf` leaving out UNKNOWN (index 0).
RankingResult rank_cities(std::span<const double> pmf, std::size_t truth, std::size_t k);

// Fraction of trips whose single relevant city is retrieved: mean over trips
// of |{truth} & top| / |{truth}|.
double recall_at_k(std::span<const RankingResult> results, std::size_t k);
// Challenge metric: share of trips with the correct city among the top k.
double hit_rate_at_k(std::span<const RankingResult> results, std::size_t k);
// Classic precision: relevant retrieved over k * trips.
double precision_at_k(std::span<const RankingResult> results, std::size_t k);

}  // namespace sse
