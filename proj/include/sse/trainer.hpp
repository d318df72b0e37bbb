#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sse/features.hpp"
#include "sse/model.hpp"
#include "sse/objective.hpp"

namespace sse {

enum class ModelType { kManyToMany, kManyToOne };

const char* to_string(ModelType t);
ModelType parse_model_type(const std::string& s);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::size_t epochs = 50;
  std::size_t folds = 10;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  ModelType model_type = ModelType::kManyToMany;
  WeightMode weighting = WeightMode::kUnweighted;
  WeightScheme weight_scheme = WeightScheme::kLengthShare;
  bool sort_by_length = true;
  std::size_t eval_k = 4;
  std::size_t jobs = 1;
  VocabCaps caps;

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  void apply(const std::map<std::string, std::string>& kv);
};

// First and second moment per parameter tensor.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ModelParams& params);
};

// Bias-corrected Adam; results are rounded to the storage precision. A
// non-finite gradient is a NumericError naming the tensor.
void adam_step(ModelParams& params, std::span<const Tensor> grads, AdamState& state, const TrainConfig& config);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::size_t loss_steps = 0;  // prediction steps that entered the loss
  double val_recall = 0.0;
  double val_loss = 0.0;
};

struct FoldResult {
  std::size_t fold = 0;
  std::size_t best_epoch = 0;  // 1-based
  double best_recall = 0.0;
  std::string checkpoint;
  std::vector<EpochStats> history;
  bool ok = true;
  std::string error;
};

// 1-based index of the first maximum.
std::size_t select_best_epoch(std::span<const double> recalls);

struct EvalSummary {
  double recall = 0.0;
  double loss = 0.0;
  std::size_t trips = 0;
};

// Final-step recall@k and mean final-step cross-entropy.
EvalSummary evaluate(const ModelParams& params, std::span<const FeatureFrame> frames, std::size_t k);

// Cities ranked by booking frequency in `frames` (UNKNOWN excluded).
std::vector<std::size_t> popularity_ranking(std::span<const FeatureFrame> frames, std::size_t n_cities);
double popularity_recall(std::span<const FeatureFrame> train, std::span<const FeatureFrame> val, std::size_t n_cities,
                         std::size_t k);

struct TrainedFold {
  FoldResult result;
  ModelParams best;
};

using EpochCallback = std::function<void(const FoldResult& partial, const EpochStats& epoch)>;

// Epoch loop: shuffled batch order, forward, masked loss (every step or the
// final step only), backward, Adam; validation recall@k after every epoch.
TrainedFold train_fold(std::span<const FeatureFrame> train, std::span<const FeatureFrame> val,
                       const ModelConfig& model_config, const Cardinalities& cardinalities,
                       const TrainConfig& config, std::size_t fold_index = 0, const EpochCallback& on_epoch = {});

// Probability mass averaged over members. Members featurize the query with
// their own vocabulary; their pmfs are mapped onto the union of member city
// ids before averaging. Index 0 of the union space is UNKNOWN.
class Ensemble {
 public:
  struct Member {
    Vocab vocab;
    ModelParams params;
  };

  // Vocab/params mismatch is a DataError.
  void add(Member member);
  std::size_t size() const { return members_.size(); }
  bool empty() const { return members_.empty(); }
  const Member& member(std::size_t i) const { return members_.at(i); }
  const std::vector<std::string>& city_ids() const { return city_ids_; }

  // Final-step pmf for each session (sessions need >= 2 bookings).
  std::vector<std::vector<double>> predict(std::span<const Session> sessions) const;
  std::vector<double> predict(const Session& session) const;
  // Index of a raw city id in the union space (0 when unknown).
  std::size_t city_index(const std::string& id) const;

 private:
  void rebuild_index();

  std::vector<Member> members_;
  std::vector<std::string> city_ids_{""};
  std::map<std::string, std::size_t> city_index_;
};

// Element-wise mean of equally sized pmfs.
std::vector<double> average_pmfs(std::span<const std::vector<double>> pmfs);

struct CrossValidationResult {
  std::vector<FoldResult> folds;
  Ensemble ensemble;
  std::vector<double> popularity_recall;  // per fold
  std::size_t skipped_sessions = 0;        // fewer than two bookings

  double mean_best_recall() const;
};

struct CrossValidationOptions {
  // When set, writes fold<i>/checkpoint.sse, fold<i>/vocab.txt, metrics.csv
  // and folds.csv below this directory; folds.csv names checkpoints relative
  // to it.
  std::optional<std::string> run_dir;
  // Train only these folds (all when empty).
  std::vector<std::size_t> only_folds;
  EpochCallback on_epoch;
};

CrossValidationResult cross_validate(std::span<const Session> sessions, const ModelConfig& model_config,
                                     const TrainConfig& config, const CrossValidationOptions& options = {});

// Metrics in the two emitted forms.
void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, std::size_t epoch, std::size_t fold, const std::string& split,
                       std::optional<double> recall, double loss);
std::string metrics_line(std::size_t epoch, std::size_t fold, const std::string& split, std::optional<double> recall,
                         double loss);

}  // namespace sse
