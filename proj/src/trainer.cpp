#include "sse/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "sse/checkpoint.hpp"
#include "sse/errors.hpp"
#include "sse/length_stats.hpp"

namespace sse {
namespace {

std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long n = std::stoull(v, &pos);
    if (pos != v.size() || v.front() == '-') throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a nonnegative integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

bool parse_flag(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("config: '" + key + "' expects on/off, got '" + v + "'");
}

constexpr std::uint64_t kInitStream = 1000;
constexpr std::uint64_t kEpochStream = 2000;
constexpr std::uint64_t kFoldSplitStream = 3000;

}  // namespace

const char* to_string(ModelType t) { return t == ModelType::kManyToMany ? "m2m" : "m2o"; }

ModelType parse_model_type(const std::string& s) {
  if (s == "m2m" || s == "many_to_many" || s == "MANY_TO_MANY") return ModelType::kManyToMany;
  if (s == "m2o" || s == "many_to_one" || s == "MANY_TO_ONE") return ModelType::kManyToOne;
  throw ConfigError("unknown model type '" + s + "' (expected m2m or m2o)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (folds < 2) throw ConfigError("train: folds must be >= 2");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train: betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("train: epsilon must be > 0");
  if (eval_k < 1) throw ConfigError("train: eval_k must be >= 1");
  if (jobs < 1) throw ConfigError("train: jobs must be >= 1");
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {{"learning_rate", fmt_real(learning_rate)},
          {"batch_size", std::to_string(batch_size)},
          {"epochs", std::to_string(epochs)},
          {"folds", std::to_string(folds)},
          {"seed", std::to_string(seed)},
          {"beta1", fmt_real(beta1)},
          {"beta2", fmt_real(beta2)},
          {"epsilon", fmt_real(epsilon)},
          {"model_type", to_string(model_type)},
          {"weighting", weighting == WeightMode::kWeighted ? "on" : "off"},
          {"weight_scheme", weight_scheme == WeightScheme::kLengthShare ? "length_share" : "inverse_cumulative"},
          {"sort_by_length", sort_by_length ? "on" : "off"},
          {"eval_k", std::to_string(eval_k)},
          {"jobs", std::to_string(jobs)},
          {"max_duration", std::to_string(caps.max_duration)},
          {"max_transition_days", std::to_string(caps.max_transition_days)}};
}

void TrainConfig::apply(const std::map<std::string, std::string>& kv) {
  for (const auto& [k, v] : kv) {
    if (k == "learning_rate") learning_rate = parse_double(k, v);
    else if (k == "batch_size") batch_size = parse_size(k, v);
    else if (k == "epochs") epochs = parse_size(k, v);
    else if (k == "folds") folds = parse_size(k, v);
    else if (k == "seed") seed = parse_size(k, v);
    else if (k == "beta1") beta1 = parse_double(k, v);
    else if (k == "beta2") beta2 = parse_double(k, v);
    else if (k == "epsilon") epsilon = parse_double(k, v);
    else if (k == "model_type") model_type = parse_model_type(v);
    else if (k == "weighting") weighting = parse_flag(k, v) ? WeightMode::kWeighted : WeightMode::kUnweighted;
    else if (k == "weight_scheme") {
      if (v == "length_share") weight_scheme = WeightScheme::kLengthShare;
      else if (v == "inverse_cumulative") weight_scheme = WeightScheme::kInverseCumulative;
      else throw ConfigError("config: weight_scheme must be length_share or inverse_cumulative");
    } else if (k == "sort_by_length") sort_by_length = parse_flag(k, v);
    else if (k == "eval_k") eval_k = parse_size(k, v);
    else if (k == "jobs") jobs = parse_size(k, v);
    else if (k == "max_duration") caps.max_duration = static_cast<int>(parse_size(k, v));
    else if (k == "max_transition_days") caps.max_transition_days = static_cast<int>(parse_size(k, v));
  }
}

AdamState AdamState::zeros_like(const ModelParams& params) {
  AdamState s;
  for (const Tensor& t : params.tensors()) {
    s.m.emplace_back(t.rows(), t.cols());
    s.v.emplace_back(t.rows(), t.cols());
  }
  return s;
}

void adam_step(ModelParams& params, std::span<const Tensor> grads, AdamState& state, const TrainConfig& config) {
  auto tensors = params.tensors();
  if (grads.size() != tensors.size() || state.m.size() != tensors.size() || state.v.size() != tensors.size()) {
    throw DimensionError("adam_step: parameter/gradient/state counts differ");
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (!grads[i].same_shape(tensors[i]) || !state.m[i].same_shape(tensors[i]) || !state.v[i].same_shape(tensors[i])) {
      throw DimensionError("adam_step: shape mismatch for '" + params.names()[i] + "'");
    }
    if (!grads[i].all_finite()) throw NumericError("adam_step: non-finite gradient for '" + params.names()[i] + "'");
  }
  ++state.step;
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto p = tensors[i].values();
    auto g = grads[i].values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      p[k] = to_storage(p[k] - config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon));
    }
  }
}

std::size_t select_best_epoch(std::span<const double> recalls) {
  if (recalls.empty()) throw ContractError("select_best_epoch: no epochs");
  std::size_t best = 0;
  for (std::size_t i = 1; i < recalls.size(); ++i) {
    if (recalls[i] > recalls[best]) best = i;
  }
  return best + 1;
}

EvalSummary evaluate(const ModelParams& params, std::span<const FeatureFrame> frames, std::size_t k) {
  EvalSummary s;
  if (frames.empty()) return s;
  const auto pmfs = final_step_pmfs(params, frames);
  std::vector<RankingResult> results;
  results.reserve(frames.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto truth = static_cast<std::size_t>(frames[i].targets[frames[i].steps - 1]);
    results.push_back(rank_cities(pmfs[i], truth, k));
    loss += -std::log(std::max(pmfs[i][truth], 1e-300));
  }
  s.trips = frames.size();
  s.recall = recall_at_k(results, k);
  s.loss = loss / static_cast<double>(frames.size());
  return s;
}

std::vector<std::size_t> popularity_ranking(std::span<const FeatureFrame> frames, std::size_t n_cities) {
  std::vector<double> counts(n_cities, 0.0);
  auto bump = [&](std::int32_t c) {
    if (c > 0 && static_cast<std::size_t>(c) < n_cities) counts[static_cast<std::size_t>(c)] += 1.0;
  };
  for (const FeatureFrame& f : frames) {
    if (f.steps == 0) continue;
    bump(f.at(0, Feature::kCity));
    for (std::int32_t t : f.targets) bump(t);
  }
  counts[0] = -1.0;
  return top_k(counts, n_cities);
}

double popularity_recall(std::span<const FeatureFrame> train, std::span<const FeatureFrame> val, std::size_t n_cities,
                         std::size_t k) {
  if (val.empty()) throw ContractError("popularity_recall: no validation frames");
  auto ranking = popularity_ranking(train, n_cities);
  std::erase(ranking, 0);
  ranking.resize(std::min(k, ranking.size()));
  std::vector<RankingResult> results;
  for (const FeatureFrame& f : val) {
    const auto truth = static_cast<std::size_t>(f.targets[f.steps - 1]);
    RankingResult r;
    r.top = ranking;
    r.truth = truth;
    r.hit = std::find(ranking.begin(), ranking.end(), truth) != ranking.end();
    results.push_back(std::move(r));
  }
  return recall_at_k(results, k);
}

TrainedFold train_fold(std::span<const FeatureFrame> train, std::span<const FeatureFrame> val,
                       const ModelConfig& model_config, const Cardinalities& cardinalities,
                       const TrainConfig& config, std::size_t fold_index, const EpochCallback& on_epoch) {
  config.validate();
  if (train.empty() || val.empty()) throw ContractError("train_fold: empty training or validation split");

  LossConfig loss_config;
  loss_config.mode = config.weighting;
  if (config.weighting == WeightMode::kWeighted) {
    loss_config.weights = compute_length_weights(step_histogram(train), config.weight_scheme);
  }
  const StepSelection selection =
      config.model_type == ModelType::kManyToMany ? StepSelection::kAllSteps : StepSelection::kFinalStep;

  const std::uint64_t fold_seed = derive_seed(config.seed, fold_index);
  ModelParams params = ModelParams::initialize(model_config, cardinalities, derive_seed(fold_seed, kInitStream));
  AdamState adam = AdamState::zeros_like(params);

  TrainedFold out;
  out.result.fold = fold_index;
  out.best = params;
  std::vector<double> recalls;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::uint64_t epoch_seed = derive_seed(fold_seed, kEpochStream + epoch);
    const std::vector<Batch> batches = make_batches(train, config.batch_size, config.sort_by_length, epoch_seed);
    double weighted_loss = 0.0;
    std::size_t steps = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Batch& batch = batches[b];
      const LossInputs inputs = loss_inputs(batch, loss_config, selection);
      if (inputs.counted_steps == 0) continue;
      if (std::accumulate(inputs.weights.begin(), inputs.weights.end(), 0.0) <= 0.0) continue;
      Tape tape;
      const ModelVars vars = bind(tape, params);
      const StepLogits logits =
          forward_many_to_many(batch, vars, params, Mode::kTrain, derive_seed(epoch_seed, b + 1));
      const Var loss = sequence_loss(logits.logits, inputs);
      const double value = loss.value()(0, 0);
      if (!std::isfinite(value)) {
        throw NumericError("train_fold: fold " + std::to_string(fold_index) + " diverged at epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      tape.backward(loss);
      std::vector<Tensor> grads;
      grads.reserve(vars.all.size());
      for (const Var& v : vars.all) grads.push_back(tape.grad(v));
      adam_step(params, grads, adam, config);
      weighted_loss += value * static_cast<double>(inputs.counted_steps);
      steps += inputs.counted_steps;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = steps > 0 ? weighted_loss / static_cast<double>(steps) : 0.0;
    stats.loss_steps = steps;
    const EvalSummary ev = evaluate(params, val, config.eval_k);
    stats.val_recall = ev.recall;
    stats.val_loss = ev.loss;
    recalls.push_back(ev.recall);
    out.result.history.push_back(stats);
    if (select_best_epoch(recalls) == epoch) {
      out.best = params;
      out.result.best_epoch = epoch;
      out.result.best_recall = ev.recall;
    }
    if (on_epoch) on_epoch(out.result, stats);
  }
  return out;
}

// ---- ensemble ----

std::vector<double> average_pmfs(std::span<const std::vector<double>> pmfs) {
  if (pmfs.empty()) throw ContractError("average_pmfs: no members");
  std::vector<double> out(pmfs[0].size(), 0.0);
  for (const auto& p : pmfs) {
    if (p.size() != out.size()) throw DimensionError("average_pmfs: pmfs of different sizes");
    for (std::size_t i = 0; i < p.size(); ++i) out[i] += p[i];
  }
  const auto n = static_cast<double>(pmfs.size());
  for (double& v : out) v /= n;
  return out;
}

void Ensemble::add(Member member) {
  const auto vocab_cards = member.vocab.cardinalities();
  if (vocab_cards != member.params.cardinalities()) {
    throw DataError("Ensemble: member vocabulary does not match its parameter tables");
  }
  members_.push_back(std::move(member));
  rebuild_index();
}

void Ensemble::rebuild_index() {
  std::set<std::string> ids;
  for (const Member& m : members_) {
    for (std::size_t i = 1; i < m.vocab.n_cities(); ++i) ids.insert(m.vocab.cities().value(i));
  }
  city_ids_.assign(1, "");
  city_ids_.insert(city_ids_.end(), ids.begin(), ids.end());
  city_index_.clear();
  for (std::size_t i = 1; i < city_ids_.size(); ++i) city_index_[city_ids_[i]] = i;
}

std::size_t Ensemble::city_index(const std::string& id) const {
  const auto it = city_index_.find(id);
  return it == city_index_.end() ? 0 : it->second;
}

std::vector<std::vector<double>> Ensemble::predict(std::span<const Session> sessions) const {
  if (members_.empty()) throw ContractError("Ensemble::predict: empty ensemble");
  std::vector<std::vector<double>> out(sessions.size(), std::vector<double>(city_ids_.size(), 0.0));
  for (const Member& m : members_) {
    std::vector<FeatureFrame> frames;
    frames.reserve(sessions.size());
    for (const Session& s : sessions) frames.push_back(featurize(s, m.vocab));
    const auto pmfs = final_step_pmfs(m.params, frames);
    std::vector<std::size_t> to_union(m.vocab.n_cities(), 0);
    for (std::size_t i = 1; i < to_union.size(); ++i) to_union[i] = city_index(m.vocab.cities().value(i));
    for (std::size_t s = 0; s < sessions.size(); ++s) {
      for (std::size_t i = 0; i < pmfs[s].size(); ++i) out[s][to_union[i]] += pmfs[s][i];
    }
  }
  const auto n = static_cast<double>(members_.size());
  for (auto& p : out) {
    for (double& v : p) v /= n;
  }
  return out;
}

std::vector<double> Ensemble::predict(const Session& session) const {
  return predict(std::span<const Session>(&session, 1)).front();
}

// ---- cross-validation ----

double CrossValidationResult::mean_best_recall() const {
  double s = 0.0;
  std::size_t n = 0;
  for (const FoldResult& f : folds) {
    if (!f.ok) continue;
    s += f.best_recall;
    ++n;
  }
  return n == 0 ? 0.0 : s / static_cast<double>(n);
}

void write_metrics_header(std::ostream& out) { out << "epoch,fold,split,recall_at_4,loss\n"; }

void write_metrics_row(std::ostream& out, std::size_t epoch, std::size_t fold, const std::string& split,
                       std::optional<double> recall, double loss) {
  out << epoch << ',' << fold << ',' << split << ',' << (recall ? fmt_real(*recall) : "") << ',' << fmt_real(loss)
      << '\n';
}

std::string metrics_line(std::size_t epoch, std::size_t fold, const std::string& split, std::optional<double> recall,
                         double loss) {
  std::ostringstream os;
  os << "epoch=" << epoch << " fold=" << fold << " split=" << split;
  if (recall) os << " recall_at_4=" << fmt_real(*recall);
  os << " loss=" << fmt_real(loss);
  return os.str();
}

CrossValidationResult cross_validate(std::span<const Session> sessions, const ModelConfig& model_config,
                                     const TrainConfig& config, const CrossValidationOptions& options) {
  config.validate();
  model_config.validate();
  std::vector<Session> usable;
  CrossValidationResult result;
  for (const Session& s : sessions) {
    if (s.length() >= 2) {
      usable.push_back(s);
    } else {
      ++result.skipped_sessions;
    }
  }
  const auto folds = stratified_kfold(usable, config.folds, derive_seed(config.seed, kFoldSplitStream));

  std::vector<std::size_t> todo = options.only_folds;
  if (todo.empty()) {
    todo.resize(config.folds);
    std::iota(todo.begin(), todo.end(), 0);
  }
  for (std::size_t f : todo) {
    if (f >= config.folds) throw ConfigError("cross_validate: fold " + std::to_string(f) + " out of range");
  }

  namespace fs = std::filesystem;
  if (options.run_dir) fs::create_directories(*options.run_dir);

  struct Slot {
    FoldResult result;
    std::optional<Ensemble::Member> member;
    double popularity = 0.0;
  };
  std::vector<Slot> slots(todo.size());
  std::mutex callback_mutex;

  auto run_fold = [&](std::size_t slot_index) {
    const std::size_t fold = todo[slot_index];
    Slot& slot = slots[slot_index];
    slot.result.fold = fold;
    try {
      std::vector<Session> train_sessions;
      std::vector<Session> val_sessions;
      std::vector<bool> in_val(usable.size(), false);
      for (std::size_t i : folds[fold]) in_val[i] = true;
      for (std::size_t i = 0; i < usable.size(); ++i) (in_val[i] ? val_sessions : train_sessions).push_back(usable[i]);
      Vocab vocab = build_vocab(train_sessions, config.caps);
      const auto train_frames = featurize_all(train_sessions, vocab);
      const auto val_frames = featurize_all(val_sessions, vocab);
      slot.popularity = popularity_recall(train_frames, val_frames, vocab.n_cities(), config.eval_k);
      EpochCallback cb;
      if (options.on_epoch) {
        cb = [&](const FoldResult& partial, const EpochStats& stats) {
          std::lock_guard<std::mutex> lock(callback_mutex);
          options.on_epoch(partial, stats);
        };
      }
      TrainedFold trained =
          train_fold(train_frames, val_frames, model_config, vocab.cardinalities(), config, fold, cb);
      slot.result = trained.result;
      if (options.run_dir) {
        const fs::path dir = fs::path(*options.run_dir) / ("fold" + std::to_string(fold));
        fs::create_directories(dir);
        save_checkpoint((dir / "checkpoint.sse").string(), trained.best);
        vocab.save_file((dir / "vocab.txt").string());
        slot.result.checkpoint = (dir / "checkpoint.sse").string();
      }
      slot.member = Ensemble::Member{std::move(vocab), std::move(trained.best)};
    } catch (const Error& e) {
      slot.result.ok = false;
      slot.result.error = e.what();
    }
  };

  const std::size_t jobs = std::min(config.jobs, todo.size());
  if (jobs <= 1) {
    for (std::size_t i = 0; i < todo.size(); ++i) run_fold(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t j = 0; j < jobs; ++j) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < todo.size(); i = next++) run_fold(i);
      });
    }
    for (auto& w : workers) w.join();
  }

  for (Slot& slot : slots) {
    result.folds.push_back(slot.result);
    result.popularity_recall.push_back(slot.popularity);
    if (slot.member) result.ensemble.add(std::move(*slot.member));
  }

  if (options.run_dir) {
    const fs::path dir(*options.run_dir);
    std::ofstream metrics(dir / "metrics.csv");
    write_metrics_header(metrics);
    for (const FoldResult& f : result.folds) {
      for (const EpochStats& e : f.history) {
        write_metrics_row(metrics, e.epoch, f.fold, "train", std::nullopt, e.train_loss);
        write_metrics_row(metrics, e.epoch, f.fold, "val", e.val_recall, e.val_loss);
      }
    }
    std::ofstream summary(dir / "folds.csv");
    summary << "fold,best_epoch,best_recall_at_4,popularity_recall_at_4,status,checkpoint\n";
    for (std::size_t i = 0; i < result.folds.size(); ++i) {
      const FoldResult& f = result.folds[i];
      summary << f.fold << ',' << f.best_epoch << ',' << fmt_real(f.best_recall) << ','
              << fmt_real(result.popularity_recall[i]) << ',' << (f.ok ? "ok" : "failed") << ','
              << (f.checkpoint.empty() ? std::string() : fs::relative(f.checkpoint, dir).string()) << '\n';
    }
    if (!metrics || !summary) throw IoError("cross_validate: cannot write metrics in '" + dir.string() + "'");
  }
  return result;
}

}  // namespace sse
