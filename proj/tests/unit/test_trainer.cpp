#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "sse/checkpoint.hpp"
#include "sse/errors.hpp"
#include "sse/synthetic.hpp"
#include "sse/trainer.hpp"

namespace fs = std::filesystem;

namespace {

sse::TrainConfig quick(std::size_t epochs) {
  sse::TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 32;
  c.learning_rate = 0.01;
  c.folds = 2;
  c.seed = 5;
  return c;
}

std::vector<sse::Session> synthetic(std::size_t n, std::uint64_t seed) {
  sse::SyntheticConfig sc;
  sc.sessions = n;
  sc.cities = 20;
  sc.blocks = 4;
  sc.seed = seed;
  return sse::generate_synthetic(sc);
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sse_unit_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("first Adam step moves each entry by lr against the gradient sign") {
  sse::PrecisionScope scope(sse::Precision::kFloat64);
  auto p = sse::ModelParams(testing::small_config(), testing::small_cards());
  auto state = sse::AdamState::zeros_like(p);
  std::vector<sse::Tensor> grads;
  sse::Rng rng(1);
  for (const auto& t : p.tensors()) {
    sse::Tensor g(t.rows(), t.cols());
    for (double& v : g.values()) v = rng.uniform(-2.0, 2.0);
    grads.push_back(g);
  }
  sse::TrainConfig cfg;
  cfg.learning_rate = 0.01;
  sse::adam_step(p, grads, state, cfg);
  CHECK(state.step == 1);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto v = p.tensors()[i].values();
    const auto g = grads[i].values();
    for (std::size_t k = 0; k < v.size(); ++k) {
      // m_hat = g, v_hat = g^2 after bias correction.
      const double expect = -0.01 * g[k] / (std::fabs(g[k]) + 1e-8);
      CHECK(v[k] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("Adam rejects non-finite gradients and bad shapes") {
  auto p = sse::ModelParams(testing::small_config(), testing::small_cards());
  auto state = sse::AdamState::zeros_like(p);
  std::vector<sse::Tensor> grads;
  for (const auto& t : p.tensors()) grads.emplace_back(t.rows(), t.cols());
  grads[3].values()[0] = std::nan("");
  CHECK_THROWS_AS(sse::adam_step(p, grads, state, {}), sse::NumericError);
  grads.pop_back();
  CHECK_THROWS_AS(sse::adam_step(p, grads, state, {}), sse::DimensionError);
}

TEST_CASE("best epoch is the first maximum") {
  const std::vector<double> r{0.1, 0.3, 0.3};
  CHECK(sse::select_best_epoch(r) == 2);
  CHECK(sse::select_best_epoch(std::vector<double>{0.5}) == 1);
  CHECK_THROWS_AS(sse::select_best_epoch(std::vector<double>{}), sse::ContractError);
}

TEST_CASE("train config validation and key round trip") {
  sse::TrainConfig c;
  c.learning_rate = -1.0;
  CHECK_THROWS_AS(c.validate(), sse::ConfigError);
  sse::TrainConfig d;
  d.apply({{"learning_rate", "0.5"}, {"model_type", "m2o"}, {"weighting", "on"}, {"epochs", "3"}});
  CHECK(d.learning_rate == 0.5);
  CHECK(d.model_type == sse::ModelType::kManyToOne);
  CHECK(d.weighting == sse::WeightMode::kWeighted);
  sse::TrainConfig e;
  e.apply(d.to_map());
  CHECK(e.to_map() == d.to_map());
  CHECK_THROWS_AS(d.apply({{"epochs", "x"}}), sse::ConfigError);
}

TEST_CASE("many-to-one counts one loss step per session") {
  const auto sessions = synthetic(120, 3);
  const auto vocab = sse::build_vocab(sessions);
  const auto frames = sse::featurize_all(sessions, vocab);
  std::size_t all_steps = 0;
  for (const auto& f : frames) all_steps += f.steps;
  auto cfg = quick(1);
  cfg.model_type = sse::ModelType::kManyToOne;
  const auto m2o = sse::train_fold(frames, frames, testing::small_config(), vocab.cardinalities(), cfg);
  CHECK(m2o.result.history.at(0).loss_steps == frames.size());
  cfg.model_type = sse::ModelType::kManyToMany;
  const auto m2m = sse::train_fold(frames, frames, testing::small_config(), vocab.cardinalities(), cfg);
  CHECK(m2m.result.history.at(0).loss_steps == all_steps);
}

TEST_CASE("training loss decreases on synthetic sessions") {
  const auto sessions = synthetic(200, 11);
  const auto vocab = sse::build_vocab(sessions);
  const auto frames = sse::featurize_all(sessions, vocab);
  const auto r = sse::train_fold(frames, frames, testing::small_config(), vocab.cardinalities(), quick(5));
  REQUIRE(r.result.history.size() == 5);
  CHECK(r.result.history.back().train_loss < r.result.history.front().train_loss);
  CHECK(r.result.best_epoch >= 1);
  CHECK(r.result.best_recall == doctest::Approx(r.result.history[r.result.best_epoch - 1].val_recall));
}

TEST_CASE("training is reproducible for a fixed seed") {
  const auto sessions = synthetic(80, 2);
  const auto vocab = sse::build_vocab(sessions);
  const auto frames = sse::featurize_all(sessions, vocab);
  const auto a = sse::train_fold(frames, frames, testing::small_config(), vocab.cardinalities(), quick(2));
  const auto b = sse::train_fold(frames, frames, testing::small_config(), vocab.cardinalities(), quick(2));
  CHECK(a.best == b.best);
  CHECK(a.result.history.back().train_loss == b.result.history.back().train_loss);
}

TEST_CASE("a tiny deterministic corpus is memorized") {
  std::vector<sse::Session> sessions;
  for (int i = 0; i < 20; ++i) {
    sessions.push_back(testing::trip("a" + std::to_string(i), {"c1", "c2", "c3", "c4"}));
    sessions.push_back(testing::trip("b" + std::to_string(i), {"c5", "c6", "c7"}));
    sessions.push_back(testing::trip("d" + std::to_string(i), {"c8", "c9"}));
  }
  const auto vocab = sse::build_vocab(sessions);
  const auto frames = sse::featurize_all(sessions, vocab);
  auto cfg = quick(60);
  cfg.batch_size = 16;
  cfg.learning_rate = 0.03;
  cfg.eval_k = 1;
  const auto model = testing::small_config().without_dropout();
  const auto r = sse::train_fold(frames, frames, model, vocab.cardinalities(), cfg);
  CHECK(r.result.best_recall == doctest::Approx(1.0));
  CHECK(sse::evaluate(r.best, frames, 1).recall == doctest::Approx(1.0));
}

TEST_CASE("popularity ranking counts bookings") {
  const std::vector<sse::Session> sessions{testing::trip("1", {"x", "y", "y"}), testing::trip("2", {"z", "y"})};
  const auto vocab = sse::build_vocab(sessions);
  const auto frames = sse::featurize_all(sessions, vocab);
  const auto rank = sse::popularity_ranking(frames, vocab.n_cities());
  REQUIRE(rank.size() >= 1);
  CHECK(rank.front() == static_cast<std::size_t>(vocab.city("y")));
  CHECK(sse::popularity_recall(frames, frames, vocab.n_cities(), 1) == doctest::Approx(1.0));
}

TEST_CASE("pmf averaging") {
  const std::vector<std::vector<double>> p{{1.0, 0.0}, {0.0, 1.0}};
  CHECK(sse::average_pmfs(p) == std::vector<double>{0.5, 0.5});
  const std::vector<std::vector<double>> bad{{1.0}, {0.5, 0.5}};
  CHECK_THROWS_AS(sse::average_pmfs(bad), sse::DimensionError);
}

TEST_CASE("ensemble maps member pmfs into the union city space") {
  const std::vector<sse::Session> a{testing::trip("1", {"a", "b"})};
  const std::vector<sse::Session> b{testing::trip("2", {"b", "c"})};
  sse::Ensemble ens;
  for (const auto& s : {a, b}) {
    auto vocab = sse::build_vocab(s);
    sse::ModelParams zero(testing::small_config(), vocab.cardinalities());
    ens.add({vocab, zero});
  }
  REQUIRE(ens.city_ids() == std::vector<std::string>{"", "a", "b", "c"});
  // Zero parameters: each member is uniform over UNKNOWN and its two cities.
  const auto p = ens.predict(testing::trip("q", {"a", "b", "c"}));
  CHECK(p[0] == doctest::Approx(1.0 / 3.0));
  CHECK(p[1] == doctest::Approx(1.0 / 6.0));
  CHECK(p[2] == doctest::Approx(1.0 / 3.0));
  CHECK(p[3] == doctest::Approx(1.0 / 6.0));
  CHECK(ens.city_index("zz") == 0);
}

TEST_CASE("ensemble rejects a vocabulary that does not fit the parameters") {
  const std::vector<sse::Session> a{testing::trip("1", {"a", "b"})};
  sse::Ensemble ens;
  CHECK_THROWS_AS(ens.add({sse::build_vocab(a), sse::ModelParams(testing::small_config(), testing::small_cards())}),
                  sse::DataError);
}

TEST_CASE("cross validation writes its run directory") {
  const auto dir = scratch("cv");
  const auto sessions = synthetic(150, 4);
  sse::CrossValidationOptions opt;
  opt.run_dir = dir.string();
  std::size_t callbacks = 0;
  opt.on_epoch = [&](const sse::FoldResult&, const sse::EpochStats&) { ++callbacks; };
  const auto r = sse::cross_validate(sessions, testing::small_config(), quick(2), opt);
  CHECK(callbacks == 4);
  REQUIRE(r.folds.size() == 2);
  CHECK(r.ensemble.size() == 2);
  for (std::size_t f = 0; f < 2; ++f) {
    CHECK(r.folds[f].ok);
    CHECK(fs::exists(dir / ("fold" + std::to_string(f)) / "checkpoint.sse"));
    CHECK(fs::exists(dir / ("fold" + std::to_string(f)) / "vocab.txt"));
  }
  std::ifstream metrics(dir / "metrics.csv");
  std::string header;
  std::getline(metrics, header);
  CHECK(header == "epoch,fold,split,recall_at_4,loss");
  std::size_t rows = 0;
  for (std::string line; std::getline(metrics, line);) ++rows;
  CHECK(rows == 8);
  std::ifstream folds(dir / "folds.csv");
  std::getline(folds, header);
  CHECK(header == "fold,best_epoch,best_recall_at_4,popularity_recall_at_4,status,checkpoint");
  const double mean = 0.5 * (r.folds[0].best_recall + r.folds[1].best_recall);
  CHECK(r.mean_best_recall() == doctest::Approx(mean));
  fs::remove_all(dir);
}

TEST_CASE("cross validation with two jobs matches one job") {
  const auto sessions = synthetic(100, 8);
  auto cfg = quick(1);
  const auto one = sse::cross_validate(sessions, testing::small_config(), cfg);
  cfg.jobs = 2;
  const auto two = sse::cross_validate(sessions, testing::small_config(), cfg);
  REQUIRE(one.ensemble.size() == two.ensemble.size());
  for (std::size_t i = 0; i < one.ensemble.size(); ++i) {
    CHECK(one.ensemble.member(i).params == two.ensemble.member(i).params);
  }
}

TEST_CASE("metrics line format") {
  CHECK(sse::metrics_line(3, 1, "val", 0.25, 1.5) == "epoch=3 fold=1 split=val recall_at_4=0.25 loss=1.5");
  CHECK(sse::metrics_line(3, 1, "train", std::nullopt, 2.0) == "epoch=3 fold=1 split=train loss=2");
}
