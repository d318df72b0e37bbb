#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "sse/errors.hpp"
#include "sse/run.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<sse::Session> corpus() {
  std::vector<sse::Session> s;
  for (int i = 0; i < 12; ++i) {
    s.push_back(testing::trip("a" + std::to_string(i), {"c1", "c2", "c3"}));
    s.push_back(testing::trip("b" + std::to_string(i), {"c4", "c5", "c6", "c7"}));
  }
  return s;
}

}  // namespace

TEST_CASE("a trained run loads back and predicts like the in-memory ensemble") {
  const fs::path dir = fs::temp_directory_path() / "sse_unit_run";
  fs::remove_all(dir);
  sse::PrecisionScope scope(sse::Precision::kFloat32);
  const auto sessions = corpus();
  sse::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.folds = 2;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.01;
  sse::CrossValidationOptions opt;
  opt.run_dir = dir.string();
  const auto cv = sse::cross_validate(sessions, testing::small_config(), cfg, opt);

  const auto run = sse::load_run(dir.string());
  CHECK(run.folds == std::vector<std::size_t>{0, 1});
  CHECK(run.ensemble.size() == 2);
  CHECK(run.best_recall[0] == doctest::Approx(cv.folds[0].best_recall));
  CHECK(run.best_recall[run.best_member] >= run.best_recall[1 - run.best_member]);
  CHECK(run.ensemble.predict(sessions[0]) == cv.ensemble.predict(sessions[0]));

  const auto ev = sse::evaluate_sessions(run.ensemble, sessions, 4);
  CHECK(ev.trips == sessions.size());
  CHECK(ev.unknown_truth == 0);
  CHECK(ev.recall == doctest::Approx(ev.hit_rate));

  std::vector<sse::Session> queries{testing::trip("q1", {"c1", "c2", "c3"}), testing::trip("q2", {"c4"})};
  std::size_t skipped = 0;
  const auto recs = sse::recommend(run.ensemble, queries, 3, &skipped);
  CHECK(skipped == 1);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].utrip_id == "q1");
  CHECK(recs[0].city_ids.size() == 3);
  std::ostringstream os;
  sse::write_recommendations_csv(os, recs, 3);
  CHECK(os.str().rfind("utrip_id,city_id_1,city_id_2,city_id_3\nq1,", 0) == 0);
  fs::remove_all(dir);
}

TEST_CASE("evaluation refuses data with no known final city") {
  sse::Ensemble ens;
  const std::vector<sse::Session> train{testing::trip("1", {"a", "b"})};
  auto vocab = sse::build_vocab(train);
  ens.add({vocab, sse::ModelParams(testing::small_config(), vocab.cardinalities())});
  const std::vector<sse::Session> other{testing::trip("2", {"x", "y"})};
  CHECK_THROWS_AS(sse::evaluate_sessions(ens, other, 4), sse::DataError);
  const std::vector<sse::Session> single{testing::trip("3", {"a"})};
  CHECK_THROWS_AS(sse::evaluate_sessions(ens, single, 4), sse::DataError);
}

TEST_CASE("missing run directory is an IoError") {
  CHECK_THROWS_AS(sse::load_run("/nonexistent/run"), sse::IoError);
  const fs::path empty = fs::temp_directory_path() / "sse_unit_empty_run";
  fs::create_directories(empty);
  CHECK_THROWS_AS(sse::load_run(empty.string()), sse::IoError);
  fs::remove_all(empty);
}
