#include <cmath>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "sse/errors.hpp"
#include "sse/oracle.hpp"

namespace {

sse::ModelConfig probe(sse::CellType cell, sse::DecoderType dec) {
  auto c = testing::small_config(cell, dec).without_dropout();
  c.layers = 2;
  return c;
}

}  // namespace

TEST_CASE("prefixes are the leading slices") {
  sse::Rng rng(1);
  const auto f = sse::random_frame(testing::small_cards(), 4, rng);
  const auto ps = sse::enumerate_prefixes(f);
  REQUIRE(ps.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(ps[i].steps == i + 1);
    CHECK(ps[i].targets.back() == f.targets[i]);
    for (std::size_t j = 0; j < sse::kNumFeatures; ++j) CHECK(ps[i].row(i)[j] == f.row(i)[j]);
  }
}

TEST_CASE("zero parameters give a uniform pmf") {
  const auto cards = testing::small_cards(9);
  sse::ModelParams zero(probe(sse::CellType::kGru, sse::DecoderType::kTied), cards);
  sse::Rng rng(2);
  const auto p = sse::many_to_one_forward(sse::random_frame(cards, 3, rng), zero);
  REQUIRE(p.size() == 9);
  for (double v : p) CHECK(v == doctest::Approx(1.0 / 9.0));
}

TEST_CASE("engine and oracle agree for every cell, decoder and length") {
  sse::PrecisionScope scope(sse::Precision::kFloat64);
  const auto cards = testing::small_cards(12);
  for (auto cell : {sse::CellType::kGru, sse::CellType::kLstm}) {
    for (auto dec : {sse::DecoderType::kTied, sse::DecoderType::kFeedforward}) {
      const auto params = sse::random_params(probe(cell, dec), cards, 21);
      sse::Rng rng(3);
      for (std::size_t T = 1; T <= 6; ++T) {
        const auto r = sse::check_equivalence(sse::random_frame(cards, T, rng), params);
        CHECK_MESSAGE(r.passed, r.summary());
        CHECK(r.engine_ops == T);
        CHECK(r.oracle_ops == T * (T + 1) / 2);
        CHECK(r.prefixes.size() == T);
      }
    }
  }
}

TEST_CASE("a perturbed recurrent weight fails at every prefix from t = 2") {
  sse::PrecisionScope scope(sse::Precision::kFloat64);
  const auto cards = testing::small_cards(12);
  const auto params = sse::random_params(probe(sse::CellType::kGru, sse::DecoderType::kTied), cards, 4);
  auto broken = params;
  // U of gate n, layer 0: only reaches the output through h_{t-1}, so a
  // single-step prefix is unaffected.
  broken.gate(0, 2, 1).values()[0] += 0.3;
  sse::Rng rng(5);
  const auto r = sse::check_equivalence(sse::random_frame(cards, 5, rng), params, broken);
  CHECK_FALSE(r.passed);
  CHECK(r.prefixes[0].max_dev < 1e-12);
  for (std::size_t t = 1; t < 5; ++t) CHECK(r.prefixes[t].max_dev > 1e-9);
}

TEST_CASE("a single-step session passes") {
  sse::PrecisionScope scope(sse::Precision::kFloat64);
  const auto cards = testing::small_cards(6);
  const auto params = sse::random_params(probe(sse::CellType::kLstm, sse::DecoderType::kTied), cards, 8);
  sse::Rng rng(6);
  const auto r = sse::check_equivalence(sse::random_frame(cards, 1, rng), params);
  CHECK(r.passed);
  CHECK(r.oracle_ops == 1);
  CHECK(r.engine_ops == 1);
}

TEST_CASE("oracle needs 64-bit precision") {
  sse::PrecisionScope scope(sse::Precision::kFloat32);
  const auto cards = testing::small_cards(6);
  const auto params = sse::random_params(probe(sse::CellType::kGru, sse::DecoderType::kTied), cards, 8);
  sse::Rng rng(6);
  CHECK_THROWS_AS(sse::check_equivalence(sse::random_frame(cards, 2, rng), params), sse::ContractError);
}

TEST_CASE("report rows") {
  sse::PrecisionScope scope(sse::Precision::kFloat64);
  const auto cards = testing::small_cards(6);
  const auto params = sse::random_params(probe(sse::CellType::kGru, sse::DecoderType::kTied), cards, 8);
  sse::Rng rng(6);
  const auto r = sse::check_equivalence(sse::random_frame(cards, 3, rng), params);
  std::ostringstream os;
  sse::write_report_header(os);
  sse::write_report_rows(os, r);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "T,prefix_t,max_dev,oracle_ops,engine_ops");
  std::getline(in, line);
  CHECK(line.rfind("3,1,", 0) == 0);
  CHECK(line.substr(line.size() - 4) == ",1,3");
}

TEST_CASE("benchmark op counts follow the closed forms") {
  const auto cards = testing::small_cards(20);
  const auto params = sse::ModelParams::initialize(probe(sse::CellType::kGru, sse::DecoderType::kTied), cards, 1);
  const std::vector<std::size_t> lengths{1, 4, 9};
  const auto rows = sse::benchmark_complexity(lengths, params, 1);
  REQUIRE(rows.size() == 3);
  for (const auto& row : rows) {
    CHECK(row.engine_ops == row.steps);
    CHECK(row.oracle_ops == row.steps * (row.steps + 1) / 2);
    CHECK(row.engine_seconds > 0.0);
  }
  CHECK(rows[2].op_ratio() == doctest::Approx(5.0));
}
