#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "doctest.h"
#include "sse/batching.hpp"
#include "sse/errors.hpp"
#include "sse/rng.hpp"

namespace {

sse::FeatureFrame frame_of(std::size_t steps, std::int32_t tag) {
  sse::FeatureFrame f;
  f.utrip_id = std::to_string(tag);
  f.steps = steps;
  f.features.assign(steps * sse::kNumFeatures, tag);
  f.targets.assign(steps, tag);
  f.mask.assign(steps, 1);
  return f;
}

std::vector<sse::FeatureFrame> frames_of(const std::vector<std::size_t>& steps) {
  std::vector<sse::FeatureFrame> out;
  for (std::size_t i = 0; i < steps.size(); ++i) out.push_back(frame_of(steps[i], static_cast<std::int32_t>(i + 1)));
  return out;
}

}  // namespace

TEST_CASE("sorted batching removes padding") {
  const auto frames = frames_of({3, 7, 3, 7});
  const auto batches = sse::make_batches(frames, 2, true, 1);
  REQUIRE(batches.size() == 2);
  std::multiset<std::size_t> widths;
  for (const auto& b : batches) {
    CHECK(b.padded_steps() == 0);
    widths.insert(b.max_steps);
  }
  CHECK(widths == std::multiset<std::size_t>{3, 7});
}

TEST_CASE("padding positions are masked out") {
  const auto frames = frames_of({3, 7});
  const auto b = sse::pack_batch(frames);
  CHECK(b.max_steps == 7);
  CHECK(b.padded_steps() == 4);
  CHECK(b.valid_steps() == 10);
  CHECK(b.valid(0, 2));
  CHECK_FALSE(b.valid(0, 3));
  CHECK(b.feature(0, 5, 0) == 0);
  CHECK(b.target(0, 5) == 0);
  CHECK(b.feature(1, 5, 0) == 2);
}

TEST_CASE("valid positions are conserved and every frame appears once") {
  sse::Rng rng(9);
  std::vector<std::size_t> steps;
  for (int i = 0; i < 57; ++i) steps.push_back(1 + rng.below(12));
  const auto frames = frames_of(steps);
  const std::size_t total = std::accumulate(steps.begin(), steps.end(), std::size_t{0});
  for (bool sorted : {true, false}) {
    for (std::size_t bs : {1, 5, 16, 100}) {
      const auto batches = sse::make_batches(frames, bs, sorted, 3);
      std::size_t valid = 0;
      std::vector<int> seen(frames.size(), 0);
      for (const auto& b : batches) {
        CHECK(b.size() <= bs);
        valid += b.valid_steps();
        for (std::size_t m : b.members) ++seen[m];
      }
      CHECK(valid == total);
      CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
    }
  }
}

TEST_CASE("batch order depends on the seed only") {
  const auto frames = frames_of({1, 2, 3, 4, 5, 6, 7, 8});
  auto order = [&](std::uint64_t seed) {
    std::vector<std::size_t> m;
    for (const auto& b : sse::make_batches(frames, 2, true, seed)) m.insert(m.end(), b.members.begin(), b.members.end());
    return m;
  };
  CHECK(order(4) == order(4));
  CHECK(order(4) != order(5));
}

TEST_CASE("stratified folds: exact divisibility") {
  std::vector<std::size_t> lengths(100);
  for (std::size_t i = 0; i < 100; ++i) lengths[i] = i < 50 ? 4 : 5;
  const auto folds = sse::stratified_kfold(lengths, 10, 1);
  REQUIRE(folds.size() == 10);
  for (const auto& f : folds) {
    std::size_t four = 0;
    for (std::size_t i : f) four += lengths[i] == 4 ? 1 : 0;
    CHECK(four == 5);
    CHECK(f.size() == 10);
  }
}

TEST_CASE("stratified folds: remainder and partition") {
  const std::vector<std::size_t> three{2, 2, 2};
  const auto f = sse::stratified_kfold(three, 2, 0);
  std::multiset<std::size_t> sizes{f[0].size(), f[1].size()};
  CHECK(sizes == std::multiset<std::size_t>{1, 2});

  sse::Rng rng(2);
  std::vector<std::size_t> lengths;
  for (int i = 0; i < 503; ++i) lengths.push_back(1 + rng.below(9));
  const std::size_t k = 7;
  const auto folds = sse::stratified_kfold(lengths, k, 5);
  std::vector<int> hits(lengths.size(), 0);
  for (const auto& fold : folds)
    for (std::size_t i : fold) ++hits[i];
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));

  // Per length bin, fold counts differ by at most one.
  std::map<std::size_t, std::vector<std::size_t>> per_bin;
  for (std::size_t fi = 0; fi < k; ++fi)
    for (std::size_t i : folds[fi]) {
      auto& v = per_bin[lengths[i]];
      v.resize(k, 0);
      ++v[fi];
    }
  for (auto& [len, counts] : per_bin) {
    counts.resize(k, 0);
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    CHECK(*hi - *lo <= 1);
  }
}

TEST_CASE("stratified folds reject bad k") {
  const std::vector<std::size_t> lengths{1, 2, 3};
  CHECK_THROWS_AS(sse::stratified_kfold(lengths, 1, 0), sse::ContractError);
  CHECK_THROWS_AS(sse::stratified_kfold(lengths, 4, 0), sse::ContractError);
}
