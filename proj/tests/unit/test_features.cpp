#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "sse/errors.hpp"
#include "sse/features.hpp"

using sse::Feature;

TEST_CASE("durations and transitions from dates") {
  sse::Session s = testing::trip("t", {"A", "B"});
  s.bookings[0].checkin = testing::date("2016-04-09");
  s.bookings[0].checkout = testing::date("2016-04-11");
  s.bookings[1].checkin = testing::date("2016-04-12");
  s.bookings[1].checkout = testing::date("2016-04-13");
  const sse::Vocab v = sse::build_vocab(std::vector<sse::Session>{s});
  const auto f = sse::featurize(s, v);
  REQUIRE(f.steps == 1);
  CHECK(f.at(0, Feature::kDuration) == v.duration(2));
  CHECK(f.at(0, Feature::kDuration) == 3);  // bucket 2, shifted past UNKNOWN
  CHECK(f.at(0, Feature::kTransitionDays) == 2);
  CHECK(f.at(0, Feature::kNextDuration) == 2);
  CHECK(f.at(0, Feature::kCheckinDay) == 9);
  CHECK(f.at(0, Feature::kNextCheckinDay) == 12);
  CHECK(f.at(0, Feature::kCheckinMonth) == 4);
  CHECK(f.targets[0] == v.city("B"));
}

TEST_CASE("duration buckets clamp") {
  CHECK(sse::duration_bucket(1, 30) == 1);
  CHECK(sse::duration_bucket(2, 30) == 2);
  CHECK(sse::duration_bucket(45, 30) == 30);
  CHECK(sse::duration_bucket(-3, 30) == 0);
}

TEST_CASE("unseen values map to UNKNOWN") {
  const std::vector<sse::Session> train{testing::trip("a", {"A", "B", "C"})};
  const sse::Vocab v = sse::build_vocab(train);
  CHECK(v.city("A") != 0);
  CHECK(v.city("Z") == 0);
  CHECK(v.city("") == 0);
  CHECK(v.device("tablet") == 0);
  CHECK(v.n_cities() == 4);
  const auto f = sse::featurize(testing::trip("b", {"A", "Z", "Q"}, "2016-05-01", "tablet"), v);
  CHECK(f.at(1, Feature::kCity) == 0);
  CHECK(f.targets[0] == 0);
  CHECK(f.at(0, Feature::kDeviceClass) == 0);
}

TEST_CASE("vocab of one fold never sees another fold's cities") {
  const std::vector<sse::Session> a{testing::trip("a", {"A1", "A2"})};
  const std::vector<sse::Session> b{testing::trip("b", {"B1", "B2"})};
  const auto va = sse::build_vocab(a);
  const auto vb = sse::build_vocab(b);
  CHECK(va.n_cities() == 3);
  CHECK(va.city("B1") == 0);
  CHECK(vb.city("A1") == 0);
  CHECK_NOTHROW(sse::featurize_all(b, va));
}

TEST_CASE("years clamp to the training range") {
  const std::vector<sse::Session> train{testing::trip("a", {"A", "B"}, "2016-01-01"),
                                        testing::trip("b", {"A", "B"}, "2017-06-01")};
  const auto v = sse::build_vocab(train);
  CHECK(v.cardinality(Feature::kCheckinYear) == 3);
  CHECK(v.year(2015) == 1);
  CHECK(v.year(2016) == 1);
  CHECK(v.year(2017) == 2);
  CHECK(v.year(2020) == 2);
}

TEST_CASE("cardinalities follow the caps") {
  const std::vector<sse::Session> train{testing::trip("a", {"A", "B"})};
  const auto v = sse::build_vocab(train, sse::VocabCaps{10, 5});
  CHECK(v.cardinality(Feature::kDuration) == 12);
  CHECK(v.cardinality(Feature::kTransitionDays) == 7);
  CHECK(v.cardinality(Feature::kCheckinDay) == 32);
  CHECK(v.cardinality(Feature::kCheckinMonth) == 13);
  CHECK(v.duration(100) == 11);
}

TEST_CASE("targets are the city sequence shifted by one") {
  const auto s = testing::trip("t", {"A", "B", "C", "A", "D"});
  const auto v = sse::build_vocab(std::vector<sse::Session>{s});
  const auto f = sse::featurize(s, v);
  REQUIRE(f.steps == 4);
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(f.at(t, Feature::kCity) == v.city(s.bookings[t].city_id));
    CHECK(f.targets[t] == v.city(s.bookings[t + 1].city_id));
  }
  CHECK(v.cities().value(static_cast<std::size_t>(f.targets[3])) == "D");
}

TEST_CASE("short sessions") {
  const auto s = testing::trip("t", {"A"});
  const auto v = sse::build_vocab(std::vector<sse::Session>{testing::trip("u", {"A", "B"})});
  CHECK_THROWS_AS(sse::featurize(s, v), sse::ContractError);
  const std::vector<sse::Session> mixed{s, testing::trip("u", {"A", "B"})};
  CHECK(sse::featurize_all(mixed, v).size() == 1);
  CHECK_THROWS(sse::build_vocab(std::vector<sse::Session>{}));
}

TEST_CASE("concealed final city gives UNKNOWN target and context") {
  auto s = testing::trip("t", {"A", "B", "C"});
  s.bookings.back().city_id = "";
  s.bookings.back().checkout.reset();
  const auto v = sse::build_vocab(std::vector<sse::Session>{testing::trip("u", {"A", "B", "C"})});
  const auto f = sse::featurize(s, v);
  CHECK(f.targets[1] == 0);
  CHECK(f.at(1, Feature::kNextDuration) == 0);
  CHECK(f.at(1, Feature::kTransitionDays) != 0);
}

TEST_CASE("vocab save and load") {
  const std::vector<sse::Session> train{testing::trip("a", {"A", "B", "C"}, "2016-01-01", "mobile"),
                                        testing::trip("b", {"C", "D"}, "2018-03-03")};
  const auto v = sse::build_vocab(train, sse::VocabCaps{12, 7});
  std::stringstream ss;
  v.save(ss);
  const auto w = sse::Vocab::load(ss);
  CHECK(w.cardinalities() == v.cardinalities());
  for (const char* c : {"A", "B", "C", "D", "E"}) CHECK(w.city(c) == v.city(c));
  CHECK(w.device("mobile") == v.device("mobile"));
  CHECK(w.year(2017) == v.year(2017));
  CHECK(w.caps().max_duration == 12);
  std::istringstream bad("garbage\n");
  CHECK_THROWS_AS(sse::Vocab::load(bad), sse::DataError);
}

TEST_CASE("prefix is a leading slice") {
  const auto s = testing::trip("t", {"A", "B", "C", "D"});
  const auto v = sse::build_vocab(std::vector<sse::Session>{s});
  const auto f = sse::featurize(s, v);
  const auto p = f.prefix(2);
  CHECK(p.steps == 2);
  CHECK(p.targets == std::vector<std::int32_t>(f.targets.begin(), f.targets.begin() + 2));
  CHECK(std::equal(p.features.begin(), p.features.end(), f.features.begin()));
}
