#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sse/sessions.hpp"

namespace sse {

// Column order of FeatureFrame::features. Stable on disk and in the model.
enum class Feature : std::size_t {
  kCity = 0,
  kHotelCountry = 1,
  kBookerCountry = 2,
  kNextBookerCountry = 3,
  kCheckinDay = 4,
  kCheckinMonth = 5,
  kCheckinYear = 6,
  kNextCheckinDay = 7,
  kDuration = 8,
  kNextDuration = 9,
  kDeviceClass = 10,
  kTransitionDays = 11,
  kAffiliate = 12,
  kNextAffiliate = 13,
};

inline constexpr std::size_t kNumFeatures = 14;

enum class FeatureKind { kCity, kCategorical, kDevice, kNumerical };

FeatureKind feature_kind(Feature f);
std::string_view feature_name(Feature f);
inline constexpr std::size_t index_of(Feature f) { return static_cast<std::size_t>(f); }

struct VocabCaps {
  int max_duration = 30;
  int max_transition_days = 30;
};

// Stay length in days clamped to [0, cap].
int duration_bucket(int days, int cap);

// Dense value -> index map for one categorical field. Index 0 is UNKNOWN.
class CategoryIndex {
 public:
  CategoryIndex() : values_{""} {}
  explicit CategoryIndex(std::vector<std::string> sorted_values);

  std::int32_t lookup(std::string_view value) const;
  std::size_t cardinality() const { return values_.size(); }
  // Raw value of `index`; "" for UNKNOWN.
  const std::string& value(std::size_t index) const { return values_.at(index); }

 private:
  std::vector<std::string> values_;
  std::unordered_map<std::string, std::int32_t> index_;
};

// Per-feature dense indexing, built from training sessions only. Index 0 of
// every feature is UNKNOWN; numerical features are clamped integer buckets
// shifted by one.
class Vocab {
 public:
  static constexpr std::int32_t kUnknown = 0;

  std::size_t cardinality(Feature f) const;
  std::array<std::size_t, kNumFeatures> cardinalities() const;

  std::int32_t city(std::string_view id) const { return city_.lookup(id); }
  std::int32_t hotel_country(std::string_view id) const { return hotel_country_.lookup(id); }
  std::int32_t booker_country(std::string_view id) const { return booker_country_.lookup(id); }
  std::int32_t device(std::string_view id) const { return device_.lookup(id); }
  std::int32_t affiliate(std::string_view id) const { return affiliate_.lookup(id); }
  std::int32_t day(unsigned d) const;
  std::int32_t month(unsigned m) const;
  std::int32_t year(int y) const;
  std::int32_t duration(int days) const;
  std::int32_t transition(int days) const;

  const CategoryIndex& cities() const { return city_; }
  std::size_t n_cities() const { return city_.cardinality(); }
  const VocabCaps& caps() const { return caps_; }
  int min_year() const { return min_year_; }
  int max_year() const { return max_year_; }

  void save(std::ostream& out) const;
  static Vocab load(std::istream& in);
  void save_file(const std::string& path) const;
  static Vocab load_file(const std::string& path);

  friend Vocab build_vocab(std::span<const Session> sessions, const VocabCaps& caps);

 private:
  CategoryIndex city_;
  CategoryIndex hotel_country_;
  CategoryIndex booker_country_;
  CategoryIndex device_;
  CategoryIndex affiliate_;
  int min_year_ = 0;
  int max_year_ = 0;
  VocabCaps caps_;
};

Vocab build_vocab(std::span<const Session> sessions, const VocabCaps& caps = {});

// Model input for one session: `steps` rows of 14 feature indices, the city
// index of the following booking as target, and a validity flag per row.
struct FeatureFrame {
  std::string utrip_id;
  std::size_t steps = 0;
  std::vector<std::int32_t> features;  // steps x kNumFeatures, row-major
  std::vector<std::int32_t> targets;
  std::vector<std::uint8_t> mask;

  std::int32_t at(std::size_t step, Feature f) const { return features[step * kNumFeatures + index_of(f)]; }
  std::span<const std::int32_t> row(std::size_t step) const {
    return std::span<const std::int32_t>(features).subspan(step * kNumFeatures, kNumFeatures);
  }
  // Leading `n` steps.
  FeatureFrame prefix(std::size_t n) const;
};

// Step t reads booking t and the known context of booking t+1, and targets
// the city of booking t+1. Sessions with fewer than two bookings are a
// ContractError.
FeatureFrame featurize(const Session& session, const Vocab& vocab);

// Featurizes every session with at least two bookings; shorter ones are skipped.
std::vector<FeatureFrame> featurize_all(std::span<const Session> sessions, const Vocab& vocab);

}  // namespace sse
