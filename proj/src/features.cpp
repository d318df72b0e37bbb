#include "sse/features.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>

#include "sse/errors.hpp"

namespace sse {
namespace {

int days_between(Date from, Date to) { return static_cast<int>((to - from).count()); }

unsigned day_of_month(Date d) { return static_cast<unsigned>(std::chrono::year_month_day{d}.day()); }
unsigned month_of(Date d) { return static_cast<unsigned>(std::chrono::year_month_day{d}.month()); }
int year_of(Date d) { return static_cast<int>(std::chrono::year_month_day{d}.year()); }

void save_index(std::ostream& out, const char* name, const CategoryIndex& idx) {
  out << name << ' ' << idx.cardinality() - 1 << '\n';
  for (std::size_t i = 1; i < idx.cardinality(); ++i) out << idx.value(i) << '\n';
}

CategoryIndex load_index(std::istream& in, const char* name) {
  std::string tag;
  std::size_t n = 0;
  if (!(in >> tag >> n) || tag != name) throw DataError(std::string("vocab: expected section '") + name + "'");
  in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
  std::vector<std::string> values;
  values.reserve(n);
  std::string line;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw DataError(std::string("vocab: truncated section '") + name + "'");
    values.push_back(line);
  }
  return CategoryIndex(std::move(values));
}

}  // namespace

FeatureKind feature_kind(Feature f) {
  switch (f) {
    case Feature::kCity: return FeatureKind::kCity;
    case Feature::kHotelCountry:
    case Feature::kBookerCountry:
    case Feature::kNextBookerCountry:
    case Feature::kAffiliate:
    case Feature::kNextAffiliate: return FeatureKind::kCategorical;
    case Feature::kDeviceClass: return FeatureKind::kDevice;
    default: return FeatureKind::kNumerical;
  }
}

std::string_view feature_name(Feature f) {
  static constexpr std::array<std::string_view, kNumFeatures> kNames = {
      "city",          "hotel_country", "booker_country",   "next_booker_country", "checkin_day",
      "checkin_month", "checkin_year",  "next_checkin_day", "duration",            "next_duration",
      "device_class",  "transition_days", "affiliate_id",   "next_affiliate_id"};
  return kNames.at(index_of(f));
}

int duration_bucket(int days, int cap) { return std::clamp(days, 0, cap); }

CategoryIndex::CategoryIndex(std::vector<std::string> sorted_values) : values_{""} {
  values_.reserve(sorted_values.size() + 1);
  for (auto& v : sorted_values) {
    const auto idx = static_cast<std::int32_t>(values_.size());
    if (!index_.emplace(v, idx).second) throw DataError("vocab: duplicate value '" + v + "'");
    values_.push_back(std::move(v));
  }
}

std::int32_t CategoryIndex::lookup(std::string_view value) const {
  if (value.empty()) return Vocab::kUnknown;
  const auto it = index_.find(std::string(value));
  return it == index_.end() ? Vocab::kUnknown : it->second;
}

std::size_t Vocab::cardinality(Feature f) const {
  switch (f) {
    case Feature::kCity: return city_.cardinality();
    case Feature::kHotelCountry: return hotel_country_.cardinality();
    case Feature::kBookerCountry:
    case Feature::kNextBookerCountry: return booker_country_.cardinality();
    case Feature::kCheckinDay:
    case Feature::kNextCheckinDay: return 32;
    case Feature::kCheckinMonth: return 13;
    case Feature::kCheckinYear: return static_cast<std::size_t>(max_year_ - min_year_) + 2;
    case Feature::kDuration:
    case Feature::kNextDuration: return static_cast<std::size_t>(caps_.max_duration) + 2;
    case Feature::kDeviceClass: return device_.cardinality();
    case Feature::kTransitionDays: return static_cast<std::size_t>(caps_.max_transition_days) + 2;
    case Feature::kAffiliate:
    case Feature::kNextAffiliate: return affiliate_.cardinality();
  }
  throw ContractError("Vocab::cardinality: unknown feature");
}

std::array<std::size_t, kNumFeatures> Vocab::cardinalities() const {
  std::array<std::size_t, kNumFeatures> out{};
  for (std::size_t f = 0; f < kNumFeatures; ++f) out[f] = cardinality(static_cast<Feature>(f));
  return out;
}

std::int32_t Vocab::day(unsigned d) const { return d >= 1 && d <= 31 ? static_cast<std::int32_t>(d) : kUnknown; }
std::int32_t Vocab::month(unsigned m) const { return m >= 1 && m <= 12 ? static_cast<std::int32_t>(m) : kUnknown; }
std::int32_t Vocab::year(int y) const { return std::clamp(y, min_year_, max_year_) - min_year_ + 1; }
std::int32_t Vocab::duration(int days) const { return duration_bucket(days, caps_.max_duration) + 1; }
std::int32_t Vocab::transition(int days) const { return duration_bucket(days, caps_.max_transition_days) + 1; }

Vocab build_vocab(std::span<const Session> sessions, const VocabCaps& caps) {
  if (sessions.empty()) throw ContractError("build_vocab: no training sessions");
  if (caps.max_duration < 0 || caps.max_transition_days < 0) throw ConfigError("build_vocab: negative cap");
  std::set<std::string> city, hotel, booker, device, affiliate;
  int min_year = std::numeric_limits<int>::max();
  int max_year = std::numeric_limits<int>::min();
  auto put = [](std::set<std::string>& s, const std::string& v) {
    if (!v.empty()) s.insert(v);
  };
  for (const Session& s : sessions) {
    for (const Booking& b : s.bookings) {
      put(city, b.city_id);
      put(hotel, b.hotel_country);
      put(booker, b.booker_country);
      put(device, b.device_class);
      put(affiliate, b.affiliate_id);
      min_year = std::min(min_year, year_of(b.checkin));
      max_year = std::max(max_year, year_of(b.checkin));
    }
  }
  if (min_year > max_year) throw ContractError("build_vocab: sessions contain no bookings");
  auto to_index = [](const std::set<std::string>& s) { return CategoryIndex({s.begin(), s.end()}); };
  Vocab v;
  v.city_ = to_index(city);
  v.hotel_country_ = to_index(hotel);
  v.booker_country_ = to_index(booker);
  v.device_ = to_index(device);
  v.affiliate_ = to_index(affiliate);
  v.min_year_ = min_year;
  v.max_year_ = max_year;
  v.caps_ = caps;
  return v;
}

void Vocab::save(std::ostream& out) const {
  out << "sse-vocab 1\n";
  out << "caps " << caps_.max_duration << ' ' << caps_.max_transition_days << '\n';
  out << "years " << min_year_ << ' ' << max_year_ << '\n';
  save_index(out, "city", city_);
  save_index(out, "hotel_country", hotel_country_);
  save_index(out, "booker_country", booker_country_);
  save_index(out, "device_class", device_);
  save_index(out, "affiliate_id", affiliate_);
}

Vocab Vocab::load(std::istream& in) {
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "sse-vocab" || version != 1) throw DataError("vocab: bad header");
  Vocab v;
  if (!(in >> tag >> v.caps_.max_duration >> v.caps_.max_transition_days) || tag != "caps") {
    throw DataError("vocab: missing caps");
  }
  if (!(in >> tag >> v.min_year_ >> v.max_year_) || tag != "years") throw DataError("vocab: missing years");
  v.city_ = load_index(in, "city");
  v.hotel_country_ = load_index(in, "hotel_country");
  v.booker_country_ = load_index(in, "booker_country");
  v.device_ = load_index(in, "device_class");
  v.affiliate_ = load_index(in, "affiliate_id");
  return v;
}

void Vocab::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  save(out);
  if (!out) throw IoError("write failed for '" + path + "'");
}

Vocab Vocab::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return load(in);
}

FeatureFrame FeatureFrame::prefix(std::size_t n) const {
  if (n > steps) throw ContractError("FeatureFrame::prefix: longer than frame");
  FeatureFrame p;
  p.utrip_id = utrip_id;
  p.steps = n;
  p.features.assign(features.begin(), features.begin() + static_cast<std::ptrdiff_t>(n * kNumFeatures));
  p.targets.assign(targets.begin(), targets.begin() + static_cast<std::ptrdiff_t>(n));
  p.mask.assign(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(n));
  return p;
}

FeatureFrame featurize(const Session& session, const Vocab& vocab) {
  if (session.length() < 2) {
    throw ContractError("featurize: session '" + session.utrip_id + "' has " + std::to_string(session.length()) +
                        " booking(s); at least 2 are needed");
  }
  FeatureFrame frame;
  frame.utrip_id = session.utrip_id;
  frame.steps = session.steps();
  frame.features.resize(frame.steps * kNumFeatures);
  frame.targets.resize(frame.steps);
  frame.mask.assign(frame.steps, 1);
  for (std::size_t t = 0; t < frame.steps; ++t) {
    const Booking& cur = session.bookings[t];
    const Booking& next = session.bookings[t + 1];
    std::int32_t* row = frame.features.data() + t * kNumFeatures;
    auto set = [row](Feature f, std::int32_t v) { row[index_of(f)] = v; };
    set(Feature::kCity, vocab.city(cur.city_id));
    set(Feature::kHotelCountry, vocab.hotel_country(cur.hotel_country));
    set(Feature::kBookerCountry, vocab.booker_country(cur.booker_country));
    set(Feature::kNextBookerCountry, vocab.booker_country(next.booker_country));
    set(Feature::kCheckinDay, vocab.day(day_of_month(cur.checkin)));
    set(Feature::kCheckinMonth, vocab.month(month_of(cur.checkin)));
    set(Feature::kCheckinYear, vocab.year(year_of(cur.checkin)));
    set(Feature::kNextCheckinDay, vocab.day(day_of_month(next.checkin)));
    set(Feature::kDuration, cur.checkout ? vocab.duration(days_between(cur.checkin, *cur.checkout)) : Vocab::kUnknown);
    set(Feature::kNextDuration,
        next.checkout ? vocab.duration(days_between(next.checkin, *next.checkout)) : Vocab::kUnknown);
    set(Feature::kDeviceClass, vocab.device(cur.device_class));
    set(Feature::kTransitionDays,
        cur.checkout ? vocab.transition(days_between(*cur.checkout, next.checkin)) : Vocab::kUnknown);
    set(Feature::kAffiliate, vocab.affiliate(cur.affiliate_id));
    set(Feature::kNextAffiliate, vocab.affiliate(next.affiliate_id));
    frame.targets[t] = vocab.city(next.city_id);
  }
  return frame;
}

std::vector<FeatureFrame> featurize_all(std::span<const Session> sessions, const Vocab& vocab) {
  std::vector<FeatureFrame> frames;
  frames.reserve(sessions.size());
  for (const Session& s : sessions) {
    if (s.length() >= 2) frames.push_back(featurize(s, vocab));
  }
  return frames;
}

}  // namespace sse
