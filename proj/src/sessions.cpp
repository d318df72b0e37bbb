#include "sse/sessions.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "sse/errors.hpp"

namespace sse {
namespace {

enum Column : std::size_t {
  kUserId,
  kCheckin,
  kCheckout,
  kCityId,
  kDeviceClass,
  kAffiliateId,
  kBookerCountry,
  kHotelCountry,
  kUtripId,
  kColumnCount
};

constexpr std::array<std::string_view, kColumnCount> kColumnNames = {
    "user_id", "checkin", "checkout", "city_id", "device_class", "affiliate_id", "booker_country",
    "hotel_country", "utrip_id"};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

void split_fields(std::string_view line, std::vector<std::string_view>& fields) {
  fields.clear();
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      return;
    }
    fields.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

}  // namespace

std::optional<Date> parse_date(std::string_view text) {
  // Accept a trailing time component ("2016-04-09 00:00:00").
  if (text.size() > 10 && (text[10] == ' ' || text[10] == 'T')) text = text.substr(0, 10);
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  auto num = [](std::string_view s, auto& out) {
    const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    return r.ec == std::errc() && r.ptr == s.data() + s.size();
  };
  if (!num(text.substr(0, 4), y) || !num(text.substr(5, 2), m) || !num(text.substr(8, 2), d)) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return Date{ymd};
}

std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

ParseResult parse_sessions(std::istream& in, const ParseOptions& options) {
  ParseResult result;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw SchemaError("parse_sessions: missing header row");
  ++line_no;
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM

  std::vector<std::string_view> fields;
  split_fields(line, fields);
  std::array<std::size_t, kColumnCount> position{};
  std::size_t max_position = 0;
  for (std::size_t c = 0; c < kColumnCount; ++c) {
    const auto it = std::find(fields.begin(), fields.end(), kColumnNames[c]);
    if (it == fields.end()) {
      throw SchemaError("parse_sessions: header lacks required column '" + std::string(kColumnNames[c]) + "'");
    }
    position[c] = static_cast<std::size_t>(it - fields.begin());
    max_position = std::max(max_position, position[c]);
  }

  std::unordered_map<std::string, std::size_t> session_of;
  auto problem = [&](const std::string& what) {
    if (options.strict) throw RowError(line_no, what);
    ++result.malformed_rows;
    if (result.problems.size() < options.max_problems) {
      result.problems.push_back("line " + std::to_string(line_no) + ": " + what);
    }
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++result.rows;
    split_fields(line, fields);
    if (fields.size() <= max_position) {
      problem("expected at least " + std::to_string(max_position + 1) + " fields, found " +
              std::to_string(fields.size()));
      continue;
    }
    const auto field = [&](Column c) { return fields[position[c]]; };
    Booking b;
    const auto checkin = parse_date(field(kCheckin));
    if (!checkin) {
      problem("unparseable checkin date '" + std::string(field(kCheckin)) + "'");
      continue;
    }
    b.checkin = *checkin;
    const std::string_view checkout_text = field(kCheckout);
    b.city_id = std::string(field(kCityId));
    if (!checkout_text.empty()) {
      const auto checkout = parse_date(checkout_text);
      if (!checkout) {
        problem("unparseable checkout date '" + std::string(checkout_text) + "'");
        continue;
      }
      if (*checkout < *checkin) {
        problem("checkout precedes checkin");
        continue;
      }
      b.checkout = *checkout;
    } else if (!b.city_id.empty()) {
      problem("missing checkout date");
      continue;
    }
    b.user_id = std::string(field(kUserId));
    b.device_class = std::string(field(kDeviceClass));
    b.affiliate_id = std::string(field(kAffiliateId));
    b.booker_country = std::string(field(kBookerCountry));
    b.hotel_country = std::string(field(kHotelCountry));
    b.utrip_id = std::string(field(kUtripId));
    if (b.utrip_id.empty()) {
      problem("empty utrip_id");
      continue;
    }
    auto [it, inserted] = session_of.try_emplace(b.utrip_id, result.sessions.size());
    if (inserted) {
      result.sessions.push_back(Session{b.utrip_id, {}});
    }
    result.sessions[it->second].bookings.push_back(std::move(b));
  }

  for (Session& s : result.sessions) {
    std::stable_sort(s.bookings.begin(), s.bookings.end(),
                     [](const Booking& a, const Booking& b) { return a.checkin < b.checkin; });
  }
  return result;
}

ParseResult parse_sessions_file(const std::string& path, const ParseOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return parse_sessions(in, options);
}

void write_sessions_csv(std::ostream& out, std::span<const Session> sessions) {
  out << kCsvHeader << '\n';
  for (const Session& s : sessions) {
    for (const Booking& b : s.bookings) {
      out << b.user_id << ',' << format_date(b.checkin) << ',' << (b.checkout ? format_date(*b.checkout) : "")
          << ',' << b.city_id << ',' << b.device_class << ',' << b.affiliate_id << ',' << b.booker_country << ','
          << b.hotel_country << ',' << b.utrip_id << '\n';
    }
  }
}

DatasetSummary describe(std::span<const Session> sessions) {
  DatasetSummary d;
  d.sessions = sessions.size();
  if (sessions.empty()) return d;
  std::unordered_set<std::string> users;
  std::unordered_set<std::string> cities;
  std::vector<std::size_t> lengths;
  lengths.reserve(sessions.size());
  for (const Session& s : sessions) {
    lengths.push_back(s.length());
    d.bookings += s.length();
    for (const Booking& b : s.bookings) {
      users.insert(b.user_id);
      if (!b.city_id.empty()) cities.insert(b.city_id);
    }
  }
  std::sort(lengths.begin(), lengths.end());
  d.users = users.size();
  d.cities = cities.size();
  d.min_length = lengths.front();
  d.max_length = lengths.back();
  const std::size_t n = lengths.size();
  d.median_length = n % 2 == 1 ? static_cast<double>(lengths[n / 2])
                               : 0.5 * static_cast<double>(lengths[n / 2 - 1] + lengths[n / 2]);
  return d;
}

}  // namespace sse
