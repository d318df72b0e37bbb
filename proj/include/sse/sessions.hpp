#pragma once

#include <chrono>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sse {

using Date = std::chrono::sys_days;

// Parses an ISO-8601 calendar date (YYYY-MM-DD); nullopt when malformed.
std::optional<Date> parse_date(std::string_view text);
std::string format_date(Date d);

// One hotel reservation. Identifiers are kept as opaque strings. An empty
// city_id marks a concealed destination; checkout may be missing only for
// such query rows.
struct Booking {
  std::string user_id;
  Date checkin{};
  std::optional<Date> checkout;
  std::string city_id;
  std::string hotel_country;
  std::string booker_country;
  std::string device_class;
  std::string affiliate_id;
  std::string utrip_id;
};

// All bookings of one trip, ordered by check-in (ties keep file order).
struct Session {
  std::string utrip_id;
  std::vector<Booking> bookings;

  std::size_t length() const { return bookings.size(); }
  // Prediction steps: one per booking that has a successor.
  std::size_t steps() const { return bookings.empty() ? 0 : bookings.size() - 1; }
};

inline constexpr std::string_view kCsvHeader =
    "user_id,checkin,checkout,city_id,device_class,affiliate_id,booker_country,hotel_country,utrip_id";

struct ParseOptions {
  // Throw RowError on the first malformed row instead of skipping it.
  bool strict = false;
  // How many row diagnostics to keep.
  std::size_t max_problems = 20;
};

struct ParseResult {
  std::vector<Session> sessions;
  std::size_t rows = 0;
  std::size_t malformed_rows = 0;
  std::vector<std::string> problems;
};

// Reads Booking-format CSV. Columns are located by header name (extra
// columns are ignored); a missing required column is a SchemaError.
ParseResult parse_sessions(std::istream& in, const ParseOptions& options = {});
ParseResult parse_sessions_file(const std::string& path, const ParseOptions& options = {});

// Writes sessions in the same schema, header first.
void write_sessions_csv(std::ostream& out, std::span<const Session> sessions);

// Table-style descriptive statistics for a set of sessions.
struct DatasetSummary {
  std::size_t users = 0;
  std::size_t sessions = 0;
  std::size_t cities = 0;
  std::size_t bookings = 0;
  std::size_t min_length = 0;
  std::size_t max_length = 0;
  double median_length = 0.0;
};

DatasetSummary describe(std::span<const Session> sessions);

}  // namespace sse
