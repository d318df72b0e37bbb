#pragma once

#include <string>
#include <vector>

#include "sse/features.hpp"
#include "sse/model.hpp"
#include "sse/sessions.hpp"

namespace testing {

inline sse::Date date(const char* s) { return *sse::parse_date(s); }

// Trip through `cities`, one night per stop, starting on `start`.
inline sse::Session trip(const std::string& id, const std::vector<std::string>& cities,
                         const char* start = "2016-05-01", const std::string& device = "desktop") {
  sse::Session s;
  s.utrip_id = id;
  sse::Date d = date(start);
  for (const auto& c : cities) {
    sse::Booking b;
    b.user_id = "u" + id;
    b.checkin = d;
    b.checkout = d + std::chrono::days(1);
    b.city_id = c;
    b.hotel_country = "H" + c.substr(0, 1);
    b.booker_country = "B";
    b.device_class = device;
    b.affiliate_id = "9";
    b.utrip_id = id;
    s.bookings.push_back(b);
    d += std::chrono::days(1);
  }
  return s;
}

inline sse::ModelConfig small_config(sse::CellType cell = sse::CellType::kGru,
                                     sse::DecoderType dec = sse::DecoderType::kTied) {
  sse::ModelConfig c;
  c.cell = cell;
  c.decoder = dec;
  c.hidden_dim = 8;
  c.city_dim = 8;
  c.categorical_dim = 3;
  c.device_dim = 2;
  c.numerical_dim = 2;
  return c;
}

inline sse::Cardinalities small_cards(std::size_t cities = 7) {
  sse::Cardinalities c{};
  c.fill(5);
  c[sse::index_of(sse::Feature::kCity)] = cities;
  return c;
}

}  // namespace testing
