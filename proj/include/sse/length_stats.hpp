#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>

#include "sse/features.hpp"
#include "sse/sessions.hpp"

namespace sse {

struct LengthHistogram {
  std::map<std::size_t, std::size_t> counts;
  std::size_t total = 0;

  void add(std::size_t length, std::size_t n = 1);
  std::size_t count(std::size_t length) const;
  double proportion(std::size_t length) const;
};

// Session lengths once the last booking is removed (prediction-step counts),
// and the distribution after augmenting with every prefix that starts at the
// first booking. Sessions with a single booking have no step and are only
// counted in `dropped_single`.
struct LengthReport {
  LengthHistogram steps;
  LengthHistogram prefixes;
  std::size_t dropped_single = 0;

  // prefixes.total / steps.total, the mean step count.
  double augmentation_factor() const;
};

LengthReport length_distribution_report(std::span<const Session> sessions);
LengthHistogram step_histogram(std::span<const FeatureFrame> frames);

// Table with one row per length up to `collapse_above`, then a ">N" row.
void write_length_table(std::ostream& out, const LengthReport& report, std::size_t collapse_above = 10);

}  // namespace sse
