#include "sse/length_stats.hpp"

#include <iomanip>
#include <ostream>

namespace sse {

void LengthHistogram::add(std::size_t length, std::size_t n) {
  counts[length] += n;
  total += n;
}

std::size_t LengthHistogram::count(std::size_t length) const {
  const auto it = counts.find(length);
  return it == counts.end() ? 0 : it->second;
}

double LengthHistogram::proportion(std::size_t length) const {
  return total == 0 ? 0.0 : static_cast<double>(count(length)) / static_cast<double>(total);
}

double LengthReport::augmentation_factor() const {
  return steps.total == 0 ? 0.0 : static_cast<double>(prefixes.total) / static_cast<double>(steps.total);
}

LengthReport length_distribution_report(std::span<const Session> sessions) {
  LengthReport r;
  for (const Session& s : sessions) {
    const std::size_t t = s.steps();
    if (t == 0) {
      ++r.dropped_single;
      continue;
    }
    r.steps.add(t);
    for (std::size_t p = 1; p <= t; ++p) r.prefixes.add(p);
  }
  return r;
}

LengthHistogram step_histogram(std::span<const FeatureFrame> frames) {
  LengthHistogram h;
  for (const FeatureFrame& f : frames) h.add(f.steps);
  return h;
}

void write_length_table(std::ostream& out, const LengthReport& report, std::size_t collapse_above) {
  out << "length,sessions,proportion,subsequences,subsequence_proportion\n";
  auto row = [&](const std::string& label, std::size_t n, std::size_t m) {
    const double p = report.steps.total ? static_cast<double>(n) / static_cast<double>(report.steps.total) : 0.0;
    const double q = report.prefixes.total ? static_cast<double>(m) / static_cast<double>(report.prefixes.total) : 0.0;
    out << label << ',' << n << ',' << std::fixed << std::setprecision(3) << p << ',' << m << ',' << q << '\n';
    out.unsetf(std::ios::fixed);
  };
  std::size_t longest = 0;
  if (!report.prefixes.counts.empty()) longest = report.prefixes.counts.rbegin()->first;
  for (std::size_t t = 1; t <= std::min(longest, collapse_above); ++t) {
    row(std::to_string(t), report.steps.count(t), report.prefixes.count(t));
  }
  std::size_t tail_n = 0;
  std::size_t tail_m = 0;
  for (const auto& [t, n] : report.steps.counts) tail_n += t > collapse_above ? n : 0;
  for (const auto& [t, m] : report.prefixes.counts) tail_m += t > collapse_above ? m : 0;
  if (longest > collapse_above) row(">" + std::to_string(collapse_above), tail_n, tail_m);
  out << "total," << report.steps.total << ",1.000," << report.prefixes.total << ",1.000\n";
}

}  // namespace sse
