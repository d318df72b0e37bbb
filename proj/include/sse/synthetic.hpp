#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sse/sessions.hpp"
#include "sse/tensor.hpp"

namespace sse {

// Probability of each prediction-step count T (index = T, index 0 unused),
// i.e. sessions of T + 1 bookings. Derived from the challenge training-set
// length table with T = 1 dropped; the ">10" bin is spread over T = 11..47
// with geometric decay.
std::vector<double> default_step_distribution();

struct SyntheticConfig {
  std::size_t sessions = 1000;
  std::size_t cities = 50;
  std::size_t blocks = 5;
  // Probability that the next city lies in the current city's block.
  double within_block = 0.85;
  // Empty means default_step_distribution().
  std::vector<double> step_distribution;
  std::uint64_t seed = 7;
};

// Block-structured first-order chain over cities. Cities are split into
// contiguous blocks; each block is one hotel country.
struct CityChain {
  Tensor transition;           // cities x cities, row-stochastic
  std::vector<double> initial;  // start-city distribution
  std::vector<std::size_t> block_of;

  std::size_t cities() const { return initial.size(); }
};

CityChain build_city_chain(const SyntheticConfig& config);

// Deterministic given config.seed. Each session gets a distinct utrip_id;
// users own one or more trips.
std::vector<Session> generate_synthetic(const SyntheticConfig& config);

}  // namespace sse
