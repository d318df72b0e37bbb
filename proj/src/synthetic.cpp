#include "sse/synthetic.hpp"

#include <array>
#include <cmath>
#include <string>

#include "sse/errors.hpp"
#include "sse/rng.hpp"

namespace sse {
namespace {

constexpr std::array<double, 10> kStayWeights = {0.30, 0.25, 0.15, 0.10, 0.07, 0.05, 0.03, 0.02, 0.02, 0.01};
constexpr std::array<const char*, 3> kDevices = {"desktop", "mobile", "tablet"};
constexpr std::array<double, 3> kDeviceWeights = {0.50, 0.45, 0.05};
constexpr std::size_t kBookerCountries = 5;
constexpr std::size_t kAffiliates = 20;
constexpr int kMaxSteps = 47;

std::vector<double> checked_distribution(const SyntheticConfig& config) {
  std::vector<double> d = config.step_distribution.empty() ? default_step_distribution() : config.step_distribution;
  double total = 0.0;
  for (std::size_t t = 0; t < d.size(); ++t) {
    if (!(d[t] >= 0.0) || !std::isfinite(d[t])) {
      throw ConfigError("synthetic: step distribution has invalid mass at T=" + std::to_string(t));
    }
    if (t > 0) total += d[t];
  }
  if (!(total > 0.0)) throw ConfigError("synthetic: step distribution has no mass at T >= 1");
  if (!d.empty()) d[0] = 0.0;
  return d;
}

}  // namespace

std::vector<double> default_step_distribution() {
  // Training column of the challenge length table, T = 2..10.
  std::vector<double> d(kMaxSteps + 1, 0.0);
  const std::array<double, 9> head = {0.003, 0.452, 0.229, 0.126, 0.074, 0.044, 0.027, 0.016, 0.010};
  for (std::size_t i = 0; i < head.size(); ++i) d[i + 2] = head[i];
  double tail_norm = 0.0;
  for (int t = 11; t <= kMaxSteps; ++t) tail_norm += std::pow(0.6, t - 11);
  for (int t = 11; t <= kMaxSteps; ++t) d[static_cast<std::size_t>(t)] = 0.028 * std::pow(0.6, t - 11) / tail_norm;
  double total = 0.0;
  for (double v : d) total += v;
  for (double& v : d) v /= total;
  return d;
}

CityChain build_city_chain(const SyntheticConfig& config) {
  const std::size_t n = config.cities;
  const std::size_t k = config.blocks;
  if (k < 1 || n < k) throw ConfigError("synthetic: need cities >= blocks >= 1");
  if (!(config.within_block >= 0.0 && config.within_block <= 1.0)) {
    throw ConfigError("synthetic: within_block must lie in [0, 1]");
  }
  Rng rng(derive_seed(config.seed, 1));
  CityChain chain;
  chain.block_of.resize(n);
  for (std::size_t c = 0; c < n; ++c) chain.block_of[c] = c * k / n;

  chain.transition = Tensor(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<double> inside(n, 0.0);
    std::vector<double> outside(n, 0.0);
    double in_sum = 0.0;
    double out_sum = 0.0;
    std::size_t block_size = 0;
    for (std::size_t j = 0; j < n; ++j) block_size += chain.block_of[j] == chain.block_of[c];
    for (std::size_t j = 0; j < n; ++j) {
      // Cubed uniforms give each city a few strongly preferred successors.
      const double u = rng.uniform();
      const double w = 0.02 + u * u * u;
      if (chain.block_of[j] == chain.block_of[c]) {
        if (j == c && block_size > 1) continue;
        inside[j] = w;
        in_sum += w;
      } else {
        outside[j] = w;
        out_sum += w;
      }
    }
    const double in_mass = out_sum > 0.0 ? config.within_block : 1.0;
    const double out_mass = 1.0 - in_mass;
    for (std::size_t j = 0; j < n; ++j) {
      double p = 0.0;
      if (inside[j] > 0.0) p = in_mass * inside[j] / in_sum;
      if (outside[j] > 0.0) p = out_mass * outside[j] / out_sum;
      chain.transition(c, j) = p;
    }
  }
  chain.initial.resize(n);
  double total = 0.0;
  for (double& p : chain.initial) {
    p = 0.05 + rng.uniform();
    total += p;
  }
  for (double& p : chain.initial) p /= total;
  return chain;
}

std::vector<Session> generate_synthetic(const SyntheticConfig& config) {
  const std::vector<double> steps = checked_distribution(config);
  const CityChain chain = build_city_chain(config);
  Rng rng(derive_seed(config.seed, 2));
  const Date epoch{std::chrono::year{2016} / std::chrono::January / 1};

  std::vector<double> affiliate_weights(kAffiliates);
  for (std::size_t a = 0; a < kAffiliates; ++a) affiliate_weights[a] = 1.0 / static_cast<double>(a + 1);

  std::vector<Session> sessions;
  sessions.reserve(config.sessions);
  std::size_t users = 0;
  for (std::size_t s = 0; s < config.sessions; ++s) {
    std::size_t user = users;
    if (users > 0 && rng.bernoulli(0.1)) {
      user = rng.below(users);
    } else {
      ++users;
    }
    const std::string user_id = std::to_string(100000 + user);
    const std::string utrip_id = user_id + "_" + std::to_string(s);
    const std::size_t n_steps = rng.categorical(steps);
    const std::string booker = "B" + std::to_string(rng.below(kBookerCountries));
    const std::string device = kDevices[rng.categorical(kDeviceWeights)];
    std::size_t affiliate = rng.categorical(affiliate_weights);

    Session session{utrip_id, {}};
    Date checkin = epoch + std::chrono::days{static_cast<int>(rng.below(730))};
    std::size_t city = rng.categorical(chain.initial);
    for (std::size_t b = 0; b <= n_steps; ++b) {
      if (b > 0) {
        city = rng.categorical(chain.transition.row(city));
        if (rng.bernoulli(0.1)) affiliate = rng.categorical(affiliate_weights);
      }
      const int stay = static_cast<int>(rng.categorical(kStayWeights)) + 1;
      Booking booking;
      booking.user_id = user_id;
      booking.checkin = checkin;
      booking.checkout = checkin + std::chrono::days{stay};
      booking.city_id = std::to_string(1000 + city);
      booking.hotel_country = "C" + std::to_string(chain.block_of[city]);
      booking.booker_country = booker;
      booking.device_class = device;
      booking.affiliate_id = std::to_string(5000 + affiliate);
      booking.utrip_id = utrip_id;
      session.bookings.push_back(std::move(booking));
      const int gap = rng.bernoulli(0.8) ? 0 : static_cast<int>(rng.below(5)) + 1;
      checkin = *session.bookings.back().checkout + std::chrono::days{gap};
    }
    sessions.push_back(std::move(session));
  }
  return sessions;
}

}  // namespace sse
