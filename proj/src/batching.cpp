#include "sse/batching.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "sse/errors.hpp"
#include "sse/rng.hpp"

namespace sse {

std::size_t Batch::valid_steps() const {
  std::size_t n = 0;
  for (std::uint8_t m : mask) n += m != 0;
  return n;
}

Batch pack_batch(std::span<const FeatureFrame> frames, std::span<const std::size_t> indices) {
  Batch b;
  b.members.assign(indices.begin(), indices.end());
  for (std::size_t i : indices) b.max_steps = std::max(b.max_steps, frames[i].steps);
  const std::size_t rows = indices.size();
  b.features.assign(rows * b.max_steps * kNumFeatures, 0);
  b.targets.assign(rows * b.max_steps, 0);
  b.mask.assign(rows * b.max_steps, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const FeatureFrame& f = frames[indices[r]];
    std::copy(f.features.begin(), f.features.end(), b.features.begin() + static_cast<std::ptrdiff_t>(r * b.max_steps * kNumFeatures));
    for (std::size_t t = 0; t < f.steps; ++t) {
      b.targets[r * b.max_steps + t] = f.targets[t];
      b.mask[r * b.max_steps + t] = f.mask[t];
    }
  }
  return b;
}

Batch pack_batch(std::span<const FeatureFrame> frames) {
  std::vector<std::size_t> all(frames.size());
  std::iota(all.begin(), all.end(), 0);
  return pack_batch(frames, all);
}

std::vector<Batch> make_batches(std::span<const FeatureFrame> frames, std::size_t batch_size, bool sort_by_length,
                                std::uint64_t seed) {
  if (batch_size == 0) throw ContractError("make_batches: batch_size must be >= 1");
  Rng rng(seed);
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), 0);
  if (sort_by_length) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frames[a].steps < frames[b].steps; });
  } else {
    rng.shuffle(std::span<std::size_t>(order));
  }
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, order.size() - start);
    batches.push_back(pack_batch(frames, std::span<const std::size_t>(order).subspan(start, n)));
  }
  if (sort_by_length) rng.shuffle(std::span<Batch>(batches));
  return batches;
}

std::vector<std::vector<std::size_t>> stratified_kfold(std::span<const std::size_t> lengths, std::size_t k,
                                                       std::uint64_t seed) {
  if (k < 2) throw ContractError("stratified_kfold: k must be >= 2");
  if (k > lengths.size()) {
    throw ContractError("stratified_kfold: " + std::to_string(k) + " folds for " + std::to_string(lengths.size()) +
                        " items");
  }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < lengths.size(); ++i) groups[lengths[i]].push_back(i);
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t cursor = 0;
  for (auto& [length, members] : groups) {
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t i : members) {
      folds[cursor].push_back(i);
      cursor = (cursor + 1) % k;
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<std::vector<std::size_t>> stratified_kfold(std::span<const Session> sessions, std::size_t k,
                                                       std::uint64_t seed) {
  std::vector<std::size_t> lengths;
  lengths.reserve(sessions.size());
  for (const Session& s : sessions) lengths.push_back(s.length());
  return stratified_kfold(lengths, k, seed);
}

}  // namespace sse
