#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sse/features.hpp"
#include "sse/sessions.hpp"

namespace sse {

// Frames padded to a common number of steps. Layout of `features` is
// [row][step][feature]; `mask[row * max_steps + step]` is 1 for real steps.
struct Batch {
  std::vector<std::size_t> members;  // indices into the frame list
  std::size_t max_steps = 0;
  std::vector<std::int32_t> features;
  std::vector<std::int32_t> targets;
  std::vector<std::uint8_t> mask;

  std::size_t size() const { return members.size(); }
  std::int32_t feature(std::size_t row, std::size_t step, std::size_t f) const {
    return features[(row * max_steps + step) * kNumFeatures + f];
  }
  std::int32_t target(std::size_t row, std::size_t step) const { return targets[row * max_steps + step]; }
  bool valid(std::size_t row, std::size_t step) const { return mask[row * max_steps + step] != 0; }
  std::size_t valid_steps() const;
  std::size_t padded_steps() const { return mask.size() - valid_steps(); }
};

// Pads the given frames into one batch. `members` records `indices`.
Batch pack_batch(std::span<const FeatureFrame> frames, std::span<const std::size_t> indices);
// Convenience: one batch holding every frame in order.
Batch pack_batch(std::span<const FeatureFrame> frames);

// Sorted mode: frames ordered by step count (stable), chunked, then the batch
// order is shuffled with `seed`. Unsorted mode: frames shuffled, then chunked.
std::vector<Batch> make_batches(std::span<const FeatureFrame> frames, std::size_t batch_size, bool sort_by_length,
                                std::uint64_t seed);

// Splits items into k folds with matching length mix: items are grouped by
// length, each group is shuffled and dealt round-robin, the dealing cursor
// carrying over between groups. Returns item indices per fold.
std::vector<std::vector<std::size_t>> stratified_kfold(std::span<const std::size_t> lengths, std::size_t k,
                                                       std::uint64_t seed);
std::vector<std::vector<std::size_t>> stratified_kfold(std::span<const Session> sessions, std::size_t k,
                                                       std::uint64_t seed);

}  // namespace sse
