#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sse/sessions.hpp"
#include "sse/trainer.hpp"

namespace sse {

// A trained run directory read back from disk.
struct LoadedRun {
  Ensemble ensemble;
  std::vector<std::size_t> folds;     // fold id of each ensemble member
  std::vector<double> best_recall;    // validation recall per member (from folds.csv, 0 when absent)
  std::size_t best_member = 0;        // member with the highest validation recall
};

// Reads fold*/checkpoint.sse + fold*/vocab.txt below `run_dir`. A run without
// any fold is an IoError.
LoadedRun load_run(const std::string& run_dir);

struct SessionEval {
  double recall = 0.0;
  double hit_rate = 0.0;
  std::size_t trips = 0;
  std::size_t unknown_truth = 0;  // final city absent from every member vocabulary
  std::size_t skipped = 0;        // fewer than two bookings or concealed final city
};

// Final-booking recall@k on raw sessions. Fails with DataError when no final
// city of `sessions` is known to the ensemble.
SessionEval evaluate_sessions(const Ensemble& ensemble, std::span<const Session> sessions, std::size_t k);

struct Recommendation {
  std::string utrip_id;
  std::vector<std::string> city_ids;  // best first
};

// Top-k raw city ids for the final booking of every session with at least
// two bookings; `skipped` counts the rest.
std::vector<Recommendation> recommend(const Ensemble& ensemble, std::span<const Session> sessions, std::size_t k,
                                      std::size_t* skipped = nullptr);

void write_recommendations_csv(std::ostream& out, std::span<const Recommendation> recs, std::size_t k);

}  // namespace sse
