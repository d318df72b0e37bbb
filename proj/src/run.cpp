#include "sse/run.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "sse/checkpoint.hpp"
#include "sse/errors.hpp"
#include "sse/objective.hpp"

namespace sse {
namespace fs = std::filesystem;

namespace {

std::map<std::size_t, double> read_fold_recalls(const fs::path& path) {
  std::map<std::size_t, double> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string fold, epoch, recall;
    if (std::getline(ls, fold, ',') && std::getline(ls, epoch, ',') && std::getline(ls, recall, ',')) {
      try {
        out[std::stoul(fold)] = std::stod(recall);
      } catch (const std::exception&) {
        throw DataError("folds.csv: malformed line '" + line + "'");
      }
    }
  }
  return out;
}

}  // namespace

LoadedRun load_run(const std::string& run_dir) {
  if (!fs::is_directory(run_dir)) throw IoError("run directory '" + run_dir + "' does not exist");
  std::vector<std::pair<std::size_t, fs::path>> dirs;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || name.rfind("fold", 0) != 0) continue;
    if (!fs::exists(entry.path() / "checkpoint.sse")) continue;
    try {
      dirs.emplace_back(std::stoul(name.substr(4)), entry.path());
    } catch (const std::exception&) {
    }
  }
  if (dirs.empty()) throw IoError("no fold checkpoints below '" + run_dir + "'");
  std::sort(dirs.begin(), dirs.end());
  const auto recalls = read_fold_recalls(fs::path(run_dir) / "folds.csv");

  LoadedRun run;
  for (const auto& [fold, dir] : dirs) {
    if (!fs::exists(dir / "vocab.txt")) throw IoError("missing vocabulary in '" + dir.string() + "'");
    run.ensemble.add({Vocab::load_file((dir / "vocab.txt").string()), load_checkpoint((dir / "checkpoint.sse").string())});
    run.folds.push_back(fold);
    const auto it = recalls.find(fold);
    run.best_recall.push_back(it == recalls.end() ? 0.0 : it->second);
  }
  run.best_member = static_cast<std::size_t>(
      std::max_element(run.best_recall.begin(), run.best_recall.end()) - run.best_recall.begin());
  return run;
}

SessionEval evaluate_sessions(const Ensemble& ensemble, std::span<const Session> sessions, std::size_t k) {
  SessionEval ev;
  std::vector<Session> usable;
  for (const Session& s : sessions) {
    if (s.length() < 2 || s.bookings.back().city_id.empty()) {
      ++ev.skipped;
      continue;
    }
    usable.push_back(s);
  }
  if (usable.empty()) throw DataError("evaluate: no session with two or more bookings and a known final city");
  const auto pmfs = ensemble.predict(usable);
  std::vector<RankingResult> results;
  results.reserve(usable.size());
  for (std::size_t i = 0; i < usable.size(); ++i) {
    const std::size_t truth = ensemble.city_index(usable[i].bookings.back().city_id);
    if (truth == 0) ++ev.unknown_truth;
    RankingResult r = rank_cities(pmfs[i], truth, k);
    if (truth == 0) r.hit = false;
    results.push_back(std::move(r));
  }
  if (ev.unknown_truth == usable.size()) {
    throw DataError("evaluate: no final city of the data is in the run's vocabulary");
  }
  // UNKNOWN is never ranked, so a truth of 0 never counts as retrieved.
  ev.trips = usable.size();
  ev.recall = recall_at_k(results, k);
  ev.hit_rate = hit_rate_at_k(results, k);
  return ev;
}

std::vector<Recommendation> recommend(const Ensemble& ensemble, std::span<const Session> sessions, std::size_t k,
                                      std::size_t* skipped) {
  std::vector<Session> usable;
  std::size_t skip = 0;
  for (const Session& s : sessions) {
    if (s.length() < 2) {
      ++skip;
    } else {
      usable.push_back(s);
    }
  }
  if (skipped != nullptr) *skipped = skip;
  std::vector<Recommendation> out;
  if (usable.empty()) return out;
  const auto pmfs = ensemble.predict(usable);
  for (std::size_t i = 0; i < usable.size(); ++i) {
    Recommendation r;
    r.utrip_id = usable[i].utrip_id;
    for (std::size_t c : rank_cities(pmfs[i], 0, k).top) r.city_ids.push_back(ensemble.city_ids()[c]);
    out.push_back(std::move(r));
  }
  return out;
}

void write_recommendations_csv(std::ostream& out, std::span<const Recommendation> recs, std::size_t k) {
  out << "utrip_id";
  for (std::size_t i = 1; i <= k; ++i) out << ",city_id_" << i;
  out << '\n';
  for (const Recommendation& r : recs) {
    out << r.utrip_id;
    for (std::size_t i = 0; i < k; ++i) out << ',' << (i < r.city_ids.size() ? r.city_ids[i] : "");
    out << '\n';
  }
}

}  // namespace sse
