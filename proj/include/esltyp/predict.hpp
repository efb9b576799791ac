#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "esltyp/hierarchy.hpp"
#include "esltyp/similarity.hpp"
#include "esltyp/wals.hpp"
#include "esltyp/util.hpp"

namespace esltyp {

struct Prediction {
  int value_index = -1;
  std::vector<std::string> voters;  // documented languages behind the deciding vote
  int backoff_depth = 0;            // expansions past the initial voter set
  bool global_fallback = false;     // tie survived every expansion
};

struct PredictionResult {
  std::string target;
  std::map<std::string, Prediction> predictions;    // keyed by feature id
  std::vector<std::string> unpredictable;           // documented nowhere else
};

namespace detail {

// Majority vote among the documented members of `voters`. Returns the winning
// value index if it is unique, nullopt on a tie or when nobody votes.
inline std::optional<int> unique_majority(const WalsDatabase& db,
                                          const std::vector<size_t>& voters, size_t feat,
                                          std::vector<size_t>* participants = nullptr) {
  std::map<int, size_t> tally;
  if (participants) participants->clear();
  for (size_t lang : voters) {
    int v = db.cell(lang, feat);
    if (v < 0) continue;
    ++tally[v];
    if (participants) participants->push_back(lang);
  }
  if (tally.empty()) return std::nullopt;
  size_t best = 0;
  for (const auto& [value, count] : tally) best = std::max(best, count);
  int winner = -1;
  for (const auto& [value, count] : tally)
    if (count == best) {
      if (winner >= 0) return std::nullopt;  // tie
      winner = value;
    }
  return winner;
}

// Global terminal tie-break: most frequent value among all documented
// non-target languages, then the lowest value index.
inline std::optional<Prediction> global_fallback_vote(const WalsDatabase& db, size_t target,
                                                      size_t feat) {
  std::map<int, size_t> tally;
  std::vector<size_t> participants;
  for (size_t lang = 0; lang < db.num_languages(); ++lang) {
    if (lang == target) continue;
    int v = db.cell(lang, feat);
    if (v < 0) continue;
    ++tally[v];
    participants.push_back(lang);
  }
  if (tally.empty()) return std::nullopt;
  size_t best = 0;
  for (const auto& [value, count] : tally) best = std::max(best, count);
  Prediction pred;
  for (const auto& [value, count] : tally)
    if (count == best) {
      pred.value_index = value;  // std::map iterates values ascending
      break;
    }
  pred.global_fallback = true;
  for (size_t lang : participants) pred.voters.push_back(db.languages[lang]);
  return pred;
}

inline std::vector<std::string> names_of(const WalsDatabase& db,
                                         const std::vector<size_t>& langs) {
  std::vector<std::string> out;
  out.reserve(langs.size());
  for (size_t l : langs) out.push_back(db.languages[l]);
  return out;
}

}  // namespace detail

// Majority vote among the K nearest languages by similarity, expanding the
// voter group one language at a time on missing values or ties, with a global
// majority as the terminal tie-break. The target's own cells are never read.
inline PredictionResult knn_predict(const WalsDatabase& db, const SimilarityMatrix& similarity,
                                    const std::string& target,
                                    const std::vector<std::string>& feature_ids, int k) {
  if (k < 1) throw DomainError("knn_predict: K must be >= 1");
  int target_sim = similarity.index_of(target);
  if (target_sim < 0) throw DomainError("knn_predict: target '" + target + "' not in matrix");
  int target_db = db.language_index(target);
  if (target_db < 0) throw DomainError("knn_predict: target '" + target + "' not in database");

  // Rank the other languages by descending similarity; ties break toward the
  // lexicographically smaller language id.
  struct Ranked {
    double sim;
    std::string name;
    size_t db_index;
  };
  std::vector<Ranked> ranked;
  for (const std::string& lang : similarity.languages) {
    if (lang == target) continue;
    int li = db.language_index(lang);
    if (li < 0) throw DomainError("knn_predict: language '" + lang + "' not in database");
    ranked.push_back(Ranked{similarity.at(static_cast<size_t>(target_sim),
                                          static_cast<size_t>(similarity.index_of(lang))),
                            lang, static_cast<size_t>(li)});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    return a.name < b.name;
  });

  PredictionResult result;
  result.target = target;
  const size_t k0 = std::min<size_t>(static_cast<size_t>(k), ranked.size());

  for (const std::string& feature_id : feature_ids) {
    int feat = db.feature_index(feature_id);
    if (feat < 0) throw DomainError("knn_predict: unknown feature id '" + feature_id + "'");
    const size_t f = static_cast<size_t>(feat);

    bool decided = false;
    std::vector<size_t> voters;
    std::vector<size_t> participants;
    for (size_t k_cur = k0; k_cur <= ranked.size(); ++k_cur) {
      voters.clear();
      for (size_t i = 0; i < k_cur; ++i) voters.push_back(ranked[i].db_index);
      if (auto winner = detail::unique_majority(db, voters, f, &participants)) {
        Prediction pred;
        pred.value_index = *winner;
        pred.voters = detail::names_of(db, participants);
        pred.backoff_depth = static_cast<int>(k_cur - k0);
        result.predictions[feature_id] = std::move(pred);
        decided = true;
        break;
      }
    }
    if (decided) continue;

    if (auto pred = detail::global_fallback_vote(db, static_cast<size_t>(target_db), f)) {
      pred->backoff_depth = static_cast<int>(ranked.size() - k0) + 1;
      result.predictions[feature_id] = std::move(*pred);
    } else {
      result.unpredictable.push_back(feature_id);
    }
  }
  return result;
}

// Majority vote among the members of the target's parent cluster, walking up
// one level of the hierarchy on missing values or ties.
inline PredictionResult tree_predict(const WalsDatabase& db, const ClusterTree& tree,
                                     const std::string& target,
                                     const std::vector<std::string>& feature_ids) {
  validate(tree);
  int target_db = db.language_index(target);
  if (target_db < 0) throw DomainError("tree_predict: target '" + target + "' not in database");
  int leaf = -1;
  for (size_t i = 0; i < tree.leaves.size(); ++i)
    if (tree.leaves[i] == target) leaf = static_cast<int>(i);
  if (leaf < 0) throw DomainError("tree_predict: target '" + target + "' is not a leaf");

  const int n = static_cast<int>(tree.leaves.size());
  std::vector<int> parent(static_cast<size_t>(2 * n - 1), -1);
  for (size_t kk = 0; kk < tree.merges.size(); ++kk) {
    parent[static_cast<size_t>(tree.merges[kk].left)] = n + static_cast<int>(kk);
    parent[static_cast<size_t>(tree.merges[kk].right)] = n + static_cast<int>(kk);
  }

  // Leaf members of each ancestor cluster of the target, smallest first,
  // excluding the target itself.
  std::vector<std::vector<size_t>> voter_levels;
  for (int node = parent[static_cast<size_t>(leaf)]; node >= 0;
       node = parent[static_cast<size_t>(node)]) {
    std::vector<size_t> members;
    std::function<void(int)> collect = [&](int cur) {
      if (cur < n) {
        if (cur != leaf) {
          int li = db.language_index(tree.leaves[static_cast<size_t>(cur)]);
          if (li < 0)
            throw DomainError("tree_predict: leaf '" + tree.leaves[static_cast<size_t>(cur)] +
                              "' not in database");
          members.push_back(static_cast<size_t>(li));
        }
        return;
      }
      const ClusterMerge& m = tree.merges[static_cast<size_t>(cur - n)];
      collect(m.left);
      collect(m.right);
    };
    collect(node);
    voter_levels.push_back(std::move(members));
  }

  PredictionResult result;
  result.target = target;
  for (const std::string& feature_id : feature_ids) {
    int feat = db.feature_index(feature_id);
    if (feat < 0) throw DomainError("tree_predict: unknown feature id '" + feature_id + "'");
    const size_t f = static_cast<size_t>(feat);

    bool decided = false;
    std::vector<size_t> participants;
    for (size_t level = 0; level < voter_levels.size(); ++level) {
      if (auto winner = detail::unique_majority(db, voter_levels[level], f, &participants)) {
        Prediction pred;
        pred.value_index = *winner;
        pred.voters = detail::names_of(db, participants);
        pred.backoff_depth = static_cast<int>(level);
        result.predictions[feature_id] = std::move(pred);
        decided = true;
        break;
      }
    }
    if (decided) continue;

    if (auto pred = detail::global_fallback_vote(db, static_cast<size_t>(target_db), f)) {
      pred->backoff_depth = static_cast<int>(voter_levels.size());
      result.predictions[feature_id] = std::move(*pred);
    } else {
      result.unpredictable.push_back(feature_id);
    }
  }
  return result;
}

// --- reporting -----------------------------------------------------------

inline void write_predictions_csv(const PredictionResult& result, const WalsDatabase& db,
                                  std::ostream& out) {
  out << "target,feature_id,predicted_value,voters,backoff_depth\n";
  for (const auto& [feature_id, pred] : result.predictions) {
    int feat = db.feature_index(feature_id);
    const std::string& value =
        db.features[static_cast<size_t>(feat)].values[static_cast<size_t>(pred.value_index)];
    out << detail::csv_escape(result.target) << ',' << detail::csv_escape(feature_id) << ','
        << detail::csv_escape(value) << ',' << detail::csv_escape(join(pred.voters, ";")) << ','
        << pred.backoff_depth << "\n";
  }
}

inline nlohmann::json predictions_to_json(const PredictionResult& result,
                                          const WalsDatabase& db) {
  nlohmann::json preds = nlohmann::json::array();
  for (const auto& [feature_id, pred] : result.predictions) {
    int feat = db.feature_index(feature_id);
    preds.push_back({{"feature_id", feature_id},
                     {"value_index", pred.value_index},
                     {"value", db.features[static_cast<size_t>(feat)]
                                   .values[static_cast<size_t>(pred.value_index)]},
                     {"voters", pred.voters},
                     {"backoff_depth", pred.backoff_depth},
                     {"global_fallback", pred.global_fallback}});
  }
  return nlohmann::json{{"target", result.target},
                        {"predictions", std::move(preds)},
                        {"unpredictable", result.unpredictable}};
}

}  // namespace esltyp
