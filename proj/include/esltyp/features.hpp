#pragma once

#include <array>
#include <compare>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "esltyp/corpus.hpp"
#include "esltyp/util.hpp"

namespace esltyp {

enum class FeatureFamily : int {
  DepTriple = 0,   // relation | head POS | dependent POS
  Order,           // left/right | head POS | dependent POS
  Distance,        // |head - dependent| (capped) | head POS | dependent POS
  PosBetween,      // relation | tags strictly between head and dependent
  PosNgram,        // POS n-gram, n = 1..4, space separated
  Inflection,      // inflectional suffix
  Derivation,      // derivational suffix
};

inline constexpr std::array<const char*, 7> kFamilyNames = {
    "DEP_TRIPLE", "ORDER", "DISTANCE", "POS_BETWEEN", "POS_NGRAM", "INFLECTION", "DERIVATION"};

inline const char* family_name(FeatureFamily f) {
  return kFamilyNames[static_cast<size_t>(f)];
}

inline FeatureFamily family_from_name(const std::string& name) {
  for (size_t i = 0; i < kFamilyNames.size(); ++i)
    if (name == kFamilyNames[i]) return static_cast<FeatureFamily>(i);
  throw DomainError("unknown feature family '" + name + "'");
}

struct FeatureId {
  FeatureFamily family;
  std::string payload;

  auto operator<=>(const FeatureId&) const = default;

  std::string str() const { return std::string(family_name(family)) + ":" + payload; }
};

// Feature counts for one document. Values are raw occurrence counts unless
// extraction ran with length normalization, in which case they are
// counts / token count; either way every stored value is > 0.
struct SparseFeatureVector {
  std::map<FeatureId, double> counts;

  double at(const FeatureId& id) const {
    auto it = counts.find(id);
    return it == counts.end() ? 0.0 : it->second;
  }
  bool operator==(const SparseFeatureVector&) const = default;
};

struct ExtractionConfig {
  int distance_cap = 10;  // distances beyond this collapse into one "<cap>+" bucket
  int max_gap = 4;        // no POS_BETWEEN feature when more tags lie between
  std::vector<std::string> inflectional_suffixes = {"s",  "es", "ed", "d",
                                                    "ing", "en", "er", "est"};
  std::vector<std::string> derivational_suffixes = {
      "ity", "ness", "ment", "tion", "sion", "able", "ible", "ful", "less", "ous",
      "ive", "al",   "ic",   "ly",   "ize",  "ise",  "ism",  "ist", "ance", "ence"};
  bool normalize = false;  // divide counts by document token count

  bool operator==(const ExtractionConfig&) const = default;
};

namespace detail {

// Longest suffix from `suffixes` that matches `form` and leaves a stem of at
// least 3 characters; no match returns nullopt.
inline std::optional<std::string> longest_suffix(const std::string& form,
                                                 const std::vector<std::string>& suffixes) {
  const std::string* best = nullptr;
  for (const std::string& suf : suffixes) {
    if (form.size() < suf.size() + 3) continue;
    if (!form.ends_with(suf)) continue;
    if (!best || suf.size() > best->size()) best = &suf;
  }
  if (!best) return std::nullopt;
  return *best;
}

}  // namespace detail

inline SparseFeatureVector extract_features(const Document& doc, const ExtractionConfig& config) {
  SparseFeatureVector vec;
  auto bump = [&vec](FeatureFamily family, std::string payload) {
    vec.counts[FeatureId{family, std::move(payload)}] += 1.0;
  };

  size_t token_total = 0;
  for (const Sentence& sent : doc.sentences) {
    token_total += sent.size();
    const int n = static_cast<int>(sent.size());

    // POS n-grams, n = 1..4, within the sentence, no boundary padding.
    for (int len = 1; len <= 4; ++len) {
      for (int i = 0; i + len <= n; ++i) {
        std::string payload = sent[i].pos;
        for (int j = 1; j < len; ++j) {
          payload += ' ';
          payload += sent[i + j].pos;
        }
        bump(FeatureFamily::PosNgram, std::move(payload));
      }
    }

    // Arc features. Root attachments (head = 0) carry no head POS and emit
    // nothing.
    for (const Token& tok : sent) {
      if (tok.head == 0) continue;
      const Token& head = sent[static_cast<size_t>(tok.head) - 1];
      const std::string pair_key = head.pos + "|" + tok.pos;

      bump(FeatureFamily::DepTriple, tok.relation + "|" + pair_key);
      bump(FeatureFamily::Order,
           std::string(tok.index < head.index ? "left" : "right") + "|" + pair_key);

      const int dist = std::abs(head.index - tok.index);
      std::string dist_key = dist > config.distance_cap
                                 ? std::to_string(config.distance_cap) + "+"
                                 : std::to_string(dist);
      bump(FeatureFamily::Distance, dist_key + "|" + pair_key);

      const int gap = dist - 1;
      if (gap <= config.max_gap) {
        std::string between;
        const int lo = std::min(head.index, tok.index);
        for (int i = 0; i < gap; ++i) {
          if (i) between += ' ';
          between += sent[static_cast<size_t>(lo + i)].pos;
        }
        bump(FeatureFamily::PosBetween, tok.relation + "|" + between);
      }
    }

    // Morphological suffixes, purely alphabetic tokens only. A token may fire
    // one inflectional and one derivational feature at the same time.
    for (const Token& tok : sent) {
      if (!is_alpha_ascii(tok.form)) continue;
      const std::string lower = to_lower_ascii(tok.form);
      if (auto suf = detail::longest_suffix(lower, config.inflectional_suffixes))
        bump(FeatureFamily::Inflection, *suf);
      if (auto suf = detail::longest_suffix(lower, config.derivational_suffixes))
        bump(FeatureFamily::Derivation, *suf);
    }
  }

  if (config.normalize && token_total > 0) {
    for (auto& [id, count] : vec.counts) count /= static_cast<double>(token_total);
  }
  return vec;
}

// Dense integer ids for every feature observed in a corpus, assigned in
// lexicographic (family, payload) order so the index is independent of
// document order.
struct FeatureIndex {
  std::vector<FeatureId> features;         // dense id -> feature
  std::map<FeatureId, int> ids;            // feature -> dense id

  size_t size() const { return features.size(); }

  int id_of(const FeatureId& f) const {
    auto it = ids.find(f);
    return it == ids.end() ? -1 : it->second;
  }

  bool operator==(const FeatureIndex& other) const { return features == other.features; }
};

inline FeatureIndex make_feature_index(std::map<FeatureId, int>&& seen) {
  FeatureIndex index;
  index.features.reserve(seen.size());
  int next = 0;
  for (auto& [feature, id] : seen) {
    id = next++;
    index.features.push_back(feature);
  }
  index.ids = std::move(seen);
  return index;
}

inline FeatureIndex build_feature_index(const Corpus& corpus, const ExtractionConfig& config) {
  if (corpus.documents.empty()) throw DomainError("cannot build a feature index: empty corpus");
  std::map<FeatureId, int> seen;
  for (const Document& doc : corpus.documents)
    for (const auto& [feature, count] : extract_features(doc, config).counts)
      seen.emplace(feature, 0);
  return make_feature_index(std::move(seen));
}

// Maps a sparse vector through the index; features absent from the index are
// dropped. Output is sorted by dense id.
inline std::vector<std::pair<int, double>> map_features(const SparseFeatureVector& vec,
                                                        const FeatureIndex& index) {
  std::vector<std::pair<int, double>> out;
  out.reserve(vec.counts.size());
  for (const auto& [feature, count] : vec.counts) {
    int id = index.id_of(feature);
    if (id >= 0) out.emplace_back(id, count);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// --- serialization -----------------------------------------------------------

inline void write_feature_index(const FeatureIndex& index, std::ostream& out) {
  for (size_t i = 0; i < index.features.size(); ++i)
    out << i << '\t' << index.features[i].str() << "\n";
}

inline FeatureIndex read_feature_index(std::istream& in) {
  std::map<FeatureId, int> seen;
  std::string line;
  int lineno = 0;
  size_t count = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields = split(line, '\t');
    if (fields.size() != 2)
      throw DomainError("feature index line " + std::to_string(lineno) + ": expected 2 columns");
    size_t colon = fields[1].find(':');
    if (colon == std::string::npos)
      throw DomainError("feature index line " + std::to_string(lineno) + ": missing family");
    FeatureId feature{family_from_name(fields[1].substr(0, colon)), fields[1].substr(colon + 1)};
    if (static_cast<size_t>(parse_long(fields[0], "feature id")) != count)
      throw DomainError("feature index line " + std::to_string(lineno) + ": ids must be dense");
    if (!seen.emplace(std::move(feature), 0).second)
      throw DomainError("feature index line " + std::to_string(lineno) + ": duplicate feature");
    ++count;
  }
  FeatureIndex index = make_feature_index(std::move(seen));
  // Lexicographic order is the on-disk order; anything else is a corrupt file.
  for (size_t i = 0; i < index.features.size(); ++i)
    if (index.id_of(index.features[i]) != static_cast<int>(i))
      throw DomainError("feature index file is not in canonical order");
  return index;
}

inline void write_extraction_config(const ExtractionConfig& config, std::ostream& out) {
  write_key_values(out, {
      {"distance_cap", std::to_string(config.distance_cap)},
      {"max_gap", std::to_string(config.max_gap)},
      {"inflectional_suffixes", join(config.inflectional_suffixes, ",")},
      {"derivational_suffixes", join(config.derivational_suffixes, ",")},
      {"normalize", config.normalize ? "true" : "false"},
  });
}

inline ExtractionConfig read_extraction_config(std::istream& in) {
  auto kv = read_key_values(in);
  ExtractionConfig config;
  if (auto it = kv.find("distance_cap"); it != kv.end())
    config.distance_cap = static_cast<int>(parse_long(it->second, "distance_cap"));
  if (auto it = kv.find("max_gap"); it != kv.end())
    config.max_gap = static_cast<int>(parse_long(it->second, "max_gap"));
  auto parse_suffixes = [](const std::string& value) {
    std::vector<std::string> out;
    for (std::string& s : split(value, ','))
      if (std::string t = trim(s); !t.empty()) out.push_back(std::move(t));
    return out;
  };
  if (auto it = kv.find("inflectional_suffixes"); it != kv.end())
    config.inflectional_suffixes = parse_suffixes(it->second);
  if (auto it = kv.find("derivational_suffixes"); it != kv.end())
    config.derivational_suffixes = parse_suffixes(it->second);
  if (auto it = kv.find("normalize"); it != kv.end()) {
    if (it->second != "true" && it->second != "false")
      throw DomainError("normalize must be true or false");
    config.normalize = it->second == "true";
  }
  if (config.distance_cap < 1) throw DomainError("distance_cap must be >= 1");
  if (config.max_gap < 0) throw DomainError("max_gap must be >= 0");
  return config;
}

}  // namespace esltyp
