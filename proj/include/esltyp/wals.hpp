#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "esltyp/similarity.hpp"
#include "esltyp/util.hpp"

namespace esltyp {

struct WalsFeature {
  std::string id;        // e.g. "83A"
  std::string name;      // e.g. "Order of Object and Verb"
  std::string category;  // one of the WALS areas, e.g. "Word Order"
  std::vector<std::string> values;  // value domain, file order of first occurrence
};

// Language-by-feature table of categorical values with explicit missingness.
// cells[l * features.size() + f] is the value index, or -1 when the feature is
// undocumented for that language.
struct WalsDatabase {
  std::vector<std::string> languages;  // sorted, unique
  std::vector<WalsFeature> features;
  std::vector<int> cells;

  size_t num_languages() const { return languages.size(); }
  size_t num_features() const { return features.size(); }

  int cell(size_t lang, size_t feat) const { return cells[lang * features.size() + feat]; }
  int& cell(size_t lang, size_t feat) { return cells[lang * features.size() + feat]; }
  bool documented(size_t lang, size_t feat) const { return cell(lang, feat) >= 0; }

  int language_index(const std::string& language) const {
    auto it = std::lower_bound(languages.begin(), languages.end(), language);
    if (it == languages.end() || *it != language) return -1;
    return static_cast<int>(it - languages.begin());
  }

  int feature_index(const std::string& id) const {
    for (size_t f = 0; f < features.size(); ++f)
      if (features[f].id == id) return static_cast<int>(f);
    return -1;
  }

  size_t documented_language_count(size_t feat) const {
    size_t n = 0;
    for (size_t l = 0; l < num_languages(); ++l) n += documented(l, feat);
    return n;
  }

  size_t documented_feature_count(size_t lang) const {
    size_t n = 0;
    for (size_t f = 0; f < num_features(); ++f) n += documented(lang, f);
    return n;
  }

  // Features documented for every language (the shared-all inventory).
  std::vector<size_t> fully_documented_features() const {
    std::vector<size_t> out;
    for (size_t f = 0; f < num_features(); ++f)
      if (documented_language_count(f) == num_languages()) out.push_back(f);
    return out;
  }

  // Restriction to a subset of feature positions (kept in original order).
  WalsDatabase restrict_to(const std::vector<size_t>& feature_positions) const {
    WalsDatabase out;
    out.languages = languages;
    out.features.reserve(feature_positions.size());
    for (size_t f : feature_positions) out.features.push_back(features[f]);
    out.cells.assign(languages.size() * feature_positions.size(), -1);
    for (size_t l = 0; l < languages.size(); ++l)
      for (size_t i = 0; i < feature_positions.size(); ++i)
        out.cells[l * feature_positions.size() + i] = cell(l, feature_positions[i]);
    return out;
  }
};

// --- CSV ingestion -----------------------------------------------------------

namespace detail {

// RFC-4180ish field splitting: double quotes guard commas, "" escapes a quote.
inline std::vector<std::string> split_csv_line(const std::string& line, int lineno) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted)
    throw DomainError("CSV line " + std::to_string(lineno) + ": unterminated quote");
  fields.push_back(std::move(field));
  return fields;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

}  // namespace detail

// Long-format WALS CSV: header `language,feature_id,feature_name,category,value`,
// one row per documented cell. Value domains are the distinct value names per
// feature, ordered by first occurrence in the file.
inline WalsDatabase load_wals(std::istream& in) {
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line)) throw DomainError("WALS CSV: empty stream");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  {
    std::vector<std::string> header = detail::split_csv_line(line, lineno);
    const std::vector<std::string> expected = {"language", "feature_id", "feature_name",
                                               "category", "value"};
    if (header != expected)
      throw DomainError("WALS CSV: header must be 'language,feature_id,feature_name,category,value'");
  }

  struct Row {
    std::string language, feature_id, value;
    int lineno;
  };
  std::vector<Row> rows;
  std::map<std::string, size_t> feature_pos;  // id -> position, first occurrence order
  std::vector<WalsFeature> features;
  std::set<std::string> languages;
  std::set<std::pair<std::string, std::string>> seen_cells;

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> f = detail::split_csv_line(line, lineno);
    if (f.size() != 5)
      throw DomainError("WALS CSV line " + std::to_string(lineno) + ": expected 5 fields, got " +
                        std::to_string(f.size()));
    const std::string& language = f[0];
    const std::string& feature_id = f[1];
    const std::string& feature_name = f[2];
    const std::string& category = f[3];
    const std::string& value = f[4];
    if (language.empty())
      throw DomainError("WALS CSV line " + std::to_string(lineno) + ": empty language");
    if (feature_id.empty())
      throw DomainError("WALS CSV line " + std::to_string(lineno) + ": empty feature_id");
    if (value.empty())
      throw DomainError("WALS CSV line " + std::to_string(lineno) + ": empty value name");
    if (!seen_cells.insert({language, feature_id}).second)
      throw DomainError("WALS CSV line " + std::to_string(lineno) + ": duplicate cell (" +
                        language + ", " + feature_id + ")");

    auto [it, inserted] = feature_pos.emplace(feature_id, features.size());
    if (inserted) {
      features.push_back(WalsFeature{feature_id, feature_name, category, {}});
    } else {
      const WalsFeature& existing = features[it->second];
      if (existing.name != feature_name || existing.category != category)
        throw DomainError("WALS CSV line " + std::to_string(lineno) + ": feature " + feature_id +
                          " redeclared with a different name or category");
    }
    WalsFeature& feat = features[it->second];
    if (std::find(feat.values.begin(), feat.values.end(), value) == feat.values.end())
      feat.values.push_back(value);
    languages.insert(language);
    rows.push_back(Row{language, feature_id, value, lineno});
  }

  WalsDatabase db;
  db.languages.assign(languages.begin(), languages.end());
  db.features = std::move(features);
  db.cells.assign(db.languages.size() * db.features.size(), -1);
  for (const Row& row : rows) {
    size_t lang = static_cast<size_t>(db.language_index(row.language));
    size_t feat = feature_pos.at(row.feature_id);
    const std::vector<std::string>& domain = db.features[feat].values;
    int value_idx = static_cast<int>(
        std::find(domain.begin(), domain.end(), row.value) - domain.begin());
    db.cell(lang, feat) = value_idx;
  }
  return db;
}

inline WalsDatabase load_wals_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open WALS CSV: " + path);
  return load_wals(in);
}

inline void write_wals_csv(const WalsDatabase& db, std::ostream& out) {
  out << "language,feature_id,feature_name,category,value\n";
  for (size_t f = 0; f < db.num_features(); ++f) {
    const WalsFeature& feat = db.features[f];
    for (size_t l = 0; l < db.num_languages(); ++l) {
      int v = db.cell(l, f);
      if (v < 0) continue;
      out << detail::csv_escape(db.languages[l]) << ',' << detail::csv_escape(feat.id) << ','
          << detail::csv_escape(feat.name) << ',' << detail::csv_escape(feat.category) << ','
          << detail::csv_escape(feat.values[static_cast<size_t>(v)]) << "\n";
    }
  }
}

// Wide per-language export: one header row `language,<id>|<category>|<name>,...`
// then one row per language, empty cell = undocumented. Converted to the long
// format by the `wals-convert` subcommand.
inline WalsDatabase load_wals_wide(std::istream& in) {
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line)) throw DomainError("wide WALS CSV: empty stream");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = detail::split_csv_line(line, lineno);
  if (header.empty() || header[0] != "language")
    throw DomainError("wide WALS CSV: first header column must be 'language'");

  std::vector<WalsFeature> features;
  for (size_t c = 1; c < header.size(); ++c) {
    std::vector<std::string> parts = split(header[c], '|');
    if (parts.size() != 3)
      throw DomainError("wide WALS CSV: header column " + std::to_string(c + 1) +
                        " must be 'id|category|name'");
    features.push_back(WalsFeature{parts[0], parts[2], parts[1], {}});
  }

  struct Row {
    std::string language;
    std::vector<std::string> cells;
  };
  std::vector<Row> rows;
  std::set<std::string> languages;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> f = detail::split_csv_line(line, lineno);
    if (f.size() != header.size())
      throw DomainError("wide WALS CSV line " + std::to_string(lineno) + ": expected " +
                        std::to_string(header.size()) + " fields");
    if (f[0].empty())
      throw DomainError("wide WALS CSV line " + std::to_string(lineno) + ": empty language");
    if (!languages.insert(f[0]).second)
      throw DomainError("wide WALS CSV line " + std::to_string(lineno) + ": duplicate language " +
                        f[0]);
    rows.push_back(Row{f[0], {f.begin() + 1, f.end()}});
  }

  // Value domains by first occurrence in reading order (row by row).
  for (const Row& row : rows)
    for (size_t c = 0; c < features.size(); ++c) {
      const std::string& value = row.cells[c];
      if (value.empty()) continue;
      auto& domain = features[c].values;
      if (std::find(domain.begin(), domain.end(), value) == domain.end())
        domain.push_back(value);
    }

  WalsDatabase db;
  db.languages.assign(languages.begin(), languages.end());
  db.features = std::move(features);
  db.cells.assign(db.languages.size() * db.features.size(), -1);
  for (const Row& row : rows) {
    size_t lang = static_cast<size_t>(db.language_index(row.language));
    for (size_t c = 0; c < db.features.size(); ++c) {
      if (row.cells[c].empty()) continue;
      const auto& domain = db.features[c].values;
      db.cell(lang, c) = static_cast<int>(
          std::find(domain.begin(), domain.end(), row.cells[c]) - domain.begin());
    }
  }
  return db;
}

// --- preprocessing -----------------------------------------------------------

struct PreprocessResult {
  WalsDatabase db;
  size_t removed_phonology = 0;
  size_t removed_undercoverage = 0;  // documented for fewer than 2 languages
};

inline PreprocessResult preprocess(const WalsDatabase& db,
                                   const std::string& phonology_category = "Phonology") {
  PreprocessResult result;
  std::vector<size_t> keep;
  for (size_t f = 0; f < db.num_features(); ++f) {
    if (db.features[f].category == phonology_category) {
      ++result.removed_phonology;
      continue;
    }
    if (db.documented_language_count(f) < 2) {
      ++result.removed_undercoverage;
      continue;
    }
    keep.push_back(f);
  }
  result.db = db.restrict_to(keep);
  return result;
}

// --- binarization ------------------------------------------------------------

// One-hot expansion over all (feature, value) pairs in database order; the
// mask records which features are documented for the language.
struct BinaryTypologyVector {
  std::vector<uint8_t> bits;
  std::vector<uint8_t> mask;  // per feature
};

struct BinarizedWals {
  std::vector<size_t> offsets;  // per feature, offset of its value block
  size_t total_bits = 0;
  std::vector<BinaryTypologyVector> per_language;  // aligned with db.languages
};

inline BinarizedWals binarize(const WalsDatabase& db) {
  BinarizedWals out;
  out.offsets.resize(db.num_features());
  size_t offset = 0;
  for (size_t f = 0; f < db.num_features(); ++f) {
    out.offsets[f] = offset;
    offset += db.features[f].values.size();
  }
  out.total_bits = offset;
  out.per_language.resize(db.num_languages());
  for (size_t l = 0; l < db.num_languages(); ++l) {
    BinaryTypologyVector& vec = out.per_language[l];
    vec.bits.assign(out.total_bits, 0);
    vec.mask.assign(db.num_features(), 0);
    for (size_t f = 0; f < db.num_features(); ++f) {
      int v = db.cell(l, f);
      if (v < 0) continue;
      vec.mask[f] = 1;
      vec.bits[out.offsets[f] + static_cast<size_t>(v)] = 1;
    }
  }
  return out;
}

// Inverse of binarize for documented blocks: the set bit's position within the
// block is the value index.
inline int unbinarize_cell(const BinarizedWals& bin, const WalsDatabase& db, size_t lang,
                           size_t feat) {
  const BinaryTypologyVector& vec = bin.per_language[lang];
  if (!vec.mask[feat]) return -1;
  size_t offset = bin.offsets[feat];
  size_t k = db.features[feat].values.size();
  for (size_t i = 0; i < k; ++i)
    if (vec.bits[offset + i]) return static_cast<int>(i);
  throw DomainError("unbinarize: documented feature with no set bit");
}

// --- similarity --------------------------------------------------------------

enum class WalsMode { SharedAll, SharedPairwise };

struct WalsSimilarityOptions {
  // In evaluation runs with very few construction features a pair can end up
  // with no shared documented feature; 'true' scores such a pair 0 instead of
  // aborting.
  bool empty_intersection_is_zero = false;
};

inline SimilarityMatrix wals_similarity(const WalsDatabase& db, WalsMode mode,
                                        const WalsSimilarityOptions& options = {}) {
  const size_t n = db.num_languages();
  if (n < 2) throw DomainError("wals_similarity: need at least 2 languages");
  BinarizedWals bin = binarize(db);

  std::vector<size_t> shared_all;
  if (mode == WalsMode::SharedAll) {
    shared_all = db.fully_documented_features();
    if (shared_all.empty())
      throw DomainError("wals_similarity: no feature is documented for all languages");
  }

  auto cosine_over = [&](size_t a, size_t b, const std::vector<size_t>& feats) {
    double dot = 0.0, norm_a = 0.0, norm_b = 0.0;
    const BinaryTypologyVector& va = bin.per_language[a];
    const BinaryTypologyVector& vb = bin.per_language[b];
    for (size_t f : feats) {
      size_t offset = bin.offsets[f];
      size_t k = db.features[f].values.size();
      for (size_t i = 0; i < k; ++i) {
        double xa = va.bits[offset + i];
        double xb = vb.bits[offset + i];
        dot += xa * xb;
        norm_a += xa * xa;
        norm_b += xb * xb;
      }
    }
    return dot / (std::sqrt(norm_a) * std::sqrt(norm_b));
  };

  SimilarityMatrix out;
  out.languages = db.languages;
  out.values.assign(n * n, 0.0);
  for (size_t a = 0; a < n; ++a) {
    out.at(a, a) = 1.0;
    for (size_t b = a + 1; b < n; ++b) {
      double sim = 0.0;
      if (mode == WalsMode::SharedAll) {
        sim = cosine_over(a, b, shared_all);
      } else {
        std::vector<size_t> shared;
        for (size_t f = 0; f < db.num_features(); ++f)
          if (db.documented(a, f) && db.documented(b, f)) shared.push_back(f);
        if (shared.empty()) {
          if (!options.empty_intersection_is_zero)
            throw DomainError("wals_similarity: languages '" + db.languages[a] + "' and '" +
                              db.languages[b] + "' share no documented feature");
          sim = 0.0;
        } else {
          sim = cosine_over(a, b, shared);
        }
      }
      out.at(a, b) = sim;
      out.at(b, a) = sim;
    }
  }
  validate(out, 1e-9);
  return out;
}

// --- feature masking ---------------------------------------------------------

struct MaskResult {
  WalsDatabase construction;
  std::vector<std::string> heldout_ids;       // feature ids
  std::vector<size_t> heldout_positions;      // positions in the input database
  std::vector<size_t> construction_positions;
};

// Uniformly samples ceil(keep_fraction * F) features for construction; the
// rest are held out. Deterministic for a fixed seed.
inline MaskResult mask_features(const WalsDatabase& db, double keep_fraction, uint64_t seed) {
  if (!(keep_fraction > 0.0 && keep_fraction < 1.0))
    throw DomainError("mask_features: keep_fraction must be in (0,1)");
  const size_t total = db.num_features();
  if (total == 0) throw DomainError("mask_features: empty database");
  size_t n_keep = static_cast<size_t>(
      std::ceil(keep_fraction * static_cast<double>(total) - 1e-12));
  n_keep = std::clamp<size_t>(n_keep, 1, total - 1);

  std::vector<size_t> positions(total);
  std::iota(positions.begin(), positions.end(), 0);
  Rng rng(seed);
  shuffle(positions, rng);

  MaskResult result;
  result.construction_positions.assign(positions.begin(),
                                       positions.begin() + static_cast<long>(n_keep));
  result.heldout_positions.assign(positions.begin() + static_cast<long>(n_keep),
                                  positions.end());
  std::sort(result.construction_positions.begin(), result.construction_positions.end());
  std::sort(result.heldout_positions.begin(), result.heldout_positions.end());
  for (size_t f : result.heldout_positions) result.heldout_ids.push_back(db.features[f].id);
  result.construction = db.restrict_to(result.construction_positions);
  return result;
}

}  // namespace esltyp
