#pragma once

#include <cmath>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esltyp/util.hpp"

namespace esltyp {

// Symmetric language-by-language similarity matrix with unit diagonal and
// off-diagonal entries in [0,1]. Houses both the ESL confusion similarities
// and the typology-based cosine similarities.
struct SimilarityMatrix {
  std::vector<std::string> languages;
  std::vector<double> values;  // row-major |L| x |L|

  size_t size() const { return languages.size(); }

  double at(size_t i, size_t j) const { return values[i * languages.size() + j]; }
  double& at(size_t i, size_t j) { return values[i * languages.size() + j]; }

  int index_of(const std::string& language) const {
    for (size_t i = 0; i < languages.size(); ++i)
      if (languages[i] == language) return static_cast<int>(i);
    return -1;
  }
};

inline void validate(const SimilarityMatrix& m, double tol = 1e-12) {
  const size_t n = m.languages.size();
  if (m.values.size() != n * n) throw DomainError("similarity matrix: wrong value count");
  for (size_t i = 0; i < n; ++i) {
    if (std::abs(m.at(i, i) - 1.0) > tol)
      throw DomainError("similarity matrix: diagonal entry for '" + m.languages[i] +
                        "' is not 1");
    for (size_t j = 0; j < n; ++j) {
      double v = m.at(i, j);
      if (!std::isfinite(v)) throw DomainError("similarity matrix: non-finite entry");
      if (i != j && (v < -tol || v > 1.0 + tol))
        throw DomainError("similarity matrix: entry (" + m.languages[i] + "," + m.languages[j] +
                          ") outside [0,1]");
      if (std::abs(v - m.at(j, i)) > tol)
        throw DomainError("similarity matrix: not symmetric at (" + m.languages[i] + "," +
                          m.languages[j] + ")");
    }
  }
}

// Reorders rows/columns to the given language order (a permutation of the
// matrix's own language set).
inline SimilarityMatrix reorder(const SimilarityMatrix& m,
                                const std::vector<std::string>& languages) {
  SimilarityMatrix out;
  out.languages = languages;
  out.values.assign(languages.size() * languages.size(), 0.0);
  std::vector<size_t> src(languages.size());
  for (size_t i = 0; i < languages.size(); ++i) {
    int idx = m.index_of(languages[i]);
    if (idx < 0) throw DomainError("reorder: language '" + languages[i] + "' not in matrix");
    src[i] = static_cast<size_t>(idx);
  }
  for (size_t i = 0; i < languages.size(); ++i)
    for (size_t j = 0; j < languages.size(); ++j) out.at(i, j) = m.at(src[i], src[j]);
  return out;
}

// CSV: header row and first column carry the language identifiers, values at
// 9 significant digits. Lines starting with '#' are skipped on read.
inline void write_similarity_csv(const SimilarityMatrix& m, std::ostream& out) {
  out << "language";
  for (const std::string& lang : m.languages) out << ',' << lang;
  out << "\n";
  for (size_t i = 0; i < m.languages.size(); ++i) {
    out << m.languages[i];
    for (size_t j = 0; j < m.languages.size(); ++j) out << ',' << format_g9(m.at(i, j));
    out << "\n";
  }
}

inline SimilarityMatrix read_similarity_csv(std::istream& in) {
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line[0] == '#') continue;
    rows.push_back(line);
  }
  if (rows.empty()) throw DomainError("similarity CSV: empty input");
  std::vector<std::string> header = split(rows[0], ',');
  if (header.size() < 2) throw DomainError("similarity CSV: header has no languages");

  SimilarityMatrix m;
  m.languages.assign(header.begin() + 1, header.end());
  const size_t n = m.languages.size();
  if (rows.size() != n + 1)
    throw DomainError("similarity CSV: expected " + std::to_string(n) + " data rows, got " +
                      std::to_string(rows.size() - 1));
  m.values.assign(n * n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    std::vector<std::string> fields = split(rows[i + 1], ',');
    if (fields.size() != n + 1)
      throw DomainError("similarity CSV: row " + std::to_string(i + 2) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(n + 1));
    if (fields[0] != m.languages[i])
      throw DomainError("similarity CSV: row label '" + fields[0] + "' does not match header '" +
                        m.languages[i] + "'");
    for (size_t j = 0; j < n; ++j)
      m.at(i, j) = parse_double(fields[j + 1], "similarity entry");
  }
  validate(m, 1e-9);
  return m;
}

inline nlohmann::json similarity_to_json(const SimilarityMatrix& m) {
  nlohmann::json values = nlohmann::json::array();
  for (size_t i = 0; i < m.languages.size(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (size_t j = 0; j < m.languages.size(); ++j) row.push_back(m.at(i, j));
    values.push_back(std::move(row));
  }
  return nlohmann::json{{"languages", m.languages}, {"values", std::move(values)}};
}

inline SimilarityMatrix similarity_from_json(const nlohmann::json& j) {
  SimilarityMatrix m;
  m.languages = j.at("languages").get<std::vector<std::string>>();
  const size_t n = m.languages.size();
  m.values.reserve(n * n);
  for (const auto& row : j.at("values")) {
    if (row.size() != n) throw DomainError("similarity JSON: ragged values");
    for (const auto& v : row) m.values.push_back(v.get<double>());
  }
  if (m.values.size() != n * n) throw DomainError("similarity JSON: wrong value count");
  validate(m, 1e-9);
  return m;
}

inline SimilarityMatrix read_similarity_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open similarity matrix: " + path);
  if (path.size() >= 5 && path.ends_with(".json")) {
    nlohmann::json j;
    in >> j;
    return similarity_from_json(j);
  }
  return read_similarity_csv(in);
}

}  // namespace esltyp
