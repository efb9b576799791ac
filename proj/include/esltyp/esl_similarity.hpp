#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "esltyp/classifier.hpp"
#include "esltyp/similarity.hpp"
#include "esltyp/util.hpp"

namespace esltyp {

// Directed confusion scores before symmetrization: row y holds the average
// posterior mass that documents truly labeled y put on each other language,
// with the diagonal pinned to 1 by definition.
struct RawConfusion {
  std::vector<std::string> languages;
  std::vector<double> values;

  double at(size_t i, size_t j) const { return values[i * languages.size() + j]; }
  double& at(size_t i, size_t j) { return values[i * languages.size() + j]; }
};

inline RawConfusion confusion_similarity(const NliModel& model,
                                         std::span<const LabeledInstance> data) {
  const size_t n = model.num_languages();
  std::vector<double> sums(n * n, 0.0);
  std::vector<size_t> doc_counts(n, 0);

  for (const LabeledInstance& doc : data) {
    if (doc.label < 0 || doc.label >= static_cast<int>(n))
      throw DomainError("confusion_similarity: instance label out of range");
    Posterior post = posterior(model, doc.features);
    const size_t y = static_cast<size_t>(doc.label);
    ++doc_counts[y];
    for (size_t yp = 0; yp < n; ++yp) sums[y * n + yp] += post.probs[yp];
  }
  for (size_t y = 0; y < n; ++y)
    if (doc_counts[y] == 0)
      throw DomainError("confusion_similarity: language '" + model.languages[y] +
                        "' has no documents");

  RawConfusion raw;
  raw.languages = model.languages;
  raw.values.assign(n * n, 0.0);
  for (size_t y = 0; y < n; ++y) {
    for (size_t yp = 0; yp < n; ++yp)
      raw.at(y, yp) = sums[y * n + yp] / static_cast<double>(doc_counts[y]);
    raw.at(y, y) = 1.0;
  }
  return raw;
}

// Hard variant: counts of argmax misclassifications with add-one smoothing,
// row-normalized over the competing languages. Kept behind a flag for
// ablation; the probabilistic construction is the primary path.
inline RawConfusion hard_confusion_similarity(const NliModel& model,
                                              std::span<const LabeledInstance> data) {
  const size_t n = model.num_languages();
  std::vector<size_t> counts(n * n, 0);
  std::vector<size_t> doc_counts(n, 0);

  for (const LabeledInstance& doc : data) {
    if (doc.label < 0 || doc.label >= static_cast<int>(n))
      throw DomainError("confusion_similarity: instance label out of range");
    Posterior post = posterior(model, doc.features);
    size_t best = 0;
    for (size_t yp = 1; yp < n; ++yp)
      if (post.probs[yp] > post.probs[best]) best = yp;
    const size_t y = static_cast<size_t>(doc.label);
    ++doc_counts[y];
    ++counts[y * n + best];
  }
  for (size_t y = 0; y < n; ++y)
    if (doc_counts[y] == 0)
      throw DomainError("confusion_similarity: language '" + model.languages[y] +
                        "' has no documents");

  RawConfusion raw;
  raw.languages = model.languages;
  raw.values.assign(n * n, 0.0);
  for (size_t y = 0; y < n; ++y) {
    // Laplace smoothing over the n-1 competitors; the diagonal is pinned to 1
    // afterwards, matching the probabilistic definition.
    double denom = static_cast<double>(doc_counts[y] - counts[y * n + y]) +
                   static_cast<double>(n - 1);
    for (size_t yp = 0; yp < n; ++yp)
      raw.at(y, yp) = (static_cast<double>(counts[y * n + yp]) + 1.0) / denom;
    raw.at(y, y) = 1.0;
  }
  return raw;
}

// Averages the two directed confusion scores of every pair.
inline SimilarityMatrix symmetrize(const RawConfusion& raw) {
  const size_t n = raw.languages.size();
  if (raw.values.size() != n * n) throw DomainError("symmetrize: matrix is not square");
  for (size_t i = 0; i < n; ++i)
    if (raw.at(i, i) != 1.0) throw DomainError("symmetrize: diagonal must be 1");

  SimilarityMatrix out;
  out.languages = raw.languages;
  out.values.assign(n * n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    out.at(i, i) = 1.0;
    for (size_t j = i + 1; j < n; ++j) {
      double v = 0.5 * (raw.at(i, j) + raw.at(j, i));
      out.at(i, j) = v;
      out.at(j, i) = v;
    }
  }
  validate(out, 1e-9);
  return out;
}

}  // namespace esltyp
