#pragma once

#include <atomic>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "esltyp/features.hpp"
#include "esltyp/optim.hpp"
#include "esltyp/util.hpp"

namespace esltyp {

// One training document after feature mapping: dense feature ids + counts,
// plus the index of its native language in the model's language list.
struct LabeledInstance {
  int label = -1;
  std::vector<std::pair<int, double>> features;
};

// Class posterior aligned with NliModel::languages.
struct Posterior {
  std::vector<double> probs;
};

// Multinomial log-linear model: p(y|x) ∝ exp(Σ_j θ[j,y] · count_j).
struct NliModel {
  FeatureIndex feature_index;
  std::vector<std::string> languages;
  double lambda = 1.0;
  std::vector<double> theta;  // |features| x |languages|, row-major by feature
  bool converged = true;      // optimizer reached tolerance during training

  size_t num_features() const { return feature_index.size(); }
  size_t num_languages() const { return languages.size(); }

  double weight(int feature, int language) const {
    return theta[static_cast<size_t>(feature) * languages.size() + static_cast<size_t>(language)];
  }
};

namespace detail {

inline void scores_for(const std::vector<double>& theta, size_t num_langs,
                       const std::vector<std::pair<int, double>>& features,
                       std::vector<double>& scores) {
  scores.assign(num_langs, 0.0);
  for (const auto& [fid, count] : features) {
    const double* row = theta.data() + static_cast<size_t>(fid) * num_langs;
    for (size_t y = 0; y < num_langs; ++y) scores[y] += count * row[y];
  }
}

// Softmax with max subtraction; returns log of the normalizer for reuse in
// the likelihood.
inline double softmax_inplace(std::vector<double>& scores) {
  double max_score = scores[0];
  for (double s : scores) max_score = std::max(max_score, s);
  double z = 0.0;
  for (double& s : scores) {
    s = std::exp(s - max_score);
    z += s;
  }
  for (double& s : scores) s /= z;
  return std::log(z) + max_score;
}

}  // namespace detail

inline Posterior posterior(const NliModel& model,
                           const std::vector<std::pair<int, double>>& mapped_features) {
  if (model.languages.empty()) throw DomainError("posterior: model has no languages");
  std::vector<double> scores;
  detail::scores_for(model.theta, model.num_languages(), mapped_features, scores);
  detail::softmax_inplace(scores);
  return Posterior{std::move(scores)};
}

inline Posterior posterior(const NliModel& model, const SparseFeatureVector& features) {
  return posterior(model, map_features(features, model.feature_index));
}

namespace detail {

// Objective and gradient of the regularized log-likelihood over fixed-size
// document blocks. Blocks are processed by any number of worker threads and
// reduced in block order, so results are bitwise identical regardless of the
// thread count.
struct BlockPartial {
  double loglik = 0.0;
  // feature id -> per-language gradient contribution
  std::unordered_map<int, std::vector<double>> grad;
};

constexpr size_t kDocBlock = 256;

inline void eval_block(const std::vector<double>& theta, size_t num_langs,
                       std::span<const LabeledInstance> docs, BlockPartial& out) {
  std::vector<double> probs;
  for (const LabeledInstance& doc : docs) {
    scores_for(theta, num_langs, doc.features, probs);
    const double log_z = softmax_inplace(probs);
    double label_score = 0.0;
    for (const auto& [fid, count] : doc.features)
      label_score += count * theta[static_cast<size_t>(fid) * num_langs +
                                   static_cast<size_t>(doc.label)];
    out.loglik += label_score - log_z;
    for (const auto& [fid, count] : doc.features) {
      auto [it, inserted] = out.grad.try_emplace(fid);
      if (inserted) it->second.assign(num_langs, 0.0);
      std::vector<double>& row = it->second;
      for (size_t y = 0; y < num_langs; ++y) row[y] -= count * probs[y];
      row[static_cast<size_t>(doc.label)] += count;
    }
  }
}

}  // namespace detail

// Σ_i log p(y_i|x_i;θ) − λ‖θ‖², with its gradient
// ∂/∂θ[j,y] = Σ_i c_ij·(1[y_i=y] − p(y|x_i)) − 2λ·θ[j,y].
// threads = 0 picks the hardware concurrency.
inline double objective_and_gradient(const std::vector<double>& theta, size_t num_langs,
                                     double lambda, std::span<const LabeledInstance> data,
                                     std::vector<double>& grad, unsigned threads = 0) {
  if (data.empty()) throw DomainError("objective: empty training data");
  const size_t num_blocks = (data.size() + detail::kDocBlock - 1) / detail::kDocBlock;
  std::vector<detail::BlockPartial> partials(num_blocks);

  unsigned workers = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(num_blocks));
  if (workers <= 1) {
    for (size_t b = 0; b < num_blocks; ++b) {
      size_t begin = b * detail::kDocBlock;
      size_t len = std::min(detail::kDocBlock, data.size() - begin);
      detail::eval_block(theta, num_langs, data.subspan(begin, len), partials[b]);
    }
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        for (size_t b = next.fetch_add(1); b < num_blocks; b = next.fetch_add(1)) {
          size_t begin = b * detail::kDocBlock;
          size_t len = std::min(detail::kDocBlock, data.size() - begin);
          detail::eval_block(theta, num_langs, data.subspan(begin, len), partials[b]);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }

  // Ordered reduction: block 0 first, then block 1, ...
  grad.assign(theta.size(), 0.0);
  double loglik = 0.0;
  for (const detail::BlockPartial& p : partials) {
    loglik += p.loglik;
    for (const auto& [fid, row] : p.grad) {
      double* dst = grad.data() + static_cast<size_t>(fid) * num_langs;
      for (size_t y = 0; y < num_langs; ++y) dst[y] += row[y];
    }
  }

  double norm2 = 0.0;
  for (size_t i = 0; i < theta.size(); ++i) {
    norm2 += theta[i] * theta[i];
    grad[i] -= 2.0 * lambda * theta[i];
  }
  return loglik - lambda * norm2;
}

inline double objective(const NliModel& model, std::span<const LabeledInstance> data,
                        unsigned threads = 0) {
  std::vector<double> grad;
  return objective_and_gradient(model.theta, model.num_languages(), model.lambda, data, grad,
                                threads);
}

inline std::vector<double> gradient(const NliModel& model, std::span<const LabeledInstance> data,
                                    unsigned threads = 0) {
  std::vector<double> grad;
  objective_and_gradient(model.theta, model.num_languages(), model.lambda, data, grad, threads);
  return grad;
}

struct TrainOptions {
  OptOptions opt;
  unsigned threads = 0;
  bool allow_unregularized = false;
};

struct TrainResult {
  NliModel model;
  OptReport report;
};

inline TrainResult train(FeatureIndex feature_index, std::vector<std::string> languages,
                         std::span<const LabeledInstance> data, double lambda,
                         const TrainOptions& options = {}) {
  if (languages.size() < 2) throw DomainError("train: need at least 2 languages");
  if (lambda < 0.0) throw DomainError("train: lambda must be non-negative");
  if (lambda == 0.0 && !options.allow_unregularized)
    throw DomainError("train: unregularized training is rejected by default");
  std::vector<bool> seen(languages.size(), false);
  for (const LabeledInstance& doc : data) {
    if (doc.label < 0 || doc.label >= static_cast<int>(languages.size()))
      throw DomainError("train: instance label out of range");
    seen[static_cast<size_t>(doc.label)] = true;
  }
  size_t present = 0;
  for (bool b : seen) present += b;
  if (present < 2) throw DomainError("train: need training documents from at least 2 languages");

  NliModel model;
  model.feature_index = std::move(feature_index);
  model.languages = std::move(languages);
  model.lambda = lambda;
  model.theta.assign(model.num_features() * model.num_languages(), 0.0);

  const size_t num_langs = model.num_languages();
  auto fg = [&](const std::vector<double>& theta, std::vector<double>& grad) {
    return objective_and_gradient(theta, num_langs, lambda, data, grad, options.threads);
  };
  OptReport report = maximize(fg, model.theta, options.opt);
  model.converged = report.converged;
  return TrainResult{std::move(model), std::move(report)};
}

// --- model container ---------------------------------------------------------
// Versioned binary layout (little endian, doubles as raw IEEE-754 bytes) so a
// save/load cycle is bitwise exact.

namespace detail {

inline void put_u32(std::ostream& out, uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.write(buf, 4);
}

inline uint32_t get_u32(std::istream& in) {
  char buf[4];
  in.read(buf, 4);
  if (!in) throw DomainError("model file truncated");
  uint32_t v;
  std::memcpy(&v, buf, 4);
  return v;
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
  uint32_t len = get_u32(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw DomainError("model file truncated");
  return s;
}

inline void put_doubles(std::ostream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline void get_doubles(std::istream& in, std::vector<double>& v) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!in) throw DomainError("model file truncated");
}

}  // namespace detail

inline constexpr char kModelMagic[8] = {'E', 'S', 'L', 'T', 'Y', 'P', 'M', '1'};

inline void write_model(const NliModel& model, std::ostream& out) {
  out.write(kModelMagic, sizeof(kModelMagic));
  detail::put_u32(out, 1);  // version
  detail::put_u32(out, static_cast<uint32_t>(model.languages.size()));
  for (const std::string& lang : model.languages) detail::put_string(out, lang);
  detail::put_doubles(out, {model.lambda});
  detail::put_u32(out, model.converged ? 1u : 0u);
  detail::put_u32(out, static_cast<uint32_t>(model.feature_index.size()));
  for (const FeatureId& f : model.feature_index.features) {
    detail::put_u32(out, static_cast<uint32_t>(f.family));
    detail::put_string(out, f.payload);
  }
  detail::put_doubles(out, model.theta);
  if (!out) throw IoError("model write failed");
}

inline NliModel read_model(std::istream& in) {
  char magic[sizeof(kModelMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0)
    throw DomainError("not a model file (bad magic)");
  if (detail::get_u32(in) != 1) throw DomainError("unsupported model version");

  NliModel model;
  uint32_t num_langs = detail::get_u32(in);
  model.languages.reserve(num_langs);
  for (uint32_t i = 0; i < num_langs; ++i) model.languages.push_back(detail::get_string(in));
  std::vector<double> lambda(1);
  detail::get_doubles(in, lambda);
  model.lambda = lambda[0];
  model.converged = detail::get_u32(in) != 0;

  uint32_t num_features = detail::get_u32(in);
  std::map<FeatureId, int> seen;
  std::vector<FeatureId> in_order;
  in_order.reserve(num_features);
  for (uint32_t i = 0; i < num_features; ++i) {
    uint32_t family = detail::get_u32(in);
    if (family >= kFamilyNames.size()) throw DomainError("model file: bad feature family");
    FeatureId f{static_cast<FeatureFamily>(family), detail::get_string(in)};
    in_order.push_back(f);
    if (!seen.emplace(std::move(f), 0).second)
      throw DomainError("model file: duplicate feature");
  }
  model.feature_index = make_feature_index(std::move(seen));
  for (uint32_t i = 0; i < num_features; ++i)
    if (model.feature_index.features[i] != in_order[i])
      throw DomainError("model file: feature index not in canonical order");

  model.theta.assign(static_cast<size_t>(num_features) * num_langs, 0.0);
  detail::get_doubles(in, model.theta);
  if (model.lambda < 0.0) throw DomainError("model file: negative lambda");
  return model;
}

}  // namespace esltyp
