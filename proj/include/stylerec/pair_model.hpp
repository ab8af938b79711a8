/**
 * @file pair_model.hpp
 * @brief Skip-gram negative-sampling embeddings trained with AdaGrad, and the
 *        cross-space cosine style-fit score between two products.
 *
 * Each product has a target vector (row of U) and a context vector (row of
 * V). The per-batch objective for a positive (target i, context c) with
 * negatives l is
 *
 *   log sigmoid(u_i . v_c) + sum_l log sigmoid(-u_i . v_l)
 *
 * which the trainer maximizes. Fit between two products a and b is the mean
 * of cos(u_a, v_b) and cos(u_b, v_a).
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stylerec/catalog.hpp"
#include "stylerec/errors.hpp"
#include "stylerec/random.hpp"
#include "stylerec/sampler.hpp"

namespace stylerec {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Cosine similarity clamped to [-1, 1]; 0 when either vector is zero.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(sigmoid(x)) without overflow for large |x|.
inline double log_sigmoid(double x) {
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

struct PairModel {
  std::size_t m = 0;
  std::vector<Product> vocabulary;
  Matrix target;   ///< U, one row per vocabulary entry
  Matrix context;  ///< V

  PairModel() = default;
  PairModel(std::vector<Product> vocab, std::size_t dim)
      : m(dim), vocabulary(std::move(vocab)), target(vocabulary.size(), dim),
        context(vocabulary.size(), dim) {
    rebuild_index();
  }

  std::size_t size() const noexcept { return vocabulary.size(); }

  ProductIndex index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw UnknownProduct(id);
    return it->second;
  }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  void rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < vocabulary.size(); ++i) {
      index_.emplace(vocabulary[i].id, static_cast<ProductIndex>(i));
    }
  }

  bool operator==(const PairModel& o) const {
    return m == o.m && vocabulary == o.vocabulary && target == o.target && context == o.context;
  }

 private:
  std::unordered_map<std::string, ProductIndex> index_;
};

/// Uniform [-0.5/m, 0.5/m] for U and V, each from its own seed stream.
inline PairModel init_model(std::vector<Product> vocabulary, std::size_t m, std::uint64_t seed) {
  if (vocabulary.empty()) throw InvalidArgument("vocabulary must not be empty");
  if (m < 1) throw InvalidArgument("embedding dimension must be >= 1");
  PairModel model(std::move(vocabulary), m);
  const double half = 0.5 / static_cast<double>(m);
  Rng target_rng(derive_seed(seed, {0x7a, 0}));
  for (double& x : model.target.data()) x = target_rng.uniform(-half, half);
  Rng context_rng(derive_seed(seed, {0x7a, 1}));
  for (double& x : model.context.data()) x = context_rng.uniform(-half, half);
  return model;
}

// ---------------------------------------------------------------------------
// Objective and gradients

using VectorRefs = std::vector<std::span<const double>>;

inline void check_dims(std::span<const double> u, std::span<const double> vc, const VectorRefs& negs) {
  if (vc.size() != u.size()) throw InvalidArgument("dimension mismatch");
  for (const auto& v : negs) {
    if (v.size() != u.size()) throw InvalidArgument("dimension mismatch");
  }
}

inline double batch_log_prob(std::span<const double> u, std::span<const double> v_context,
                             const VectorRefs& v_negatives) {
  check_dims(u, v_context, v_negatives);
  double lp = log_sigmoid(dot(u, v_context));
  for (const auto& v : v_negatives) lp += log_sigmoid(-dot(u, v));
  return lp;
}

/// Gradient of batch_log_prob (ascent direction).
struct BatchGradients {
  std::vector<double> target;
  std::vector<double> context;
  std::vector<std::vector<double>> negatives;
};

inline BatchGradients batch_gradients(std::span<const double> u, std::span<const double> v_context,
                                      const VectorRefs& v_negatives) {
  check_dims(u, v_context, v_negatives);
  const std::size_t m = u.size();
  BatchGradients g;
  g.target.assign(m, 0.0);
  g.context.assign(m, 0.0);
  const double pos = 1.0 - sigmoid(dot(u, v_context));
  for (std::size_t d = 0; d < m; ++d) {
    g.target[d] = pos * v_context[d];
    g.context[d] = pos * u[d];
  }
  g.negatives.reserve(v_negatives.size());
  for (const auto& v : v_negatives) {
    const double neg = sigmoid(dot(u, v));
    std::vector<double> gv(m);
    for (std::size_t d = 0; d < m; ++d) {
      g.target[d] -= neg * v[d];
      gv[d] = -neg * u[d];
    }
    g.negatives.push_back(std::move(gv));
  }
  return g;
}

// ---------------------------------------------------------------------------
// AdaGrad

struct AdaGradState {
  Matrix target;
  Matrix context;
  double epsilon = 1e-8;

  AdaGradState() = default;
  AdaGradState(std::size_t rows, std::size_t cols, double eps = 1e-8)
      : target(rows, cols), context(rows, cols), epsilon(eps) {}
};

/// accumulator += g^2; param += lr * g / (sqrt(accumulator) + eps).
inline void adagrad_step(std::span<double> params, std::span<const double> gradients,
                         std::span<double> accumulator, double learning_rate, double epsilon) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = gradients[i];
    if (g == 0.0) continue;
    accumulator[i] += g * g;
    params[i] += learning_rate * g / (std::sqrt(accumulator[i]) + epsilon);
  }
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t m = 40;
  std::size_t n_pair = 80;
  double rho = 0.0002;
  double learning_rate = 1.0;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  bool subsample = true;
  /// Scale each pair's gradient by 1/|outfit| (the per-outfit normalization
  /// of the averaged objective). Off by default: all pairs weigh the same.
  bool weight_by_outfit_size = false;
  NegativeDistribution negatives = NegativeDistribution::frequency_weighted;
};

struct TrainReport {
  std::vector<double> epoch_mean_log_prob;  ///< measured before each batch's update
  std::vector<std::size_t> epoch_batches;
};

/**
 * @brief One AdaGrad ascent step on a single training batch.
 *
 * Gradients are evaluated at the current parameters, summed per row (a
 * negative drawn twice contributes twice to one update) and then applied.
 * Returns the batch log-probability before the update.
 */
inline double apply_batch(PairModel& model, AdaGradState& state, const TrainingBatch& batch,
                          double learning_rate, double weight = 1.0) {
  const std::size_t m = model.m;
  const ProductIndex t = batch.positive.target;
  const ProductIndex c = batch.positive.context;
  auto u = model.target.row(t);
  auto vc = model.context.row(c);

  std::vector<double> g_u(m), g_c(m);
  const double s_c = dot(u, vc);
  double lp = log_sigmoid(s_c);
  const double pos = weight * (1.0 - sigmoid(s_c));
  for (std::size_t d = 0; d < m; ++d) {
    g_u[d] = pos * vc[d];
    g_c[d] = pos * u[d];
  }

  // Distinct negative rows with their summed coefficient on u.
  std::vector<std::pair<ProductIndex, double>> neg;
  neg.reserve(batch.negatives.size());
  for (const auto& n : batch.negatives) {
    auto vl = model.context.row(n.context);
    const double s_l = dot(u, vl);
    lp += log_sigmoid(-s_l);
    const double coef = weight * sigmoid(s_l);
    for (std::size_t d = 0; d < m; ++d) g_u[d] -= coef * vl[d];
    neg.emplace_back(n.context, -coef);
  }
  std::sort(neg.begin(), neg.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<double> g_l(m);
  std::size_t i = 0;
  while (i < neg.size()) {
    const ProductIndex row = neg[i].first;
    double coef = 0.0;
    for (; i < neg.size() && neg[i].first == row; ++i) coef += neg[i].second;
    for (std::size_t d = 0; d < m; ++d) g_l[d] = coef * u[d];
    adagrad_step(model.context.row(row), g_l, state.context.row(row), learning_rate, state.epsilon);
  }
  adagrad_step(vc, g_c, state.context.row(c), learning_rate, state.epsilon);
  adagrad_step(u, g_u, state.target.row(t), learning_rate, state.epsilon);
  return lp;
}

/**
 * @brief Trains a pair model over the training windows.
 *
 * The model vocabulary is the full corpus vocabulary, so products that only
 * occur outside the training windows keep their initial vectors and can still
 * be scored. Each epoch redraws subsampling and negatives from its own seed
 * stream.
 */
inline PairModel train(const Corpus& corpus, std::span<const TimeWindow> windows,
                       const TrainConfig& config, TrainReport* report = nullptr) {
  if (!(config.learning_rate > 0)) throw InvalidArgument("learning rate must be positive");
  PairModel model = init_model(corpus.vocabulary(), config.m, derive_seed(config.seed, {0x1a17}));
  AdaGradState state(model.size(), model.m);

  PairSamplerConfig sampler{config.n_pair, config.rho, config.subsample, config.negatives};
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double total_lp = 0.0;
    std::size_t batches = 0;
    for_each_training_batch(corpus, windows, sampler, derive_seed(config.seed, {0xe9, epoch}),
                            [&](const TrainingBatch& batch, std::size_t outfit_size) {
                              const double w = config.weight_by_outfit_size
                                                   ? 1.0 / static_cast<double>(outfit_size)
                                                   : 1.0;
                              total_lp += apply_batch(model, state, batch, config.learning_rate, w);
                              ++batches;
                            });
    if (report) {
      report->epoch_mean_log_prob.push_back(batches ? total_lp / static_cast<double>(batches) : 0.0);
      report->epoch_batches.push_back(batches);
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Scoring

/// Fit of two vocabulary rows; no slot check.
inline double pair_score(const PairModel& model, ProductIndex a, ProductIndex b) {
  const double ab = cosine(model.target.row(a), model.context.row(b));
  const double ba = cosine(model.target.row(b), model.context.row(a));
  return 0.5 * (ab + ba);
}

/// Checked fit of two products: both must be known and of different slots.
inline double pair_score(const PairModel& model, const Product& a, const Product& b) {
  const ProductIndex ia = model.index_of(a.id);
  const ProductIndex ib = model.index_of(b.id);
  if (model.vocabulary[ia].slot == model.vocabulary[ib].slot) {
    throw SlotCollision("pair score undefined for two products of slot '" +
                        std::string(slot_name(model.vocabulary[ia].slot)) + "'");
  }
  return pair_score(model, ia, ib);
}

inline double pair_score(const PairModel& model, const std::string& a, const std::string& b) {
  const ProductIndex ia = model.index_of(a);
  const ProductIndex ib = model.index_of(b);
  return pair_score(model, model.vocabulary[ia], model.vocabulary[ib]);
}

// ---------------------------------------------------------------------------
// Files

namespace detail {

inline nlohmann::ordered_json matrix_json(const Matrix& mat) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < mat.rows(); ++r) {
    auto row = mat.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols) {
  if (j.size() != rows) throw ParseError(0, "matrix row count does not match vocabulary");
  Matrix mat(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& row = j[r];
    if (row.size() != cols) throw ParseError(0, "matrix row length does not match m");
    for (std::size_t c = 0; c < cols; ++c) mat(r, c) = row[c].get<double>();
  }
  return mat;
}

}  // namespace detail

inline std::string pair_model_to_string(const PairModel& model) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "pair_model";
  j["m"] = model.m;
  auto& vocab = j["vocabulary"] = nlohmann::ordered_json::array();
  for (const auto& p : model.vocabulary) {
    vocab.push_back({{"id", p.id}, {"slot", std::string(slot_name(p.slot))}});
  }
  j["target"] = detail::matrix_json(model.target);
  j["context"] = detail::matrix_json(model.context);
  return j.dump() + "\n";
}

inline PairModel pair_model_from_string(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("kind").get<std::string>() != "pair_model") throw ParseError(0, "not a pair_model file");
    if (j.at("format_version").get<int>() != 1) throw ParseError(0, "unsupported format_version");
    std::vector<Product> vocab;
    for (const auto& p : j.at("vocabulary")) {
      vocab.push_back(Product{p.at("id").get<std::string>(), parse_slot(p.at("slot").get<std::string>())});
    }
    const auto m = j.at("m").get<std::size_t>();
    PairModel model(std::move(vocab), m);
    model.target = detail::matrix_from_json(j.at("target"), model.size(), m);
    model.context = detail::matrix_from_json(j.at("context"), model.size(), m);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << content;
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline void save_pair_model(const std::string& path, const PairModel& model) {
  write_file(path, pair_model_to_string(model));
}

inline PairModel load_pair_model(const std::string& path) {
  return pair_model_from_string(read_file(path));
}

/// Target-space coordinates for external projection tools (9 significant digits).
inline void write_embedding_tsv(std::ostream& out, const PairModel& model) {
  out << "id\tslot";
  for (std::size_t d = 0; d < model.m; ++d) out << "\td" << d;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < model.size(); ++i) {
    out << model.vocabulary[i].id << '\t' << slot_name(model.vocabulary[i].slot);
    for (double x : model.target.row(i)) {
      std::snprintf(buf, sizeof buf, "%.9g", x);
      out << '\t' << buf;
    }
    out << '\n';
  }
}

/// Writes the model file and the embedding TSV.
inline void export_embeddings(const PairModel& model, const std::string& model_path,
                              const std::string& tsv_path) {
  save_pair_model(model_path, model);
  std::ofstream out(tsv_path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + tsv_path + "'");
  write_embedding_tsv(out, model);
  if (!out) throw IoError("failed writing '" + tsv_path + "'");
}

}  // namespace stylerec
