/**
 * @file outfit_models.hpp
 * @brief Scores a query product against a partial outfit.
 *
 * The mean model averages pair scores between the query and each outfit
 * member. The attention model weights those pair scores by a soft-max over
 * learned logits indexed by (query slot, member slot); with all logits equal
 * it reduces to the mean model exactly.
 *
 * Both models sum over outfit members in canonical slot order, so scores do
 * not depend on the order in which the partial outfit is given.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stylerec/catalog.hpp"
#include "stylerec/errors.hpp"
#include "stylerec/pair_model.hpp"
#include "stylerec/sampler.hpp"

namespace stylerec {

using SlotMatrix = std::array<std::array<double, kSlotCount>, kSlotCount>;

/// Logits[query slot][member slot]; not constrained to be symmetric.
struct AttentionModel {
  SlotMatrix logits{};
  std::string pair_model_ref;

  bool operator==(const AttentionModel&) const = default;
};

/// Partial-outfit member with its slot, for canonical ordering.
struct Member {
  Slot slot;
  ProductIndex product;
};

/**
 * @brief Validates a (query, partial) pair and returns the members sorted by
 *        slot. Throws on empty partial, duplicate slots, or a query whose slot
 *        already appears in the partial outfit.
 */
inline std::vector<Member> canonical_members(const PairModel& model, ProductIndex query,
                                             std::span<const ProductIndex> partial) {
  if (partial.empty()) throw InvalidArgument("partial outfit must not be empty");
  if (query >= model.size()) throw UnknownProduct("#" + std::to_string(query));
  std::vector<Member> members;
  members.reserve(partial.size());
  SlotSet seen;
  const Slot qs = model.vocabulary[query].slot;
  for (ProductIndex p : partial) {
    if (p >= model.size()) throw UnknownProduct("#" + std::to_string(p));
    const Slot s = model.vocabulary[p].slot;
    if (s == qs) {
      throw SlotCollision("query slot '" + std::string(slot_name(s)) + "' already in partial outfit");
    }
    if (seen.contains(s)) {
      throw SlotCollision("partial outfit holds two products of slot '" + std::string(slot_name(s)) + "'");
    }
    seen.insert(s);
    members.push_back(Member{s, p});
  }
  std::sort(members.begin(), members.end(),
            [](const Member& a, const Member& b) { return a.slot < b.slot; });
  return members;
}

inline double mean_score(const PairModel& model, ProductIndex query,
                         std::span<const ProductIndex> partial) {
  const auto members = canonical_members(model, query, partial);
  double sum = 0.0;
  for (const auto& m : members) sum += pair_score(model, query, m.product);
  return sum / static_cast<double>(members.size());
}

/// Unnormalized soft-max weights exp(l_j - max_j l_j), in member order.
inline std::vector<double> attention_exponents(const SlotMatrix& logits, Slot query_slot,
                                               std::span<const Member> members) {
  const auto& row = logits[slot_index(query_slot)];
  double max_logit = row[slot_index(members.front().slot)];
  for (const auto& m : members) max_logit = std::max(max_logit, row[slot_index(m.slot)]);
  std::vector<double> e;
  e.reserve(members.size());
  for (const auto& m : members) e.push_back(std::exp(row[slot_index(m.slot)] - max_logit));
  return e;
}

/// Normalized weights alpha_j over the members; they sum to 1.
inline std::vector<double> attention_weights(const SlotMatrix& logits, Slot query_slot,
                                             std::span<const Member> members) {
  auto e = attention_exponents(logits, query_slot, members);
  double total = 0.0;
  for (double x : e) total += x;
  for (double& x : e) x /= total;
  return e;
}

inline double attention_score(const PairModel& model, const AttentionModel& attention,
                              ProductIndex query, std::span<const ProductIndex> partial) {
  const auto members = canonical_members(model, query, partial);
  const auto e = attention_exponents(attention.logits, model.vocabulary[query].slot, members);
  // Normalizing once at the end keeps uniform logits bit-identical to the mean.
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < members.size(); ++j) {
    num += e[j] * pair_score(model, query, members[j].product);
    den += e[j];
  }
  return num / den;
}

// ---------------------------------------------------------------------------
// Attention training

struct AttentionTrainConfig {
  std::size_t epochs = 10;
  double learning_rate = 1.0;
  std::size_t n_outfit = 19;
  std::uint64_t seed = 0;
  double epsilon = 1e-8;
  NegativeDistribution negatives = NegativeDistribution::frequency_weighted;
};

struct AttentionTrainReport {
  std::vector<double> epoch_mean_loss;  ///< measured before each sample's update
  std::size_t samples = 0;
};

/**
 * @brief Soft-max cross-entropy of one candidate list under the attention
 *        model, with its gradient with respect to the logits.
 *
 * @p pair_scores holds one row per candidate, one column per member (same
 * order as @p member_slots). The gradient is added into @p grad when given.
 */
inline double candidate_loss(const SlotMatrix& logits, Slot query_slot,
                             std::span<const Slot> member_slots,
                             const std::vector<std::vector<double>>& pair_scores,
                             std::size_t positive, SlotMatrix* grad = nullptr) {
  const auto& row = logits[slot_index(query_slot)];
  const std::size_t k = member_slots.size();
  double max_logit = row[slot_index(member_slots[0])];
  for (Slot s : member_slots) max_logit = std::max(max_logit, row[slot_index(s)]);
  std::vector<double> w(k);
  double wsum = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    w[j] = std::exp(row[slot_index(member_slots[j])] - max_logit);
    wsum += w[j];
  }
  for (double& x : w) x /= wsum;

  const std::size_t n = pair_scores.size();
  std::vector<double> s(n, 0.0);
  double max_s = -1e300;
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t j = 0; j < k; ++j) s[c] += w[j] * pair_scores[c][j];
    max_s = std::max(max_s, s[c]);
  }
  double z = 0.0;
  for (double x : s) z += std::exp(x - max_s);
  const double loss = std::log(z) + max_s - s[positive];

  if (grad) {
    auto& grow = (*grad)[slot_index(query_slot)];
    for (std::size_t c = 0; c < n; ++c) {
      const double dl_ds = std::exp(s[c] - max_s) / z - (c == positive ? 1.0 : 0.0);
      for (std::size_t j = 0; j < k; ++j) {
        grow[slot_index(member_slots[j])] += dl_ds * w[j] * (pair_scores[c][j] - s[c]);
      }
    }
  }
  return loss;
}

/**
 * @brief Learns slot-pair logits over a frozen pair model.
 *
 * The outfit-sample dataset is drawn once from the training windows; each
 * epoch visits it in the same order with one AdaGrad descent step per sample.
 * Logits start at zero. Slot pairs never seen in training stay at zero.
 */
inline AttentionModel train_attention(const PairModel& pair_model, const Corpus& corpus,
                                      std::span<const TimeWindow> windows,
                                      const AttentionTrainConfig& config,
                                      AttentionTrainReport* report = nullptr) {
  struct Prepared {
    Slot query_slot;
    std::vector<Slot> member_slots;
    std::vector<std::vector<double>> scores;  // candidate 0 is the positive
  };

  const auto samples = outfit_dataset(corpus, windows, config.n_outfit,
                                      derive_seed(config.seed, {0xa7}), config.negatives);
  std::vector<Prepared> prepared;
  prepared.reserve(samples.size());
  for (const auto& sample : samples) {
    Prepared p;
    const ProductIndex q = pair_model.index_of(corpus.product(sample.positive_query).id);
    std::vector<ProductIndex> partial;
    for (ProductIndex x : sample.partial) partial.push_back(pair_model.index_of(corpus.product(x).id));
    const auto members = canonical_members(pair_model, q, partial);
    p.query_slot = pair_model.vocabulary[q].slot;
    for (const auto& m : members) p.member_slots.push_back(m.slot);

    auto row_for = [&](ProductIndex cand) {
      std::vector<double> r;
      r.reserve(members.size());
      for (const auto& m : members) r.push_back(pair_score(pair_model, cand, m.product));
      return r;
    };
    p.scores.push_back(row_for(q));
    for (ProductIndex neg : sample.negative_queries) {
      p.scores.push_back(row_for(pair_model.index_of(corpus.product(neg).id)));
    }
    prepared.push_back(std::move(p));
  }

  AttentionModel model;
  SlotMatrix accum{};
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double total = 0.0;
    for (const auto& p : prepared) {
      SlotMatrix grad{};
      total += candidate_loss(model.logits, p.query_slot, p.member_slots, p.scores, 0, &grad);
      auto& lrow = model.logits[slot_index(p.query_slot)];
      auto& arow = accum[slot_index(p.query_slot)];
      for (Slot s : p.member_slots) {
        const std::size_t j = slot_index(s);
        const double g = grad[slot_index(p.query_slot)][j];
        if (g == 0.0) continue;
        arow[j] += g * g;
        lrow[j] -= config.learning_rate * g / (std::sqrt(arow[j]) + config.epsilon);
      }
    }
    if (report) {
      report->epoch_mean_loss.push_back(prepared.empty() ? 0.0
                                                         : total / static_cast<double>(prepared.size()));
    }
  }
  if (report) report->samples = prepared.size();
  return model;
}

// ---------------------------------------------------------------------------
// Files

inline std::string attention_model_to_string(const AttentionModel& model) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "attention_model";
  auto& order = j["slot_order"] = nlohmann::ordered_json::array();
  for (auto name : kSlotNames) order.push_back(std::string(name));
  auto& rows = j["logits"] = nlohmann::ordered_json::array();
  for (const auto& r : model.logits) rows.push_back(std::vector<double>(r.begin(), r.end()));
  j["pair_model_ref"] = model.pair_model_ref;
  return j.dump(1) + "\n";
}

inline AttentionModel attention_model_from_string(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("kind").get<std::string>() != "attention_model") throw ParseError(0, "not an attention_model file");
    if (j.at("format_version").get<int>() != 1) throw ParseError(0, "unsupported format_version");
    const auto& order = j.at("slot_order");
    if (order.size() != kSlotCount) throw ParseError(0, "slot_order must list 8 slots");
    std::array<std::size_t, kSlotCount> pos{};
    for (std::size_t i = 0; i < kSlotCount; ++i) pos[i] = slot_index(parse_slot(order[i].get<std::string>()));
    AttentionModel model;
    const auto& rows = j.at("logits");
    if (rows.size() != kSlotCount) throw ParseError(0, "logits must be 8x8");
    for (std::size_t r = 0; r < kSlotCount; ++r) {
      if (rows[r].size() != kSlotCount) throw ParseError(0, "logits must be 8x8");
      for (std::size_t c = 0; c < kSlotCount; ++c) model.logits[pos[r]][pos[c]] = rows[r][c].get<double>();
    }
    model.pair_model_ref = j.value("pair_model_ref", std::string{});
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, e.what());
  }
}

inline void save_attention_model(const std::string& path, const AttentionModel& model) {
  write_file(path, attention_model_to_string(model));
}

inline AttentionModel load_attention_model(const std::string& path) {
  return attention_model_from_string(read_file(path));
}

}  // namespace stylerec
