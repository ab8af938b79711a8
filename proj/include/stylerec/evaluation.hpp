/**
 * @file evaluation.hpp
 * @brief Builds ranked evaluation instances from held-out windows and turns
 *        them into metric reports.
 *
 * Three instance families:
 *  - pair lists: a positive pair's context plus negatives of its slot, scored
 *    against the target with the pair model (20 candidates by default);
 *  - outfit lists: partial-outfit samples with N query negatives, scored with
 *    the mean or attention model;
 *  - FITB_n: one product held out of an outfit, n - 1 same-slot negatives,
 *    the rest of the outfit as the partial outfit.
 * All negatives come from the positive's slot pool in the same window and
 * never include the positive itself.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylerec/catalog.hpp"
#include "stylerec/metrics.hpp"
#include "stylerec/outfit_models.hpp"
#include "stylerec/pair_model.hpp"
#include "stylerec/random.hpp"
#include "stylerec/sampler.hpp"

namespace stylerec {

enum class ScoringModel : std::uint8_t { pair, mean, attention };

inline std::string_view scoring_model_name(ScoringModel m) {
  switch (m) {
    case ScoringModel::pair: return "pair";
    case ScoringModel::mean: return "mean";
    case ScoringModel::attention: return "attention";
  }
  return "?";
}

inline ScoringModel parse_scoring_model(std::string_view name) {
  if (name == "pair") return ScoringModel::pair;
  if (name == "mean") return ScoringModel::mean;
  if (name == "attention") return ScoringModel::attention;
  throw InvalidArgument("unknown model '" + std::string(name) + "'");
}

/// Scores queries against partial outfits with a mean or attention model.
/// Products are given as corpus indices and mapped to model rows by id.
class OutfitScorer {
 public:
  OutfitScorer(const Corpus& corpus, const PairModel& pair, const AttentionModel* attention,
               ScoringModel kind)
      : corpus_(corpus), pair_(pair), attention_(attention), kind_(kind) {
    if (kind == ScoringModel::attention && attention == nullptr) {
      throw InvalidArgument("attention model required");
    }
    if (kind == ScoringModel::pair) throw InvalidArgument("pair model cannot score partial outfits");
  }

  ProductIndex model_row(ProductIndex corpus_index) const {
    return pair_.index_of(corpus_.product(corpus_index).id);
  }

  double operator()(ProductIndex query, std::span<const ProductIndex> partial) const {
    std::vector<ProductIndex> rows;
    rows.reserve(partial.size());
    for (ProductIndex p : partial) rows.push_back(model_row(p));
    const ProductIndex q = model_row(query);
    return kind_ == ScoringModel::mean ? mean_score(pair_, q, rows)
                                       : attention_score(pair_, *attention_, q, rows);
  }

 private:
  const Corpus& corpus_;
  const PairModel& pair_;
  const AttentionModel* attention_;
  ScoringModel kind_;
};

namespace detail {

template <class Scorer>
EvalInstance score_candidates(const Corpus& corpus, ProductIndex positive,
                              std::span<const ProductIndex> negatives, Scorer&& scorer) {
  std::vector<ScoredCandidate> c;
  c.reserve(negatives.size() + 1);
  c.push_back({corpus.product(positive).id, scorer(positive), true});
  for (ProductIndex n : negatives) c.push_back({corpus.product(n).id, scorer(n), false});
  return make_instance(std::move(c));
}

/// Picks up to @p max_items positions out of @p n in a seeded order; 0 = all.
inline std::vector<std::size_t> pick_positions(std::size_t n, std::size_t max_items, Rng& rng) {
  std::vector<std::size_t> pos(n);
  for (std::size_t i = 0; i < n; ++i) pos[i] = i;
  if (max_items != 0 && max_items < n) {
    rng.shuffle(pos);
    pos.resize(max_items);
  }
  return pos;
}

}  // namespace detail

/// Pair-model lists: one per positive (target, context) pair, up to @p max_instances.
inline std::vector<EvalInstance> pair_instances(const PairModel& model, const Corpus& corpus,
                                                std::span<const TimeWindow> windows,
                                                std::size_t n_negatives, std::size_t max_instances,
                                                std::uint64_t seed) {
  struct Pos {
    PairSample pair;
    const TimeWindow* window;
  };
  std::vector<Pos> positives;
  for (const auto& w : windows) {
    for (std::size_t k = w.first; k < w.last; ++k) {
      for (const auto& p : positive_pairs(corpus.outfit_products(k), w.index)) {
        if (has_alternative(w.pool(corpus.slot_of(p.context)), p.context)) positives.push_back({p, &w});
      }
    }
  }
  Rng rng(derive_seed(seed, {0xe1}));
  const auto chosen = detail::pick_positions(positives.size(), max_instances, rng);
  std::vector<EvalInstance> out;
  out.reserve(chosen.size());
  for (std::size_t i : chosen) {
    const auto& [pair, w] = positives[i];
    const auto negs = draw_from_pool(w->pool(corpus.slot_of(pair.context)), pair.context, n_negatives, rng);
    const ProductIndex target = model.index_of(corpus.product(pair.target).id);
    out.push_back(detail::score_candidates(corpus, pair.context, negs, [&](ProductIndex cand) {
      return pair_score(model, target, model.index_of(corpus.product(cand).id));
    }));
  }
  return out;
}

/// Outfit-model lists from balanced partial-outfit samples.
inline std::vector<EvalInstance> outfit_instances(const OutfitScorer& scorer, const Corpus& corpus,
                                                  std::span<const TimeWindow> windows,
                                                  std::size_t n_negatives, std::size_t max_instances,
                                                  std::uint64_t seed) {
  const auto samples = outfit_dataset(corpus, windows, n_negatives, derive_seed(seed, {0xe2}));
  Rng rng(derive_seed(seed, {0xe3}));
  const auto chosen = detail::pick_positions(samples.size(), max_instances, rng);
  std::vector<EvalInstance> out;
  out.reserve(chosen.size());
  for (std::size_t i : chosen) {
    const auto& s = samples[i];
    out.push_back(detail::score_candidates(corpus, s.positive_query, s.negative_queries,
                                           [&](ProductIndex cand) { return scorer(cand, s.partial); }));
  }
  return out;
}

/**
 * @brief FITB_n lists: one held-out product per outfit, n candidates each.
 *
 * @p scorer: double(ProductIndex query, std::span<const ProductIndex> partial),
 * both in corpus indices.
 */
template <class Scorer>
std::vector<EvalInstance> fitb_instances(const Scorer& scorer, const Corpus& corpus,
                                         std::span<const TimeWindow> windows, std::size_t n,
                                         std::size_t max_instances, std::uint64_t seed) {
  if (n < 2) throw InvalidArgument("FITB needs at least 2 candidates");
  struct Ref {
    std::size_t outfit;
    const TimeWindow* window;
  };
  std::vector<Ref> refs;
  for (const auto& w : windows) {
    for (std::size_t k = w.first; k < w.last; ++k) refs.push_back({k, &w});
  }
  Rng rng(derive_seed(seed, {0xf1, n}));
  const auto chosen = detail::pick_positions(refs.size(), max_instances, rng);
  std::vector<EvalInstance> out;
  out.reserve(chosen.size());
  for (std::size_t i : chosen) {
    const auto& outfit = corpus.outfit_products(refs[i].outfit);
    const std::size_t held = rng.uniform_index(outfit.size());
    const ProductIndex positive = outfit[held];
    if (!has_alternative(refs[i].window->pool(corpus.slot_of(positive)), positive)) continue;
    std::vector<ProductIndex> partial;
    for (std::size_t j = 0; j < outfit.size(); ++j) {
      if (j != held) partial.push_back(outfit[j]);
    }
    const auto negs = draw_from_pool(refs[i].window->pool(corpus.slot_of(positive)), positive, n - 1, rng);
    out.push_back(detail::score_candidates(corpus, positive, negs,
                                           [&](ProductIndex cand) { return scorer(cand, std::span<const ProductIndex>(partial)); }));
  }
  return out;
}

struct EvalOptions {
  ScoringModel model = ScoringModel::mean;
  bool list_metrics = true;                ///< top2, hit rate histogram, mrr, aps
  std::vector<std::size_t> fitb_n = {4, 10};
  std::size_t negatives = 19;              ///< list negatives per instance
  std::size_t max_instances = 0;           ///< 0 = every available instance
  std::uint64_t seed = 0;
};

/// Metric report as JSON with experiment metadata merged in by the caller.
inline nlohmann::ordered_json evaluate(const Corpus& corpus, std::span<const TimeWindow> windows,
                                       const PairModel& pair, const AttentionModel* attention,
                                       const EvalOptions& options) {
  nlohmann::ordered_json report;
  report["model"] = std::string(scoring_model_name(options.model));
  report["seed"] = options.seed;

  std::optional<OutfitScorer> scorer;
  if (options.model != ScoringModel::pair) scorer.emplace(corpus, pair, attention, options.model);

  if (options.list_metrics) {
    const auto inst = options.model == ScoringModel::pair
                          ? pair_instances(pair, corpus, windows, options.negatives, options.max_instances, options.seed)
                          : outfit_instances(*scorer, corpus, windows, options.negatives, options.max_instances, options.seed);
    const auto h = hit_rate_by_rank(inst);
    report["instance_count"] = inst.size();
    report["candidates_per_instance"] = options.negatives + 1;
    report["top2"] = top2(inst);
    report["hit_rate_by_rank"] = h.histogram;
    report["mrr"] = h.mrr;
    report["aps"] = average_precision(inst);
  }
  if (!options.fitb_n.empty()) {
    if (!scorer) throw InvalidArgument("FITB needs an outfit model (mean or attention)");
    nlohmann::ordered_json fitb = nlohmann::ordered_json::object();
    nlohmann::ordered_json counts = nlohmann::ordered_json::object();
    for (std::size_t n : options.fitb_n) {
      const auto inst = fitb_instances(*scorer, corpus, windows, n, options.max_instances, options.seed);
      fitb[std::to_string(n)] = fitb_accuracy(inst, n);
      counts[std::to_string(n)] = inst.size();
    }
    report["fitb"] = fitb;
    report["fitb_instance_count"] = counts;
  }
  return report;
}

}  // namespace stylerec
