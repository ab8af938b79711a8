/**
 * @file sampler.hpp
 * @brief Positive/negative pair sampling with frequency subsampling, and
 *        partial-outfit query samples for the outfit models.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylerec/catalog.hpp"
#include "stylerec/errors.hpp"
#include "stylerec/random.hpp"

namespace stylerec {

enum class Label : std::uint8_t { positive, negative };

struct PairSample {
  ProductIndex target = 0;
  ProductIndex context = 0;
  Label label = Label::positive;
  std::size_t window = 0;

  bool operator==(const PairSample&) const = default;
};

/// One positive pair and the negatives that shadow it.
struct TrainingBatch {
  PairSample positive;
  std::vector<PairSample> negatives;

  bool operator==(const TrainingBatch&) const = default;
};

struct OutfitSample {
  std::vector<ProductIndex> partial;
  ProductIndex positive_query = 0;
  std::vector<ProductIndex> negative_queries;
  std::size_t window = 0;

  bool operator==(const OutfitSample&) const = default;
};

/// How negatives are drawn from a slot pool.
enum class NegativeDistribution : std::uint8_t {
  frequency_weighted,  ///< proportional to occurrence count in the window (default)
  uniform,             ///< every distinct product equally likely
};

/// All ordered pairs (i, j), i != j, of an outfit: n * (n - 1) samples.
inline std::vector<PairSample> positive_pairs(std::span<const ProductIndex> outfit,
                                              std::size_t window = 0) {
  std::vector<PairSample> pairs;
  pairs.reserve(outfit.size() * (outfit.size() > 0 ? outfit.size() - 1 : 0));
  for (std::size_t i = 0; i < outfit.size(); ++i) {
    for (std::size_t j = 0; j < outfit.size(); ++j) {
      if (i != j) pairs.push_back(PairSample{outfit[i], outfit[j], Label::positive, window});
    }
  }
  return pairs;
}

/// Probability that a positive context product with relative frequency
/// @p frequency survives subsampling: min(sqrt(rho / f), 1).
inline double keep_probability(double frequency, double rho) {
  if (!(frequency > 0.0)) throw InvalidArgument("frequency must be positive");
  if (!(rho > 0.0)) throw InvalidArgument("rho must be positive");
  return std::min(std::sqrt(rho / frequency), 1.0);
}

/// True when @p pool holds a product other than @p exclude.
inline bool has_alternative(const SlotPool& pool, ProductIndex exclude) {
  return pool.size() > (pool.position(exclude) ? 1u : 0u);
}

/// Draws one product from @p pool, never returning @p exclude.
inline ProductIndex draw_from_pool(const SlotPool& pool, ProductIndex exclude, Rng& rng,
                                   NegativeDistribution dist = NegativeDistribution::frequency_weighted) {
  const auto excluded = pool.position(exclude);
  if (dist == NegativeDistribution::uniform) {
    const std::size_t n = pool.size() - (excluded ? 1 : 0);
    if (n == 0) throw EmptyPool("no negative candidates in slot pool");
    std::size_t k = rng.uniform_index(n);
    if (excluded && k >= *excluded) ++k;
    return pool.products[k];
  }

  const std::uint64_t skip = excluded ? pool.counts[*excluded] : 0;
  const std::uint64_t total = pool.total() - skip;
  if (total == 0) throw EmptyPool("no negative candidates in slot pool");
  auto r = static_cast<std::uint64_t>(rng.uniform_index(static_cast<std::size_t>(total)));
  if (excluded) {
    const std::uint64_t before = pool.cumulative[*excluded] - skip;
    if (r >= before) r += skip;
  }
  auto it = std::upper_bound(pool.cumulative.begin(), pool.cumulative.end(), r);
  return pool.products[static_cast<std::size_t>(it - pool.cumulative.begin())];
}

inline std::vector<ProductIndex> draw_from_pool(const SlotPool& pool, ProductIndex exclude,
                                                std::size_t n, Rng& rng,
                                                NegativeDistribution dist = NegativeDistribution::frequency_weighted) {
  std::vector<ProductIndex> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(draw_from_pool(pool, exclude, rng, dist));
  return out;
}

/**
 * @brief Draws @p n negatives for a positive pair, with replacement.
 *
 * Negatives keep the positive's target and replace its context with a
 * product of the same slot from the same window.
 */
inline TrainingBatch draw_negatives(const Corpus& corpus, const PairSample& positive,
                                    const TimeWindow& window, std::size_t n, Rng& rng,
                                    NegativeDistribution dist = NegativeDistribution::frequency_weighted) {
  const SlotPool& pool = window.pool(corpus.slot_of(positive.context));
  TrainingBatch batch{positive, {}};
  batch.negatives.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    batch.negatives.push_back(PairSample{positive.target,
                                         draw_from_pool(pool, positive.context, rng, dist),
                                         Label::negative, window.index});
  }
  return batch;
}

inline TrainingBatch draw_negatives(const Corpus& corpus, const PairSample& positive,
                                    const TimeWindow& window, std::size_t n, std::uint64_t seed,
                                    NegativeDistribution dist = NegativeDistribution::frequency_weighted) {
  Rng rng(seed);
  return draw_negatives(corpus, positive, window, n, rng, dist);
}

/**
 * @brief Balanced partial-outfit samples: one per subset size 1..|outfit|-1.
 *
 * For each size s a random permutation of the outfit is drawn; the first s
 * products form the partial outfit and the next one is the positive query.
 * A size is skipped when the query's slot pool offers no other product.
 */
inline std::vector<OutfitSample> outfit_samples(const Corpus& corpus,
                                                std::span<const ProductIndex> outfit,
                                                std::size_t n_neg, Rng& rng,
                                                const TimeWindow& window,
                                                NegativeDistribution dist = NegativeDistribution::frequency_weighted) {
  if (outfit.size() < 2) throw InvalidArgument("outfit needs at least 2 products");
  std::vector<OutfitSample> samples;
  samples.reserve(outfit.size() - 1);
  std::vector<ProductIndex> perm(outfit.begin(), outfit.end());
  for (std::size_t s = 1; s < outfit.size(); ++s) {
    rng.shuffle(perm);
    if (n_neg > 0 && !has_alternative(window.pool(corpus.slot_of(perm[s])), perm[s])) continue;
    OutfitSample sample;
    sample.partial.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(s));
    sample.positive_query = perm[s];
    sample.window = window.index;
    sample.negative_queries =
        draw_from_pool(window.pool(corpus.slot_of(sample.positive_query)), sample.positive_query,
                       n_neg, rng, dist);
    samples.push_back(std::move(sample));
  }
  return samples;
}

inline std::vector<OutfitSample> outfit_samples(const Corpus& corpus,
                                                std::span<const ProductIndex> outfit,
                                                std::size_t n_neg, std::uint64_t seed,
                                                const TimeWindow& window,
                                                NegativeDistribution dist = NegativeDistribution::frequency_weighted) {
  Rng rng(seed);
  return outfit_samples(corpus, outfit, n_neg, rng, window, dist);
}

struct PairSamplerConfig {
  std::size_t n_pair = 80;
  double rho = 0.0002;
  bool subsample = true;
  NegativeDistribution negatives = NegativeDistribution::frequency_weighted;
};

/**
 * @brief Streams one epoch of training batches over the given windows.
 *
 * Windows are visited in the order given, outfits in seq order, pairs in
 * (target, context) position order. A pair whose context is discarded by
 * subsampling produces no batch, and so does a pair whose context is the
 * only product of its slot pool. @p fn is called as fn(batch, outfit_size).
 */
template <class Fn>
void for_each_training_batch(const Corpus& corpus, std::span<const TimeWindow> windows,
                             const PairSamplerConfig& config, std::uint64_t seed, Fn&& fn) {
  Rng rng(seed);
  for (const TimeWindow& w : windows) {
    for (std::size_t k = w.first; k < w.last; ++k) {
      const auto& outfit = corpus.outfit_products(k);
      for (std::size_t i = 0; i < outfit.size(); ++i) {
        for (std::size_t j = 0; j < outfit.size(); ++j) {
          if (i == j) continue;
          const PairSample positive{outfit[i], outfit[j], Label::positive, w.index};
          if (config.n_pair > 0 && !has_alternative(w.pool(corpus.slot_of(outfit[j])), outfit[j])) continue;
          if (config.subsample) {
            const double keep = keep_probability(w.frequency(positive.context), config.rho);
            if (!rng.bernoulli(keep)) continue;
          }
          fn(draw_negatives(corpus, positive, w, config.n_pair, rng, config.negatives),
             outfit.size());
        }
      }
    }
  }
}

/// Outfit samples for every outfit of the given windows, in seq order.
inline std::vector<OutfitSample> outfit_dataset(const Corpus& corpus,
                                                std::span<const TimeWindow> windows,
                                                std::size_t n_neg, std::uint64_t seed,
                                                NegativeDistribution dist = NegativeDistribution::frequency_weighted) {
  std::vector<OutfitSample> all;
  Rng rng(seed);
  for (const TimeWindow& w : windows) {
    for (std::size_t k = w.first; k < w.last; ++k) {
      auto samples = outfit_samples(corpus, corpus.outfit_products(k), n_neg, rng, w, dist);
      all.insert(all.end(), std::make_move_iterator(samples.begin()),
                 std::make_move_iterator(samples.end()));
    }
  }
  return all;
}

/// Picks the windows listed in @p indices, preserving order.
inline std::vector<TimeWindow> select_windows(const std::vector<TimeWindow>& windows,
                                              const std::vector<std::size_t>& indices) {
  std::vector<TimeWindow> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(windows.at(i));
  return out;
}

// ---------------------------------------------------------------------------
// Debug dump (JSON Lines)

inline nlohmann::ordered_json product_json(const Corpus& corpus, ProductIndex p) {
  const Product& prod = corpus.product(p);
  return {{"id", prod.id}, {"slot", std::string(slot_name(prod.slot))}};
}

inline nlohmann::ordered_json to_json(const Corpus& corpus, const TrainingBatch& batch) {
  auto pair_json = [&](const PairSample& s) {
    return nlohmann::ordered_json{{"target", product_json(corpus, s.target)},
                                  {"context", product_json(corpus, s.context)},
                                  {"label", s.label == Label::positive ? "positive" : "negative"},
                                  {"window", s.window}};
  };
  nlohmann::ordered_json negs = nlohmann::ordered_json::array();
  for (const auto& n : batch.negatives) negs.push_back(pair_json(n));
  return {{"kind", "training_batch"}, {"positive", pair_json(batch.positive)}, {"negatives", negs}};
}

inline nlohmann::ordered_json to_json(const Corpus& corpus, const OutfitSample& sample) {
  nlohmann::ordered_json partial = nlohmann::ordered_json::array();
  for (ProductIndex p : sample.partial) partial.push_back(product_json(corpus, p));
  nlohmann::ordered_json negs = nlohmann::ordered_json::array();
  for (ProductIndex p : sample.negative_queries) negs.push_back(product_json(corpus, p));
  return {{"kind", "outfit_sample"},
          {"partial_outfit", partial},
          {"positive_query", product_json(corpus, sample.positive_query)},
          {"negative_queries", negs},
          {"window", sample.window}};
}

}  // namespace stylerec
