/**
 * @file composer.hpp
 * @brief Beam-search outfit generation over a fixed slot order.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stylerec/catalog.hpp"
#include "stylerec/errors.hpp"
#include "stylerec/random.hpp"

namespace stylerec {

/// Jacket, suit, shirt, trouser, shoes, belt.
inline std::vector<Slot> default_slot_order() {
  return {Slot::jacket, Slot::suit, Slot::shirt, Slot::trouser, Slot::shoes, Slot::belt};
}

using SlotPools = std::array<std::vector<ProductIndex>, kSlotCount>;

inline SlotPools pools_from_window(const TimeWindow& window) {
  SlotPools pools;
  for (std::size_t s = 0; s < kSlotCount; ++s) pools[s] = window.pools[s].products;
  return pools;
}

struct BeamConfig {
  std::vector<Slot> slot_order = default_slot_order();
  std::size_t beam_width = 1;
  SlotPools pools;
  std::uint64_t seed = 0;
};

struct ScoredOutfit {
  std::vector<ProductIndex> products;  ///< in slot_order
  std::vector<double> step_scores;     ///< incremental score of products[1..]
  double score = 0.0;                  ///< mean of step_scores; 0 for one product

  bool operator==(const ScoredOutfit&) const = default;
};

inline void validate(const BeamConfig& config) {
  if (config.beam_width < 1) throw InvalidArgument("beam width must be >= 1");
  if (config.slot_order.empty()) throw InvalidArgument("slot order must not be empty");
  SlotSet seen;
  for (Slot s : config.slot_order) {
    if (seen.contains(s)) {
      throw InvalidArgument("slot order repeats slot '" + std::string(slot_name(s)) + "'");
    }
    seen.insert(s);
    if (config.pools[slot_index(s)].empty()) {
      throw EmptyPool("no candidates for slot '" + std::string(slot_name(s)) + "'");
    }
  }
}

/// Beam order: higher score first, then lexicographically smaller product list.
inline bool beam_before(const ScoredOutfit& a, const ScoredOutfit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.products < b.products;
}

/// The first min(b, |pool|) products of a seeded permutation of the first
/// slot's pool. A wider beam with the same seed starts from a superset.
inline std::vector<ProductIndex> start_products(const BeamConfig& config) {
  std::vector<ProductIndex> pool = config.pools[slot_index(config.slot_order.front())];
  Rng rng(derive_seed(config.seed, {0xb5}));
  rng.shuffle(pool);
  pool.resize(std::min(config.beam_width, pool.size()));
  return pool;
}

/**
 * @brief Builds outfits slot by slot, keeping the best b partial outfits.
 *
 * Each extension is scored as scorer(candidate, current partial outfit) and
 * beams are ranked by the mean of all incremental scores so far. Returns at
 * most b outfits, best first.
 *
 * @p scorer: double(ProductIndex query, std::span<const ProductIndex> partial)
 */
template <class Scorer>
std::vector<ScoredOutfit> beam_search(Scorer&& scorer, const BeamConfig& config) {
  validate(config);
  std::vector<ScoredOutfit> beams;
  for (ProductIndex p : start_products(config)) beams.push_back(ScoredOutfit{{p}, {}, 0.0});

  for (std::size_t step = 1; step < config.slot_order.size(); ++step) {
    const auto& pool = config.pools[slot_index(config.slot_order[step])];
    std::vector<ScoredOutfit> next;
    next.reserve(beams.size() * pool.size());
    for (const auto& beam : beams) {
      for (ProductIndex cand : pool) {
        ScoredOutfit ext = beam;
        ext.step_scores.push_back(scorer(cand, std::span<const ProductIndex>(beam.products)));
        ext.products.push_back(cand);
        double sum = 0.0;
        for (double s : ext.step_scores) sum += s;
        ext.score = sum / static_cast<double>(ext.step_scores.size());
        next.push_back(std::move(ext));
      }
    }
    const std::size_t keep = std::min(config.beam_width, next.size());
    std::partial_sort(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(keep), next.end(),
                      beam_before);
    next.resize(keep);
    beams = std::move(next);
  }
  std::sort(beams.begin(), beams.end(), beam_before);
  return beams;
}

}  // namespace stylerec
