/**
 * @file synth.hpp
 * @brief Synthetic outfit corpora with planted style clusters.
 *
 * Every product gets a hidden unit style vector near its cluster centroid and
 * a power-law popularity weight. Outfits pick a cluster, a seed product of
 * that cluster, and fill the remaining slots by a popularity-weighted
 * soft-max over style similarity to the seed. Hidden fields are written only
 * to the truth sidecar, never to the corpus.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylerec/catalog.hpp"
#include "stylerec/errors.hpp"
#include "stylerec/random.hpp"
#include "stylerec/slot.hpp"

namespace stylerec::synth {

struct SynthConfig {
  std::size_t n_products = 400;
  std::size_t n_outfits = 20000;
  std::size_t n_clusters = 5;
  std::size_t d_true = 16;
  std::size_t min_outfit_size = 4;
  std::size_t max_outfit_size = 6;
  double noise_temperature = 0.05;  ///< 0 = argmax, +inf = popularity only
  double style_noise = 0.1;         ///< norm of the product offset from its centroid
  double popularity_exponent = 1.0;
  std::uint64_t seed = 0;
};

struct SynthProduct {
  Product product;
  std::size_t cluster = 0;
  std::vector<double> style;  ///< unit length
  double popularity = 1.0;
};

struct SynthCatalog {
  std::vector<SynthProduct> products;
  std::vector<std::vector<double>> centroids;
  std::array<std::vector<std::size_t>, kSlotCount> by_slot;
};

struct SynthCorpus {
  Corpus corpus;
  std::vector<std::size_t> outfit_clusters;
};

inline void validate(const SynthConfig& c) {
  if (c.n_clusters < 1) throw InvalidArgument("n_clusters must be >= 1");
  if (c.d_true < 1) throw InvalidArgument("d_true must be >= 1");
  if (c.n_products < c.n_clusters * kSlotCount) {
    throw InvalidArgument("n_products must be >= n_clusters * 8 so every cluster fills every slot");
  }
  if (c.min_outfit_size < 2 || c.max_outfit_size > kSlotCount || c.min_outfit_size > c.max_outfit_size) {
    throw InvalidArgument("outfit sizes must satisfy 2 <= min <= max <= 8");
  }
  if (!(c.noise_temperature >= 0)) throw InvalidArgument("noise_temperature must be >= 0");
  if (!(c.style_noise >= 0)) throw InvalidArgument("style_noise must be >= 0");
}

namespace detail {

inline void normalize(std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0) {
    for (double& x : v) x /= n;
  }
}

inline double unit_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline std::vector<double> gaussian(std::size_t d, Rng& rng) {
  std::vector<double> v(d);
  for (double& x : v) x = rng.normal();
  return v;
}

/// Orthonormal when k <= d, otherwise rejection-sampled to pairwise cos < 0.2.
inline std::vector<std::vector<double>> centroids(std::size_t k, std::size_t d, Rng& rng) {
  std::vector<std::vector<double>> out;
  if (k <= d) {
    while (out.size() < k) {
      auto v = gaussian(d, rng);
      for (const auto& c : out) {
        const double p = unit_dot(v, c);
        for (std::size_t i = 0; i < d; ++i) v[i] -= p * c[i];
      }
      double n = 0.0;
      for (double x : v) n += x * x;
      if (n < 1e-12) continue;
      normalize(v);
      out.push_back(std::move(v));
    }
    return out;
  }
  constexpr int kAttempts = 100000;
  while (out.size() < k) {
    bool placed = false;
    for (int a = 0; a < kAttempts && !placed; ++a) {
      auto v = gaussian(d, rng);
      normalize(v);
      placed = std::all_of(out.begin(), out.end(),
                           [&](const auto& c) { return unit_dot(v, c) < 0.2; });
      if (placed) out.push_back(std::move(v));
    }
    if (!placed) throw InvalidArgument("cannot place well-separated centroids; raise d_true");
  }
  return out;
}

}  // namespace detail

inline std::string product_id(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "p%05zu", i);
  return buf;
}

inline std::string outfit_id(std::size_t k) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "o%06zu", k);
  return buf;
}

/**
 * @brief Products assigned round-robin to slots; within a slot, round-robin
 *        to clusters. Popularity is 1/rank^exponent with ranks shuffled inside
 *        each (slot, cluster) group.
 */
inline SynthCatalog generate_catalog(const SynthConfig& config) {
  validate(config);
  SynthCatalog cat;
  Rng rng(derive_seed(config.seed, {0xca7}));
  cat.centroids = detail::centroids(config.n_clusters, config.d_true, rng);

  const double sigma = config.style_noise / std::sqrt(static_cast<double>(config.d_true));
  std::vector<std::vector<std::size_t>> groups(kSlotCount * config.n_clusters);
  for (std::size_t i = 0; i < config.n_products; ++i) {
    SynthProduct p;
    p.product = Product{product_id(i), kAllSlots[i % kSlotCount]};
    p.cluster = (i / kSlotCount) % config.n_clusters;
    p.style = cat.centroids[p.cluster];
    for (double& x : p.style) x += sigma * rng.normal();
    detail::normalize(p.style);
    groups[slot_index(p.product.slot) * config.n_clusters + p.cluster].push_back(i);
    cat.by_slot[slot_index(p.product.slot)].push_back(i);
    cat.products.push_back(std::move(p));
  }
  for (auto& g : groups) {
    rng.shuffle(g);
    for (std::size_t r = 0; r < g.size(); ++r) {
      cat.products[g[r]].popularity = std::pow(static_cast<double>(r + 1), -config.popularity_exponent);
    }
  }
  return cat;
}

namespace detail {

/// Index into @p candidates drawn with probability proportional to exp(logw).
inline std::size_t draw_log_weighted(const std::vector<double>& logw, Rng& rng) {
  const double mx = *std::max_element(logw.begin(), logw.end());
  double total = 0.0;
  std::vector<double> w(logw.size());
  for (std::size_t i = 0; i < w.size(); ++i) total += (w[i] = std::exp(logw[i] - mx));
  double r = rng.uniform() * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (r < w[i]) return i;
    r -= w[i];
  }
  return w.size() - 1;
}

}  // namespace detail

/// Cluster of each outfit is uniform; sizes uniform in [min, max]; slots a
/// uniform random subset. Each outfit uses its own seed stream.
inline SynthCorpus generate_outfits(const SynthCatalog& cat, const SynthConfig& config) {
  validate(config);
  const double temp = config.noise_temperature;
  std::vector<Outfit> outfits;
  outfits.reserve(config.n_outfits);
  SynthCorpus out;
  out.outfit_clusters.reserve(config.n_outfits);

  for (std::size_t k = 0; k < config.n_outfits; ++k) {
    Rng rng(derive_seed(config.seed, {0x0f, k}));
    const std::size_t cluster = rng.uniform_index(config.n_clusters);
    const std::size_t size =
        config.min_outfit_size + rng.uniform_index(config.max_outfit_size - config.min_outfit_size + 1);
    std::vector<Slot> slots(kAllSlots.begin(), kAllSlots.end());
    rng.shuffle(slots);
    slots.resize(size);

    Outfit o{outfit_id(k), static_cast<std::int64_t>(k), {}};

    // Seed product: same cluster, popularity weighted.
    std::vector<std::size_t> cands;
    std::vector<double> logw;
    for (std::size_t i : cat.by_slot[slot_index(slots[0])]) {
      if (cat.products[i].cluster != cluster) continue;
      cands.push_back(i);
      logw.push_back(std::log(cat.products[i].popularity));
    }
    const SynthProduct& seed = cat.products[cands[detail::draw_log_weighted(logw, rng)]];
    o.products.push_back(seed.product);

    for (std::size_t s = 1; s < slots.size(); ++s) {
      const auto& pool = cat.by_slot[slot_index(slots[s])];
      std::size_t pick = 0;
      if (temp == 0.0) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < pool.size(); ++j) {
          const double sim = detail::unit_dot(cat.products[pool[j]].style, seed.style);
          if (sim > best) best = sim, pick = j;
        }
      } else {
        logw.assign(pool.size(), 0.0);
        for (std::size_t j = 0; j < pool.size(); ++j) {
          const SynthProduct& p = cat.products[pool[j]];
          logw[j] = std::log(p.popularity);
          if (std::isfinite(temp)) logw[j] += detail::unit_dot(p.style, seed.style) / temp;
        }
        pick = detail::draw_log_weighted(logw, rng);
      }
      o.products.push_back(cat.products[pool[pick]].product);
    }
    outfits.push_back(std::move(o));
    out.outfit_clusters.push_back(cluster);
  }
  out.corpus = Corpus(std::move(outfits));
  return out;
}

/// Truth sidecar: {"id": ..., "cluster": ..., "style": [...]} per line.
inline void write_truth(std::ostream& out, const SynthCatalog& cat) {
  for (const auto& p : cat.products) {
    nlohmann::ordered_json j;
    j["id"] = p.product.id;
    j["cluster"] = p.cluster;
    j["style"] = p.style;
    out << j.dump() << '\n';
  }
}

struct TruthRecord {
  std::string id;
  std::size_t cluster = 0;
  std::vector<double> style;
};

inline std::vector<TruthRecord> parse_truth(std::istream& in) {
  std::vector<TruthRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.at("cluster").get<std::size_t>(),
                     j.at("style").get<std::vector<double>>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(n, e.what());
    }
  }
  return out;
}

}  // namespace stylerec::synth
