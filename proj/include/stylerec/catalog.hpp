/**
 * @file catalog.hpp
 * @brief Product/outfit data model, corpus ingestion, preprocessing,
 *        time windows and train/validation/test splits.
 *
 * Corpus files are JSON Lines, one outfit per line:
 *
 *   {"outfit_id": "o1", "seq": 0, "products": [{"id": "p1", "slot": "shirt"}, ...]}
 *
 * Lines starting with '#' and blank lines are ignored.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stylerec/errors.hpp"
#include "stylerec/random.hpp"
#include "stylerec/slot.hpp"

namespace stylerec {

using ProductIndex = std::uint32_t;

struct Product {
  std::string id;
  Slot slot = Slot::other;

  bool operator==(const Product&) const = default;
};

struct Outfit {
  std::string id;
  std::int64_t seq = 0;
  std::vector<Product> products;

  bool operator==(const Outfit&) const = default;
};

/**
 * @brief Outfits ordered by seq plus the vocabulary they reference.
 *
 * The vocabulary is sorted by product id. Each outfit is also kept as a list
 * of vocabulary indices, which is what the samplers and trainers consume.
 */
class Corpus {
 public:
  Corpus() = default;

  /// Sorts by seq (stable), removes repeated ids inside an outfit, builds the
  /// vocabulary. Throws SlotConflict if one id appears with two slots.
  explicit Corpus(std::vector<Outfit> outfits) : outfits_(std::move(outfits)) {
    std::stable_sort(outfits_.begin(), outfits_.end(),
                     [](const Outfit& a, const Outfit& b) { return a.seq < b.seq; });

    std::map<std::string, Slot> slots;
    for (auto& outfit : outfits_) {
      std::vector<Product> unique;
      unique.reserve(outfit.products.size());
      for (auto& p : outfit.products) {
        auto [it, inserted] = slots.emplace(p.id, p.slot);
        if (!inserted && it->second != p.slot) throw SlotConflict(p.id);
        const bool seen = std::any_of(unique.begin(), unique.end(),
                                      [&](const Product& q) { return q.id == p.id; });
        if (!seen) unique.push_back(std::move(p));
      }
      outfit.products = std::move(unique);
    }

    vocabulary_.reserve(slots.size());
    for (auto& [id, slot] : slots) {
      index_.emplace(id, static_cast<ProductIndex>(vocabulary_.size()));
      vocabulary_.push_back(Product{id, slot});
    }

    indexed_.reserve(outfits_.size());
    for (const auto& outfit : outfits_) {
      std::vector<ProductIndex> ids;
      ids.reserve(outfit.products.size());
      for (const auto& p : outfit.products) ids.push_back(index_.at(p.id));
      indexed_.push_back(std::move(ids));
    }
  }

  const std::vector<Outfit>& outfits() const noexcept { return outfits_; }
  const std::vector<Product>& vocabulary() const noexcept { return vocabulary_; }
  std::size_t size() const noexcept { return outfits_.size(); }
  bool empty() const noexcept { return outfits_.empty(); }

  const Product& product(ProductIndex i) const { return vocabulary_.at(i); }
  Slot slot_of(ProductIndex i) const { return vocabulary_[i].slot; }

  std::optional<ProductIndex> find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  ProductIndex index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw UnknownProduct(id);
    return it->second;
  }

  /// Outfit k as vocabulary indices, in the outfit's product order.
  const std::vector<ProductIndex>& outfit_products(std::size_t k) const { return indexed_.at(k); }

  bool operator==(const Corpus& other) const { return outfits_ == other.outfits_; }

 private:
  std::vector<Outfit> outfits_;
  std::vector<Product> vocabulary_;
  std::unordered_map<std::string, ProductIndex> index_;
  std::vector<std::vector<ProductIndex>> indexed_;
};

// ---------------------------------------------------------------------------
// Corpus I/O

inline Outfit outfit_from_json(const nlohmann::json& j) {
  Outfit o;
  o.id = j.at("outfit_id").get<std::string>();
  o.seq = j.at("seq").get<std::int64_t>();
  for (const auto& p : j.at("products")) {
    o.products.push_back(Product{p.at("id").get<std::string>(),
                                 parse_slot(p.at("slot").get<std::string>())});
  }
  return o;
}

inline nlohmann::ordered_json outfit_to_json(const Outfit& o) {
  nlohmann::ordered_json products = nlohmann::ordered_json::array();
  for (const auto& p : o.products) {
    products.push_back({{"id", p.id}, {"slot", std::string(slot_name(p.slot))}});
  }
  return {{"outfit_id", o.id}, {"seq", o.seq}, {"products", std::move(products)}};
}

inline Corpus parse_corpus(std::istream& in) {
  std::vector<Outfit> outfits;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, e.what());
    }
    try {
      outfits.push_back(outfit_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const UnknownSlot& e) {
      throw UnknownSlot(e.name());
    }
  }
  return Corpus(std::move(outfits));
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file '" + path + "'");
  return parse_corpus(in);
}

/// Canonical serialization: one compact JSON object per line, seq order.
inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& o : corpus.outfits()) out << outfit_to_json(o).dump() << '\n';
}

inline std::string corpus_to_string(const Corpus& corpus) {
  std::ostringstream out;
  write_corpus(out, corpus);
  return out.str();
}

inline void save_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus file '" + path + "'");
  write_corpus(out, corpus);
  if (!out) throw IoError("failed writing corpus file '" + path + "'");
}

// ---------------------------------------------------------------------------
// Preprocessing

struct PreprocessStats {
  std::size_t removed_products = 0;     ///< products below the frequency floor
  std::size_t removed_memberships = 0;  ///< outfit entries dropped by the frequency filter
  std::size_t deduplicated = 0;         ///< same-slot entries dropped
  std::size_t dropped_outfits = 0;      ///< outfits left with < 2 products
  std::size_t warnings = 0;             ///< 1 when the result is empty
};

struct Preprocessed {
  Corpus corpus;
  PreprocessStats stats;
};

/**
 * @brief Frequency filter, same-slot dedupe, size filter, in that order.
 *
 * Frequencies count outfit memberships in @p raw. The filter runs once; it is
 * not iterated to a fixed point. When an outfit holds several products of one
 * slot, one is kept uniformly at random from a per-outfit stream of @p seed.
 */
inline Preprocessed preprocess(const Corpus& raw, std::size_t min_frequency, std::uint64_t seed) {
  if (min_frequency < 1) throw InvalidArgument("min_frequency must be >= 1");

  std::vector<std::size_t> counts(raw.vocabulary().size(), 0);
  for (std::size_t k = 0; k < raw.size(); ++k) {
    for (ProductIndex p : raw.outfit_products(k)) ++counts[p];
  }

  Preprocessed result;
  auto& stats = result.stats;
  stats.removed_products = static_cast<std::size_t>(
      std::count_if(counts.begin(), counts.end(), [&](std::size_t c) { return c < min_frequency; }));

  std::vector<Outfit> kept;
  kept.reserve(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) {
    const Outfit& src = raw.outfits()[k];
    const auto& idx = raw.outfit_products(k);

    std::array<std::vector<std::size_t>, kSlotCount> by_slot;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (counts[idx[i]] < min_frequency) {
        ++stats.removed_memberships;
        continue;
      }
      by_slot[slot_index(src.products[i].slot)].push_back(i);
    }

    Rng rng(derive_seed(seed, {k}));
    std::vector<bool> keep(idx.size(), false);
    for (const auto& members : by_slot) {
      if (members.empty()) continue;
      const std::size_t pick = members.size() == 1 ? 0 : rng.uniform_index(members.size());
      keep[members[pick]] = true;
      stats.deduplicated += members.size() - 1;
    }

    Outfit out{src.id, src.seq, {}};
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (keep[i]) out.products.push_back(src.products[i]);
    }
    if (out.products.size() < 2) {
      ++stats.dropped_outfits;
      continue;
    }
    kept.push_back(std::move(out));
  }

  result.corpus = Corpus(std::move(kept));
  if (result.corpus.empty()) stats.warnings = 1;
  return result;
}

// ---------------------------------------------------------------------------
// Time windows

/// Products of one slot inside one window with their occurrence counts.
struct SlotPool {
  std::vector<ProductIndex> products;  ///< ascending
  std::vector<std::uint64_t> counts;
  std::vector<std::uint64_t> cumulative;  ///< inclusive prefix sums of counts

  std::size_t size() const noexcept { return products.size(); }
  bool empty() const noexcept { return products.empty(); }
  std::uint64_t total() const noexcept { return cumulative.empty() ? 0 : cumulative.back(); }

  std::optional<std::size_t> position(ProductIndex p) const {
    auto it = std::lower_bound(products.begin(), products.end(), p);
    if (it == products.end() || *it != p) return std::nullopt;
    return static_cast<std::size_t>(it - products.begin());
  }
};

/**
 * @brief A contiguous block of outfits in send-out order.
 *
 * Windows are the unit of stock availability: negatives, ranking candidates
 * and generation pools are always drawn from a single window.
 */
struct TimeWindow {
  std::size_t index = 0;
  std::size_t first = 0;  ///< first outfit position in the corpus
  std::size_t last = 0;   ///< one past the last outfit position
  std::vector<ProductIndex> vocabulary;  ///< ascending
  std::vector<std::uint64_t> counts;     ///< parallel to vocabulary
  std::uint64_t total_occurrences = 0;
  std::array<SlotPool, kSlotCount> pools;

  std::size_t size() const noexcept { return last - first; }

  std::span<const Outfit> outfits(const Corpus& corpus) const {
    return std::span<const Outfit>(corpus.outfits()).subspan(first, size());
  }

  bool contains(ProductIndex p) const {
    return std::binary_search(vocabulary.begin(), vocabulary.end(), p);
  }

  std::uint64_t count(ProductIndex p) const {
    auto it = std::lower_bound(vocabulary.begin(), vocabulary.end(), p);
    if (it == vocabulary.end() || *it != p) return 0;
    return counts[static_cast<std::size_t>(it - vocabulary.begin())];
  }

  /// Relative frequency of @p p among all product occurrences in the window.
  double frequency(ProductIndex p) const {
    if (total_occurrences == 0) return 0.0;
    return static_cast<double>(count(p)) / static_cast<double>(total_occurrences);
  }

  const SlotPool& pool(Slot s) const noexcept { return pools[slot_index(s)]; }
};

inline TimeWindow make_window(const Corpus& corpus, std::size_t index, std::size_t first,
                              std::size_t last) {
  TimeWindow w;
  w.index = index;
  w.first = first;
  w.last = last;
  std::map<ProductIndex, std::uint64_t> counts;
  for (std::size_t k = first; k < last; ++k) {
    for (ProductIndex p : corpus.outfit_products(k)) ++counts[p];
  }
  for (auto [p, c] : counts) {
    w.vocabulary.push_back(p);
    w.counts.push_back(c);
    w.total_occurrences += c;
    auto& pool = w.pools[slot_index(corpus.slot_of(p))];
    pool.products.push_back(p);
    pool.counts.push_back(c);
    pool.cumulative.push_back(pool.total() + c);
  }
  return w;
}

inline std::vector<TimeWindow> window_split(const Corpus& corpus, std::size_t window_size) {
  if (window_size < 1) throw InvalidArgument("window_size must be >= 1");
  std::vector<TimeWindow> windows;
  for (std::size_t first = 0; first < corpus.size(); first += window_size) {
    const std::size_t last = std::min(first + window_size, corpus.size());
    windows.push_back(make_window(corpus, windows.size(), first, last));
  }
  return windows;
}

// ---------------------------------------------------------------------------
// Splits

enum class Split : std::uint8_t { train, validation, test };

inline constexpr std::array<std::string_view, 3> kSplitNames = {"train", "validation", "test"};

constexpr std::string_view split_name(Split s) noexcept {
  return kSplitNames[static_cast<std::size_t>(s)];
}

inline Split parse_split(std::string_view name) {
  for (std::size_t i = 0; i < kSplitNames.size(); ++i) {
    if (kSplitNames[i] == name) return static_cast<Split>(i);
  }
  throw InvalidArgument("unknown split '" + std::string(name) + "'");
}

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct SplitAssignment {
  std::vector<Split> by_window;

  std::vector<std::size_t> windows_in(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < by_window.size(); ++i) {
      if (by_window[i] == s) out.push_back(i);
    }
    return out;
  }

  bool operator==(const SplitAssignment&) const = default;
};

/**
 * @brief Assigns whole windows to splits by shuffling window indices.
 *
 * Counts: validation and test get round(fraction * n); train gets the rest.
 * With n >= 3, a split with a positive fraction that rounds to zero is given
 * one window taken from train.
 */
inline SplitAssignment assign_splits(std::size_t window_count, SplitFractions fractions,
                                     std::uint64_t seed) {
  const double sum = fractions.train + fractions.validation + fractions.test;
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("split fractions must sum to 1");
  if (fractions.train < 0 || fractions.validation < 0 || fractions.test < 0) {
    throw InvalidArgument("split fractions must be non-negative");
  }

  const auto n = static_cast<double>(window_count);
  auto n_val = static_cast<std::size_t>(std::llround(fractions.validation * n));
  auto n_test = static_cast<std::size_t>(std::llround(fractions.test * n));
  if (window_count >= 3) {
    if (n_val == 0 && fractions.validation > 0) n_val = 1;
    if (n_test == 0 && fractions.test > 0) n_test = 1;
  }
  while (n_val + n_test > window_count) (n_val >= n_test ? n_val : n_test) -= 1;
  std::size_t n_train = window_count - n_val - n_test;
  if (window_count >= 3 && n_train == 0 && fractions.train > 0) {
    (n_val >= n_test ? n_val : n_test) -= 1;
    n_train = 1;
  }

  std::vector<std::size_t> order(window_count);
  for (std::size_t i = 0; i < window_count; ++i) order[i] = i;
  Rng rng(derive_seed(seed, {0x5711}));
  rng.shuffle(order);

  SplitAssignment a;
  a.by_window.assign(window_count, Split::train);
  for (std::size_t i = 0; i < window_count; ++i) {
    if (i < n_train) {
      a.by_window[order[i]] = Split::train;
    } else if (i < n_train + n_val) {
      a.by_window[order[i]] = Split::validation;
    } else {
      a.by_window[order[i]] = Split::test;
    }
  }
  return a;
}

inline SplitAssignment assign_splits(std::span<const TimeWindow> windows, SplitFractions fractions,
                                     std::uint64_t seed) {
  return assign_splits(windows.size(), fractions, seed);
}

/// Split file: {"format_version":1,"kind":"splits","window_size":N,"seed":S,"assignment":[...]}
struct SplitFile {
  std::size_t window_size = 1000;
  std::uint64_t seed = 0;
  SplitAssignment assignment;
};

inline std::string split_file_to_string(const SplitFile& f) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "splits";
  j["window_size"] = f.window_size;
  j["seed"] = f.seed;
  auto& arr = j["assignment"] = nlohmann::ordered_json::array();
  for (Split s : f.assignment.by_window) arr.push_back(std::string(split_name(s)));
  return j.dump(1) + "\n";
}

inline SplitFile split_file_from_string(const std::string& text) {
  SplitFile f;
  try {
    auto j = nlohmann::json::parse(text);
    if (j.at("kind").get<std::string>() != "splits") throw InvalidArgument("not a split file");
    if (j.at("format_version").get<int>() != 1) throw InvalidArgument("unsupported split file version");
    f.window_size = j.at("window_size").get<std::size_t>();
    f.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("assignment")) f.assignment.by_window.push_back(parse_split(s.get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, e.what());
  }
  return f;
}

}  // namespace stylerec
