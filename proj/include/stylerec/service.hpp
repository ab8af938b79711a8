/**
 * @file service.hpp
 * @brief Request handlers behind the HTTP API: stock listing, pair scoring,
 *        window-scoped stock ranking and beam-search generation.
 *
 * Handlers are pure functions of (request, loaded state). State is fixed at
 * construction; reloading models means constructing a new Service. Errors
 * surface as ApiError carrying the HTTP status and a machine-readable code.
 */
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stylerec/catalog.hpp"
#include "stylerec/composer.hpp"
#include "stylerec/errors.hpp"
#include "stylerec/evaluation.hpp"
#include "stylerec/outfit_models.hpp"
#include "stylerec/pair_model.hpp"

namespace stylerec {

class ApiError : public Error {
 public:
  ApiError(int status, std::string code, const std::string& message)
      : Error(message), status_(status), code_(std::move(code)) {}

  int status() const noexcept { return status_; }
  const std::string& code() const noexcept { return code_; }

 private:
  int status_;
  std::string code_;
};

struct ServiceConfig {
  ScoringModel default_model = ScoringModel::mean;
  std::size_t default_top_k = 10;
  std::size_t max_top_k = 1000;
  std::size_t max_beam_width = 256;
  bool cache = true;
};

struct RankRequest {
  std::vector<std::string> reference;
  Slot target_slot = Slot::other;
  std::optional<ScoringModel> model;
  std::size_t top_k = 10;
  std::optional<std::size_t> window;
};

struct RankedItem {
  std::string product_id;
  Slot slot = Slot::other;
  double score = 0.0;

  bool operator==(const RankedItem&) const = default;
};

struct RankResponse {
  std::vector<RankedItem> items;

  bool operator==(const RankResponse&) const = default;
};

struct GenerateRequest {
  std::size_t beam_width = 1;
  std::optional<std::vector<Slot>> slot_order;
  std::optional<std::size_t> window;
  std::uint64_t seed = 0;
  std::optional<ScoringModel> model;
};

struct HttpResult {
  int status = 200;
  std::string body;
};

class Service {
 public:
  Service(Corpus corpus, std::size_t window_size, std::optional<PairModel> pair,
          std::optional<AttentionModel> attention = std::nullopt, ServiceConfig config = {})
      : corpus_(std::move(corpus)),
        windows_(window_split(corpus_, window_size)),
        pair_(std::move(pair)),
        attention_(std::move(attention)),
        config_(config),
        cache_(std::make_unique<Cache>()) {}

  const Corpus& corpus() const noexcept { return corpus_; }
  const std::vector<TimeWindow>& windows() const noexcept { return windows_; }
  const ServiceConfig& config() const noexcept { return config_; }

  // ---- typed handlers -----------------------------------------------------

  /// Ranks the target-slot stock of a window against a reference product or
  /// partial outfit. Results are sorted by score descending, ties by id.
  RankResponse rank(const RankRequest& req, bool use_cache = true) const {
    const PairModel& pair = require_pair();
    if (req.reference.empty()) throw ApiError(400, "bad_request", "reference must not be empty");
    if (req.top_k < 1 || req.top_k > config_.max_top_k) {
      throw ApiError(400, "bad_request", "top_k out of range");
    }
    const ScoringModel kind = req.model.value_or(config_.default_model);
    if (kind == ScoringModel::pair && req.reference.size() != 1) {
      throw ApiError(400, "bad_request", "pair model takes exactly one reference product");
    }
    if (kind == ScoringModel::attention && !attention_) {
      throw ApiError(409, "no_model", "no attention model loaded");
    }
    const TimeWindow& window = window_at(req.window);

    std::vector<ProductIndex> ref_rows;
    SlotSet ref_slots;
    for (const auto& id : req.reference) {
      if (!corpus_.find(id) || !pair.contains(id)) throw ApiError(404, "unknown_product", "unknown product '" + id + "'");
      const ProductIndex row = pair.index_of(id);
      const Slot s = pair.vocabulary[row].slot;
      if (ref_slots.contains(s)) {
        throw ApiError(422, "slot_collision", "reference holds two products of slot '" + std::string(slot_name(s)) + "'");
      }
      ref_slots.insert(s);
      ref_rows.push_back(row);
    }
    if (ref_slots.contains(req.target_slot)) {
      throw ApiError(422, "slot_collision",
                     "target slot '" + std::string(slot_name(req.target_slot)) + "' already in reference");
    }

    std::vector<RankedItem> full;
    const CacheKey key{window.index, req.target_slot, kind, sorted(req.reference)};
    if (use_cache && config_.cache && cache_->get(key, full)) return truncate(std::move(full), req.top_k);

    for (ProductIndex cand : window.pool(req.target_slot).products) {
      const std::string& id = corpus_.product(cand).id;
      if (!pair.contains(id)) continue;
      const ProductIndex row = pair.index_of(id);
      double score = 0.0;
      switch (kind) {
        case ScoringModel::pair: score = pair_score(pair, ref_rows[0], row); break;
        case ScoringModel::mean: score = mean_score(pair, row, ref_rows); break;
        case ScoringModel::attention: score = attention_score(pair, *attention_, row, ref_rows); break;
      }
      full.push_back(RankedItem{id, req.target_slot, score});
    }
    std::sort(full.begin(), full.end(), [](const RankedItem& a, const RankedItem& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.product_id < b.product_id;
    });
    if (use_cache && config_.cache) cache_->put(key, full);
    return truncate(std::move(full), req.top_k);
  }

  std::vector<ScoredOutfit> generate(const GenerateRequest& req) const {
    const PairModel& pair = require_pair();
    if (req.beam_width < 1 || req.beam_width > config_.max_beam_width) {
      throw ApiError(400, "bad_request", "beam_width out of range");
    }
    const ScoringModel kind = req.model.value_or(ScoringModel::mean);
    if (kind == ScoringModel::pair) throw ApiError(400, "bad_request", "generation needs an outfit model");
    if (kind == ScoringModel::attention && !attention_) throw ApiError(409, "no_model", "no attention model loaded");

    BeamConfig cfg;
    if (req.slot_order) cfg.slot_order = *req.slot_order;
    cfg.beam_width = req.beam_width;
    cfg.seed = req.seed;
    cfg.pools = pools_from_window(window_at(req.window));
    for (auto& pool : cfg.pools) {
      std::erase_if(pool, [&](ProductIndex p) { return !pair.contains(corpus_.product(p).id); });
    }
    try {
      validate(cfg);
    } catch (const InvalidArgument& e) {
      throw ApiError(400, "bad_request", e.what());
    } catch (const EmptyPool& e) {
      throw ApiError(422, "empty_pool", e.what());
    }
    const OutfitScorer scorer(corpus_, pair, attention_ ? &*attention_ : nullptr, kind);
    return beam_search(scorer, cfg);
  }

  double score_pair(const std::string& a, const std::string& b) const {
    const PairModel& pair = require_pair();
    for (const auto* id : {&a, &b}) {
      if (!pair.contains(*id)) throw ApiError(404, "unknown_product", "unknown product '" + *id + "'");
    }
    try {
      return pair_score(pair, a, b);
    } catch (const SlotCollision& e) {
      throw ApiError(422, "slot_collision", e.what());
    }
  }

  // ---- JSON surface -------------------------------------------------------

  nlohmann::ordered_json rank_json(const nlohmann::json& body) const { return to_json(rank(parse_rank(body))); }

  nlohmann::ordered_json to_json(const RankResponse& r) const {
    nlohmann::ordered_json items = nlohmann::ordered_json::array();
    for (const auto& it : r.items) {
      items.push_back({{"product_id", it.product_id}, {"slot", std::string(slot_name(it.slot))}, {"score", it.score}});
    }
    return {{"items", items}};
  }

  nlohmann::ordered_json to_json(const std::vector<ScoredOutfit>& outfits) const {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& o : outfits) {
      nlohmann::ordered_json products = nlohmann::ordered_json::array();
      for (ProductIndex p : o.products) {
        const Product& prod = corpus_.product(p);
        products.push_back({{"id", prod.id}, {"slot", std::string(slot_name(prod.slot))}});
      }
      arr.push_back({{"score", o.score}, {"step_scores", o.step_scores}, {"products", products}});
    }
    return {{"outfits", arr}};
  }

  nlohmann::ordered_json products_json(std::optional<Slot> slot, std::optional<std::size_t> window) const {
    const TimeWindow& w = window_at(window);
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (ProductIndex p : w.vocabulary) {
      const Product& prod = corpus_.product(p);
      if (slot && prod.slot != *slot) continue;
      arr.push_back({{"id", prod.id}, {"slot", std::string(slot_name(prod.slot))}, {"count", w.count(p)}});
    }
    return {{"window", w.index}, {"products", arr}};
  }

  /// Route dispatch shared by the HTTP server and tests.
  HttpResult dispatch(const std::string& method, const std::string& path,
                      const std::map<std::string, std::string>& query, const std::string& body) const {
    try {
      if (method == "GET" && path == "/health") {
        nlohmann::ordered_json j{{"status", "ok"},
                                 {"outfits", corpus_.size()},
                                 {"windows", windows_.size()},
                                 {"pair_model", pair_.has_value()},
                                 {"attention_model", attention_.has_value()}};
        return ok(j);
      }
      if (method == "GET" && path == "/slots") {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (auto n : kSlotNames) arr.push_back(std::string(n));
        return ok({{"slots", arr}});
      }
      if (method == "GET" && path == "/products") {
        std::optional<Slot> slot;
        std::optional<std::size_t> window;
        if (auto it = query.find("slot"); it != query.end() && !it->second.empty()) slot = parse_slot_arg(it->second);
        if (auto it = query.find("window"); it != query.end() && !it->second.empty()) window = parse_index_arg(it->second);
        return ok(products_json(slot, window));
      }
      if (method == "POST" && path == "/score/pair") {
        const auto j = parse_body(body);
        const std::string a = get_string(j, "a"), b = get_string(j, "b");
        return ok({{"score", score_pair(a, b)}});
      }
      if (method == "POST" && path == "/rank") return ok(rank_json(parse_body(body)));
      if (method == "POST" && path == "/outfits/generate") return ok(to_json(generate(parse_generate(parse_body(body)))));
      throw ApiError(404, "not_found", "no route for " + method + " " + path);
    } catch (const ApiError& e) {
      return error(e.status(), e.code(), e.what());
    } catch (const UnknownProduct& e) {
      return error(404, "unknown_product", e.what());
    } catch (const SlotCollision& e) {
      return error(422, "slot_collision", e.what());
    } catch (const UnknownSlot& e) {
      return error(400, "bad_request", e.what());
    } catch (const InvalidArgument& e) {
      return error(400, "bad_request", e.what());
    }
  }

  // ---- request parsing ----------------------------------------------------

  RankRequest parse_rank(const nlohmann::json& j) const {
    RankRequest r;
    if (!j.is_object()) throw ApiError(400, "bad_request", "body must be a JSON object");
    const auto ref = j.find("reference");
    if (ref == j.end()) throw ApiError(400, "bad_request", "missing 'reference'");
    if (ref->is_string()) {
      r.reference.push_back(ref->get<std::string>());
    } else if (ref->is_array()) {
      for (const auto& x : *ref) {
        if (!x.is_string()) throw ApiError(400, "bad_request", "'reference' entries must be strings");
        r.reference.push_back(x.get<std::string>());
      }
    } else {
      throw ApiError(400, "bad_request", "'reference' must be a string or list of strings");
    }
    r.target_slot = parse_slot_arg(get_string(j, "target_slot"));
    if (j.contains("model")) r.model = parse_model_arg(get_string(j, "model"));
    r.top_k = j.contains("top_k") ? get_index(j, "top_k") : config_.default_top_k;
    if (j.contains("window_index") && !j["window_index"].is_null()) r.window = get_index(j, "window_index");
    return r;
  }

  GenerateRequest parse_generate(const nlohmann::json& j) const {
    if (!j.is_object()) throw ApiError(400, "bad_request", "body must be a JSON object");
    GenerateRequest g;
    g.beam_width = j.contains("beam_width") ? get_index(j, "beam_width") : 1;
    if (j.contains("slot_order") && !j["slot_order"].is_null()) {
      if (!j["slot_order"].is_array()) throw ApiError(400, "bad_request", "'slot_order' must be a list");
      std::vector<Slot> order;
      for (const auto& s : j["slot_order"]) {
        if (!s.is_string()) throw ApiError(400, "bad_request", "'slot_order' entries must be strings");
        order.push_back(parse_slot_arg(s.get<std::string>()));
      }
      g.slot_order = std::move(order);
    }
    if (j.contains("window_index") && !j["window_index"].is_null()) g.window = get_index(j, "window_index");
    if (j.contains("seed")) g.seed = get_index(j, "seed");
    if (j.contains("model")) g.model = parse_model_arg(get_string(j, "model"));
    return g;
  }

 private:
  struct CacheKey {
    std::size_t window;
    Slot slot;
    ScoringModel model;
    std::vector<std::string> reference;
    auto operator<=>(const CacheKey&) const = default;
  };

  /// Memoized full rankings. Entries are pure functions of their key, so
  /// concurrent writers store identical values.
  class Cache {
   public:
    bool get(const CacheKey& key, std::vector<RankedItem>& out) const {
      std::lock_guard lock(mutex_);
      auto it = entries_.find(key);
      if (it == entries_.end()) return false;
      out = it->second;
      return true;
    }
    void put(const CacheKey& key, std::vector<RankedItem> value) {
      std::lock_guard lock(mutex_);
      entries_[key] = std::move(value);
    }

   private:
    mutable std::mutex mutex_;
    std::map<CacheKey, std::vector<RankedItem>> entries_;
  };

  const PairModel& require_pair() const {
    if (!pair_) throw ApiError(409, "no_model", "no pair model loaded");
    return *pair_;
  }

  const TimeWindow& window_at(std::optional<std::size_t> index) const {
    if (windows_.empty()) throw ApiError(409, "no_stock", "corpus is empty");
    if (!index) return windows_.back();
    if (*index >= windows_.size()) throw ApiError(400, "bad_request", "window_index out of range");
    return windows_[*index];
  }

  static std::vector<std::string> sorted(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    return v;
  }

  static RankResponse truncate(std::vector<RankedItem> items, std::size_t k) {
    if (items.size() > k) items.resize(k);
    return RankResponse{std::move(items)};
  }

  static nlohmann::json parse_body(const std::string& body) {
    try {
      return nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw ApiError(400, "bad_request", std::string("malformed JSON body: ") + e.what());
    }
  }

  static std::string get_string(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) throw ApiError(400, "bad_request", std::string("'") + key + "' must be a string");
    return it->get<std::string>();
  }

  static std::size_t get_index(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer() || it->get<std::int64_t>() < 0) {
      throw ApiError(400, "bad_request", std::string("'") + key + "' must be a non-negative integer");
    }
    return it->get<std::size_t>();
  }

  static Slot parse_slot_arg(const std::string& s) {
    try {
      return parse_slot(s);
    } catch (const UnknownSlot& e) {
      throw ApiError(400, "bad_request", e.what());
    }
  }

  static ScoringModel parse_model_arg(const std::string& s) {
    try {
      return parse_scoring_model(s);
    } catch (const InvalidArgument& e) {
      throw ApiError(400, "bad_request", e.what());
    }
  }

  static std::size_t parse_index_arg(const std::string& s) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != s.size() || s[0] == '-') throw ApiError(400, "bad_request", "expected a non-negative integer");
    return static_cast<std::size_t>(v);
  }

  static HttpResult ok(const nlohmann::ordered_json& j) { return {200, j.dump()}; }

  static HttpResult error(int status, const std::string& code, const std::string& message) {
    nlohmann::ordered_json j{{"error", {{"code", code}, {"message", message}}}};
    return {status, j.dump()};
  }

  Corpus corpus_;
  std::vector<TimeWindow> windows_;
  std::optional<PairModel> pair_;
  std::optional<AttentionModel> attention_;
  ServiceConfig config_;
  std::unique_ptr<Cache> cache_;
};

}  // namespace stylerec
