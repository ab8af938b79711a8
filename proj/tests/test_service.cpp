#include <catch_amalgamated.hpp>

#include <chrono>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "stylerec/http.hpp"
#include "stylerec/service.hpp"
#include "stylerec/synth.hpp"

using namespace stylerec;
using nlohmann::json;

namespace {

struct Fixture {
  Corpus corpus;
  PairModel pair;

  static Fixture make() {
    synth::SynthConfig c;
    c.n_products = 80;
    c.n_outfits = 800;
    c.n_clusters = 2;
    c.d_true = 8;
    c.seed = 21;
    auto s = synth::generate_outfits(synth::generate_catalog(c), c);
    TrainConfig tc;
    tc.m = 8;
    tc.n_pair = 5;
    tc.epochs = 2;
    tc.rho = 0.01;
    auto model = train(s.corpus, window_split(s.corpus, 400), tc);
    return Fixture{std::move(s.corpus), std::move(model)};
  }
};

const Fixture& fixture() {
  static const Fixture f = Fixture::make();
  return f;
}

AttentionModel random_attention() {
  AttentionModel a;
  Rng rng(3);
  for (auto& row : a.logits) {
    for (double& x : row) x = rng.uniform(-1, 1);
  }
  return a;
}

Service make_service(bool with_attention = false) {
  std::optional<AttentionModel> attn;
  if (with_attention) attn = random_attention();
  return Service(fixture().corpus, 400, fixture().pair, attn);
}

/// First product of @p slot in the latest window.
std::string stock(const Service& s, Slot slot, std::size_t i = 0) {
  return s.corpus().product(s.windows().back().pool(slot).products.at(i)).id;
}

json post(const Service& s, const std::string& path, const json& body, int expect = 200) {
  const auto r = s.dispatch("POST", path, {}, body.dump());
  INFO(r.body);
  CHECK(r.status == expect);
  return json::parse(r.body);
}

}  // namespace

TEST_CASE("GET endpoints", "[service]") {
  const auto s = make_service();
  auto r = s.dispatch("GET", "/health", {}, "");
  CHECK(r.status == 200);
  CHECK(json::parse(r.body)["status"] == "ok");
  CHECK(json::parse(r.body)["windows"] == 2);

  r = s.dispatch("GET", "/slots", {}, "");
  CHECK(json::parse(r.body)["slots"].size() == kSlotCount);

  r = s.dispatch("GET", "/products", {{"slot", "shoes"}, {"window", "0"}}, "");
  REQUIRE(r.status == 200);
  const auto j = json::parse(r.body);
  CHECK(j["window"] == 0);
  CHECK(j["products"].size() == s.windows()[0].pool(Slot::shoes).size());
  for (const auto& p : j["products"]) CHECK(p["slot"] == "shoes");

  CHECK(s.dispatch("GET", "/products", {{"slot", "hat"}}, "").status == 400);
  CHECK(s.dispatch("GET", "/products", {{"window", "9"}}, "").status == 400);
  CHECK(s.dispatch("GET", "/products", {{"window", "-1"}}, "").status == 400);
  CHECK(s.dispatch("GET", "/nowhere", {}, "").status == 404);
}

TEST_CASE("POST /score/pair", "[service]") {
  const auto s = make_service();
  const auto a = stock(s, Slot::shirt), b = stock(s, Slot::shoes);
  const auto j = post(s, "/score/pair", {{"a", a}, {"b", b}});
  CHECK(j["score"].get<double>() == pair_score(fixture().pair, a, b));
  CHECK(post(s, "/score/pair", {{"a", a}, {"b", "nope"}}, 404)["error"]["code"] == "unknown_product");
  CHECK(post(s, "/score/pair", {{"a", a}, {"b", stock(s, Slot::shirt, 1)}}, 422)["error"]["code"] ==
        "slot_collision");
  CHECK(s.dispatch("POST", "/score/pair", {}, "{not json").status == 400);
}

TEST_CASE("POST /rank delegates to the outfit models", "[service]") {
  const auto s = make_service(true);
  const auto& pair = fixture().pair;
  const auto attn = random_attention();
  const std::vector<std::string> ref = {stock(s, Slot::shirt), stock(s, Slot::trouser)};
  for (const char* model : {"mean", "attention"}) {
    const auto j = post(s, "/rank", {{"reference", ref}, {"target_slot", "shoes"}, {"model", model}, {"top_k", 1000}});
    const auto& pool = s.windows().back().pool(Slot::shoes).products;
    REQUIRE(j["items"].size() == pool.size());
    std::vector<ProductIndex> rows = {pair.index_of(ref[0]), pair.index_of(ref[1])};
    double prev = 2.0;
    for (const auto& it : j["items"]) {
      const ProductIndex row = pair.index_of(it["product_id"].get<std::string>());
      const double expect = std::string(model) == "mean" ? mean_score(pair, row, rows)
                                                         : attention_score(pair, attn, row, rows);
      CHECK(it["score"].get<double>() == expect);
      CHECK(it["score"].get<double>() <= prev);
      prev = it["score"].get<double>();
    }
  }
  const auto single = post(s, "/rank", {{"reference", ref[0]}, {"target_slot", "shoes"}, {"model", "pair"}, {"top_k", 3}});
  REQUIRE(single["items"].size() == 3);
  const auto first = single["items"][0]["product_id"].get<std::string>();
  CHECK(single["items"][0]["score"].get<double>() == pair_score(pair, ref[0], first));
}

TEST_CASE("POST /rank errors", "[service]") {
  const auto s = make_service();
  const auto shirt = stock(s, Slot::shirt);
  CHECK(post(s, "/rank", {{"reference", "zzz"}, {"target_slot", "shoes"}}, 404)["error"]["code"] == "unknown_product");
  CHECK(post(s, "/rank", {{"reference", shirt}, {"target_slot", "shirt"}}, 422)["error"]["code"] == "slot_collision");
  CHECK(post(s, "/rank", {{"reference", {shirt, stock(s, Slot::shirt, 1)}}, {"target_slot", "shoes"}}, 422)["error"]["code"] ==
        "slot_collision");
  CHECK(post(s, "/rank", {{"reference", shirt}, {"target_slot", "hat"}}, 400)["error"]["code"] == "bad_request");
  CHECK(post(s, "/rank", {{"target_slot", "shoes"}}, 400)["error"]["code"] == "bad_request");
  CHECK(post(s, "/rank", {{"reference", shirt}, {"target_slot", "shoes"}, {"top_k", 0}}, 400)["error"]["code"] ==
        "bad_request");
  CHECK(post(s, "/rank", {{"reference", shirt}, {"target_slot", "shoes"}, {"model", "attention"}}, 409)["error"]["code"] ==
        "no_model");

  const Service empty(fixture().corpus, 400, std::nullopt);
  CHECK(post(empty, "/rank", {{"reference", shirt}, {"target_slot", "shoes"}}, 409)["error"]["code"] == "no_model");
}

TEST_CASE("ranking cache and determinism", "[service]") {
  const auto s = make_service();
  RankRequest req;
  req.reference = {stock(s, Slot::jacket), stock(s, Slot::belt)};
  req.target_slot = Slot::shoes;
  req.top_k = 1000;
  const auto uncached = s.rank(req, false);
  CHECK(s.rank(req) == uncached);
  CHECK(s.rank(req) == uncached);
  std::swap(req.reference[0], req.reference[1]);
  CHECK(s.rank(req) == uncached);
  req.top_k = 2;
  const auto top = s.rank(req);
  REQUIRE(top.items.size() == 2);
  CHECK(top.items[0] == uncached.items[0]);

  const json body = {{"reference", stock(s, Slot::shirt)}, {"target_slot", "trouser"}};
  const auto a = s.dispatch("POST", "/rank", {}, body.dump());
  const auto b = s.dispatch("POST", "/rank", {}, body.dump());
  CHECK(a.body == b.body);
}

TEST_CASE("scaling embeddings leaves rankings unchanged", "[service][property]") {
  auto scaled = fixture().pair;
  for (double& x : scaled.target.data()) x *= 3.7;
  for (double& x : scaled.context.data()) x *= 3.7;
  const Service a(fixture().corpus, 400, fixture().pair);
  const Service b(fixture().corpus, 400, scaled);
  for (Slot ref_slot : {Slot::shirt, Slot::jacket, Slot::belt}) {
    for (Slot target : {Slot::shoes, Slot::trouser}) {
      for (std::size_t i = 0; i < a.windows().back().pool(ref_slot).size(); ++i) {
        RankRequest req;
        req.reference = {stock(a, ref_slot, i)};
        req.target_slot = target;
        req.model = ScoringModel::pair;
        req.top_k = 1000;
        const auto ra = a.rank(req), rb = b.rank(req);
        REQUIRE(ra.items.size() == rb.items.size());
        for (std::size_t k = 0; k < ra.items.size(); ++k) REQUIRE(ra.items[k].product_id == rb.items[k].product_id);
      }
    }
  }
}

TEST_CASE("POST /outfits/generate", "[service]") {
  const auto s = make_service();
  const json body = {{"beam_width", 3}, {"slot_order", {"shirt", "trouser", "shoes"}}, {"seed", 4}};
  const auto j = post(s, "/outfits/generate", body);
  REQUIRE(j["outfits"].size() == 3);
  for (const auto& o : j["outfits"]) {
    REQUIRE(o["products"].size() == 3);
    CHECK(o["products"][0]["slot"] == "shirt");
    CHECK(o["products"][2]["slot"] == "shoes");
    CHECK(o["step_scores"].size() == 2);
  }
  CHECK(post(s, "/outfits/generate", body) == j);

  const auto one = post(s, "/outfits/generate", {{"beam_width", 1}});
  REQUIRE(one["outfits"].size() == 1);
  CHECK(one["outfits"][0]["products"].size() == default_slot_order().size());

  CHECK(post(s, "/outfits/generate", {{"slot_order", {"shirt", "shirt"}}}, 400)["error"]["code"] == "bad_request");
  CHECK(post(s, "/outfits/generate", {{"beam_width", 0}}, 400)["error"]["code"] == "bad_request");
  CHECK(post(s, "/outfits/generate", {{"beam_width", 100000}}, 400)["error"]["code"] == "bad_request");
  CHECK(post(s, "/outfits/generate", {{"model", "pair"}}, 400)["error"]["code"] == "bad_request");
  CHECK(post(s, "/outfits/generate", {{"model", "attention"}}, 409)["error"]["code"] == "no_model");
}

TEST_CASE("bind address parsing", "[service]") {
  CHECK(parse_bind_address("127.0.0.1:8080") == std::pair<std::string, int>{"127.0.0.1", 8080});
  CHECK(parse_bind_address("0.0.0.0:0").second == 0);
  CHECK_THROWS_AS(parse_bind_address("localhost"), InvalidArgument);
  CHECK_THROWS_AS(parse_bind_address(":80"), InvalidArgument);
  CHECK_THROWS_AS(parse_bind_address("h:70000"), InvalidArgument);
}

TEST_CASE("HTTP round trip", "[service][http]") {
  const auto s = make_service();
  httplib::Server server;
  mount_routes(server, s);
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(json::parse(health->body)["status"] == "ok");

  const json body = {{"reference", stock(s, Slot::shirt)}, {"target_slot", "shoes"}, {"top_k", 5}};
  auto ranked = client.Post("/rank", body.dump(), "application/json");
  REQUIRE(ranked);
  CHECK(ranked->status == 200);
  CHECK(ranked->body == s.dispatch("POST", "/rank", {}, body.dump()).body);

  auto missing = client.Post("/rank", json{{"reference", "zzz"}, {"target_slot", "shoes"}}.dump(), "application/json");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  CHECK(json::parse(missing->body)["error"]["code"] == "unknown_product");

  auto nowhere = client.Get("/nowhere");
  REQUIRE(nowhere);
  CHECK(nowhere->status == 404);

  server.stop();
  worker.join();
}
