#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stylerec/pair_model.hpp"
#include "stylerec/synth.hpp"

using namespace stylerec;

namespace {

std::vector<double> random_vector(std::size_t m, Rng& rng, double scale = 1.0) {
  std::vector<double> v(m);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

VectorRefs refs(const std::vector<std::vector<double>>& vs) {
  VectorRefs r;
  for (const auto& v : vs) r.emplace_back(v);
  return r;
}

/// Central finite differences of batch_log_prob, independent of batch_gradients.
struct FdGradients {
  std::vector<double> target, context;
  std::vector<std::vector<double>> negatives;
};

FdGradients finite_differences(std::vector<double> u, std::vector<double> vc,
                               std::vector<std::vector<double>> negs, double h) {
  auto f = [&]() { return batch_log_prob(u, vc, refs(negs)); };
  auto diff = [&](double& x) {
    const double saved = x;
    x = saved + h;
    const double up = f();
    x = saved - h;
    const double down = f();
    x = saved;
    return (up - down) / (2 * h);
  };
  FdGradients g;
  for (double& x : u) g.target.push_back(diff(x));
  for (double& x : vc) g.context.push_back(diff(x));
  for (auto& v : negs) {
    std::vector<double> gv;
    for (double& x : v) gv.push_back(diff(x));
    g.negatives.push_back(gv);
  }
  return g;
}

double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::max(std::abs(a[i]), std::abs(b[i])));
  }
  return den == 0.0 ? num : num / den;
}

std::vector<Product> vocab(std::size_t n) {
  std::vector<Product> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(Product{"p" + std::to_string(i), kAllSlots[i % kSlotCount]});
  return v;
}

synth::SynthConfig tiny_synth_config() {
  synth::SynthConfig cfg;
  cfg.n_products = 48;
  cfg.n_outfits = 1500;
  cfg.n_clusters = 3;
  cfg.d_true = 8;
  cfg.noise_temperature = 0.05;
  cfg.seed = 21;
  return cfg;
}

}  // namespace

TEST_CASE("init_model", "[pair_model]") {
  const auto a = init_model(vocab(100), 40, 7);
  const auto b = init_model(vocab(100), 40, 7);
  REQUIRE(a == b);
  CHECK(a.target.rows() == 100);
  CHECK(a.target.cols() == 40);
  CHECK(a.context.rows() == 100);
  CHECK_FALSE(a.target == a.context);
  for (double x : a.target.data()) REQUIRE(std::abs(x) <= 0.5 / 40);
  for (double x : a.context.data()) REQUIRE(std::abs(x) <= 0.5 / 40);
  CHECK_FALSE(init_model(vocab(100), 40, 8) == a);
  CHECK_THROWS_AS(init_model({}, 4, 0), InvalidArgument);
  CHECK_THROWS_AS(init_model(vocab(3), 0, 0), InvalidArgument);
}

TEST_CASE("batch_log_prob", "[pair_model]") {
  const std::vector<double> zero(5, 0.0);
  CHECK(batch_log_prob(zero, zero, {std::span<const double>(zero)}) == Catch::Approx(2 * std::log(0.5)));
  CHECK(batch_log_prob(zero, zero, {std::span<const double>(zero)}) == Catch::Approx(-1.3863).margin(1e-4));
  VectorRefs many(7, std::span<const double>(zero));
  CHECK(batch_log_prob(zero, zero, many) == Catch::Approx(8 * std::log(0.5)));

  const std::vector<double> u = {50.0, 0.0}, v = {50.0, 0.0};
  CHECK(batch_log_prob(u, v, {}) == Catch::Approx(0.0).margin(1e-300));
  CHECK(std::isfinite(batch_log_prob(u, std::vector<double>{-50.0, 0.0}, {})));

  const std::vector<double> short_v = {1.0};
  CHECK_THROWS_AS(batch_log_prob(u, short_v, {}), InvalidArgument);
  CHECK_THROWS_AS(batch_gradients(u, v, {std::span<const double>(short_v)}), InvalidArgument);
}

TEST_CASE("batch_gradients closed-form cases", "[pair_model]") {
  const std::vector<double> zero(4, 0.0);
  auto g = batch_gradients(zero, zero, {});
  for (double x : g.context) CHECK(x == 0.0);

  const std::vector<double> u = {1.0, 2.0, 0.0, 0.0};
  const std::vector<double> vl = {0.0, 0.0, 3.0, -1.0};  // orthogonal to u
  g = batch_gradients(u, zero, {std::span<const double>(vl)});
  for (std::size_t d = 0; d < 4; ++d) CHECK(g.negatives[0][d] == Catch::Approx(-0.5 * u[d]));
}

TEST_CASE("batch_gradients match central finite differences", "[pair_model][oracle]") {
  Rng rng(99);
  const std::size_t m = 8;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto u = random_vector(m, rng);
    const auto vc = random_vector(m, rng);
    std::vector<std::vector<double>> negs;
    const std::size_t n = 1 + rng.uniform_index(6);
    for (std::size_t i = 0; i < n; ++i) negs.push_back(random_vector(m, rng));

    const auto g = batch_gradients(u, vc, refs(negs));
    const auto fd = finite_differences(u, vc, negs, 1e-5);
    worst = std::max(worst, rel_error(g.target, fd.target));
    worst = std::max(worst, rel_error(g.context, fd.context));
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, rel_error(g.negatives[i], fd.negatives[i]));
  }
  INFO("max relative error " << worst);
  CHECK(worst <= 1e-4);
}

TEST_CASE("adagrad_step", "[pair_model]") {
  std::vector<double> p = {0.0};
  std::vector<double> acc = {0.0};
  const std::vector<double> one = {1.0};
  adagrad_step(p, one, acc, 1.0, 1e-8);
  CHECK(p[0] == Catch::Approx(1.0).epsilon(1e-7));
  const double before = p[0];
  adagrad_step(p, one, acc, 1.0, 1e-8);
  CHECK(p[0] - before == Catch::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-7));
  CHECK(acc[0] == 2.0);

  const std::vector<double> zero = {0.0};
  const auto p_before = p, acc_before = acc;
  adagrad_step(p, zero, acc, 1.0, 1e-8);
  CHECK(p == p_before);
  CHECK(acc == acc_before);
}

TEST_CASE("apply_batch ascends the batch objective", "[pair_model]") {
  auto model = init_model(vocab(16), 6, 1);
  AdaGradState state(model.size(), model.m);
  TrainingBatch b{PairSample{0, 1, Label::positive, 0},
                  {PairSample{0, 9, Label::negative, 0}, PairSample{0, 9, Label::negative, 0},
                   PairSample{0, 3, Label::negative, 0}}};
  auto lp = [&] {
    VectorRefs negs;
    for (const auto& n : b.negatives) negs.push_back(model.context.row(n.context));
    return batch_log_prob(model.target.row(0), model.context.row(1), negs);
  };
  const double before = lp();
  const double reported = apply_batch(model, state, b, 0.01);
  CHECK(reported == Catch::Approx(before));
  CHECK(lp() > before);
  for (double x : state.target.data()) CHECK(x >= 0.0);
  for (double x : state.context.data()) CHECK(x >= 0.0);
}

TEST_CASE("pair_score", "[pair_model]") {
  PairModel m(std::vector<Product>{{"a", Slot::shirt}, {"b", Slot::shoes}, {"c", Slot::shirt}}, 2);
  auto set = [](Matrix& mat, std::size_t r, double x, double y) {
    mat(r, 0) = x;
    mat(r, 1) = y;
  };
  SECTION("identical cross vectors give 1") {
    set(m.target, 0, 1, 2);
    set(m.context, 1, 1, 2);
    set(m.target, 1, -3, 1);
    set(m.context, 0, -3, 1);
    CHECK(pair_score(m, "a", "b") == Catch::Approx(1.0));
  }
  SECTION("orthogonal cross vectors give 0") {
    set(m.target, 0, 1, 0);
    set(m.context, 1, 0, 5);
    set(m.target, 1, 0, 2);
    set(m.context, 0, 3, 0);
    CHECK(pair_score(m, "a", "b") == Catch::Approx(0.0).margin(1e-15));
  }
  SECTION("mean of the two cosines") {
    set(m.target, 0, 1, 0);
    set(m.context, 1, 0, 1);  // cos(u_a, v_b) = 0
    set(m.target, 1, 2, 2);
    set(m.context, 0, 1, 1);  // cos(u_b, v_a) = 1
    CHECK(pair_score(m, "a", "b") == Catch::Approx(0.5));
  }
  SECTION("errors") {
    CHECK_THROWS_AS(pair_score(m, "a", "zzz"), UnknownProduct);
    CHECK_THROWS_AS(pair_score(m, "a", "c"), SlotCollision);
  }
}

TEST_CASE("pair_score symmetry, range and scale invariance", "[pair_model][property]") {
  auto model = init_model(vocab(64), 12, 5);
  auto scaled = model;
  for (double& x : scaled.target.data()) x *= 3.7;
  for (double& x : scaled.context.data()) x *= 3.7;
  for (ProductIndex a = 0; a < 64; ++a) {
    for (ProductIndex b = 0; b < 64; ++b) {
      const double s = pair_score(model, a, b);
      REQUIRE(s == pair_score(model, b, a));  // bitwise
      REQUIRE(s >= -1.0);
      REQUIRE(s <= 1.0);
      REQUIRE(pair_score(scaled, a, b) == Catch::Approx(s).margin(1e-12));
    }
  }
}

TEST_CASE("training is deterministic and epochs=0 returns the initial model", "[pair_model][training]") {
  const auto cfg = tiny_synth_config();
  const auto s = synth::generate_outfits(synth::generate_catalog(cfg), cfg);
  const auto windows = window_split(s.corpus, 500);

  TrainConfig tc;
  tc.m = 8;
  tc.n_pair = 5;
  tc.epochs = 0;
  tc.seed = 4;
  const auto untrained = train(s.corpus, windows, tc);
  CHECK(untrained == init_model(s.corpus.vocabulary(), 8, derive_seed(4, {0x1a17})));

  tc.epochs = 2;
  const auto a = train(s.corpus, windows, tc);
  const auto b = train(s.corpus, windows, tc);
  CHECK(a == b);
  CHECK(pair_model_to_string(a) == pair_model_to_string(b));
  CHECK_FALSE(a == untrained);
}

TEST_CASE("training log-probability rises", "[pair_model][training]") {
  auto cfg = tiny_synth_config();
  cfg.n_products = 50;
  cfg.n_clusters = 2;
  const auto s = synth::generate_outfits(synth::generate_catalog(cfg), cfg);
  const auto windows = window_split(s.corpus, 500);
  TrainConfig tc;
  tc.m = 8;
  tc.n_pair = 10;
  tc.epochs = 5;
  tc.rho = 0.01;
  tc.seed = 1;
  TrainReport report;
  train(s.corpus, windows, tc, &report);
  REQUIRE(report.epoch_mean_log_prob.size() == 5);
  // The per-epoch mean is a noisy estimate once training plateaus, so only
  // the early rise and the overall gain are checked.
  const auto& lp = report.epoch_mean_log_prob;
  INFO("epochs: " << lp[0] << " " << lp[1] << " " << lp[2] << " " << lp[3] << " " << lp[4]);
  CHECK(lp[1] > lp[0]);
  CHECK(lp[4] > lp[0]);
}

TEST_CASE("planted clusters separate after training", "[pair_model][training]") {
  const auto cfg = tiny_synth_config();
  const auto cat = synth::generate_catalog(cfg);
  const auto s = synth::generate_outfits(cat, cfg);
  const auto windows = window_split(s.corpus, 500);
  TrainConfig tc;
  tc.m = 8;
  tc.n_pair = 10;
  tc.epochs = 5;
  tc.rho = 0.01;
  tc.seed = 2;
  const auto model = train(s.corpus, windows, tc);

  double within = 0.0, across = 0.0;
  std::size_t nw = 0, na = 0;
  for (const auto& a : cat.products) {
    for (const auto& b : cat.products) {
      if (a.product.slot == b.product.slot) continue;
      if (!model.contains(a.product.id) || !model.contains(b.product.id)) continue;
      const double sc = pair_score(model, a.product, b.product);
      if (a.cluster == b.cluster) {
        within += sc;
        ++nw;
      } else {
        across += sc;
        ++na;
      }
    }
  }
  within /= static_cast<double>(nw);
  across /= static_cast<double>(na);
  INFO("within " << within << " across " << across);
  CHECK(within > across);
}

TEST_CASE("model file and TSV export", "[pair_model][io]") {
  auto model = init_model(vocab(10), 5, 3);
  model.target(2, 1) = -0.0;
  model.context(4, 4) = 1.0 / 3.0;
  const std::string text = pair_model_to_string(model);
  const auto back = pair_model_from_string(text);
  CHECK(back == model);
  CHECK(pair_model_to_string(back) == text);
  CHECK(back.index_of("p4") == 4);

  const auto dir = std::filesystem::temp_directory_path() / "stylerec_test_pair_model";
  std::filesystem::create_directories(dir);
  const auto mpath = (dir / "model.json").string();
  const auto tpath = (dir / "emb.tsv").string();
  export_embeddings(model, mpath, tpath);
  CHECK(load_pair_model(mpath) == model);

  std::ifstream tsv(tpath);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(tsv, line)) lines.push_back(line);
  REQUIRE(lines.size() == 1 + model.size());
  CHECK(lines[0] == "id\tslot\td0\td1\td2\td3\td4");
  for (const auto& l : lines) {
    CHECK(std::count(l.begin(), l.end(), '\t') == static_cast<long>(2 + model.m - 1));
  }
  CHECK(lines[1].rfind("p0\tshirt\t", 0) == 0);

  CHECK_THROWS_AS(pair_model_from_string("{\"kind\": \"attention_model\"}"), ParseError);
  CHECK_THROWS_AS(pair_model_from_string("not json"), ParseError);
  CHECK_THROWS_AS(load_pair_model((dir / "missing.json").string()), IoError);
}
