#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "stylerec/metrics.hpp"
#include "stylerec/random.hpp"

using namespace stylerec;

namespace {

/// Instance of n candidates with the positive at 1-based rank r.
EvalInstance at_rank(std::size_t n, std::size_t r) {
  std::vector<ScoredCandidate> c;
  for (std::size_t i = 0; i < n; ++i) {
    c.push_back({"c" + std::to_string(100 + i), static_cast<double>(n - i), i + 1 == r});
  }
  return make_instance(c);
}

EvalInstance random_instance(std::size_t n, Rng& rng) {
  std::vector<ScoredCandidate> c;
  for (std::size_t i = 0; i < n; ++i) c.push_back({"c" + std::to_string(100 + i), rng.uniform(), i == 0});
  return make_instance(c);
}

}  // namespace

TEST_CASE("rank sorts by score with id tie-break", "[metrics]") {
  std::vector<std::string> negs;
  for (int i = 0; i < 19; ++i) negs.push_back("n" + std::to_string(10 + i));

  auto best = rank([](const std::string& id) { return id == "pos" ? 2.0 : 1.0; }, "pos", negs);
  CHECK(best.positive_rank == 1);
  CHECK(best.size() == 20);

  auto worst = rank([](const std::string& id) { return id == "pos" ? -2.0 : 1.0; }, "pos", negs);
  CHECK(worst.positive_rank == 20);

  // All equal: ascending id decides. "n.." < "pos", so the positive is last.
  auto tied = rank([](const std::string&) { return 0.3; }, "pos", negs);
  CHECK(tied.positive_rank == 20);
  auto tied_first = rank([](const std::string&) { return 0.3; }, "a_pos", negs);
  CHECK(tied_first.positive_rank == 1);

  CHECK_THROWS_AS(make_instance({{"a", 1.0, false}, {"b", 0.5, false}}), InvalidArgument);
  CHECK_THROWS_AS(make_instance({{"a", 1.0, true}, {"b", 0.5, true}}), InvalidArgument);
}

TEST_CASE("top2", "[metrics]") {
  std::vector<EvalInstance> all_first(5, at_rank(20, 1));
  CHECK(top2(all_first) == 0.5);
  std::vector<EvalInstance> all_third(5, at_rank(20, 3));
  CHECK(top2(all_third) == 0.0);
  std::vector<EvalInstance> mix = {at_rank(20, 1), at_rank(20, 2), at_rank(20, 5), at_rank(20, 20)};
  CHECK(top2(mix) == 0.25);
  CHECK_THROWS_AS(top2(std::vector<EvalInstance>{}), InvalidArgument);
  CHECK_THROWS_AS(top2(std::vector<EvalInstance>{at_rank(1, 1)}), InvalidArgument);
}

TEST_CASE("hit_rate_by_rank and mrr", "[metrics]") {
  std::vector<EvalInstance> first(3, at_rank(20, 1));
  CHECK(hit_rate_by_rank(first).mrr == 1.0);
  std::vector<EvalInstance> fourth(3, at_rank(20, 4));
  const auto h = hit_rate_by_rank(fourth);
  CHECK(h.mrr == 0.25);
  CHECK(h.histogram.size() == 20);
  CHECK(h.histogram[3] == 1.0);
  CHECK_THROWS_AS(hit_rate_by_rank(std::vector<EvalInstance>{at_rank(20, 1), at_rank(10, 1)}), InvalidArgument);
}

TEST_CASE("fitb_accuracy", "[metrics]") {
  std::vector<EvalInstance> inst = {at_rank(4, 1), at_rank(4, 2), at_rank(4, 1), at_rank(4, 4)};
  CHECK(fitb_accuracy(inst, 4) == 0.5);
  CHECK_THROWS_AS(fitb_accuracy(inst, 10), InvalidArgument);
}

TEST_CASE("average precision of a single positive is the reciprocal rank", "[metrics]") {
  CHECK(average_precision(at_rank(20, 1)) == 1.0);
  CHECK(average_precision(at_rank(20, 2)) == 0.5);
  for (std::size_t r = 1; r <= 20; ++r) CHECK(average_precision(at_rank(20, r)) == Catch::Approx(1.0 / r));
  // The general precision-recall form with several positives.
  const std::vector<bool> rel = {true, false, true, false, false, true};
  CHECK(average_precision_of(rel) == Catch::Approx((1.0 + 2.0 / 3 + 3.0 / 6) / 3));
}

TEST_CASE("metrics match brute-force enumeration of all orders", "[metrics][oracle]") {
  // For n <= 6 enumerate every permutation of distinct scores; the positive's
  // rank is where candidate 0 lands. Oracle formulas are written from the
  // definitions, independent of the library code.
  for (std::size_t n = 2; n <= 6; ++n) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<EvalInstance> instances;
    double o_top2 = 0, o_rr = 0, o_fitb = 0, o_ap = 0;
    std::vector<double> o_hist(n, 0.0);
    std::size_t count = 0;
    do {
      std::vector<ScoredCandidate> c;
      for (std::size_t i = 0; i < n; ++i) {
        c.push_back({"c" + std::to_string(i), static_cast<double>(perm[i]), i == 0});
      }
      instances.push_back(make_instance(c));
      // Candidate 0 has score perm[0]; rank = number of higher scores + 1.
      const std::size_t r = n - perm[0];
      o_top2 += (r <= 2 ? 1.0 : 0.0) / 2.0;
      o_rr += 1.0 / static_cast<double>(r);
      o_fitb += r == 1 ? 1.0 : 0.0;
      // AP by scanning precision at each cutoff that contains the positive.
      double ap = 0.0;
      for (std::size_t k = 1; k <= n; ++k) {
        if (k == r) ap = 1.0 / static_cast<double>(k);
      }
      o_ap += ap;
      o_hist[r - 1] += 1.0;
      ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));

    const double cnt = static_cast<double>(count);
    CHECK(top2(instances) == Catch::Approx(o_top2 / cnt).epsilon(1e-15));
    const auto h = hit_rate_by_rank(instances);
    CHECK(h.mrr == Catch::Approx(o_rr / cnt).epsilon(1e-15));
    for (std::size_t r = 0; r < n; ++r) CHECK(h.histogram[r] == Catch::Approx(o_hist[r] / cnt).epsilon(1e-15));
    CHECK(fitb_accuracy(instances, n) == Catch::Approx(o_fitb / cnt).epsilon(1e-15));
    CHECK(average_precision(instances) == Catch::Approx(o_ap / cnt).epsilon(1e-15));
  }
}

TEST_CASE("metrics are invariant to increasing transforms of scores", "[metrics][property]") {
  Rng rng(5);
  std::vector<EvalInstance> base, transformed;
  for (int i = 0; i < 200; ++i) {
    std::vector<ScoredCandidate> c;
    for (int j = 0; j < 10; ++j) c.push_back({"c" + std::to_string(j), rng.uniform(-1, 1), j == 0});
    base.push_back(make_instance(c));
    for (auto& x : c) x.score = std::exp(3 * x.score) + 7;
    transformed.push_back(make_instance(c));
  }
  CHECK(top2(base) == top2(transformed));
  CHECK(hit_rate_by_rank(base).mrr == hit_rate_by_rank(transformed).mrr);
  CHECK(fitb_accuracy(base, 10) == fitb_accuracy(transformed, 10));
  CHECK(average_precision(base) == average_precision(transformed));
}

TEST_CASE("improving the positive's rank never lowers a metric", "[metrics][property]") {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<EvalInstance> inst;
    for (int i = 0; i < 8; ++i) inst.push_back(at_rank(12, 1 + rng.uniform_index(12)));
    const std::size_t which = rng.uniform_index(inst.size());
    const std::size_t r = inst[which].positive_rank;
    if (r == 1) continue;
    auto better = inst;
    better[which] = at_rank(12, 1 + rng.uniform_index(r - 1));
    REQUIRE(top2(better) >= top2(inst));
    REQUIRE(hit_rate_by_rank(better).mrr >= hit_rate_by_rank(inst).mrr);
    REQUIRE(fitb_accuracy(better, 12) >= fitb_accuracy(inst, 12));
    REQUIRE(average_precision(better) >= average_precision(inst));
  }
}

TEST_CASE("random-scorer expectations", "[metrics][statistical]") {
  Rng rng(7);
  const std::size_t trials = 10000;
  SECTION("FITB_4 and FITB_10") {
    for (std::size_t n : {4u, 10u}) {
      std::vector<EvalInstance> inst;
      for (std::size_t i = 0; i < trials; ++i) inst.push_back(random_instance(n, rng));
      const double p = 1.0 / n;
      const double se = std::sqrt(p * (1 - p) / trials);
      CHECK(std::abs(fitb_accuracy(inst, n) - p) <= 3 * se);
    }
  }
  SECTION("20 candidates: top2, histogram and AP") {
    std::vector<EvalInstance> inst;
    for (std::size_t i = 0; i < trials; ++i) inst.push_back(random_instance(20, rng));
    // top2: per-instance value 0.5 w.p. 0.1.
    const double se_top2 = 0.5 * std::sqrt(0.1 * 0.9 / trials);
    CHECK(std::abs(top2(inst) - 0.05) <= 3 * se_top2);

    const auto h = hit_rate_by_rank(inst);
    double hsum = 0.0;
    const double se_bin = std::sqrt(0.05 * 0.95 / trials);
    for (double x : h.histogram) {
      CHECK(std::abs(x - 0.05) <= 3 * se_bin + 1e-12);
      hsum += x;
    }
    CHECK(std::abs(hsum - 1.0) <= 1e-12);

    // E[1/r] and Var[1/r] for r uniform on 1..20.
    double mean = 0.0, sq = 0.0;
    for (int r = 1; r <= 20; ++r) {
      mean += 1.0 / 20 / r;
      sq += 1.0 / 20 / (static_cast<double>(r) * r);
    }
    CHECK(mean == Catch::Approx(0.1799).margin(1e-4));
    const double se_ap = std::sqrt((sq - mean * mean) / trials);
    CHECK(std::abs(average_precision(inst) - mean) <= 3 * se_ap);
  }
}

TEST_CASE("make_report bundles every metric", "[metrics]") {
  std::vector<EvalInstance> inst = {at_rank(4, 1), at_rank(4, 2)};
  const auto r = make_report(inst);
  CHECK(r.instance_count == 2);
  CHECK(r.top2 == 0.5);
  CHECK(r.mrr == 0.75);
  CHECK(r.fitb.at(4) == 0.5);
  CHECK(r.aps == 0.75);
  CHECK(r.hit_rate_by_rank == std::vector<double>{0.5, 0.5, 0.0, 0.0});
}
