/**
 * @file metrics.hpp
 * @brief Listwise ranking metrics over single-positive candidate lists:
 *        precision at 2, rank histogram / MRR, fill-in-the-blank accuracy and
 *        average precision.
 */
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stylerec/errors.hpp"

namespace stylerec {

struct ScoredCandidate {
  std::string id;
  double score = 0.0;
  bool positive = false;
};

/// Strict candidate order: score descending, then product id ascending.
inline bool ranks_before(const ScoredCandidate& a, const ScoredCandidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

struct EvalInstance {
  std::vector<ScoredCandidate> candidates;  ///< sorted by ranks_before
  std::size_t positive_rank = 0;            ///< 1-based

  std::size_t size() const noexcept { return candidates.size(); }
};

/// Sorts @p candidates and records the rank of the single positive.
inline EvalInstance make_instance(std::vector<ScoredCandidate> candidates) {
  const auto positives = std::count_if(candidates.begin(), candidates.end(),
                                       [](const ScoredCandidate& c) { return c.positive; });
  if (positives != 1) throw InvalidArgument("an instance needs exactly one positive candidate");
  std::stable_sort(candidates.begin(), candidates.end(), ranks_before);
  EvalInstance inst;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].positive) inst.positive_rank = i + 1;
  }
  inst.candidates = std::move(candidates);
  return inst;
}

/**
 * @brief Scores the positive and the negatives with @p scorer and ranks them.
 *
 * @p scorer maps a candidate id to its score against whatever reference the
 * caller has bound into it (a product or a partial outfit).
 */
template <class Scorer>
EvalInstance rank(Scorer&& scorer, const std::string& positive,
                  std::span<const std::string> negatives) {
  std::vector<ScoredCandidate> c;
  c.reserve(negatives.size() + 1);
  c.push_back({positive, scorer(positive), true});
  for (const auto& n : negatives) c.push_back({n, scorer(n), false});
  return make_instance(std::move(c));
}

inline void require_instances(std::span<const EvalInstance> instances) {
  if (instances.empty()) throw InvalidArgument("metric over an empty instance list");
}

/// Precision at 2 averaged over instances; 0.5 is the ceiling with one positive.
inline double top2(std::span<const EvalInstance> instances) {
  require_instances(instances);
  double sum = 0.0;
  for (const auto& inst : instances) {
    if (inst.size() < 2) throw InvalidArgument("top2 needs at least 2 candidates");
    sum += inst.positive_rank <= 2 ? 0.5 : 0.0;
  }
  return sum / static_cast<double>(instances.size());
}

struct HitRate {
  std::vector<double> histogram;  ///< [r-1] = fraction of positives at rank r
  double mrr = 0.0;
};

inline HitRate hit_rate_by_rank(std::span<const EvalInstance> instances) {
  require_instances(instances);
  const std::size_t n = instances.front().size();
  std::vector<std::size_t> counts(n, 0);
  double rr = 0.0;
  for (const auto& inst : instances) {
    if (inst.size() != n) throw InvalidArgument("inconsistent candidate counts");
    ++counts[inst.positive_rank - 1];
    rr += 1.0 / static_cast<double>(inst.positive_rank);
  }
  HitRate h;
  const auto total = static_cast<double>(instances.size());
  for (std::size_t c : counts) h.histogram.push_back(static_cast<double>(c) / total);
  h.mrr = rr / total;
  return h;
}

/// Fraction of n-candidate instances with the positive ranked first.
inline double fitb_accuracy(std::span<const EvalInstance> instances, std::size_t n) {
  require_instances(instances);
  std::size_t hits = 0;
  for (const auto& inst : instances) {
    if (inst.size() != n) throw InvalidArgument("FITB candidate count mismatch");
    if (inst.positive_rank == 1) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(instances.size());
}

/// Area under the precision-recall step curve: mean of precision@k over the
/// ranks k holding a relevant item. @p relevant lists flags in rank order.
template <class Flags>
double average_precision_of(const Flags& relevant) {
  std::size_t hits = 0, k = 0;
  double sum = 0.0;
  for (bool rel : relevant) {
    ++k;
    if (!rel) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k);
  }
  return hits == 0 ? 0.0 : sum / static_cast<double>(hits);
}

/// With one positive at rank r this equals 1/r.
inline double average_precision(const EvalInstance& inst) {
  std::vector<bool> rel;
  rel.reserve(inst.size());
  for (const auto& c : inst.candidates) rel.push_back(c.positive);
  return average_precision_of(rel);
}

/// Macro average of per-instance AP.
inline double average_precision(std::span<const EvalInstance> instances) {
  require_instances(instances);
  double sum = 0.0;
  for (const auto& inst : instances) sum += average_precision(inst);
  return sum / static_cast<double>(instances.size());
}

struct MetricReport {
  double top2 = 0.0;
  std::vector<double> hit_rate_by_rank;
  double mrr = 0.0;
  std::map<std::size_t, double> fitb;
  double aps = 0.0;
  std::size_t instance_count = 0;
};

/// All list metrics over one instance set. fitb gets an entry keyed by the
/// common candidate count.
inline MetricReport make_report(std::span<const EvalInstance> instances) {
  MetricReport r;
  r.instance_count = instances.size();
  r.top2 = top2(instances);
  auto h = hit_rate_by_rank(instances);
  r.hit_rate_by_rank = std::move(h.histogram);
  r.mrr = h.mrr;
  const std::size_t n = instances.front().size();
  r.fitb[n] = fitb_accuracy(instances, n);
  r.aps = average_precision(instances);
  return r;
}

}  // namespace stylerec
