#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "core.hpp"

namespace rankeval {

enum class MetricKind {
  PrecAtK,
  Dcg,
  GainAtK,
  Mae,
  Mse,
  Rbp,
  SwapCount,
  WeightedSwaps,
};

inline bool pairwise_metric(MetricKind k) {
  return k == MetricKind::SwapCount || k == MetricKind::WeightedSwaps;
}

//! A linearly decomposable ranking metric: a nonnegative weight per part of
//! the ranking (single documents, or ordered document pairs for the swap
//! metrics). Utilities are supplied separately by a UtilityOracle, so the
//! metric value is the weighted sum of per-part utilities.
struct MetricSpec {
  MetricKind kind = MetricKind::Dcg;
  std::size_t cutoff = 0;      // depth cutoff k; 0 = full list (Rbp only)
  double rbp_p = 0.0;          // persistence in (0,1), Rbp only
  double log_base = 2.0;       // Dcg only
  double max_utility = 1.0;    // M: utilities live in [0, M]

  bool pairwise() const { return pairwise_metric(kind); }

  std::size_t effective_depth(std::size_t list_len) const {
    return cutoff == 0 ? list_len : std::min(cutoff, list_len);
  }

  void validate() const {
    if (!(max_utility >= 0.0))
      throw input_error("metric: max_utility must be >= 0");
    if (kind == MetricKind::Rbp) {
      if (!(rbp_p > 0.0 && rbp_p < 1.0))
        throw input_error("metric: rbp persistence must be in (0,1)");
      return;
    }
    if (cutoff == 0) throw input_error("metric: cutoff must be >= 1");
    if (kind == MetricKind::Dcg && !(log_base > 1.0))
      throw input_error("metric: dcg log base must be > 1");
  }

  // Grammar: name "@" param, e.g. "dcg@100", "prec@10", "rbp@0.8".
  std::string name() const {
    switch (kind) {
      case MetricKind::PrecAtK: return "prec@" + std::to_string(cutoff);
      case MetricKind::Dcg: return "dcg@" + std::to_string(cutoff);
      case MetricKind::GainAtK: return "gain@" + std::to_string(cutoff);
      case MetricKind::Mae: return "mae@" + std::to_string(cutoff);
      case MetricKind::Mse: return "mse@" + std::to_string(cutoff);
      case MetricKind::Rbp: return "rbp@" + format_double(rbp_p);
      case MetricKind::SwapCount: return "swaps@" + std::to_string(cutoff);
      case MetricKind::WeightedSwaps:
        return "wswaps@" + std::to_string(cutoff);
    }
    throw internal_error("metric: unknown kind");
  }

  static MetricSpec parse(std::string_view text, double max_utility = 1.0,
                          double log_base = 2.0) {
    const auto at = text.find('@');
    if (at == std::string_view::npos || at == 0 || at + 1 == text.size())
      throw input_error("metric: expected name@param, got '" +
                        std::string(text) + "'");
    const std::string_view name = text.substr(0, at);
    const std::string param(text.substr(at + 1));
    MetricSpec spec;
    spec.max_utility = max_utility;
    spec.log_base = log_base;
    if (name == "prec") spec.kind = MetricKind::PrecAtK;
    else if (name == "dcg") spec.kind = MetricKind::Dcg;
    else if (name == "gain") spec.kind = MetricKind::GainAtK;
    else if (name == "mae") spec.kind = MetricKind::Mae;
    else if (name == "mse") spec.kind = MetricKind::Mse;
    else if (name == "rbp") spec.kind = MetricKind::Rbp;
    else if (name == "swaps") spec.kind = MetricKind::SwapCount;
    else if (name == "wswaps") spec.kind = MetricKind::WeightedSwaps;
    else
      throw input_error("metric: unknown name '" + std::string(name) + "'");
    try {
      if (spec.kind == MetricKind::Rbp) {
        spec.rbp_p = std::stod(param);
      } else {
        if (param.find_first_not_of("0123456789") != std::string::npos)
          throw input_error("metric: cutoff must be a positive integer");
        spec.cutoff = static_cast<std::size_t>(std::stoull(param));
      }
    } catch (const input_error&) {
      throw;
    } catch (const std::exception&) {
      throw input_error("metric: bad parameter '" + param + "'");
    }
    spec.validate();
    return spec;
  }
};

// Rank coordinates of a part: rank of a single document, or the two ranks
// of an ordered pair (rank < second_rank).
struct PartRank {
  std::size_t rank = 0;
  std::size_t second_rank = 0;  // 0 for single-document parts
  bool is_pair() const { return second_rank != 0; }
};

//! Weight of one part of a ranking of length `list_len`. Zero beyond the
//! metric's depth cutoff.
inline double part_weight(const MetricSpec& metric, PartRank at,
                          std::size_t list_len) {
  metric.validate();
  if (list_len == 0) throw input_error("part_weight: empty list");
  if (at.rank < 1 || at.rank > list_len)
    throw input_error("part_weight: rank out of range");
  if (at.is_pair()) {
    if (!metric.pairwise())
      throw input_error("part_weight: pair part for single-document metric");
    if (at.second_rank <= at.rank || at.second_rank > list_len)
      throw input_error("part_weight: pair ranks out of order or range");
  } else if (metric.pairwise()) {
    throw input_error("part_weight: single part for pair metric");
  }

  const std::size_t depth = metric.effective_depth(list_len);
  switch (metric.kind) {
    case MetricKind::PrecAtK:
    case MetricKind::GainAtK:
      return at.rank <= metric.cutoff ? 1.0 / double(metric.cutoff) : 0.0;
    case MetricKind::Dcg:
      return at.rank <= depth
                 ? std::log(metric.log_base) / std::log1p(double(at.rank))
                 : 0.0;
    case MetricKind::Mae:
    case MetricKind::Mse:
      return at.rank <= depth ? 1.0 / double(depth) : 0.0;
    case MetricKind::Rbp:
      if (metric.cutoff != 0 && at.rank > metric.cutoff) return 0.0;
      return (1.0 - metric.rbp_p) *
             std::pow(metric.rbp_p, double(at.rank - 1));
    case MetricKind::SwapCount:
      return at.second_rank <= depth ? 1.0 / double(depth) : 0.0;
    case MetricKind::WeightedSwaps:
      return at.second_rank <= depth
                 ? 1.0 / (double(depth) * double(at.rank) *
                          double(at.second_rank))
                 : 0.0;
  }
  throw internal_error("part_weight: unknown metric kind");
}

// Enumerates the positive-weight parts of one ranking, best-first.
// Fn(const Part&, PartRank, double weight).
template <typename Fn>
void for_each_part(const RankedList& list, const MetricSpec& metric, Fn&& fn) {
  const std::size_t len = list.docs.size();
  const std::size_t depth = metric.effective_depth(list.depth());
  if (!metric.pairwise()) {
    for (std::size_t r = 1; r <= depth; ++r) {
      const double w = part_weight(metric, PartRank{r, 0}, len);
      if (w > 0.0) fn(Part::single(list.docs[r - 1]), PartRank{r, 0}, w);
    }
  } else {
    for (std::size_t r1 = 1; r1 <= depth; ++r1) {
      for (std::size_t r2 = r1 + 1; r2 <= depth; ++r2) {
        const double w = part_weight(metric, PartRank{r1, r2}, len);
        if (w > 0.0)
          fn(Part::ordered_pair(list.docs[r1 - 1], list.docs[r2 - 1]),
             PartRank{r1, r2}, w);
      }
    }
  }
}

//! Per-document utility lookup. Pair parts are scored as swap indicators:
//! 1 when the document ranked below has strictly higher utility than the
//! one ranked above, else 0. Absent documents score 0; judged() tells the
//! two apart (the assumed-unjudged-zero flag).
class UtilityOracle {
 public:
  using QueryTable = std::vector<std::pair<DocId, double>>;  // sorted by doc

  double max_utility = 1.0;
  bool assessor_expected = false;  // values are expectations over assessors

  void set(const QueryId& q, const DocId& d, double value) {
    if (q.empty() || d.empty())
      throw input_error("oracle: empty query or doc id");
    QueryTable& row = table_[q];
    auto it = std::lower_bound(
        row.begin(), row.end(), d,
        [](const auto& e, const DocId& doc) { return e.first < doc; });
    if (it != row.end() && it->first == d)
      it->second = value;
    else
      row.insert(it, {d, value});
  }

  bool judged(const QueryId& q, const DocId& d) const {
    return find(q, d) != nullptr;
  }

  bool part_judged(const QueryId& q, const Part& p) const {
    if (!p.is_pair()) return judged(q, p.first);
    return judged(q, p.first) && judged(q, p.second);
  }

  double doc_value(const QueryId& q, const DocId& d) const {
    const double* v = find(q, d);
    return v == nullptr ? 0.0 : *v;
  }

  double part_utility(const QueryId& q, const Part& p) const {
    if (!p.is_pair()) return doc_value(q, p.first);
    return doc_value(q, p.second) > doc_value(q, p.first) ? 1.0 : 0.0;
  }

  void validate_range(double limit) const {
    for (const auto& [q, row] : table_)
      for (const auto& [d, v] : row)
        if (!(v >= 0.0 && v <= limit))
          throw data_error("oracle: utility " + format_double(v) + " for (" +
                           q + ", " + d + ") outside [0, " +
                           format_double(limit) + "]");
  }

  const std::map<QueryId, QueryTable>& table() const { return table_; }
  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [q, row] : table_) n += row.size();
    return n;
  }

 private:
  const double* find(const QueryId& q, const DocId& d) const {
    auto qit = table_.find(q);
    if (qit == table_.end()) return nullptr;
    const QueryTable& row = qit->second;
    auto it = std::lower_bound(
        row.begin(), row.end(), d,
        [](const auto& e, const DocId& doc) { return e.first < doc; });
    return it != row.end() && it->first == d ? &it->second : nullptr;
  }

  std::map<QueryId, QueryTable> table_;
};

//! The weight measure a metric induces over (query, part) slots of one
//! system's output: W(x, part) = w(part | S(x)) / l with l the query sample
//! size. Entries keep only positive weights, sorted by PartKey.
struct TargetDistribution {
  std::string system_id;
  std::size_t query_count = 0;                      // l
  std::vector<std::pair<PartKey, double>> entries;  // sorted, w > 0
  std::map<QueryId, double> query_normalizer;       // Z_x: sum of raw weights

  double weight_at(const PartKey& key) const {
    auto it = std::lower_bound(
        entries.begin(), entries.end(), key,
        [](const auto& e, const PartKey& k) { return e.first < k; });
    return it != entries.end() && it->first == key ? it->second : 0.0;
  }

  double total_mass() const {
    KahanSum sum;
    for (const auto& e : entries) sum.add(e.second);
    return sum.value();
  }

  bool same_support_shape(const TargetDistribution& other) const {
    return query_count == other.query_count && entries == other.entries;
  }
};

inline TargetDistribution target_distribution(
    const System& system, const MetricSpec& metric,
    const std::vector<QueryId>& query_sample) {
  metric.validate();
  check_query_sample(query_sample);
  std::vector<QueryId> queries = query_sample;
  std::sort(queries.begin(), queries.end());

  TargetDistribution out;
  out.system_id = system.id;
  out.query_count = query_sample.size();
  const double inv_l = 1.0 / double(query_sample.size());
  for (const QueryId& q : queries) {
    const RankedList& list = system.ranking_for(q);
    list.validate();
    std::vector<std::pair<Part, double>> parts;
    KahanSum normalizer;
    for_each_part(list, metric,
                  [&](Part p, PartRank, double w) {
                    normalizer.add(w);
                    parts.emplace_back(std::move(p), w);
                  });
    std::sort(parts.begin(), parts.end());
    out.query_normalizer[q] = normalizer.value();
    for (auto& [part, w] : parts)
      out.entries.push_back({PartKey{q, std::move(part)}, w * inv_l});
  }
  return out;
}

//! Full enumeration of the metric over the query sample: the ground truth
//! that every sampling estimator targets. Canonical entry order, compensated
//! summation.
inline double exact_utility(const TargetDistribution& target,
                            const UtilityOracle& oracle) {
  KahanSum total;
  for (const auto& [key, w] : target.entries)
    total.add(w * oracle.part_utility(key.query, key.part));
  return total.value();
}

inline double exact_utility(const System& system, const UtilityOracle& oracle,
                            const MetricSpec& metric,
                            const std::vector<QueryId>& query_sample) {
  return exact_utility(target_distribution(system, metric, query_sample),
                       oracle);
}

}  // namespace rankeval
