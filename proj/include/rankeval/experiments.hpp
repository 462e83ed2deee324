#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "collection.hpp"
#include "core.hpp"
#include "estimation.hpp"
#include "metrics.hpp"
#include "rng.hpp"
#include "sampling.hpp"

namespace rankeval {

// ---------------------------------------------------------------------------
// Synthetic data

//! Recommender-style synthetic ground truth: per-(user,item) utility levels
//! drawn from a categorical whose parameters are a fresh Dirichlet draw per
//! pair. The defaults keep a full replicate study desk-sized.
struct SynthConfig {
  std::size_t n_queries = 600;  // users
  std::size_t n_docs = 200;     // items
  std::vector<double> dirichlet_alpha = {0.54, 0.25, 0.175, 0.03, 0.005};
  std::vector<double> utility_levels = {0, 1, 2, 3, 4};
  std::uint64_t seed = 1;

  void validate() const {
    if (n_queries == 0 || n_docs == 0)
      throw input_error("synth: need at least one query and one doc");
    if (dirichlet_alpha.empty() ||
        dirichlet_alpha.size() != utility_levels.size())
      throw input_error("synth: alpha and levels must align");
    for (double a : dirichlet_alpha)
      if (!(a > 0.0)) throw input_error("synth: alpha entries must be > 0");
    for (std::size_t i = 0; i + 1 < utility_levels.size(); ++i)
      if (!(utility_levels[i] < utility_levels[i + 1]))
        throw input_error("synth: levels must be ascending");
    if (utility_levels.front() < 0.0)
      throw input_error("synth: levels must be nonnegative");
  }

  static SynthConfig paper_scale(std::uint64_t seed) {
    SynthConfig cfg;
    cfg.n_queries = 6000;
    cfg.n_docs = 2000;
    cfg.seed = seed;
    return cfg;
  }
};

struct SynthData {
  std::vector<QueryId> queries;
  UtilityOracle oracle;
  System opt;  // ideal ranker: utilities descending, doc id breaking ties
};

inline SynthData gen_synth(const SynthConfig& cfg) {
  cfg.validate();
  SynthData data;
  data.queries.reserve(cfg.n_queries);
  for (std::size_t i = 0; i < cfg.n_queries; ++i)
    data.queries.push_back(make_id("u", i, cfg.n_queries));
  std::vector<DocId> docs;
  docs.reserve(cfg.n_docs);
  for (std::size_t j = 0; j < cfg.n_docs; ++j)
    docs.push_back(make_id("i", j, cfg.n_docs));

  data.oracle.max_utility = cfg.utility_levels.back();
  Rng rng(derive_seed(cfg.seed, 0));
  data.opt.id = "OPT";
  for (const QueryId& q : data.queries) {
    std::vector<std::pair<DocId, double>> scored;
    scored.reserve(cfg.n_docs);
    for (const DocId& d : docs) {
      const std::vector<double> theta = rng.dirichlet(cfg.dirichlet_alpha);
      const double u = rng.uniform();
      double cum = 0.0;
      std::size_t level = theta.size() - 1;
      for (std::size_t k = 0; k < theta.size(); ++k) {
        cum += theta[k];
        if (u < cum) {
          level = k;
          break;
        }
      }
      const double value = cfg.utility_levels[level];
      data.oracle.set(q, d, value);
      scored.emplace_back(d, value);
    }
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) {
                if (a.second != b.second) return a.second > b.second;
                return a.first < b.first;
              });
    RankedList list;
    list.query = q;
    for (auto& [d, value] : scored) list.docs.push_back(std::move(d));
    data.opt.rankings[q] = std::move(list);
  }
  return data;
}

// ---------------------------------------------------------------------------
// System transforms

struct SystemTransform {
  enum class Kind { Opt, Shift, Rev };
  Kind kind = Kind::Opt;
  std::size_t m = 0;

  // "opt" | "shift:5" | "rev:75"
  static SystemTransform parse(std::string_view text) {
    SystemTransform t;
    if (text == "opt") return t;
    const auto colon = text.find(':');
    const std::string_view name = text.substr(0, colon);
    if (name == "shift")
      t.kind = Kind::Shift;
    else if (name == "rev")
      t.kind = Kind::Rev;
    else
      throw input_error("unknown transform '" + std::string(text) + "'");
    if (colon == std::string_view::npos || colon + 1 == text.size())
      throw input_error("transform '" + std::string(text) +
                        "' needs a :m parameter");
    try {
      t.m = std::stoull(std::string(text.substr(colon + 1)));
    } catch (const std::exception&) {
      throw input_error("bad transform parameter in '" + std::string(text) +
                        "'");
    }
    return t;
  }

  std::string name() const {
    switch (kind) {
      case Kind::Opt: return "OPT";
      case Kind::Shift: return "SHIFT-" + std::to_string(m);
      case Kind::Rev: return "REV-" + std::to_string(m);
    }
    throw internal_error("transform: unknown kind");
  }
};

//! Shift: cyclic rotation down by m, wrapped tail re-entering at the top.
//! Rev: reverse the top-m prefix. Both are permutations of each ranking.
inline System derive_system(const System& base, SystemTransform t,
                            std::string id = {}) {
  System out;
  out.id = id.empty()
               ? (t.kind == SystemTransform::Kind::Opt ? base.id : t.name())
               : std::move(id);
  for (const auto& [q, list] : base.rankings) {
    RankedList derived = list;
    if (t.m > list.docs.size())
      throw input_error("transform " + t.name() + ": m exceeds list length");
    if (t.kind == SystemTransform::Kind::Shift && t.m > 0)
      std::rotate(derived.docs.begin(), derived.docs.end() - t.m,
                  derived.docs.end());
    else if (t.kind == SystemTransform::Kind::Rev && t.m > 1)
      std::reverse(derived.docs.begin(), derived.docs.begin() + t.m);
    out.rankings[q] = std::move(derived);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic pooling baselines

//! Judge the top floor(budget/l) documents of every query and score the
//! metric with everything else counted as utility zero. Deterministic given
//! the query sample, and never above the exhaustive value for nonnegative
//! utilities.
inline double shallow_pool(const System& system, const UtilityOracle& oracle,
                           const MetricSpec& metric, std::size_t budget,
                           const std::vector<QueryId>& query_sample) {
  check_query_sample(query_sample);
  const std::size_t per_query = budget / query_sample.size();
  if (per_query == 0)
    throw input_error("shallow_pool: budget below one judgment per query");

  std::map<QueryId, std::vector<DocId>> judged;
  for (const QueryId& q : query_sample) {
    const RankedList& list = system.ranking_for(q);
    std::vector<DocId> top(list.docs.begin(),
                           list.docs.begin() +
                               std::min(per_query, list.docs.size()));
    std::sort(top.begin(), top.end());
    judged[q] = std::move(top);
  }
  const auto is_judged = [&](const QueryId& q, const DocId& d) {
    const auto& top = judged.at(q);
    return std::binary_search(top.begin(), top.end(), d);
  };

  const TargetDistribution target =
      target_distribution(system, metric, query_sample);
  KahanSum total;
  for (const auto& [key, w] : target.entries) {
    const bool have = key.part.is_pair()
                          ? is_judged(key.query, key.part.first) &&
                                is_judged(key.query, key.part.second)
                          : is_judged(key.query, key.part.first);
    total.add(have ? w * oracle.part_utility(key.query, key.part) : 0.0);
  }
  return total.value();
}

//! Judge the full top-b pool for floor(budget/b) uniformly sampled queries
//! and average their per-query metric values. Unbiased for the query-sample
//! average when b reaches the metric cutoff.
inline double deep_pool(const System& system, const UtilityOracle& oracle,
                        const MetricSpec& metric, std::size_t budget,
                        std::size_t pool_depth,
                        const std::vector<QueryId>& query_sample,
                        std::uint64_t seed) {
  check_query_sample(query_sample);
  if (pool_depth == 0) pool_depth = metric.cutoff;
  if (pool_depth == 0)
    throw input_error("deep_pool: need an explicit pool depth for uncapped metrics");
  std::size_t n_queries = budget / pool_depth;
  if (n_queries == 0)
    throw input_error("deep_pool: budget below one fully judged query");
  n_queries = std::min(n_queries, query_sample.size());

  std::vector<QueryId> pool = query_sample;
  Rng rng(derive_seed(seed, 0));
  for (std::size_t i = 0; i < n_queries; ++i) {
    const std::size_t j = i + rng.index(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n_queries);
  std::sort(pool.begin(), pool.end());

  KahanSum mean;
  for (const QueryId& q : pool) {
    const RankedList& list = system.ranking_for(q);
    KahanSum per_query;
    for_each_part(list, metric, [&](const Part& p, PartRank at, double w) {
      const std::size_t deepest = at.is_pair() ? at.second_rank : at.rank;
      if (deepest <= pool_depth)
        per_query.add(w * oracle.part_utility(q, p));
    });
    mean.add(per_query.value());
  }
  return mean.value() / double(n_queries);
}

// ---------------------------------------------------------------------------
// Analytic variance engine

struct EvalTask {
  enum class Kind { Single, Pair, VsBaseline, Ranking };
  Kind kind = Kind::Single;
  std::vector<const System*> systems;
  const System* baseline = nullptr;  // VsBaseline only

  void validate() const {
    switch (kind) {
      case Kind::Single:
        if (systems.size() != 1)
          throw input_error("task: single needs exactly one system");
        break;
      case Kind::Pair:
        if (systems.size() != 2)
          throw input_error("task: pair needs exactly two systems");
        break;
      case Kind::VsBaseline:
        if (systems.empty() || baseline == nullptr)
          throw input_error("task: vs_baseline needs candidates and baseline");
        break;
      case Kind::Ranking:
        if (systems.size() < 2)
          throw input_error("task: ranking needs k >= 2 systems");
        break;
    }
  }
};

//! Dense per-slot view of one evaluation task over its support universe:
//! true utilities and each estimand's numerator weights, plus the exact
//! estimand values. Everything the variance enumeration needs.
struct TaskTables {
  std::vector<PartKey> universe;
  std::vector<double> utility;
  std::vector<std::string> estimands;
  std::vector<std::vector<double>> numerators;  // per estimand, per slot
  std::vector<double> exact;                    // per estimand

  std::ptrdiff_t slot_of(const PartKey& key) const {
    auto it = std::lower_bound(universe.begin(), universe.end(), key);
    if (it == universe.end() || *it != key) return -1;
    return it - universe.begin();
  }
};

inline TaskTables build_task_tables(const EvalTask& task,
                                    const UtilityOracle& oracle,
                                    const MetricSpec& metric,
                                    const std::vector<QueryId>& query_sample) {
  task.validate();
  std::vector<TargetDistribution> tables;
  tables.reserve(task.systems.size() + 1);
  for (const System* s : task.systems)
    tables.push_back(target_distribution(*s, metric, query_sample));

  TaskTables out;
  std::vector<const TargetDistribution*> ptrs;
  for (const auto& t : tables) ptrs.push_back(&t);

  TargetDistribution reference;  // baseline or tau, when the task has one
  if (task.kind == EvalTask::Kind::VsBaseline) {
    reference = target_distribution(*task.baseline, metric, query_sample);
    ptrs.push_back(&reference);
  } else if (task.kind == EvalTask::Kind::Ranking) {
    reference = optimal_tau(ptrs);
  }

  out.universe = support_universe(ptrs);
  out.utility.resize(out.universe.size());
  for (std::size_t i = 0; i < out.universe.size(); ++i)
    out.utility[i] =
        oracle.part_utility(out.universe[i].query, out.universe[i].part);

  const auto aligned = [&](const TargetDistribution& t) {
    return align_weights(t, out.universe);
  };
  switch (task.kind) {
    case EvalTask::Kind::Single:
      out.estimands.push_back("U(" + task.systems[0]->id + ")");
      out.numerators.push_back(aligned(tables[0]));
      break;
    case EvalTask::Kind::Pair: {
      out.estimands.push_back("Diff(" + task.systems[0]->id + "," +
                              task.systems[1]->id + ")");
      std::vector<double> wa = aligned(tables[0]);
      const std::vector<double> wb = aligned(tables[1]);
      for (std::size_t i = 0; i < wa.size(); ++i) wa[i] -= wb[i];
      out.numerators.push_back(std::move(wa));
      break;
    }
    case EvalTask::Kind::VsBaseline:
    case EvalTask::Kind::Ranking: {
      const std::vector<double> wb = aligned(reference);
      const std::string ref_id = task.kind == EvalTask::Kind::VsBaseline
                                     ? task.baseline->id
                                     : std::string("tau");
      for (std::size_t j = 0; j < tables.size(); ++j) {
        out.estimands.push_back("Diff(" + task.systems[j]->id + "," + ref_id +
                                ")");
        std::vector<double> w = aligned(tables[j]);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= wb[i];
        out.numerators.push_back(std::move(w));
      }
      break;
    }
  }

  out.exact.resize(out.numerators.size());
  for (std::size_t j = 0; j < out.numerators.size(); ++j) {
    KahanSum sum;
    for (std::size_t i = 0; i < out.universe.size(); ++i)
      sum.add(out.utility[i] * out.numerators[j][i]);
    out.exact[j] = sum.value();
  }
  return out;
}

//! Exact enumeration of the estimator variance under q, summed over the
//! task's estimands: sum_j Var_q[z_j] / n. Throws when q misses mass on a
//! slot any estimand needs (the variance would be infinite).
inline double analytic_variance(const std::vector<double>& q_aligned,
                                const TaskTables& tables, std::size_t n) {
  if (n == 0) throw input_error("analytic_variance: need n >= 1");
  if (q_aligned.size() != tables.universe.size())
    throw input_error("analytic_variance: misaligned distribution");
  KahanSum total;
  for (std::size_t j = 0; j < tables.numerators.size(); ++j) {
    KahanSum second_moment;
    for (std::size_t i = 0; i < tables.universe.size(); ++i) {
      const double numerator = tables.utility[i] * tables.numerators[j][i];
      if (numerator == 0.0) continue;
      if (!(q_aligned[i] > 0.0))
        throw input_error(
            "analytic_variance: support violation, variance is infinite");
      second_moment.add(numerator * numerator / q_aligned[i]);
    }
    total.add(second_moment.value() - tables.exact[j] * tables.exact[j]);
  }
  return total.value() / double(n);
}

inline std::vector<double> align_distribution(
    const SamplingDistribution& q, const std::vector<PartKey>& universe) {
  std::vector<double> out(universe.size(), 0.0);
  auto it = q.entries.begin();
  for (std::size_t i = 0; i < universe.size(); ++i) {
    while (it != q.entries.end() && it->first < universe[i]) ++it;
    if (it != q.entries.end() && it->first == universe[i]) out[i] = it->second;
  }
  return out;
}

inline double analytic_variance(const SamplingDistribution& q,
                                const TaskTables& tables, std::size_t n) {
  return analytic_variance(align_distribution(q, tables.universe), tables, n);
}

inline double analytic_variance(const SamplingDistribution& q,
                                const EvalTask& task,
                                const UtilityOracle& oracle,
                                const MetricSpec& metric,
                                const std::vector<QueryId>& query_sample,
                                std::size_t n) {
  return analytic_variance(q, build_task_tables(task, oracle, metric,
                                                query_sample), n);
}

//! The aggregate-variance objective a ranking baseline tau induces once the
//! tau-optimal sampler is plugged in:
//!   [sum_i u_i sqrt(sum_j (W_ji - tau_i)^2)]^2 - sum_j [sum_i u_i (W_ji - tau_i)]^2
//! Minimized over tau by the entrywise mean of the system weights.
inline double tau_objective(
    const std::vector<std::vector<double>>& system_weights,
    const std::vector<double>& tau, const std::vector<double>& utility) {
  if (system_weights.empty())
    throw input_error("tau_objective: no systems");
  const std::size_t slots = utility.size();
  for (const auto& w : system_weights)
    if (w.size() != slots) throw input_error("tau_objective: misaligned");
  if (tau.size() != slots) throw input_error("tau_objective: misaligned");

  KahanSum first;
  std::vector<KahanSum> linear(system_weights.size());
  for (std::size_t i = 0; i < slots; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < system_weights.size(); ++j) {
      const double d = system_weights[j][i] - tau[i];
      sq += d * d;
      linear[j].add(utility[i] * d);
    }
    first.add(utility[i] * std::sqrt(sq));
  }
  double out = first.value() * first.value();
  for (const KahanSum& l : linear) out -= l.value() * l.value();
  return out;
}

// ---------------------------------------------------------------------------
// Accuracy measures

//! 1 when the estimate predicts the true ordering of the two systems
//! (strictly positive product), else 0. A zero estimate counts as wrong.
inline int pairwise_accuracy(double true_diff, double estimated_diff) {
  return true_diff * estimated_diff > 0.0 ? 1 : 0;
}

//! Rank correlation between two orderings of one set of ids:
//! (concordant - discordant) / (k(k-1)/2).
inline double kendall_tau(const std::vector<std::string>& a,
                          const std::vector<std::string>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw input_error("kendall_tau: need two orderings of k >= 2 items");
  std::vector<std::string> sa = a, sb = b;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  if (sa != sb || std::adjacent_find(sa.begin(), sa.end()) != sa.end())
    throw input_error("kendall_tau: orderings must cover the same set once");

  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < b.size(); ++i) pos[b[i]] = i;
  long concordant = 0, discordant = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      if (pos.at(a[i]) < pos.at(a[j]))
        ++concordant;
      else
        ++discordant;
    }
  }
  const double pairs = double(a.size()) * double(a.size() - 1) / 2.0;
  return double(concordant - discordant) / pairs;
}

}  // namespace rankeval
