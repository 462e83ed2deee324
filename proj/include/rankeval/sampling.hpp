#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "metrics.hpp"
#include "rng.hpp"

namespace rankeval {

using PartValueFn = std::function<double(const QueryId&, const Part&)>;

// ---------------------------------------------------------------------------
// Approximate utilities

enum class ApproxMode {
  TrueUtility,          // û = oracle value (still floored)
  RankDecayLinear,      // û = scale * (1 - rank/horizon)
  RankDecayReciprocal,  // û = scale / (rank + horizon)
  ConstantOne,
  CustomTable,
};

inline std::string approx_mode_name(ApproxMode m) {
  switch (m) {
    case ApproxMode::TrueUtility: return "true_utility";
    case ApproxMode::RankDecayLinear: return "rank_decay_linear";
    case ApproxMode::RankDecayReciprocal: return "rank_decay_reciprocal";
    case ApproxMode::ConstantOne: return "constant_one";
    case ApproxMode::CustomTable: return "custom_table";
  }
  throw internal_error("approx_mode_name: unknown mode");
}

inline ApproxMode parse_approx_mode(const std::string& s) {
  if (s == "true_utility") return ApproxMode::TrueUtility;
  if (s == "rank_decay_linear") return ApproxMode::RankDecayLinear;
  if (s == "rank_decay_reciprocal") return ApproxMode::RankDecayReciprocal;
  if (s == "constant_one") return ApproxMode::ConstantOne;
  if (s == "custom_table") return ApproxMode::CustomTable;
  throw input_error("unknown approx-utility mode '" + s + "'");
}

struct ApproxUtilitySpec {
  ApproxMode mode = ApproxMode::ConstantOne;
  double scale = 0.0;    // linear: peak (default M); reciprocal: numerator (default 16)
  double horizon = 0.0;  // linear: zero-crossing rank (default list length);
                         // reciprocal: rank offset (default 34)
  double floor = 0.0;    // lower bound on û; default 1e-6 * M

  nlohmann::json to_json() const {
    return {{"mode", approx_mode_name(mode)},
            {"scale", scale},
            {"horizon", horizon},
            {"floor", floor}};
  }
  static ApproxUtilitySpec from_json(const nlohmann::json& j) {
    ApproxUtilitySpec s;
    s.mode = parse_approx_mode(j.at("mode").get<std::string>());
    s.scale = j.value("scale", 0.0);
    s.horizon = j.value("horizon", 0.0);
    s.floor = j.value("floor", 0.0);
    return s;
  }
};

//! Evaluable û(x, part): prior utility guesses that shape the sampling
//! distributions. û never affects unbiasedness, only variance. Values are
//! floored at a small positive epsilon so every distribution built from û
//! covers the whole support universe.
//!
//! Rank-decay modes score a document by its rank in each participating
//! system and average across systems; pair parts average their two
//! documents.
class ApproxUtility {
 public:
  ApproxUtility(const ApproxUtilitySpec& spec,
                std::vector<const System*> systems, double metric_max_utility,
                PartValueFn true_values = {},
                const std::map<PartKey, double>* custom = nullptr)
      : spec_(spec),
        systems_(std::move(systems)),
        true_values_(std::move(true_values)),
        custom_(custom) {
    floor_ = spec_.floor > 0.0 ? spec_.floor : 1e-6 * metric_max_utility;
    if (!(floor_ > 0.0)) floor_ = 1e-12;
    if (spec_.mode == ApproxMode::TrueUtility && !true_values_)
      throw reuse_error("approx utility: true-utility mode needs an oracle");
    if (spec_.mode == ApproxMode::CustomTable && custom_ == nullptr)
      throw reuse_error("approx utility: custom-table mode needs a table");
    if (spec_.mode == ApproxMode::RankDecayLinear ||
        spec_.mode == ApproxMode::RankDecayReciprocal) {
      if (systems_.empty())
        throw input_error("approx utility: rank decay needs systems");
      ranks_.resize(systems_.size());
      lengths_.resize(systems_.size());
      for (std::size_t s = 0; s < systems_.size(); ++s) {
        for (const auto& [q, list] : systems_[s]->rankings) {
          auto& row = ranks_[s][q];
          row.reserve(list.docs.size());
          for (std::size_t r = 1; r <= list.docs.size(); ++r)
            row.emplace_back(list.docs[r - 1], r);
          std::sort(row.begin(), row.end());
          lengths_[s][q] = list.docs.size();
        }
      }
    }
  }

  double floor() const { return floor_; }

  double value(const QueryId& q, const Part& p) const {
    switch (spec_.mode) {
      case ApproxMode::ConstantOne:
        return 1.0;
      case ApproxMode::TrueUtility:
        return std::max(true_values_(q, p), floor_);
      case ApproxMode::CustomTable: {
        auto it = custom_->find(PartKey{q, p});
        return std::max(it == custom_->end() ? 0.0 : it->second, floor_);
      }
      case ApproxMode::RankDecayLinear:
      case ApproxMode::RankDecayReciprocal: {
        KahanSum avg;
        for (std::size_t s = 0; s < systems_.size(); ++s) {
          if (!p.is_pair()) {
            avg.add(decay(s, q, p.first));
          } else {
            avg.add(0.5 * (decay(s, q, p.first) + decay(s, q, p.second)));
          }
        }
        return std::max(avg.value() / double(systems_.size()), floor_);
      }
    }
    throw internal_error("approx utility: unknown mode");
  }

 private:
  double decay(std::size_t sys, const QueryId& q, const DocId& d) const {
    auto qit = ranks_[sys].find(q);
    if (qit == ranks_[sys].end()) return 0.0;
    const auto& row = qit->second;
    auto it = std::lower_bound(
        row.begin(), row.end(), d,
        [](const auto& e, const DocId& doc) { return e.first < doc; });
    if (it == row.end() || it->first != d) return 0.0;
    const double rank = double(it->second);
    if (spec_.mode == ApproxMode::RankDecayLinear) {
      const double scale = spec_.scale > 0.0 ? spec_.scale : 1.0;
      const double horizon = spec_.horizon > 0.0
                                 ? spec_.horizon
                                 : double(lengths_[sys].at(q));
      return std::max(scale * (1.0 - rank / horizon), 0.0);
    }
    const double scale = spec_.scale > 0.0 ? spec_.scale : 16.0;
    const double offset = spec_.horizon > 0.0 ? spec_.horizon : 34.0;
    return scale / (rank + offset);
  }

  ApproxUtilitySpec spec_;
  std::vector<const System*> systems_;
  PartValueFn true_values_;
  const std::map<PartKey, double>* custom_;
  double floor_ = 0.0;
  std::vector<std::map<QueryId, std::vector<std::pair<DocId, std::size_t>>>>
      ranks_;
  std::vector<std::map<QueryId, std::size_t>> lengths_;
};

// ---------------------------------------------------------------------------
// Sampling distributions

//! A normalized, evaluable distribution over (query, part) slots. Entries
//! carry strictly positive probabilities and sum to 1; everything off the
//! listed support has probability zero.
struct SamplingDistribution {
  std::vector<std::pair<PartKey, double>> entries;  // sorted by key

  double prob_at(const PartKey& key) const {
    auto it = std::lower_bound(
        entries.begin(), entries.end(), key,
        [](const auto& e, const PartKey& k) { return e.first < k; });
    return it != entries.end() && it->first == key ? it->second : 0.0;
  }

  double total() const {
    KahanSum sum;
    for (const auto& e : entries) sum.add(e.second);
    return sum.value();
  }

  void validate() const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (!(entries[i].second > 0.0))
        throw data_error("sampling distribution: nonpositive mass");
      if (i > 0 && !(entries[i - 1].first < entries[i].first))
        throw internal_error("sampling distribution: unsorted support");
    }
    if (std::abs(total() - 1.0) > 1e-9)
      throw data_error("sampling distribution: mass does not sum to 1");
  }
};

// Degenerate optimal-sampler signal: the unnormalized mass is identically
// zero because all participating systems induce the same target weights.
// Callers report the exact zero difference instead of sampling.
struct IdenticalSystems {};

using SamplerOutcome = std::variant<SamplingDistribution, IdenticalSystems>;

inline bool is_degenerate(const SamplerOutcome& o) {
  return std::holds_alternative<IdenticalSystems>(o);
}
inline const SamplingDistribution& distribution_of(const SamplerOutcome& o) {
  if (is_degenerate(o))
    throw internal_error("sampler outcome is the identical-systems signal");
  return std::get<SamplingDistribution>(o);
}

namespace detail {

// Sorted union of sorted key sequences.
inline void merge_keys_into(std::vector<PartKey>& universe,
                            const std::vector<std::pair<PartKey, double>>& entries) {
  std::vector<PartKey> merged;
  merged.reserve(universe.size() + entries.size());
  auto ai = universe.begin();
  auto bi = entries.begin();
  while (ai != universe.end() || bi != entries.end()) {
    if (bi == entries.end())
      merged.push_back(*ai++);
    else if (ai == universe.end())
      merged.push_back((bi++)->first);
    else if (*ai < bi->first)
      merged.push_back(*ai++);
    else if (bi->first < *ai)
      merged.push_back((bi++)->first);
    else {
      merged.push_back(*ai++);
      ++bi;
    }
  }
  universe = std::move(merged);
}

}  // namespace detail

// Sorted union of the tables' supports: all slots any participating system
// gives positive metric weight. Smoothing spreads its mass over exactly
// this set.
inline std::vector<PartKey> support_universe(
    const std::vector<const TargetDistribution*>& tables) {
  std::vector<PartKey> universe;
  for (const TargetDistribution* t : tables)
    detail::merge_keys_into(universe, t->entries);
  return universe;
}

// Weights of one table aligned to a sorted universe (0 off-support).
inline std::vector<double> align_weights(const TargetDistribution& table,
                                         const std::vector<PartKey>& universe) {
  std::vector<double> out(universe.size(), 0.0);
  auto it = table.entries.begin();
  for (std::size_t i = 0; i < universe.size(); ++i) {
    while (it != table.entries.end() && it->first < universe[i]) ++it;
    if (it != table.entries.end() && it->first == universe[i])
      out[i] = it->second;
  }
  return out;
}

namespace detail {

inline std::optional<SamplingDistribution> normalize_masses(
    std::vector<std::pair<PartKey, double>>&& masses) {
  SamplingDistribution dist;
  KahanSum total;
  for (auto& e : masses) {
    if (e.second > 0.0) {
      total.add(e.second);
      dist.entries.push_back(std::move(e));
    }
  }
  if (dist.entries.empty() || !(total.value() > 0.0)) return std::nullopt;
  const double inv = 1.0 / total.value();
  for (auto& e : dist.entries) e.second *= inv;
  return dist;
}

inline void check_compatible(const std::vector<const TargetDistribution*>& ts) {
  for (std::size_t i = 1; i < ts.size(); ++i) {
    if (ts[i]->query_count != ts[0]->query_count)
      throw input_error("target tables built over different query samples");
    if (ts[i]->query_normalizer.size() != ts[0]->query_normalizer.size())
      throw input_error("target tables built over different query samples");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Variance-optimal samplers and heuristic baselines

//! Q*(x,y) proportional to û(x,y) * W(x,y): the variance-minimizing
//! distribution for estimating one system's utility. With û equal to the
//! true utilities the resulting estimator has zero variance.
inline SamplingDistribution optimal_single(const TargetDistribution& target,
                                           const ApproxUtility& util) {
  std::vector<std::pair<PartKey, double>> masses;
  masses.reserve(target.entries.size());
  for (const auto& [key, w] : target.entries)
    masses.push_back({key, util.value(key.query, key.part) * w});
  auto dist = detail::normalize_masses(std::move(masses));
  if (!dist) throw input_error("optimal_single: degenerate task, empty support");
  return *std::move(dist);
}

//! Q*(x,y) proportional to û(x,y) * |W_A(x,y) - W_B(x,y)|: slots where the
//! two systems agree carry no information about the difference and get zero
//! mass. Returns the IdenticalSystems signal when A and B agree everywhere.
inline SamplerOutcome optimal_pair(const TargetDistribution& a,
                                   const TargetDistribution& b,
                                   const ApproxUtility& util) {
  detail::check_compatible({&a, &b});
  const std::vector<PartKey> universe = support_universe({&a, &b});
  const std::vector<double> wa = align_weights(a, universe);
  const std::vector<double> wb = align_weights(b, universe);
  std::vector<std::pair<PartKey, double>> masses;
  masses.reserve(universe.size());
  for (std::size_t i = 0; i < universe.size(); ++i) {
    const double diff = std::abs(wa[i] - wb[i]);
    if (diff > 0.0)
      masses.push_back(
          {universe[i],
           util.value(universe[i].query, universe[i].part) * diff});
  }
  auto dist = detail::normalize_masses(std::move(masses));
  if (!dist) return IdenticalSystems{};
  return *std::move(dist);
}

//! Q*(x,y) proportional to û(x,y) * sqrt(sum_j (W_j - W')^2): minimizes the
//! sum of the k difference-estimator variances against one baseline.
inline SamplerOutcome optimal_vs_baseline(
    const std::vector<const TargetDistribution*>& candidates,
    const TargetDistribution& baseline, const ApproxUtility& util) {
  if (candidates.empty())
    throw input_error("optimal_vs_baseline: need at least one candidate");
  std::vector<const TargetDistribution*> all = candidates;
  all.push_back(&baseline);
  detail::check_compatible(all);
  const std::vector<PartKey> universe = support_universe(all);
  const std::vector<double> wb = align_weights(baseline, universe);
  std::vector<std::vector<double>> ws;
  ws.reserve(candidates.size());
  for (const TargetDistribution* c : candidates)
    ws.push_back(align_weights(*c, universe));

  std::vector<std::pair<PartKey, double>> masses;
  masses.reserve(universe.size());
  for (std::size_t i = 0; i < universe.size(); ++i) {
    double sq = 0.0;
    for (const auto& w : ws) {
      const double d = w[i] - wb[i];
      sq += d * d;
    }
    if (sq > 0.0)
      masses.push_back({universe[i],
                        util.value(universe[i].query, universe[i].part) *
                            std::sqrt(sq)});
  }
  auto dist = detail::normalize_masses(std::move(masses));
  if (!dist) return IdenticalSystems{};
  return *std::move(dist);
}

//! The variance-optimal synthetic baseline for ranking k systems: the
//! entrywise mean of the systems' target weights.
inline TargetDistribution optimal_tau(
    const std::vector<const TargetDistribution*>& systems) {
  if (systems.size() < 2) throw input_error("optimal_tau: need k >= 2");
  detail::check_compatible(systems);
  const std::vector<PartKey> universe = support_universe(systems);
  TargetDistribution tau;
  tau.system_id = "tau";
  tau.query_count = systems[0]->query_count;
  std::vector<std::vector<double>> ws;
  ws.reserve(systems.size());
  for (const TargetDistribution* s : systems)
    ws.push_back(align_weights(*s, universe));
  const double inv_k = 1.0 / double(systems.size());
  tau.entries.reserve(universe.size());
  for (std::size_t i = 0; i < universe.size(); ++i) {
    KahanSum sum;
    for (const auto& w : ws) sum.add(w[i]);
    tau.entries.push_back({universe[i], sum.value() * inv_k});
  }
  for (const auto& [q, z] : systems[0]->query_normalizer) {
    KahanSum sum;
    for (const TargetDistribution* s : systems) {
      auto it = s->query_normalizer.find(q);
      if (it == s->query_normalizer.end())
        throw input_error("optimal_tau: tables cover different queries");
      sum.add(it->second);
    }
    tau.query_normalizer[q] = sum.value() * inv_k;
  }
  return tau;
}

//! Q* for ranking k systems: deviations are taken against the optimal
//! baseline tau (the entrywise mean).
inline SamplerOutcome optimal_ranking(
    const std::vector<const TargetDistribution*>& systems,
    const ApproxUtility& util) {
  if (systems.size() < 2) throw input_error("optimal_ranking: need k >= 2");
  bool all_equal = true;
  for (std::size_t i = 1; i < systems.size() && all_equal; ++i)
    all_equal = systems[i]->entries == systems[0]->entries;
  if (all_equal) return IdenticalSystems{};
  const TargetDistribution tau = optimal_tau(systems);
  return optimal_vs_baseline(systems, tau, util);
}

enum class HeuristicKind { NaiveAverage, Uniform, TargetOnly };

inline std::string heuristic_kind_name(HeuristicKind k) {
  switch (k) {
    case HeuristicKind::NaiveAverage: return "naive_average";
    case HeuristicKind::Uniform: return "uniform";
    case HeuristicKind::TargetOnly: return "target_only";
  }
  throw internal_error("heuristic_kind_name: unknown kind");
}

inline HeuristicKind parse_heuristic_kind(const std::string& s) {
  if (s == "naive_average") return HeuristicKind::NaiveAverage;
  if (s == "uniform") return HeuristicKind::Uniform;
  if (s == "target_only") return HeuristicKind::TargetOnly;
  throw input_error("unknown heuristic sampler kind '" + s + "'");
}

//! Baseline samplers: naive averaging of the target weights (optionally
//! shaped by û), plain target weights, or uniform over the support universe.
inline SamplingDistribution heuristic_sampler(
    HeuristicKind kind, const std::vector<const TargetDistribution*>& systems,
    const ApproxUtility& util) {
  if (systems.empty()) throw input_error("heuristic_sampler: no systems");
  detail::check_compatible(systems);
  const std::vector<PartKey> universe = support_universe(systems);
  if (universe.empty())
    throw input_error("heuristic_sampler: empty support universe");

  std::vector<std::pair<PartKey, double>> masses;
  masses.reserve(universe.size());
  if (kind == HeuristicKind::Uniform) {
    const double p = 1.0 / double(universe.size());
    for (const PartKey& key : universe) masses.push_back({key, p});
    auto dist = detail::normalize_masses(std::move(masses));
    return *std::move(dist);
  }

  std::vector<std::vector<double>> ws;
  ws.reserve(systems.size());
  for (const TargetDistribution* s : systems)
    ws.push_back(align_weights(*s, universe));
  const double inv_k = 1.0 / double(systems.size());
  for (std::size_t i = 0; i < universe.size(); ++i) {
    KahanSum mean;
    for (const auto& w : ws) mean.add(w[i]);
    double mass = mean.value() * inv_k;
    if (kind == HeuristicKind::NaiveAverage)
      mass *= util.value(universe[i].query, universe[i].part);
    masses.push_back({universe[i], mass});
  }
  auto dist = detail::normalize_masses(std::move(masses));
  if (!dist) throw input_error("heuristic_sampler: zero total mass");
  return *std::move(dist);
}

//! (1 - eps) * q + eps * Uniform(universe): guarantees full support over the
//! universe so judged samples stay reusable for systems not in the task.
inline SamplingDistribution smooth(const SamplingDistribution& q, double eps,
                                   const std::vector<PartKey>& universe) {
  if (!(eps >= 0.0 && eps < 1.0))
    throw input_error("smooth: epsilon must be in [0,1)");
  if (eps == 0.0) return q;
  if (universe.empty()) throw input_error("smooth: empty universe");
  SamplingDistribution out;
  out.entries.reserve(universe.size());
  const double tail = eps / double(universe.size());
  auto it = q.entries.begin();
  for (const PartKey& key : universe) {
    while (it != q.entries.end() && it->first < key) ++it;
    double base = 0.0;
    if (it != q.entries.end() && it->first == key) base = it->second;
    out.entries.push_back({key, (1.0 - eps) * base + tail});
  }
  // every point of q must be inside the universe
  KahanSum covered;
  for (const auto& e : out.entries) covered.add(e.second);
  if (std::abs(covered.value() - 1.0) > 1e-9)
    throw input_error("smooth: universe does not cover the distribution");
  return out;
}

//! Balance-heuristic mixture: Q = sum_i (n_i / n) * Q_i over the union of
//! the component supports.
inline SamplingDistribution mixture_of(
    const std::vector<const SamplingDistribution*>& components,
    const std::vector<std::uint64_t>& counts) {
  if (components.empty() || components.size() != counts.size())
    throw input_error("mixture_of: components and counts must align");
  std::uint64_t n = 0;
  for (std::uint64_t c : counts) {
    if (c == 0) throw input_error("mixture_of: zero component count");
    n += c;
  }
  std::vector<PartKey> universe;
  for (const SamplingDistribution* c : components)
    detail::merge_keys_into(universe, c->entries);
  SamplingDistribution out;
  out.entries.reserve(universe.size());
  for (const PartKey& key : universe) {
    KahanSum mass;
    for (std::size_t i = 0; i < components.size(); ++i)
      mass.add(double(counts[i]) / double(n) * components[i]->prob_at(key));
    out.entries.push_back({key, mass.value()});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Drawing

struct DrawRecord {
  PartKey key;
  double q_prob = 0.0;  // the distribution's mass at key, exactly as used
};

//! n i.i.d. draws with replacement; deterministic given the seed.
inline std::vector<DrawRecord> draw(const SamplingDistribution& q,
                                    std::size_t n, std::uint64_t seed) {
  if (n == 0) throw input_error("draw: need n >= 1");
  if (q.entries.empty()) throw input_error("draw: empty distribution");
  std::vector<double> cumulative;
  cumulative.reserve(q.entries.size());
  KahanSum running;
  for (const auto& e : q.entries) {
    running.add(e.second);
    cumulative.push_back(running.value());
  }
  const double total = cumulative.back();
  Rng rng(seed);
  std::vector<DrawRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform() * total;
    std::size_t idx =
        std::upper_bound(cumulative.begin(), cumulative.end(), u) -
        cumulative.begin();
    if (idx >= q.entries.size()) idx = q.entries.size() - 1;
    out.push_back({q.entries[idx].first, q.entries[idx].second});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sampler specifications (serializable, re-evaluable)

enum class TaskKind { Single, Pair, VsBaseline, Ranking, Heuristic, Mixture };

inline std::string task_kind_name(TaskKind t) {
  switch (t) {
    case TaskKind::Single: return "single";
    case TaskKind::Pair: return "pair";
    case TaskKind::VsBaseline: return "vs_baseline";
    case TaskKind::Ranking: return "ranking";
    case TaskKind::Heuristic: return "heuristic";
    case TaskKind::Mixture: return "mixture";
  }
  throw internal_error("task_kind_name: unknown task");
}

inline TaskKind parse_task_kind(const std::string& s) {
  if (s == "single") return TaskKind::Single;
  if (s == "pair") return TaskKind::Pair;
  if (s == "vs_baseline") return TaskKind::VsBaseline;
  if (s == "ranking") return TaskKind::Ranking;
  if (s == "heuristic") return TaskKind::Heuristic;
  if (s == "mixture") return TaskKind::Mixture;
  throw input_error("unknown sampler task '" + s + "'");
}

//! Everything needed to rebuild a sampling distribution: task, systems (by
//! id), metric, approximate-utility recipe, and smoothing mass. Collections
//! store these specs so recorded probabilities can be re-derived later.
struct SamplerSpec {
  std::string id = "sampler";
  TaskKind task = TaskKind::Single;
  HeuristicKind heuristic = HeuristicKind::NaiveAverage;
  std::vector<std::string> systems;
  std::string baseline;  // VsBaseline only
  std::string metric;
  double max_utility = 1.0;
  double log_base = 2.0;
  ApproxUtilitySpec approx;
  double epsilon = 0.0;
  std::string seed_policy = "splitmix64-counter";
  std::vector<SamplerSpec> components;  // Mixture only
  std::vector<std::uint64_t> counts;    // Mixture only

  void validate() const {
    if (id.empty()) throw input_error("sampler spec: empty id");
    if (!(epsilon >= 0.0 && epsilon < 1.0))
      throw input_error("sampler spec: epsilon must be in [0,1)");
    if (task == TaskKind::Mixture) {
      if (components.empty() || components.size() != counts.size())
        throw input_error("sampler spec: mixture components/counts mismatch");
      for (const SamplerSpec& c : components) c.validate();
      return;
    }
    MetricSpec::parse(metric, max_utility, log_base);
    switch (task) {
      case TaskKind::Single:
        if (systems.size() != 1)
          throw input_error("sampler spec: single task needs one system");
        break;
      case TaskKind::Pair:
        if (systems.size() != 2)
          throw input_error("sampler spec: pair task needs two systems");
        break;
      case TaskKind::VsBaseline:
        if (systems.empty() || baseline.empty())
          throw input_error(
              "sampler spec: vs_baseline needs candidates and a baseline");
        break;
      case TaskKind::Ranking:
        if (systems.size() < 2)
          throw input_error("sampler spec: ranking needs k >= 2 systems");
        break;
      case TaskKind::Heuristic:
        if (systems.empty())
          throw input_error("sampler spec: heuristic task needs systems");
        break;
      case TaskKind::Mixture:
        break;
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["id"] = id;
    j["task"] = task_kind_name(task);
    if (task == TaskKind::Mixture) {
      nlohmann::json comps = nlohmann::json::array();
      for (const SamplerSpec& c : components) comps.push_back(c.to_json());
      j["components"] = std::move(comps);
      j["counts"] = counts;
      return j;
    }
    if (task == TaskKind::Heuristic)
      j["heuristic"] = heuristic_kind_name(heuristic);
    j["systems"] = systems;
    if (task == TaskKind::VsBaseline) j["baseline"] = baseline;
    j["metric"] = metric;
    j["max_utility"] = max_utility;
    j["log_base"] = log_base;
    j["approx"] = approx.to_json();
    j["epsilon"] = epsilon;
    j["seed_policy"] = seed_policy;
    return j;
  }

  static SamplerSpec from_json(const nlohmann::json& j) {
    SamplerSpec s;
    s.id = j.at("id").get<std::string>();
    s.task = parse_task_kind(j.at("task").get<std::string>());
    if (s.task == TaskKind::Mixture) {
      for (const auto& c : j.at("components"))
        s.components.push_back(from_json(c));
      s.counts = j.at("counts").get<std::vector<std::uint64_t>>();
      s.validate();
      return s;
    }
    if (s.task == TaskKind::Heuristic)
      s.heuristic = parse_heuristic_kind(j.at("heuristic").get<std::string>());
    s.systems = j.at("systems").get<std::vector<std::string>>();
    s.baseline = j.value("baseline", std::string());
    s.metric = j.at("metric").get<std::string>();
    s.max_utility = j.value("max_utility", 1.0);
    s.log_base = j.value("log_base", 2.0);
    if (j.contains("approx"))
      s.approx = ApproxUtilitySpec::from_json(j.at("approx"));
    s.epsilon = j.value("epsilon", 0.0);
    s.seed_policy = j.value("seed_policy", std::string("splitmix64-counter"));
    s.validate();
    return s;
  }

  std::string dump() const { return to_json().dump(); }
};

// What a sampler spec needs to be re-evaluated: the systems it references,
// plus value sources for the true-utility and custom-table approx modes.
struct EvalContext {
  const SystemRegistry* systems = nullptr;
  PartValueFn true_utilities;
  const std::map<PartKey, double>* custom_utilities = nullptr;
};

inline SamplerOutcome build_sampler(const SamplerSpec& spec,
                                    const EvalContext& ctx,
                                    const std::vector<QueryId>& query_sample) {
  spec.validate();
  if (spec.task == TaskKind::Mixture) {
    std::vector<SamplingDistribution> built;
    built.reserve(spec.components.size());
    for (const SamplerSpec& c : spec.components) {
      SamplerOutcome out = build_sampler(c, ctx, query_sample);
      if (is_degenerate(out))
        throw reuse_error("mixture component '" + c.id + "' is degenerate");
      built.push_back(std::get<SamplingDistribution>(std::move(out)));
    }
    std::vector<const SamplingDistribution*> ptrs;
    for (const auto& d : built) ptrs.push_back(&d);
    return mixture_of(ptrs, spec.counts);
  }

  if (ctx.systems == nullptr)
    throw reuse_error("sampler '" + spec.id + "': no system registry");
  const MetricSpec metric =
      MetricSpec::parse(spec.metric, spec.max_utility, spec.log_base);

  std::vector<std::string> ids = spec.systems;
  if (spec.task == TaskKind::VsBaseline) ids.push_back(spec.baseline);
  std::vector<const System*> resolved;
  resolved.reserve(ids.size());
  for (const std::string& id : ids) {
    auto it = ctx.systems->find(id);
    if (it == ctx.systems->end())
      throw reuse_error("sampler '" + spec.id +
                        "' references unknown system '" + id + "'");
    resolved.push_back(&it->second);
  }

  std::vector<TargetDistribution> tables;
  tables.reserve(resolved.size());
  for (const System* s : resolved)
    tables.push_back(target_distribution(*s, metric, query_sample));

  const ApproxUtility util(spec.approx, resolved, metric.max_utility,
                           ctx.true_utilities, ctx.custom_utilities);

  std::vector<const TargetDistribution*> table_ptrs;
  for (const auto& t : tables) table_ptrs.push_back(&t);

  SamplerOutcome out = IdenticalSystems{};
  switch (spec.task) {
    case TaskKind::Single:
      out = optimal_single(tables[0], util);
      break;
    case TaskKind::Pair:
      out = optimal_pair(tables[0], tables[1], util);
      break;
    case TaskKind::VsBaseline: {
      std::vector<const TargetDistribution*> cands(table_ptrs.begin(),
                                                   table_ptrs.end() - 1);
      out = optimal_vs_baseline(cands, tables.back(), util);
      break;
    }
    case TaskKind::Ranking:
      out = optimal_ranking(table_ptrs, util);
      break;
    case TaskKind::Heuristic:
      out = heuristic_sampler(spec.heuristic, table_ptrs, util);
      break;
    case TaskKind::Mixture:
      throw internal_error("unreachable");
  }

  if (spec.epsilon > 0.0 && !is_degenerate(out)) {
    const std::vector<PartKey> universe = support_universe(table_ptrs);
    out = smooth(std::get<SamplingDistribution>(out), spec.epsilon, universe);
  }
  return out;
}

}  // namespace rankeval
