#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "collection.hpp"
#include "core.hpp"
#include "metrics.hpp"
#include "sampling.hpp"

namespace rankeval {

//! A point estimate with its per-sample standard deviation and a normal
//! confidence interval. `std_error` is the sigma-hat of the sampled terms;
//! the interval divides it by sqrt(n).
struct Estimate {
  std::string estimand;
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double alpha = 0.05;
  bool exact_zero = false;
};

struct DiffEstimate {
  Estimate est;
  std::string system_a;
  std::string system_b;
};

//! Inverse standard-normal CDF: rational initial guess plus one Halley
//! refinement against erfc, accurate to near machine precision.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw input_error("normal_quantile: p must be in (0,1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double plow = 0.02425;
  double x = 0.0;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double err = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double step = err * std::sqrt(2.0 * 3.141592653589793238462643383279502884) *
                      std::exp(x * x / 2.0);
  return x - step / (1.0 + x * step / 2.0);
}

//! value +/- z_{alpha/2} * std_error / sqrt(n).
inline std::pair<double, double> confidence_interval(double value,
                                                     double std_error,
                                                     std::size_t n,
                                                     double alpha) {
  if (n < 2) throw input_error("confidence_interval: need n >= 2");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw input_error("confidence_interval: alpha must be in (0,1)");
  if (!(std_error >= 0.0))
    throw input_error("confidence_interval: negative std_error");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const double half = z * std_error / std::sqrt(double(n));
  return {value - half, value + half};
}

namespace detail {

inline double sample_term(const JudgedSample& s, const TargetDistribution& wa,
                          const TargetDistribution* wb) {
  const PartKey key{s.query, s.part};
  double numerator = wa.weight_at(key);
  if (wb != nullptr) numerator -= wb->weight_at(key);
  return s.utility * numerator / s.q_prob;
}

// The core importance-sampling estimate. Multi-segment collections (concat
// merges) combine segment means count-weighted, so the merged estimate is
// bit-identical to the weighted average of the per-segment estimates.
inline Estimate estimate_from_tables(const TestCollection& c,
                                     const TargetDistribution& wa,
                                     const TargetDistribution* wb,
                                     double alpha, std::string estimand) {
  if (c.samples.empty()) throw input_error("estimate: empty collection");
  std::vector<double> terms;
  terms.reserve(c.samples.size());
  for (const JudgedSample& s : c.samples) {
    if (!(s.q_prob >= kMinRecordedProb))
      throw data_error("estimate: recorded probability below 1e-300");
    terms.push_back(sample_term(s, wa, wb));
  }

  const std::vector<std::size_t> segments = c.effective_segments();
  double value = 0.0;
  if (segments.size() == 1) {
    KahanSum sum;
    for (double t : terms) sum.add(t);
    value = sum.value() / double(terms.size());
  } else {
    double weighted = 0.0;
    double count = 0.0;
    std::size_t offset = 0;
    for (std::size_t n_s : segments) {
      KahanSum sum;
      for (std::size_t i = offset; i < offset + n_s; ++i) sum.add(terms[i]);
      const double mean = sum.value() / double(n_s);
      weighted = weighted + double(n_s) * mean;
      count = count + double(n_s);
      offset += n_s;
    }
    value = weighted / count;
  }

  Estimate est;
  est.estimand = std::move(estimand);
  est.value = value;
  est.n = terms.size();
  est.alpha = alpha;
  if (terms.size() >= 2) {
    KahanSum squares;
    for (double t : terms) squares.add((t - value) * (t - value));
    est.std_error =
        std::sqrt(std::max(squares.value(), 0.0) / double(terms.size() - 1));
    const auto [lo, hi] =
        confidence_interval(value, est.std_error, est.n, alpha);
    est.ci_low = lo;
    est.ci_high = hi;
  } else {
    est.std_error = 0.0;
    est.ci_low = est.ci_high = value;
  }
  return est;
}

inline void check_metric_matches(const TestCollection& c,
                                 const MetricSpec& metric) {
  if (metric.name() != c.metric)
    throw input_error("metric '" + metric.name() +
                      "' does not match collection metric '" + c.metric + "'");
}

inline Estimate exact_zero_estimate(std::string estimand, double alpha) {
  Estimate est;
  est.estimand = std::move(estimand);
  est.alpha = alpha;
  est.exact_zero = true;
  return est;
}

}  // namespace detail

//! Importance-sampling estimate of one system's utility from a collection:
//! mean over samples of utility * W / Q.
inline Estimate estimate_utility(const TestCollection& c, const System& system,
                                 const MetricSpec& metric,
                                 double alpha = 0.05) {
  detail::check_metric_matches(c, metric);
  if (c.exact_zero)
    throw input_error(
        "collection is a degenerate identical-systems marker; single-system "
        "utility is not estimable from it");
  const TargetDistribution wa =
      target_distribution(system, metric, c.query_sample);
  return detail::estimate_from_tables(c, wa, nullptr, alpha,
                                      "U(" + system.id + ")");
}

//! Difference estimate: mean of utility * (W_A - W_B) / Q over the same
//! samples. Identical target tables short-circuit to an exact zero.
inline DiffEstimate estimate_diff(const TestCollection& c, const System& a,
                                  const System& b, const MetricSpec& metric,
                                  double alpha = 0.05) {
  detail::check_metric_matches(c, metric);
  const std::string estimand = "Diff(" + a.id + "," + b.id + ")";
  DiffEstimate diff;
  diff.system_a = a.id;
  diff.system_b = b.id;
  if (c.exact_zero) {
    diff.est = detail::exact_zero_estimate(estimand, alpha);
    return diff;
  }
  const TargetDistribution wa =
      target_distribution(a, metric, c.query_sample);
  const TargetDistribution wb =
      target_distribution(b, metric, c.query_sample);
  diff.est = detail::estimate_from_tables(c, wa, &wb, alpha, estimand);
  if (wa.entries == wb.entries) diff.est.exact_zero = true;
  return diff;
}

//! One difference estimate per candidate against the shared baseline, all
//! computed from the same collection.
inline std::vector<DiffEstimate> estimate_vs_baseline(
    const TestCollection& c, const std::vector<const System*>& candidates,
    const System& baseline, const MetricSpec& metric, double alpha = 0.05) {
  detail::check_metric_matches(c, metric);
  if (candidates.empty())
    throw input_error("estimate_vs_baseline: no candidate systems");
  std::vector<DiffEstimate> out;
  out.reserve(candidates.size());
  if (c.exact_zero) {
    for (const System* s : candidates) {
      DiffEstimate diff;
      diff.system_a = s->id;
      diff.system_b = baseline.id;
      diff.est = detail::exact_zero_estimate(
          "Diff(" + s->id + "," + baseline.id + ")", alpha);
      out.push_back(std::move(diff));
    }
    return out;
  }
  const TargetDistribution wb =
      target_distribution(baseline, metric, c.query_sample);
  for (const System* s : candidates) {
    const TargetDistribution wa =
        target_distribution(*s, metric, c.query_sample);
    DiffEstimate diff;
    diff.system_a = s->id;
    diff.system_b = baseline.id;
    diff.est = detail::estimate_from_tables(
        c, wa, &wb, alpha, "Diff(" + s->id + "," + baseline.id + ")");
    if (wa.entries == wb.entries) diff.est.exact_zero = true;
    out.push_back(std::move(diff));
  }
  return out;
}

//! Ranks k systems by their estimated difference against the synthetic
//! mean baseline tau. The tau term is shared, so the order equals ordering
//! by estimated utility on the same collection; ties break by system id.
inline std::vector<DiffEstimate> rank_systems(
    const TestCollection& c, const std::vector<const System*>& systems,
    const MetricSpec& metric, double alpha = 0.05) {
  detail::check_metric_matches(c, metric);
  if (systems.size() < 2) throw input_error("rank_systems: need k >= 2");

  std::vector<DiffEstimate> out;
  out.reserve(systems.size());
  if (c.exact_zero) {
    for (const System* s : systems) {
      DiffEstimate diff;
      diff.system_a = s->id;
      diff.system_b = "tau";
      diff.est =
          detail::exact_zero_estimate("Diff(" + s->id + ",tau)", alpha);
      out.push_back(std::move(diff));
    }
    std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
      return x.system_a < y.system_a;
    });
    return out;
  }

  std::vector<TargetDistribution> tables;
  tables.reserve(systems.size());
  for (const System* s : systems)
    tables.push_back(target_distribution(*s, metric, c.query_sample));

  bool all_equal = true;
  for (std::size_t i = 1; i < tables.size() && all_equal; ++i)
    all_equal = tables[i].entries == tables[0].entries;
  if (all_equal) {
    for (std::size_t i = 0; i < systems.size(); ++i) {
      DiffEstimate diff;
      diff.system_a = systems[i]->id;
      diff.system_b = "tau";
      diff.est = detail::exact_zero_estimate(
          "Diff(" + systems[i]->id + ",tau)", alpha);
      out.push_back(std::move(diff));
    }
    std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
      return x.system_a < y.system_a;
    });
    return out;
  }

  std::vector<const TargetDistribution*> ptrs;
  for (const auto& t : tables) ptrs.push_back(&t);
  const TargetDistribution tau = optimal_tau(ptrs);
  for (std::size_t i = 0; i < systems.size(); ++i) {
    DiffEstimate diff;
    diff.system_a = systems[i]->id;
    diff.system_b = "tau";
    diff.est = detail::estimate_from_tables(
        c, tables[i], &tau, alpha, "Diff(" + systems[i]->id + ",tau)");
    out.push_back(std::move(diff));
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
    if (x.est.value != y.est.value) return x.est.value > y.est.value;
    return x.system_a < y.system_a;
  });
  return out;
}

//! Plug-in ratio of two estimates. Biased in general; no interval emitted.
struct RatioEstimate {
  double value = 0.0;
  bool biased = true;
};

inline RatioEstimate ratio_estimate(const Estimate& numerator,
                                    const Estimate& denominator) {
  if (denominator.value == 0.0)
    throw input_error("ratio_estimate: denominator estimate is zero");
  return {numerator.value / denominator.value, true};
}

// ---------------------------------------------------------------------------
// Reusing and combining collections

enum class MergeMode { Concat, Balance };

//! Concat keeps every sample with its recorded probability and remembers
//! segment boundaries (the estimator then equals the count-weighted average
//! of per-segment estimates). Balance replaces each recorded probability
//! with the count-weighted mixture density of all generating samplers,
//! which requires every sampler spec to be re-evaluable in `ctx`.
inline TestCollection merge_collections(
    const std::vector<const TestCollection*>& parts, MergeMode mode,
    const EvalContext* ctx = nullptr) {
  if (parts.empty()) throw input_error("merge_collections: nothing to merge");
  for (const TestCollection* p : parts) p->validate();
  const TestCollection& first = *parts[0];
  for (const TestCollection* p : parts) {
    if (p->query_sample != first.query_sample)
      throw input_error("merge_collections: different query samples");
    if (p->metric != first.metric || p->max_utility != first.max_utility ||
        p->log_base != first.log_base)
      throw input_error("merge_collections: different metrics");
  }

  TestCollection out;
  out.query_sample = first.query_sample;
  out.metric = first.metric;
  out.max_utility = first.max_utility;
  out.log_base = first.log_base;

  bool all_markers = true;
  for (const TestCollection* p : parts) all_markers &= p->exact_zero;
  if (all_markers) {
    out.exact_zero = true;
    for (const TestCollection* p : parts)
      for (const auto& [id, spec] : p->samplers) out.samplers[id] = spec;
    return out;
  }

  for (const TestCollection* p : parts) {
    for (const auto& [id, spec] : p->samplers) {
      auto it = out.samplers.find(id);
      if (it != out.samplers.end() && it->second.dump() != spec.dump())
        throw data_error("merge_collections: sampler id '" + id +
                         "' maps to conflicting specs");
      out.samplers[id] = spec;
    }
    for (const JudgedSample& s : p->samples) out.samples.push_back(s);
    if (p->samples.empty()) continue;
    for (std::size_t n_s : p->effective_segments())
      out.segments.push_back(n_s);
  }

  if (mode == MergeMode::Concat) {
    out.validate();
    return out;
  }

  if (ctx == nullptr)
    throw reuse_error("merge_collections: balance mode needs a context");

  // Count samples per generating sampler, in sorted-id order.
  std::map<std::string, std::uint64_t> counts;
  for (const JudgedSample& s : out.samples) counts[s.sampler_id]++;

  std::vector<SamplingDistribution> components;
  std::vector<const SamplingDistribution*> component_ptrs;
  std::vector<std::uint64_t> count_list;
  SamplerSpec mix;
  mix.task = TaskKind::Mixture;
  std::string mix_id = "balance(";
  bool first_component = true;
  for (const auto& [id, count] : counts) {
    SamplerOutcome built =
        build_sampler(out.samplers.at(id), *ctx, out.query_sample);
    if (is_degenerate(built))
      throw reuse_error("merge_collections: sampler '" + id +
                        "' re-evaluates as degenerate");
    components.push_back(std::get<SamplingDistribution>(std::move(built)));
    count_list.push_back(count);
    mix.components.push_back(out.samplers.at(id));
    if (!first_component) mix_id += ",";
    mix_id += id + ":" + std::to_string(count);
    first_component = false;
  }
  mix_id += ")";
  mix.id = mix_id;
  mix.counts = count_list;
  for (const auto& c : components) component_ptrs.push_back(&c);
  const SamplingDistribution mixture = mixture_of(component_ptrs, count_list);

  for (JudgedSample& s : out.samples) {
    const double q = mixture.prob_at(PartKey{s.query, s.part});
    if (!(q > 0.0))
      throw internal_error("merge_collections: sampled slot outside mixture");
    s.q_prob = q;
    s.sampler_id = mix_id;
  }
  out.samplers.clear();
  out.samplers[mix_id] = std::move(mix);
  out.segments.clear();  // balance-merged samples form one segment
  out.validate();
  return out;
}

// Conservative reuse check: counts target-support slots that no recorded
// sampler covers. A nonzero count only means the estimate could miss mass
// if those slots carry utility; it is not an error by itself.
inline std::size_t support_gap_count(const TestCollection& c,
                                     const TargetDistribution& target,
                                     const EvalContext& ctx) {
  std::vector<SamplingDistribution> built;
  for (const auto& [id, spec] : c.samplers) {
    SamplerOutcome out = build_sampler(spec, ctx, c.query_sample);
    if (!is_degenerate(out))
      built.push_back(std::get<SamplingDistribution>(std::move(out)));
  }
  std::size_t gaps = 0;
  for (const auto& [key, w] : target.entries) {
    bool covered = false;
    for (const auto& q : built)
      if (q.prob_at(key) > 0.0) {
        covered = true;
        break;
      }
    if (!covered) ++gaps;
  }
  return gaps;
}

}  // namespace rankeval
