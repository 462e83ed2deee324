#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "estimation.hpp"
#include "experiments.hpp"

namespace rankeval {

//! A replicated sampling study: build the scenario's comparison units from
//! the systems' true performance order, run each configured sampler at each
//! budget across seeded replicates, and report per-replicate and aggregate
//! tables (CSV). Replicates use seeds derived from (seed, job index), so
//! results are independent of the worker count.
struct ExperimentSpec {
  enum class Scenario { Single, Pair, VsBaseline, Ranking };

  Scenario scenario = Scenario::Single;
  std::vector<std::string> samplers = {"qstar", "naive", "uniform"};
  std::vector<std::size_t> budgets;
  std::size_t replicates = 100;
  std::uint64_t seed = 1;
  double epsilon = 0.0;
  ApproxUtilitySpec approx;
  double alpha = 0.05;
  std::size_t window = 5;
  std::size_t jobs = 1;
};

inline std::string scenario_name(ExperimentSpec::Scenario s) {
  switch (s) {
    case ExperimentSpec::Scenario::Single: return "single";
    case ExperimentSpec::Scenario::Pair: return "pair";
    case ExperimentSpec::Scenario::VsBaseline: return "vs_baseline";
    case ExperimentSpec::Scenario::Ranking: return "ranking";
  }
  throw internal_error("scenario_name: unknown scenario");
}

inline ExperimentSpec::Scenario parse_scenario(const std::string& s) {
  if (s == "single") return ExperimentSpec::Scenario::Single;
  if (s == "pair") return ExperimentSpec::Scenario::Pair;
  if (s == "vs_baseline" || s == "vs-baseline")
    return ExperimentSpec::Scenario::VsBaseline;
  if (s == "ranking") return ExperimentSpec::Scenario::Ranking;
  throw input_error("unknown scenario '" + s + "'");
}

struct ExperimentReport {
  std::string aggregate_csv;
  std::string replicate_csv;
};

namespace detail {

struct HarnessUnit {
  std::string label;
  EvalTask task;
  TaskTables tables;
  std::vector<std::string> true_order;  // ranking: ids best-first
};

struct HarnessSampler {
  std::string name;
  bool degenerate = false;
  SamplingDistribution dist;
  double sigma_times_n = 0.0;  // sum over estimands of Var_q[z]
};

struct HarnessResult {
  std::vector<double> estimate;
  std::vector<double> std_error;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  std::vector<int> covered;
  std::vector<int> correct;
  double kendall = 0.0;
};

inline HarnessResult run_replicate(const HarnessUnit& unit,
                                   const HarnessSampler& sampler,
                                   std::size_t budget, std::uint64_t seed,
                                   double alpha,
                                   ExperimentSpec::Scenario scenario) {
  const std::size_t k = unit.tables.estimands.size();
  HarnessResult r;
  r.estimate.assign(k, 0.0);
  r.std_error.assign(k, 0.0);
  r.ci_low.assign(k, 0.0);
  r.ci_high.assign(k, 0.0);
  r.covered.assign(k, 0);
  r.correct.assign(k, 0);

  if (!sampler.degenerate) {
    const std::vector<DrawRecord> draws = draw(sampler.dist, budget, seed);
    std::vector<std::vector<double>> terms(k);
    for (auto& t : terms) t.reserve(draws.size());
    for (const DrawRecord& d : draws) {
      const std::ptrdiff_t slot = unit.tables.slot_of(d.key);
      for (std::size_t j = 0; j < k; ++j) {
        const double numerator =
            slot < 0 ? 0.0
                     : unit.tables.utility[slot] * unit.tables.numerators[j][slot];
        terms[j].push_back(numerator / d.q_prob);
      }
    }
    for (std::size_t j = 0; j < k; ++j) {
      KahanSum sum;
      for (double t : terms[j]) sum.add(t);
      const double value = sum.value() / double(draws.size());
      KahanSum squares;
      for (double t : terms[j]) squares.add((t - value) * (t - value));
      const double sigma =
          std::sqrt(std::max(squares.value(), 0.0) / double(draws.size() - 1));
      r.estimate[j] = value;
      r.std_error[j] = sigma;
      const auto [lo, hi] =
          confidence_interval(value, sigma, draws.size(), alpha);
      r.ci_low[j] = lo;
      r.ci_high[j] = hi;
    }
  }

  for (std::size_t j = 0; j < k; ++j) {
    const double truth = unit.tables.exact[j];
    r.covered[j] =
        (r.ci_low[j] <= truth && truth <= r.ci_high[j]) ? 1 : 0;
    r.correct[j] = pairwise_accuracy(truth, r.estimate[j]);
  }

  if (scenario == ExperimentSpec::Scenario::Ranking) {
    std::vector<std::pair<double, std::string>> order;
    for (std::size_t j = 0; j < k; ++j)
      order.emplace_back(r.estimate[j], unit.task.systems[j]->id);
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    std::vector<std::string> estimated;
    for (auto& [v, id] : order) estimated.push_back(std::move(id));
    r.kendall = kendall_tau(estimated, unit.true_order);
  }
  return r;
}

inline std::string csv_cell(double v) { return format_double(v); }

}  // namespace detail

inline ExperimentReport run_experiment(const ExperimentSpec& spec,
                                       const std::vector<const System*>& systems,
                                       const UtilityOracle& oracle,
                                       const MetricSpec& metric,
                                       const std::vector<QueryId>& query_sample) {
  using Scenario = ExperimentSpec::Scenario;
  metric.validate();
  check_query_sample(query_sample);
  if (systems.empty()) throw input_error("experiment: no systems");
  if (spec.budgets.empty()) throw input_error("experiment: no budgets");
  for (std::size_t b : spec.budgets)
    if (b < 2) throw input_error("experiment: budgets must be >= 2");
  if (spec.replicates == 0)
    throw input_error("experiment: replicates must be >= 1");
  if (spec.samplers.empty()) throw input_error("experiment: no samplers");
  for (const std::string& s : spec.samplers)
    if (s != "qstar" && s != "naive" && s != "uniform" && s != "target")
      throw input_error("experiment: unknown sampler '" + s + "'");

  // True-performance order, best first; ties break by id.
  std::vector<std::pair<double, const System*>> ranked;
  for (const System* s : systems)
    ranked.emplace_back(exact_utility(*s, oracle, metric, query_sample), s);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second->id < b.second->id;
  });
  std::vector<const System*> by_truth;
  for (auto& [v, s] : ranked) by_truth.push_back(s);

  // Comparison units.
  std::vector<detail::HarnessUnit> units;
  switch (spec.scenario) {
    case Scenario::Single:
      for (const System* s : by_truth) {
        detail::HarnessUnit u;
        u.label = s->id;
        u.task = {EvalTask::Kind::Single, {s}, nullptr};
        units.push_back(std::move(u));
      }
      break;
    case Scenario::Pair:
      if (by_truth.size() < 2)
        throw input_error("experiment: pair scenario needs >= 2 systems");
      for (std::size_t i = 0; i + 1 < by_truth.size(); ++i) {
        detail::HarnessUnit u;
        u.label = by_truth[i]->id + "|" + by_truth[i + 1]->id;
        u.task = {EvalTask::Kind::Pair, {by_truth[i], by_truth[i + 1]},
                  nullptr};
        units.push_back(std::move(u));
      }
      break;
    case Scenario::VsBaseline:
    case Scenario::Ranking: {
      if (spec.window < 2)
        throw input_error("experiment: window must be >= 2");
      if (by_truth.size() < spec.window)
        throw input_error("experiment: window larger than system count");
      for (std::size_t i = 0; i + spec.window <= by_truth.size(); ++i) {
        detail::HarnessUnit u;
        std::vector<const System*> in_window(by_truth.begin() + i,
                                             by_truth.begin() + i + spec.window);
        if (spec.scenario == Scenario::VsBaseline) {
          const System* middle = in_window[spec.window / 2];
          std::vector<const System*> candidates;
          for (const System* s : in_window)
            if (s != middle) candidates.push_back(s);
          u.label = "win" + std::to_string(i) + "(base=" + middle->id + ")";
          u.task = {EvalTask::Kind::VsBaseline, candidates, middle};
        } else {
          u.label = "win" + std::to_string(i);
          u.task = {EvalTask::Kind::Ranking, in_window, nullptr};
          for (const System* s : in_window) u.true_order.push_back(s->id);
        }
        units.push_back(std::move(u));
      }
      break;
    }
  }

  const PartValueFn truth_fn = [&oracle](const QueryId& q, const Part& p) {
    return oracle.part_utility(q, p);
  };

  // Build task tables and every configured sampler per unit.
  std::vector<std::vector<detail::HarnessSampler>> built(units.size());
  for (std::size_t ui = 0; ui < units.size(); ++ui) {
    detail::HarnessUnit& unit = units[ui];
    unit.tables = build_task_tables(unit.task, oracle, metric, query_sample);

    std::vector<const System*> participating = unit.task.systems;
    if (unit.task.baseline != nullptr)
      participating.push_back(unit.task.baseline);
    std::vector<TargetDistribution> tables;
    tables.reserve(participating.size());
    for (const System* s : participating)
      tables.push_back(target_distribution(*s, metric, query_sample));
    std::vector<const TargetDistribution*> ptrs;
    for (const auto& t : tables) ptrs.push_back(&t);
    const std::vector<PartKey> universe = support_universe(ptrs);
    const ApproxUtility util(spec.approx, participating, metric.max_utility,
                             truth_fn, nullptr);
    const ApproxUtility flat(ApproxUtilitySpec{}, participating,
                             metric.max_utility, truth_fn, nullptr);

    for (const std::string& name : spec.samplers) {
      detail::HarnessSampler hs;
      hs.name = name;
      SamplerOutcome out = IdenticalSystems{};
      if (name == "qstar") {
        switch (unit.task.kind) {
          case EvalTask::Kind::Single:
            out = optimal_single(tables[0], util);
            break;
          case EvalTask::Kind::Pair:
            out = optimal_pair(tables[0], tables[1], util);
            break;
          case EvalTask::Kind::VsBaseline: {
            std::vector<const TargetDistribution*> cands(ptrs.begin(),
                                                         ptrs.end() - 1);
            out = optimal_vs_baseline(cands, tables.back(), util);
            break;
          }
          case EvalTask::Kind::Ranking:
            out = optimal_ranking(ptrs, util);
            break;
        }
      } else if (name == "naive") {
        out = heuristic_sampler(HeuristicKind::NaiveAverage, ptrs, util);
      } else if (name == "uniform") {
        out = heuristic_sampler(HeuristicKind::Uniform, ptrs, flat);
      } else {
        out = heuristic_sampler(HeuristicKind::TargetOnly, ptrs, flat);
      }
      if (is_degenerate(out)) {
        hs.degenerate = true;
      } else {
        hs.dist = std::get<SamplingDistribution>(std::move(out));
        if (spec.epsilon > 0.0)
          hs.dist = smooth(hs.dist, spec.epsilon, universe);
        hs.sigma_times_n = analytic_variance(hs.dist, unit.tables, 1);
      }
      built[ui].push_back(std::move(hs));
    }
  }

  // Flat job list: seeds depend only on (spec.seed, job index).
  struct Job {
    std::size_t unit, sampler, budget, rep;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  std::uint64_t counter = 0;
  for (std::size_t ui = 0; ui < units.size(); ++ui)
    for (std::size_t si = 0; si < spec.samplers.size(); ++si)
      for (std::size_t bi = 0; bi < spec.budgets.size(); ++bi)
        for (std::size_t r = 0; r < spec.replicates; ++r)
          jobs.push_back({ui, si, bi, r, derive_seed(spec.seed, counter++)});

  std::vector<detail::HarnessResult> results(jobs.size());
  const std::size_t workers =
      std::max<std::size_t>(1, std::min(spec.jobs, jobs.size()));
  const auto worker = [&](std::size_t w) {
    for (std::size_t i = w; i < jobs.size(); i += workers) {
      const Job& job = jobs[i];
      results[i] = detail::run_replicate(
          units[job.unit], built[job.unit][job.sampler],
          spec.budgets[job.budget], job.seed, spec.alpha, spec.scenario);
    }
  };
  if (workers == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }

  // Emit per-replicate rows and aggregates in fixed job order.
  const std::string scenario = scenario_name(spec.scenario);
  const bool ranking = spec.scenario == Scenario::Ranking;
  std::string rep_csv =
      "scenario,metric,sampler,budget,target,estimand,replicate,estimate,"
      "std_error,ci_low,ci_high,covered,correct,kendall_tau\n";
  std::string agg_csv =
      "scenario,metric,sampler,budget,target,estimand,true_value,"
      "mean_estimate,empirical_std,mean_std_error,analytic_sigma_times_n,"
      "coverage,accuracy,mean_kendall_tau,replicates\n";

  std::size_t job_index = 0;
  for (std::size_t ui = 0; ui < units.size(); ++ui) {
    const detail::HarnessUnit& unit = units[ui];
    const std::size_t k = unit.tables.estimands.size();
    for (std::size_t si = 0; si < spec.samplers.size(); ++si) {
      const detail::HarnessSampler& hs = built[ui][si];
      for (std::size_t bi = 0; bi < spec.budgets.size(); ++bi) {
        const std::size_t base_job = job_index;
        job_index += spec.replicates;
        const std::string prefix = scenario + "," + metric.name() + "," +
                                   hs.name + "," +
                                   std::to_string(spec.budgets[bi]) + "," +
                                   unit.label + ",";

        for (std::size_t r = 0; r < spec.replicates; ++r) {
          const detail::HarnessResult& res = results[base_job + r];
          if (ranking) {
            rep_csv += prefix + "ranking," + std::to_string(r) + ",,,,,,," +
                       detail::csv_cell(res.kendall) + "\n";
            continue;
          }
          for (std::size_t j = 0; j < k; ++j) {
            rep_csv += prefix + unit.tables.estimands[j] + "," +
                       std::to_string(r) + "," +
                       detail::csv_cell(res.estimate[j]) + "," +
                       detail::csv_cell(res.std_error[j]) + "," +
                       detail::csv_cell(res.ci_low[j]) + "," +
                       detail::csv_cell(res.ci_high[j]) + ",";
            if (spec.scenario == Scenario::Single)
              rep_csv += std::to_string(res.covered[j]) + ",,\n";
            else
              rep_csv += "," + std::to_string(res.correct[j]) + ",\n";
          }
        }

        const double n_reps = double(spec.replicates);
        if (ranking) {
          KahanSum mean_kendall;
          for (std::size_t r = 0; r < spec.replicates; ++r)
            mean_kendall.add(results[base_job + r].kendall);
          agg_csv += prefix + "ranking,,,,," +
                     detail::csv_cell(hs.sigma_times_n) + ",,," +
                     detail::csv_cell(mean_kendall.value() / n_reps) + "," +
                     std::to_string(spec.replicates) + "\n";
          continue;
        }
        for (std::size_t j = 0; j < k; ++j) {
          KahanSum mean_sum, sigma_sum;
          for (std::size_t r = 0; r < spec.replicates; ++r) {
            mean_sum.add(results[base_job + r].estimate[j]);
            sigma_sum.add(results[base_job + r].std_error[j]);
          }
          const double mean = mean_sum.value() / n_reps;
          std::string empirical_std;
          if (spec.replicates >= 2) {
            KahanSum squares;
            for (std::size_t r = 0; r < spec.replicates; ++r) {
              const double d = results[base_job + r].estimate[j] - mean;
              squares.add(d * d);
            }
            empirical_std = detail::csv_cell(
                std::sqrt(std::max(squares.value(), 0.0) / (n_reps - 1.0)));
          }
          long covered = 0, correct = 0;
          for (std::size_t r = 0; r < spec.replicates; ++r) {
            covered += results[base_job + r].covered[j];
            correct += results[base_job + r].correct[j];
          }
          agg_csv += prefix + unit.tables.estimands[j] + "," +
                     detail::csv_cell(unit.tables.exact[j]) + "," +
                     detail::csv_cell(mean) + "," + empirical_std + "," +
                     detail::csv_cell(sigma_sum.value() / n_reps) + "," +
                     detail::csv_cell(hs.sigma_times_n) + ",";
          if (spec.scenario == Scenario::Single)
            agg_csv += detail::csv_cell(double(covered) / n_reps) + ",,";
          else
            agg_csv += "," + detail::csv_cell(double(correct) / n_reps) + ",";
          agg_csv += "," + std::to_string(spec.replicates) + "\n";
        }
      }
    }
  }

  return {std::move(agg_csv), std::move(rep_csv)};
}

}  // namespace rankeval
