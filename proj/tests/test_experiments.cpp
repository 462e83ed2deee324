#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "rankeval/harness.hpp"

using namespace rankeval;
using testkit::make_docs;
using testkit::make_queries;
using testkit::random_oracle;
using testkit::random_system;

namespace {

MetricSpec dcg(std::size_t k, double max_u = 4.0) {
  MetricSpec m;
  m.kind = MetricKind::Dcg;
  m.cutoff = k;
  m.max_utility = max_u;
  return m;
}

ApproxUtility const_util(double max_u = 1.0) {
  return ApproxUtility(ApproxUtilitySpec{}, {}, max_u);
}

ApproxUtility true_util(const UtilityOracle& oracle, double max_u) {
  ApproxUtilitySpec spec;
  spec.mode = ApproxMode::TrueUtility;
  return ApproxUtility(spec, {}, max_u,
                       [&oracle](const QueryId& q, const Part& p) {
                         return oracle.part_utility(q, p);
                       });
}

SamplingDistribution random_q(const std::vector<PartKey>& universe, Rng& rng,
                              double concentration = 5.0) {
  SamplingDistribution out;
  double total = 0.0;
  for (const PartKey& key : universe) {
    const double g = rng.gamma(concentration);
    out.entries.push_back({key, g});
    total += g;
  }
  for (auto& e : out.entries) e.second /= total;
  return out;
}

}  // namespace

TEST_CASE("gen_synth") {
  SynthConfig cfg;
  cfg.n_queries = 100;
  cfg.n_docs = 40;
  cfg.seed = 77;

  SECTION("level frequencies match the Dirichlet mean") {
    const SynthData data = gen_synth(cfg);
    double alpha_sum = 0.0;
    for (double a : cfg.dirichlet_alpha) alpha_sum += a;
    std::map<double, long> counts;
    long total = 0;
    for (const auto& [q, row] : data.oracle.table())
      for (const auto& [d, u] : row) {
        counts[u]++;
        ++total;
      }
    REQUIRE(total == long(cfg.n_queries * cfg.n_docs));
    for (std::size_t k = 0; k < cfg.utility_levels.size(); ++k) {
      const double p = cfg.dirichlet_alpha[k] / alpha_sum;
      const double freq =
          double(counts[cfg.utility_levels[k]]) / double(total);
      const double sigma = std::sqrt(p * (1.0 - p) / double(total));
      CHECK(std::abs(freq - p) < 3.0 * sigma);
    }
  }

  SECTION("the ideal system ranks by descending utility") {
    const SynthData data = gen_synth(cfg);
    for (const QueryId& q : data.queries) {
      const auto& docs = data.opt.rankings.at(q).docs;
      for (std::size_t r = 1; r < docs.size(); ++r) {
        const double prev = data.oracle.doc_value(q, docs[r - 1]);
        const double cur = data.oracle.doc_value(q, docs[r]);
        CHECK(prev >= cur);
        if (prev == cur) CHECK(docs[r - 1] < docs[r]);
      }
    }
  }

  SECTION("same seed reproduces the oracle table") {
    const SynthData a = gen_synth(cfg);
    const SynthData b = gen_synth(cfg);
    CHECK(a.oracle.table() == b.oracle.table());
    SynthConfig other = cfg;
    other.seed = 78;
    CHECK(gen_synth(other).oracle.table() != a.oracle.table());
  }

  SECTION("full-scale preset sizes") {
    const SynthConfig full = SynthConfig::paper_scale(1);
    CHECK(full.n_queries == 6000);
    CHECK(full.n_docs == 2000);
    CHECK(full.dirichlet_alpha ==
          std::vector<double>{0.54, 0.25, 0.175, 0.03, 0.005});
  }

  SECTION("config validation") {
    SynthConfig bad = cfg;
    bad.dirichlet_alpha = {0.5, -0.1};
    CHECK_THROWS_AS(gen_synth(bad), input_error);
    bad = cfg;
    bad.utility_levels = {0, 1, 1, 2, 3};
    CHECK_THROWS_AS(gen_synth(bad), input_error);
  }
}

TEST_CASE("derive_system") {
  System base;
  base.id = "B";
  base.rankings["q"] = RankedList{"q", {"a", "b", "c", "d"}, 0};

  SECTION("shift by zero is the identity") {
    const System s =
        derive_system(base, SystemTransform{SystemTransform::Kind::Shift, 0});
    CHECK(s.rankings.at("q").docs == base.rankings.at("q").docs);
  }

  SECTION("rev reverses the prefix") {
    const System s =
        derive_system(base, SystemTransform{SystemTransform::Kind::Rev, 2});
    CHECK(s.rankings.at("q").docs ==
          std::vector<DocId>({"b", "a", "c", "d"}));
    CHECK(s.id == "REV-2");
  }

  SECTION("shift wraps the tail to the front") {
    System abc;
    abc.id = "B";
    abc.rankings["q"] = RankedList{"q", {"a", "b", "c"}, 0};
    const System s =
        derive_system(abc, SystemTransform{SystemTransform::Kind::Shift, 1});
    CHECK(s.rankings.at("q").docs == std::vector<DocId>({"c", "a", "b"}));
  }

  SECTION("transforms permute each ranking") {
    Rng rng(3);
    const auto queries = make_queries(4);
    const auto docs = make_docs(12);
    const System sys = random_system("S", queries, docs, rng);
    for (const auto& t :
         {SystemTransform{SystemTransform::Kind::Shift, 5},
          SystemTransform{SystemTransform::Kind::Rev, 7}}) {
      const System derived = derive_system(sys, t);
      for (const QueryId& q : queries) {
        auto a = sys.rankings.at(q).docs;
        auto b = derived.rankings.at(q).docs;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        CHECK(a == b);
      }
    }
  }

  SECTION("m beyond the list length is an error") {
    CHECK_THROWS_AS(
        derive_system(base, SystemTransform{SystemTransform::Kind::Shift, 5}),
        input_error);
  }

  SECTION("transform grammar") {
    CHECK(SystemTransform::parse("opt").name() == "OPT");
    CHECK(SystemTransform::parse("shift:5").m == 5);
    CHECK(SystemTransform::parse("rev:75").name() == "REV-75");
    CHECK_THROWS_AS(SystemTransform::parse("spin:3"), input_error);
    CHECK_THROWS_AS(SystemTransform::parse("shift"), input_error);
    CHECK_THROWS_AS(SystemTransform::parse("shift:x"), input_error);
  }
}

TEST_CASE("shallow_pool") {
  Rng rng(9);
  const auto queries = make_queries(6);
  const auto docs = make_docs(10);
  const System sys = random_system("S", queries, docs, rng);
  const UtilityOracle oracle = random_oracle(queries, docs, rng);
  const MetricSpec metric = dcg(8);
  const double exact = exact_utility(sys, oracle, metric, queries);

  SECTION("judging to the cutoff reproduces the exact value") {
    CHECK(shallow_pool(sys, oracle, metric, 8 * queries.size(), queries) ==
          exact);
    CHECK(shallow_pool(sys, oracle, metric, 10 * queries.size(), queries) ==
          exact);
  }

  SECTION("never above the exact value") {
    for (std::size_t budget_per_query = 1; budget_per_query <= 10;
         ++budget_per_query) {
      const double pooled = shallow_pool(
          sys, oracle, metric, budget_per_query * queries.size(), queries);
      CHECK(pooled <= exact);
    }
  }

  SECTION("shallow budgets underestimate badly") {
    const double pooled =
        shallow_pool(sys, oracle, metric, 1 * queries.size(), queries);
    CHECK(pooled < exact);
  }

  SECTION("budget below one judgment per query is an error") {
    CHECK_THROWS_AS(shallow_pool(sys, oracle, metric, 3, queries),
                    input_error);
  }
}

TEST_CASE("deep_pool") {
  Rng rng(10);
  const auto queries = make_queries(8);
  const auto docs = make_docs(10);
  const System sys = random_system("S", queries, docs, rng);
  const UtilityOracle oracle = random_oracle(queries, docs, rng);
  const MetricSpec metric = dcg(8);
  const double exact = exact_utility(sys, oracle, metric, queries);

  SECTION("every query judged to the cutoff reproduces the exact value") {
    const double pooled = deep_pool(sys, oracle, metric,
                                    queries.size() * 8, 0, queries, 1);
    CHECK(pooled == Catch::Approx(exact).epsilon(1e-12));
  }

  SECTION("replicated subsampled pools center on the exact value") {
    const int replicates = 600;
    double sum = 0.0, sq = 0.0;
    for (int r = 0; r < replicates; ++r) {
      const double v =
          deep_pool(sys, oracle, metric, 3 * 8, 0, queries, derive_seed(5, r));
      sum += v;
      sq += v * v;
    }
    const double mean = sum / replicates;
    const double std_of_mean =
        std::sqrt((sq / replicates - mean * mean) / replicates);
    CHECK(std::abs(mean - exact) < 3.0 * std_of_mean);
  }

  SECTION("budget below one pooled query is an error") {
    CHECK_THROWS_AS(deep_pool(sys, oracle, metric, 5, 0, queries, 1),
                    input_error);
  }
}

TEST_CASE("analytic_variance") {
  Rng rng(12);
  const auto queries = make_queries(6);
  const auto docs = make_docs(8);
  const UtilityOracle oracle = random_oracle(queries, docs, rng);
  const System s0 = random_system("S0", queries, docs, rng);
  const System s1 = random_system("S1", queries, docs, rng);
  const MetricSpec metric = dcg(8);

  SECTION("zero variance for the exact single-system sampler") {
    UtilityOracle positive;
    positive.max_utility = 4.0;
    Rng prng(13);
    for (const QueryId& q : queries)
      for (const DocId& d : docs) positive.set(q, d, 0.5 + prng.uniform());
    const TargetDistribution w = target_distribution(s0, metric, queries);
    const SamplingDistribution q = optimal_single(w, true_util(positive, 4.0));
    const EvalTask task{EvalTask::Kind::Single, {&s0}, nullptr};
    const double mu = exact_utility(w, positive);
    CHECK(analytic_variance(q, task, positive, metric, queries, 1) <
          1e-12 * mu * mu);
  }

  SECTION("identical systems have a zero-variance difference") {
    System copy = s0;
    copy.id = "copy";
    const TargetDistribution w = target_distribution(s0, metric, queries);
    const SamplingDistribution q = optimal_single(w, const_util());
    const EvalTask task{EvalTask::Kind::Pair, {&s0, &copy}, nullptr};
    CHECK(analytic_variance(q, task, oracle, metric, queries, 1) == 0.0);
  }

  SECTION("agrees with an independent enumeration") {
    const TargetDistribution wa = target_distribution(s0, metric, queries);
    const TargetDistribution wb = target_distribution(s1, metric, queries);
    const EvalTask task{EvalTask::Kind::Pair, {&s0, &s1}, nullptr};
    const TaskTables tables = build_task_tables(task, oracle, metric, queries);
    const std::vector<PartKey> universe = support_universe({&wa, &wb});
    Rng qrng(14);
    for (int trial = 0; trial < 20; ++trial) {
      const SamplingDistribution q = random_q(universe, qrng);
      double ez = 0.0, ez2 = 0.0;
      for (const auto& [key, prob] : q.entries) {
        const double z = oracle.part_utility(key.query, key.part) *
                         (wa.weight_at(key) - wb.weight_at(key)) / prob;
        ez += prob * z;
        ez2 += prob * z * z;
      }
      const double independent = ez2 - ez * ez;
      const double lib = analytic_variance(q, tables, 1);
      CHECK(lib == Catch::Approx(independent).margin(1e-9));
      CHECK(lib >= -1e-12);
    }
  }

  SECTION("support violations raise an error") {
    const MetricSpec shallow = dcg(4);  // top-4 supports differ across systems
    const TargetDistribution wa = target_distribution(s0, shallow, queries);
    const SamplingDistribution q = optimal_single(wa, const_util());
    const EvalTask task{EvalTask::Kind::Pair, {&s0, &s1}, nullptr};
    // q only covers s0's support; the pair numerator needs s1's slots too
    CHECK_THROWS_AS(analytic_variance(q, task, oracle, shallow, queries, 1),
                    input_error);
  }

  SECTION("matches the empirical replicate variance") {
    const TargetDistribution wa = target_distribution(s0, metric, queries);
    const TargetDistribution wb = target_distribution(s1, metric, queries);
    const SamplingDistribution q = heuristic_sampler(
        HeuristicKind::NaiveAverage, {&wa, &wb}, const_util());
    const EvalTask task{EvalTask::Kind::Single, {&s0}, nullptr};
    const TaskTables tables = build_task_tables(task, oracle, metric, queries);
    const std::size_t n = 30;
    const double predicted = analytic_variance(q, tables, n);

    const int replicates = 2000;
    std::vector<double> estimates;
    estimates.reserve(replicates);
    for (int r = 0; r < replicates; ++r) {
      double mean = 0.0;
      for (const DrawRecord& d : draw(q, n, derive_seed(1000, r))) {
        const std::ptrdiff_t slot = tables.slot_of(d.key);
        if (slot >= 0)
          mean += tables.utility[slot] * tables.numerators[0][slot] / d.q_prob;
      }
      estimates.push_back(mean / double(n));
    }
    double mean = 0.0;
    for (double e : estimates) mean += e;
    mean /= replicates;
    double s2 = 0.0, m4 = 0.0;
    for (double e : estimates) {
      const double d = e - mean;
      s2 += d * d;
      m4 += d * d * d * d;
    }
    s2 /= (replicates - 1);
    m4 /= replicates;
    const double excess = std::max(0.0, m4 / (s2 * s2) - 3.0);
    const double se_of_s2 = s2 * std::sqrt((2.0 + excess) / replicates);
    CHECK(std::abs(s2 - predicted) < 3.0 * se_of_s2);
  }
}

TEST_CASE("tau objective is minimized by the entrywise mean") {
  Rng rng(15);
  const auto queries = make_queries(6);
  const auto docs = make_docs(8);
  const UtilityOracle oracle = random_oracle(queries, docs, rng);
  const MetricSpec metric = dcg(8);
  std::vector<System> systems;
  std::vector<TargetDistribution> tables;
  for (int i = 0; i < 5; ++i)
    systems.push_back(
        random_system("S" + std::to_string(i), queries, docs, rng));
  std::vector<const TargetDistribution*> ptrs;
  for (const System& s : systems)
    tables.push_back(target_distribution(s, metric, queries));
  for (const auto& t : tables) ptrs.push_back(&t);

  const std::vector<PartKey> universe = support_universe(ptrs);
  std::vector<std::vector<double>> weights;
  for (const auto& t : tables) weights.push_back(align_weights(t, universe));
  std::vector<double> utility(universe.size());
  for (std::size_t i = 0; i < universe.size(); ++i)
    utility[i] = oracle.part_utility(universe[i].query, universe[i].part);

  const TargetDistribution tau = optimal_tau(ptrs);
  const std::vector<double> tau_mean = align_weights(tau, universe);
  const double best = tau_objective(weights, tau_mean, utility);

  SECTION("100 random perturbed baselines never beat the mean") {
    double mass = 0.0;
    for (double w : tau_mean) mass += w;
    Rng prng(16);
    for (int trial = 0; trial < 100; ++trial) {
      // multiplicative gamma noise, renormalized to the same total mass
      std::vector<double> perturbed(tau_mean.size());
      double total = 0.0;
      for (std::size_t i = 0; i < tau_mean.size(); ++i) {
        perturbed[i] = tau_mean[i] * prng.gamma(8.0);
        total += perturbed[i];
      }
      for (double& w : perturbed) w *= mass / total;
      CHECK(best <= tau_objective(weights, perturbed, utility) + 1e-12);
    }
  }

  SECTION("each single system as baseline is no better than the mean") {
    for (const auto& w : weights)
      CHECK(best <= tau_objective(weights, w, utility) + 1e-12);
  }
}

TEST_CASE("pairwise_accuracy is the strict sign agreement") {
  CHECK(pairwise_accuracy(1.0, 0.3) == 1);
  CHECK(pairwise_accuracy(1.0, -0.3) == 0);
  CHECK(pairwise_accuracy(1.0, 0.0) == 0);
  CHECK(pairwise_accuracy(-0.5, -0.1) == 1);
  CHECK(pairwise_accuracy(0.0, 0.5) == 0);
}

TEST_CASE("kendall_tau") {
  const std::vector<std::string> base = {"1", "2", "3", "4", "5"};
  CHECK(kendall_tau(base, base) == 1.0);
  const std::vector<std::string> reversed = {"5", "4", "3", "2", "1"};
  CHECK(kendall_tau(base, reversed) == -1.0);
  const std::vector<std::string> swapped = {"2", "1", "3", "4", "5"};
  CHECK(kendall_tau(base, swapped) == Catch::Approx(0.8));
  CHECK_THROWS_AS(kendall_tau(base, {"1", "2", "3", "4", "6"}), input_error);
  CHECK_THROWS_AS(kendall_tau(base, {"1", "2", "3"}), input_error);
}

TEST_CASE("run_experiment is deterministic and jobs-independent") {
  Rng rng(17);
  const auto queries = make_queries(5);
  const auto docs = make_docs(8);
  const UtilityOracle oracle = random_oracle(queries, docs, rng);
  std::vector<System> systems;
  std::vector<const System*> ptrs;
  for (int i = 0; i < 4; ++i)
    systems.push_back(
        random_system("S" + std::to_string(i), queries, docs, rng));
  for (const System& s : systems) ptrs.push_back(&s);
  const MetricSpec metric = dcg(8);

  ExperimentSpec spec;
  spec.scenario = ExperimentSpec::Scenario::Pair;
  spec.samplers = {"qstar", "naive"};
  spec.budgets = {10, 20};
  spec.replicates = 3;
  spec.seed = 5;

  const ExperimentReport a = run_experiment(spec, ptrs, oracle, metric, queries);
  const ExperimentReport b = run_experiment(spec, ptrs, oracle, metric, queries);
  CHECK(a.aggregate_csv == b.aggregate_csv);
  CHECK(a.replicate_csv == b.replicate_csv);

  ExperimentSpec threaded = spec;
  threaded.jobs = 3;
  const ExperimentReport c =
      run_experiment(threaded, ptrs, oracle, metric, queries);
  CHECK(a.aggregate_csv == c.aggregate_csv);
  CHECK(a.replicate_csv == c.replicate_csv);

  // 3 adjacent pairs x 2 samplers x 2 budgets, one estimand each
  const auto count_lines = [](const std::string& text) {
    std::size_t n = 0;
    for (char ch : text)
      if (ch == '\n') ++n;
    return n;
  };
  CHECK(count_lines(a.aggregate_csv) == 1 + 3 * 2 * 2);
  CHECK(count_lines(a.replicate_csv) == 1 + 3 * 2 * 2 * 3);

  SECTION("other scenarios produce their reports") {
    ExperimentSpec single = spec;
    single.scenario = ExperimentSpec::Scenario::Single;
    single.samplers = {"qstar", "target", "uniform"};
    const ExperimentReport r =
        run_experiment(single, ptrs, oracle, metric, queries);
    CHECK(count_lines(r.aggregate_csv) == 1 + 4 * 3 * 2);

    ExperimentSpec vsb = spec;
    vsb.scenario = ExperimentSpec::Scenario::VsBaseline;
    vsb.window = 4;
    const ExperimentReport rv =
        run_experiment(vsb, ptrs, oracle, metric, queries);
    CHECK(count_lines(rv.aggregate_csv) == 1 + 1 * 2 * 2 * 3);

    ExperimentSpec rank = spec;
    rank.scenario = ExperimentSpec::Scenario::Ranking;
    rank.window = 4;
    const ExperimentReport rr =
        run_experiment(rank, ptrs, oracle, metric, queries);
    CHECK(count_lines(rr.aggregate_csv) == 1 + 1 * 2 * 2);
    CHECK(rr.replicate_csv.find("ranking") != std::string::npos);
  }
}
