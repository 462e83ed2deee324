#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "rankeval/metrics.hpp"

using namespace rankeval;
using testkit::make_docs;
using testkit::make_queries;
using testkit::random_oracle;
using testkit::random_system;

namespace {

MetricSpec prec(std::size_t k) {
  MetricSpec m;
  m.kind = MetricKind::PrecAtK;
  m.cutoff = k;
  m.max_utility = 1.0;
  return m;
}

MetricSpec dcg(std::size_t k, double max_u = 4.0) {
  MetricSpec m;
  m.kind = MetricKind::Dcg;
  m.cutoff = k;
  m.max_utility = max_u;
  return m;
}

}  // namespace

TEST_CASE("part_weight matches the closed forms") {
  CHECK(part_weight(prec(10), {11, 0}, 100) == 0.0);
  CHECK(part_weight(prec(10), {3, 0}, 100) == Catch::Approx(0.1));
  CHECK(part_weight(dcg(100), {1, 0}, 100) == Catch::Approx(1.0));
  CHECK(part_weight(dcg(100), {3, 0}, 100) == Catch::Approx(0.5));

  MetricSpec rbp;
  rbp.kind = MetricKind::Rbp;
  rbp.rbp_p = 0.5;
  CHECK(part_weight(rbp, {3, 0}, 10) == Catch::Approx(0.125));
  CHECK(part_weight(rbp, {1, 0}, 10) == Catch::Approx(0.5));

  MetricSpec mae;
  mae.kind = MetricKind::Mae;
  mae.cutoff = 10;
  CHECK(part_weight(mae, {4, 0}, 10) == Catch::Approx(0.1));
  CHECK(part_weight(mae, {4, 0}, 5) == Catch::Approx(0.2));  // short list

  MetricSpec swaps;
  swaps.kind = MetricKind::SwapCount;
  swaps.cutoff = 10;
  CHECK(part_weight(swaps, {2, 5}, 10) == Catch::Approx(0.1));
  MetricSpec wswaps;
  wswaps.kind = MetricKind::WeightedSwaps;
  wswaps.cutoff = 10;
  CHECK(part_weight(wswaps, {2, 5}, 10) == Catch::Approx(1.0 / (10 * 2 * 5)));
  CHECK(part_weight(wswaps, {2, 11}, 20) == 0.0);  // beyond cutoff

  CHECK_THROWS_AS(part_weight(prec(10), {0, 0}, 5), input_error);
  CHECK_THROWS_AS(part_weight(prec(10), {6, 0}, 5), input_error);
  CHECK_THROWS_AS(part_weight(swaps, {5, 2}, 10), input_error);
  CHECK_THROWS_AS(part_weight(swaps, {3, 0}, 10), input_error);
  CHECK_THROWS_AS(part_weight(prec(10), {2, 3}, 10), input_error);
}

TEST_CASE("metric grammar parses and round-trips") {
  const MetricSpec m = MetricSpec::parse("dcg@100", 4.0);
  CHECK(m.kind == MetricKind::Dcg);
  CHECK(m.cutoff == 100);
  CHECK(m.name() == "dcg@100");

  const MetricSpec r = MetricSpec::parse("rbp@0.8");
  CHECK(r.kind == MetricKind::Rbp);
  CHECK(r.rbp_p == Catch::Approx(0.8));
  CHECK(r.name() == "rbp@0.8");

  CHECK(MetricSpec::parse("prec@10").name() == "prec@10");
  CHECK(MetricSpec::parse("swaps@5").name() == "swaps@5");
  CHECK(MetricSpec::parse("wswaps@5").name() == "wswaps@5");
  CHECK(MetricSpec::parse("gain@3").name() == "gain@3");
  CHECK(MetricSpec::parse("mae@3").name() == "mae@3");
  CHECK(MetricSpec::parse("mse@3").name() == "mse@3");

  CHECK_THROWS_AS(MetricSpec::parse("dcg"), input_error);
  CHECK_THROWS_AS(MetricSpec::parse("ndcg@10"), input_error);
  CHECK_THROWS_AS(MetricSpec::parse("prec@0"), input_error);
  CHECK_THROWS_AS(MetricSpec::parse("prec@-3"), input_error);
  CHECK_THROWS_AS(MetricSpec::parse("rbp@1.5"), input_error);
  CHECK_THROWS_AS(MetricSpec::parse("dcg@ten"), input_error);
}

TEST_CASE("enumerated part weights sum to the recorded normalizer") {
  Rng rng(3);
  const auto queries = make_queries(4);
  const auto docs = make_docs(12);
  const System sys = random_system("S", queries, docs, rng);

  std::vector<MetricSpec> metrics = {prec(5), dcg(8)};
  MetricSpec rbp;
  rbp.kind = MetricKind::Rbp;
  rbp.rbp_p = 0.7;
  metrics.push_back(rbp);
  MetricSpec swaps;
  swaps.kind = MetricKind::SwapCount;
  swaps.cutoff = 6;
  metrics.push_back(swaps);

  for (const MetricSpec& m : metrics) {
    const TargetDistribution t = target_distribution(sys, m, queries);
    std::map<QueryId, KahanSum> per_query;
    for (const auto& [key, w] : t.entries) {
      REQUIRE(w >= 0.0);
      per_query[key.query].add(w * double(queries.size()));
    }
    for (const QueryId& q : queries)
      CHECK(per_query[q].value() ==
            Catch::Approx(t.query_normalizer.at(q)).epsilon(1e-12));
  }
}

TEST_CASE("target_distribution support matches the metric") {
  const auto queries = make_queries(1);
  const auto docs = make_docs(100);
  System sys;
  sys.id = "S";
  sys.rankings[queries[0]] = RankedList{queries[0], docs, 0};

  SECTION("prec@10 puts 1/10 on each top-10 slot") {
    const TargetDistribution t = target_distribution(sys, prec(10), queries);
    REQUIRE(t.entries.size() == 10);
    for (const auto& [key, w] : t.entries) CHECK(w == Catch::Approx(0.1));
    CHECK(t.query_normalizer.at(queries[0]) == Catch::Approx(1.0));
  }

  SECTION("dcg@100 on 50 queries has 5000 entries") {
    const auto qs = make_queries(50);
    System s50;
    s50.id = "S50";
    for (const auto& q : qs) s50.rankings[q] = RankedList{q, docs, 0};
    const TargetDistribution t = target_distribution(s50, dcg(100), qs);
    CHECK(t.entries.size() == 5000);
  }

  SECTION("identical rankings give identical tables") {
    System sys2 = sys;
    sys2.id = "T";
    const TargetDistribution a = target_distribution(sys, dcg(100), queries);
    const TargetDistribution b = target_distribution(sys2, dcg(100), queries);
    CHECK(a.entries == b.entries);
    CHECK(a.query_normalizer == b.query_normalizer);
  }

  SECTION("repeat calls are bit-identical") {
    const TargetDistribution a = target_distribution(sys, dcg(100), queries);
    const TargetDistribution b = target_distribution(sys, dcg(100), queries);
    CHECK(a.entries == b.entries);
  }

  SECTION("missing query raises coverage_error") {
    const auto qs = make_queries(2);
    CHECK_THROWS_AS(target_distribution(sys, prec(10), qs), coverage_error);
  }
}

TEST_CASE("exact_utility on hand-checkable instances") {
  SECTION("one query, two docs, dcg, u = (1, 0)") {
    const QueryId q = "q0";
    System sys;
    sys.id = "S";
    sys.rankings[q] = RankedList{q, {"a", "b"}, 0};
    UtilityOracle oracle;
    oracle.max_utility = 1.0;
    oracle.set(q, "a", 1.0);
    oracle.set(q, "b", 0.0);
    CHECK(exact_utility(sys, oracle, dcg(2, 1.0), {q}) ==
          Catch::Approx(1.0));
  }

  SECTION("prec@k with all top-k relevant is exactly 1") {
    Rng rng(17);
    const auto queries = make_queries(3);
    const auto docs = make_docs(20);
    const System sys = random_system("S", queries, docs, rng);
    UtilityOracle oracle;
    oracle.max_utility = 1.0;
    for (const auto& q : queries)
      for (std::size_t r = 0; r < 5; ++r)
        oracle.set(q, sys.rankings.at(q).docs[r], 1.0);
    CHECK(exact_utility(sys, oracle, prec(5), queries) == Catch::Approx(1.0));
  }

  SECTION("prec with binary utilities stays in [0,1]") {
    Rng rng(23);
    const auto queries = make_queries(5);
    const auto docs = make_docs(15);
    const System sys = random_system("S", queries, docs, rng);
    const UtilityOracle oracle = random_oracle(queries, docs, rng, {0, 1});
    const double u = exact_utility(sys, oracle, prec(7), queries);
    CHECK(u >= 0.0);
    CHECK(u <= 1.0);
  }
}

// Independent re-implementation: plain nested loops, textbook weight
// formulas, naive summation order. Guards the canonical-order path.
namespace {

double brute_force_dcg(const System& sys, const UtilityOracle& oracle,
                       std::size_t k, double log_base,
                       const std::vector<QueryId>& queries) {
  double total = 0.0;
  for (const QueryId& q : queries) {
    const auto& docs = sys.rankings.at(q).docs;
    double per_query = 0.0;
    for (std::size_t r = 1; r <= std::min(k, docs.size()); ++r)
      per_query += oracle.doc_value(q, docs[r - 1]) /
                   (std::log(1.0 + double(r)) / std::log(log_base));
    total += per_query;
  }
  return total / double(queries.size());
}

double brute_force_swaps(const System& sys, const UtilityOracle& oracle,
                         std::size_t k, const std::vector<QueryId>& queries) {
  double total = 0.0;
  for (const QueryId& q : queries) {
    const auto& docs = sys.rankings.at(q).docs;
    const std::size_t depth = std::min(k, docs.size());
    double per_query = 0.0;
    for (std::size_t i = 0; i < depth; ++i)
      for (std::size_t j = i + 1; j < depth; ++j)
        if (oracle.doc_value(q, docs[j]) > oracle.doc_value(q, docs[i]))
          per_query += 1.0 / double(depth);
    total += per_query;
  }
  return total / double(queries.size());
}

}  // namespace

TEST_CASE("exact_utility agrees with an independent brute force") {
  Rng rng(31);
  const auto queries = make_queries(30);
  const auto docs = make_docs(20);
  const System sys = random_system("S", queries, docs, rng);
  const UtilityOracle oracle = random_oracle(queries, docs, rng);

  const double lib = exact_utility(sys, oracle, dcg(20), queries);
  const double ref = brute_force_dcg(sys, oracle, 20, 2.0, queries);
  CHECK(std::abs(lib - ref) < 1e-10);

  MetricSpec swaps;
  swaps.kind = MetricKind::SwapCount;
  swaps.cutoff = 10;
  swaps.max_utility = 1.0;
  const double lib_swaps = exact_utility(sys, oracle, swaps, queries);
  const double ref_swaps = brute_force_swaps(sys, oracle, 10, queries);
  CHECK(std::abs(lib_swaps - ref_swaps) < 1e-10);
}

TEST_CASE("short rankings keep weights over available ranks only") {
  const QueryId q = "q0";
  System sys;
  sys.id = "S";
  sys.rankings[q] = RankedList{q, {"a", "b", "c"}, 0};
  const TargetDistribution t = target_distribution(sys, prec(10), {q});
  REQUIRE(t.entries.size() == 3);
  for (const auto& [key, w] : t.entries) CHECK(w == Catch::Approx(0.1));
}

TEST_CASE("pair metrics enumerate distinct ordered pairs") {
  const QueryId q = "q0";
  System sys;
  sys.id = "S";
  sys.rankings[q] = RankedList{q, make_docs(8), 0};
  MetricSpec swaps;
  swaps.kind = MetricKind::SwapCount;
  swaps.cutoff = 5;
  const TargetDistribution t = target_distribution(sys, swaps, {q});
  CHECK(t.entries.size() == 10);  // C(5,2)
  for (const auto& [key, w] : t.entries) {
    CHECK(key.part.is_pair());
    CHECK(key.part.first != key.part.second);
  }
}

TEST_CASE("oracle scores pair parts as swap indicators") {
  UtilityOracle oracle;
  oracle.set("q", "a", 2.0);
  oracle.set("q", "b", 3.0);
  oracle.set("q", "c", 2.0);
  CHECK(oracle.part_utility("q", Part::ordered_pair("a", "b")) == 1.0);
  CHECK(oracle.part_utility("q", Part::ordered_pair("b", "a")) == 0.0);
  CHECK(oracle.part_utility("q", Part::ordered_pair("a", "c")) == 0.0);
  CHECK(oracle.part_utility("q", Part::single("b")) == 3.0);
  CHECK(oracle.judged("q", "a"));
  CHECK_FALSE(oracle.judged("q", "z"));
  CHECK(oracle.doc_value("q", "z") == 0.0);
}
