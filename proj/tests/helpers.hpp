#pragma once

// Shared fixtures for the unit suites: tiny random instances that stay
// enumerable, so every expectation can be checked by direct summation.

#include <algorithm>
#include <string>
#include <vector>

#include "rankeval/metrics.hpp"
#include "rankeval/rng.hpp"

namespace testkit {

using namespace rankeval;

inline std::vector<QueryId> make_queries(std::size_t n) {
  std::vector<QueryId> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_id("q", i, n));
  return out;
}

inline std::vector<DocId> make_docs(std::size_t n) {
  std::vector<DocId> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_id("d", i, n));
  return out;
}

// Random permutation ranking per query.
inline System random_system(const std::string& id,
                            const std::vector<QueryId>& queries,
                            const std::vector<DocId>& docs, Rng& rng) {
  System sys;
  sys.id = id;
  for (const QueryId& q : queries) {
    RankedList list;
    list.query = q;
    list.docs = docs;
    for (std::size_t i = list.docs.size(); i > 1; --i)
      std::swap(list.docs[i - 1], list.docs[rng.index(i)]);
    sys.rankings[q] = std::move(list);
  }
  return sys;
}

// Uniform random utilities over the given levels for every (query, doc).
inline UtilityOracle random_oracle(const std::vector<QueryId>& queries,
                                   const std::vector<DocId>& docs, Rng& rng,
                                   const std::vector<double>& levels = {
                                       0, 1, 2, 3, 4}) {
  UtilityOracle oracle;
  oracle.max_utility = levels.back();
  for (const QueryId& q : queries)
    for (const DocId& d : docs)
      oracle.set(q, d, levels[rng.index(levels.size())]);
  return oracle;
}

// Strictly positive utilities (for zero-variance sampler checks).
inline UtilityOracle positive_oracle(const std::vector<QueryId>& queries,
                                     const std::vector<DocId>& docs,
                                     Rng& rng) {
  UtilityOracle oracle;
  oracle.max_utility = 4.0;
  for (const QueryId& q : queries)
    for (const DocId& d : docs) oracle.set(q, d, 0.5 + 3.5 * rng.uniform());
  return oracle;
}

}  // namespace testkit
