#pragma once

#include <algorithm>
#include <charconv>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace rankeval {

using QueryId = std::string;
using DocId = std::string;

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// bad arguments or malformed user input
struct input_error : error {
  using error::error;
};
// a system does not cover the active query sample
struct coverage_error : error {
  using error::error;
};
// corrupt or inconsistent data files / collections
struct data_error : error {
  using error::error;
};
// a stored sampler cannot be re-evaluated in the current context
struct reuse_error : error {
  using error::error;
};
// broken internal invariant
struct internal_error : error {
  using error::error;
};

// A judgeable unit of a ranking: a single document, or an ordered document
// pair where `first` is ranked above `second`.
struct Part {
  DocId first;
  DocId second;  // empty for single-document parts

  static Part single(DocId d) {
    if (d.empty()) throw input_error("Part: empty doc id");
    return Part{std::move(d), {}};
  }
  static Part ordered_pair(DocId above, DocId below) {
    if (above.empty() || below.empty()) throw input_error("Part: empty doc id");
    if (above == below)
      throw input_error("Part: pair components must be distinct");
    return Part{std::move(above), std::move(below)};
  }
  bool is_pair() const { return !second.empty(); }
  auto operator<=>(const Part&) const = default;
};

// Canonical key for anything indexed by (query, part). Iteration sorted by
// PartKey is the fixed summation order used throughout.
struct PartKey {
  QueryId query;
  Part part;
  auto operator<=>(const PartKey&) const = default;
};

// One system's output for one query, best document first.
struct RankedList {
  QueryId query;
  std::vector<DocId> docs;       // rank r is docs[r-1]
  std::size_t depth_cutoff = 0;  // 0: full list

  std::size_t depth() const {
    return depth_cutoff == 0 ? docs.size()
                             : std::min(depth_cutoff, docs.size());
  }
  void validate() const {
    if (query.empty()) throw input_error("RankedList: empty query id");
    if (docs.empty())
      throw input_error("RankedList: empty ranking for query " + query);
    for (const DocId& d : docs)
      if (d.empty()) throw input_error("RankedList: empty doc id in " + query);
    std::vector<DocId> sorted = docs;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw input_error("RankedList: duplicate doc id in query " + query);
  }
};

struct System {
  std::string id;
  std::map<QueryId, RankedList> rankings;

  const RankedList& ranking_for(const QueryId& q) const {
    auto it = rankings.find(q);
    if (it == rankings.end())
      throw coverage_error("system " + id + " has no ranking for query " + q);
    return it->second;
  }
  void check_covers(const std::vector<QueryId>& queries) const {
    for (const QueryId& q : queries) ranking_for(q);
  }
};

using SystemRegistry = std::map<std::string, System>;

inline void check_query_sample(const std::vector<QueryId>& queries) {
  if (queries.empty()) throw input_error("query sample is empty");
  std::vector<QueryId> sorted = queries;
  std::sort(sorted.begin(), sorted.end());
  if (!sorted.front().empty() &&
      std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end())
    return;
  throw input_error("query sample has empty or duplicate query ids");
}

// Compensated summation. Used wherever a fixed canonical order must give
// bit-stable, high-accuracy totals.
struct KahanSum {
  double sum = 0.0;
  double carry = 0.0;

  void add(double x) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  double value() const { return sum; }
};

// Shortest decimal rendering that round-trips the exact double.
inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string make_id(const std::string& prefix, std::size_t index,
                           std::size_t count) {
  const std::size_t width = std::to_string(count == 0 ? 0 : count - 1).size();
  std::string digits = std::to_string(index);
  if (digits.size() < width)
    digits.insert(0, width - digits.size(), '0');
  return prefix + digits;
}

}  // namespace rankeval
