#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "metrics.hpp"
#include "rng.hpp"
#include "sampling.hpp"

namespace rankeval {

// One elicited judgment: the sampled slot, its (possibly noisy) utility,
// and the sampling probability recorded at draw time.
struct JudgedSample {
  QueryId query;
  Part part;
  double utility = 0.0;
  double q_prob = 0.0;
  std::string sampler_id;
};

// Guard against numerically useless importance weights.
inline constexpr double kMinRecordedProb = 1e-300;

//! The reusable evaluation artifact: a query sample, judged samples with
//! their recorded sampling probabilities, and the sampler specs that
//! generated them. `segments` keeps per-source sample counts across concat
//! merges; estimators combine segment means count-weighted.
struct TestCollection {
  std::vector<QueryId> query_sample;  // X, as drawn
  std::string metric;                 // metric grammar string
  double max_utility = 1.0;
  double log_base = 2.0;
  std::vector<JudgedSample> samples;
  std::map<std::string, SamplerSpec> samplers;
  std::vector<std::size_t> segments;  // empty: one segment of samples.size()
  bool exact_zero = false;  // degenerate identical-systems marker

  std::vector<std::size_t> effective_segments() const {
    if (!segments.empty()) return segments;
    return {samples.size()};
  }

  MetricSpec metric_spec() const {
    return MetricSpec::parse(metric, max_utility, log_base);
  }

  void validate() const {
    check_query_sample(query_sample);
    const MetricSpec spec = metric_spec();
    if (exact_zero && !samples.empty())
      throw data_error("collection: exact-zero marker with samples");
    std::size_t segment_total = 0;
    for (std::size_t s : effective_segments()) segment_total += s;
    if (segment_total != samples.size())
      throw data_error("collection: segment counts do not sum to sample count");
    const double utility_limit =
        spec.pairwise() ? 1.0 : spec.max_utility;
    for (const JudgedSample& s : samples) {
      if (s.query.empty()) throw data_error("collection: sample without query");
      if (s.part.first.empty())
        throw data_error("collection: sample without part");
      if (s.part.is_pair() != spec.pairwise())
        throw data_error("collection: part kind does not match metric");
      if (!(s.q_prob > 0.0) || !(s.q_prob <= 1.0))
        throw data_error("collection: recorded probability outside (0,1]");
      if (s.q_prob < kMinRecordedProb)
        throw data_error("collection: recorded probability below 1e-300");
      if (!(s.utility >= 0.0 && s.utility <= utility_limit))
        throw data_error("collection: utility outside [0, " +
                         format_double(utility_limit) + "]");
      if (samplers.find(s.sampler_id) == samplers.end())
        throw data_error("collection: unresolved sampler id '" + s.sampler_id +
                         "'");
    }
  }
};

// ---------------------------------------------------------------------------
// Noisy assessors

//! Judgments as draws from a per-slot distribution over utility values.
//! Either a global flip kernel over a binary base oracle, or an explicit
//! categorical table per (query, part). The estimand under noise is the
//! closed-form expected utility.
struct JudgeModel {
  struct Categorical {
    std::vector<double> values;
    std::vector<double> probs;
  };

  const UtilityOracle* base = nullptr;  // binary truth for the flip kernel
  double flip_prob = 0.0;
  std::map<PartKey, Categorical> table;  // overrides the kernel when present

  void validate() const {
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0))
      throw input_error("judge model: flip probability outside [0,1]");
    if (base == nullptr && table.empty())
      throw input_error("judge model: neither base oracle nor table");
    for (const auto& [key, cat] : table) {
      if (cat.values.empty() || cat.values.size() != cat.probs.size())
        throw input_error("judge model: malformed categorical entry");
      double total = 0.0;
      for (double p : cat.probs) {
        if (!(p >= 0.0)) throw input_error("judge model: negative probability");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-9)
        throw input_error("judge model: categorical does not sum to 1");
    }
  }

  double expected_value(const QueryId& q, const Part& p) const {
    auto it = table.find(PartKey{q, p});
    if (it != table.end()) {
      KahanSum mean;
      for (std::size_t i = 0; i < it->second.values.size(); ++i)
        mean.add(it->second.values[i] * it->second.probs[i]);
      return mean.value();
    }
    if (base == nullptr)
      throw input_error("judge model: no entry for sampled pair");
    const double u = base->part_utility(q, p);
    return u * (1.0 - flip_prob) + (1.0 - u) * flip_prob;
  }

  double draw_value(const QueryId& q, const Part& p, Rng& rng) const {
    auto it = table.find(PartKey{q, p});
    if (it != table.end()) {
      const double u = rng.uniform();
      double cum = 0.0;
      for (std::size_t i = 0; i < it->second.values.size(); ++i) {
        cum += it->second.probs[i];
        if (u < cum) return it->second.values[i];
      }
      return it->second.values.back();
    }
    if (base == nullptr)
      throw input_error("judge model: no entry for sampled pair");
    const double u = base->part_utility(q, p);
    return rng.uniform() < flip_prob ? 1.0 - u : u;
  }
};

//! Closed-form expectation over assessors for one slot; the enumeration
//! oracle under noise.
inline double expected_utility(const JudgeModel& judges, const QueryId& q,
                               const Part& p) {
  judges.validate();
  return judges.expected_value(q, p);
}

// ---------------------------------------------------------------------------
// Judgment simulation

// Who answers a judgment request: a deterministic oracle (repeat draws of a
// slot reuse the first elicitation) or a judge model (every draw consults a
// fresh assessor).
struct Elicitor {
  const UtilityOracle* oracle = nullptr;
  const JudgeModel* judges = nullptr;
};

inline TestCollection simulate_judgments(const SamplerSpec& spec,
                                         const EvalContext& ctx,
                                         const Elicitor& who,
                                         const std::vector<QueryId>& query_sample,
                                         std::size_t n, std::uint64_t seed) {
  if (n == 0) throw input_error("simulate_judgments: need n >= 1");
  if ((who.oracle == nullptr) == (who.judges == nullptr))
    throw input_error(
        "simulate_judgments: need exactly one of oracle or judge model");

  TestCollection out;
  out.query_sample = query_sample;
  out.metric = spec.task == TaskKind::Mixture && !spec.components.empty()
                   ? spec.components.front().metric
                   : spec.metric;
  out.max_utility = spec.task == TaskKind::Mixture && !spec.components.empty()
                        ? spec.components.front().max_utility
                        : spec.max_utility;
  out.log_base = spec.task == TaskKind::Mixture && !spec.components.empty()
                     ? spec.components.front().log_base
                     : spec.log_base;
  out.samplers[spec.id] = spec;

  const SamplerOutcome outcome = build_sampler(spec, ctx, query_sample);
  if (is_degenerate(outcome)) {
    out.exact_zero = true;
    return out;
  }
  const SamplingDistribution& q = std::get<SamplingDistribution>(outcome);

  const std::vector<DrawRecord> draws = draw(q, n, derive_seed(seed, 0));
  Rng assessor_stream(derive_seed(seed, 1));
  std::map<PartKey, double> cache;  // deterministic oracles judge a slot once
  out.samples.reserve(n);
  for (const DrawRecord& d : draws) {
    double utility = 0.0;
    if (who.oracle != nullptr) {
      auto it = cache.find(d.key);
      if (it == cache.end()) {
        utility = who.oracle->part_utility(d.key.query, d.key.part);
        cache.emplace(d.key, utility);
      } else {
        utility = it->second;
      }
    } else {
      utility = who.judges->draw_value(d.key.query, d.key.part,
                                       assessor_stream);
    }
    out.samples.push_back(
        {d.key.query, d.key.part, utility, d.q_prob, spec.id});
  }
  out.validate();
  return out;
}

// Re-derives every sample's probability from its stored sampler spec and
// compares against the recorded value.
inline void check_recorded_probabilities(const TestCollection& c,
                                         const EvalContext& ctx,
                                         double tolerance = 1e-12) {
  std::map<std::string, SamplingDistribution> rebuilt;
  for (const JudgedSample& s : c.samples) {
    auto it = rebuilt.find(s.sampler_id);
    if (it == rebuilt.end()) {
      SamplerOutcome out =
          build_sampler(c.samplers.at(s.sampler_id), ctx, c.query_sample);
      if (is_degenerate(out))
        throw data_error("collection: degenerate sampler recorded samples");
      it = rebuilt
               .emplace(s.sampler_id,
                        std::get<SamplingDistribution>(std::move(out)))
               .first;
    }
    const double expect = it->second.prob_at(PartKey{s.query, s.part});
    if (std::abs(expect - s.q_prob) > tolerance)
      throw data_error("collection: recorded probability for (" + s.query +
                       ", " + s.part.first +
                       ") does not match its sampler");
  }
}

// ---------------------------------------------------------------------------
// Collection files: one JSON object per line. Header first, then samples.

inline std::string write_collection_text(const TestCollection& c) {
  c.validate();
  nlohmann::json header;
  header["type"] = "test-collection";
  header["version"] = 1;
  header["X"] = c.query_sample;
  header["metric"] = c.metric;
  header["max_utility"] = c.max_utility;
  header["log_base"] = c.log_base;
  nlohmann::json samplers = nlohmann::json::object();
  for (const auto& [id, spec] : c.samplers) samplers[id] = spec.to_json();
  header["samplers"] = std::move(samplers);
  if (!c.segments.empty()) header["segments"] = c.segments;
  if (c.exact_zero) header["exact_zero"] = true;

  std::string out = header.dump();
  out.push_back('\n');
  for (const JudgedSample& s : c.samples) {
    nlohmann::json line;
    line["q"] = s.query;
    if (s.part.is_pair())
      line["part"] = {s.part.first, s.part.second};
    else
      line["part"] = {s.part.first};
    line["u"] = s.utility;
    line["qp"] = s.q_prob;
    line["sid"] = s.sampler_id;
    out += line.dump();
    out.push_back('\n');
  }
  return out;
}

inline TestCollection read_collection_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  TestCollection c;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw data_error("collection line " + std::to_string(line_no) +
                       ": bad JSON: " + e.what());
    }
    try {
      if (!have_header) {
        if (j.value("type", std::string()) != "test-collection")
          throw data_error("collection line 1: missing test-collection header");
        c.query_sample = j.at("X").get<std::vector<QueryId>>();
        c.metric = j.at("metric").get<std::string>();
        c.max_utility = j.value("max_utility", 1.0);
        c.log_base = j.value("log_base", 2.0);
        for (const auto& [id, spec] : j.at("samplers").items())
          c.samplers[id] = SamplerSpec::from_json(spec);
        if (j.contains("segments"))
          c.segments = j.at("segments").get<std::vector<std::size_t>>();
        c.exact_zero = j.value("exact_zero", false);
        have_header = true;
        continue;
      }
      JudgedSample s;
      s.query = j.at("q").get<std::string>();
      const auto part = j.at("part").get<std::vector<std::string>>();
      if (part.size() == 1)
        s.part = Part::single(part[0]);
      else if (part.size() == 2)
        s.part = Part::ordered_pair(part[0], part[1]);
      else
        throw data_error("part must have one or two doc ids");
      s.utility = j.at("u").get<double>();
      s.q_prob = j.at("qp").get<double>();
      s.sampler_id = j.at("sid").get<std::string>();
      c.samples.push_back(std::move(s));
    } catch (const data_error&) {
      throw;
    } catch (const std::exception& e) {
      throw data_error("collection line " + std::to_string(line_no) + ": " +
                       e.what());
    }
  }
  if (!have_header) throw data_error("collection: empty file");
  try {
    c.validate();
  } catch (const error& e) {
    throw data_error(std::string("collection: ") + e.what());
  }
  return c;
}

inline void write_collection(const TestCollection& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open '" + path + "' for writing");
  out << write_collection_text(c);
  if (!out) throw data_error("failed writing '" + path + "'");
}

inline TestCollection read_collection(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return read_collection_text(buf.str());
}

// ---------------------------------------------------------------------------
// External run / judgment formats

// Lines: qid Q0 docid rank score tag. Duplicate ranks are resolved by score
// descending, then doc id ascending.
inline System ingest_run_text(const std::string& text,
                              const std::string& source = "run") {
  struct Row {
    std::size_t rank;
    double score;
    DocId doc;
  };
  std::map<QueryId, std::vector<Row>> rows;
  std::string tag;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string qid, q0, doc, rank_text, score_text, line_tag;
    if (!(fields >> qid >> q0 >> doc >> rank_text >> score_text >> line_tag))
      throw data_error(source + " line " + std::to_string(line_no) +
                       ": expected 'qid Q0 docid rank score tag'");
    if (q0 != "Q0")
      throw data_error(source + " line " + std::to_string(line_no) +
                       ": second column must be the literal Q0");
    Row row;
    try {
      row.rank = std::stoull(rank_text);
      row.score = std::stod(score_text);
    } catch (const std::exception&) {
      throw data_error(source + " line " + std::to_string(line_no) +
                       ": bad rank or score");
    }
    if (row.rank == 0)
      throw data_error(source + " line " + std::to_string(line_no) +
                       ": ranks start at 1");
    row.doc = doc;
    rows[qid].push_back(std::move(row));
    if (tag.empty()) tag = line_tag;
    else if (tag != line_tag)
      throw data_error(source + " line " + std::to_string(line_no) +
                       ": inconsistent system tag '" + line_tag + "'");
  }
  if (rows.empty()) throw data_error(source + ": no ranking lines");

  System sys;
  sys.id = tag;
  for (auto& [qid, qrows] : rows) {
    std::sort(qrows.begin(), qrows.end(), [](const Row& a, const Row& b) {
      if (a.rank != b.rank) return a.rank < b.rank;
      if (a.score != b.score) return a.score > b.score;
      return a.doc < b.doc;
    });
    RankedList list;
    list.query = qid;
    for (Row& r : qrows) list.docs.push_back(std::move(r.doc));
    try {
      list.validate();
    } catch (const error& e) {
      throw data_error(source + ": " + e.what());
    }
    sys.rankings[qid] = std::move(list);
  }
  return sys;
}

inline System ingest_run(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return ingest_run_text(buf.str(), path);
}

// Lines: qid iteration docid relevance. Absent pairs default to utility 0;
// UtilityOracle::judged reports the assumed-unjudged-zero distinction.
inline UtilityOracle ingest_qrels_text(const std::string& text,
                                       const std::string& source = "qrels") {
  UtilityOracle oracle;
  double max_seen = 0.0;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool any = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string qid, iteration, doc, rel_text;
    if (!(fields >> qid >> iteration >> doc >> rel_text))
      throw data_error(source + " line " + std::to_string(line_no) +
                       ": expected 'qid iteration docid relevance'");
    double rel = 0.0;
    try {
      std::size_t used = 0;
      rel = std::stod(rel_text, &used);
      if (used != rel_text.size()) throw std::invalid_argument(rel_text);
    } catch (const std::exception&) {
      throw data_error(source + " line " + std::to_string(line_no) +
                       ": non-numeric relevance '" + rel_text + "'");
    }
    if (rel < 0.0)
      throw data_error(source + " line " + std::to_string(line_no) +
                       ": negative relevance");
    oracle.set(qid, doc, rel);
    max_seen = std::max(max_seen, rel);
    any = true;
  }
  if (!any) throw data_error(source + ": no judgment lines");
  oracle.max_utility = std::max(max_seen, 1.0);
  return oracle;
}

inline UtilityOracle ingest_qrels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return ingest_qrels_text(buf.str(), path);
}

}  // namespace rankeval
