// rankeval: sampling-based offline evaluation of ranking systems.
//
// Subcommands cover the full workflow: generate synthetic ground truth,
// derive transformed systems, design sampling distributions, simulate
// judgment collection, estimate utilities and differences, rank systems,
// evaluate pooling baselines, enumerate estimator variances, and replicate
// whole sampling studies.
//
// Every stochastic subcommand takes a --seed and reproduces byte-identical
// outputs from identical inputs and flags. Output files are written to a
// temp file and renamed into place, so interrupted runs never leave partial
// outputs. RANKEVAL_OUT_DIR, when set, re-roots relative output paths.
//
// Exit codes: 0 ok, 2 usage, 3 data/validation, 4 internal invariant.

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rankeval/rankeval.hpp"

namespace fs = std::filesystem;
using namespace rankeval;

namespace {

fs::path resolve_out(const std::string& path) {
  const char* base = std::getenv("RANKEVAL_OUT_DIR");
  fs::path p(path);
  if (base != nullptr && *base != '\0' && p.is_relative())
    p = fs::path(base) / p;
  return p;
}

void atomic_write(const std::string& path, const std::string& content) {
  const fs::path target = resolve_out(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp =
      target.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw data_error("cannot open '" + tmp.string() + "' for writing");
    out << content;
    if (!out) throw data_error("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

std::vector<double> parse_doubles(const std::string& csv) {
  std::vector<double> out;
  std::stringstream stream(csv);
  std::string item;
  while (std::getline(stream, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw input_error("bad number '" + item + "' in list '" + csv + "'");
    }
  }
  if (out.empty()) throw input_error("empty number list");
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& csv) {
  std::vector<std::size_t> out;
  for (double v : parse_doubles(csv)) {
    if (v < 0 || v != double(std::size_t(v)))
      throw input_error("expected nonnegative integers in '" + csv + "'");
    out.push_back(std::size_t(v));
  }
  return out;
}

std::vector<std::string> parse_names(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream stream(csv);
  std::string item;
  while (std::getline(stream, item, ','))
    if (!item.empty()) out.push_back(item);
  if (out.empty()) throw input_error("empty list");
  return out;
}

struct LoadedRuns {
  SystemRegistry registry;
  std::vector<std::string> order;  // system ids in argument order
  std::vector<QueryId> query_sample;
};

LoadedRuns load_runs(const std::vector<std::string>& paths) {
  if (paths.empty()) throw input_error("no run files given");
  LoadedRuns out;
  for (const std::string& path : paths) {
    System sys = ingest_run(path);
    if (out.registry.count(sys.id))
      throw data_error("duplicate system tag '" + sys.id + "' in " + path);
    out.order.push_back(sys.id);
    if (out.query_sample.empty())
      for (const auto& [q, list] : sys.rankings) out.query_sample.push_back(q);
    out.registry[sys.id] = std::move(sys);
  }
  for (const auto& [id, sys] : out.registry) sys.check_covers(out.query_sample);
  return out;
}

std::string write_run_text(const System& sys) {
  std::string out;
  for (const auto& [q, list] : sys.rankings) {
    for (std::size_t r = 1; r <= list.docs.size(); ++r) {
      out += q + " Q0 " + list.docs[r - 1] + " " + std::to_string(r) + " " +
             format_double(double(list.docs.size() - r + 1)) + " " + sys.id +
             "\n";
    }
  }
  return out;
}

std::string write_qrels_text(const UtilityOracle& oracle) {
  std::string out;
  for (const auto& [q, row] : oracle.table())
    for (const auto& [d, v] : row)
      out += q + " 0 " + d + " " + format_double(v) + "\n";
  return out;
}

std::string estimate_csv_header() {
  return "estimand,value,std_error,n,ci_low,ci_high,exact_zero\n";
}

std::string estimate_csv_row(const Estimate& e) {
  return e.estimand + "," + format_double(e.value) + "," +
         format_double(e.std_error) + "," + std::to_string(e.n) + "," +
         format_double(e.ci_low) + "," + format_double(e.ci_high) + "," +
         (e.exact_zero ? "true" : "false") + "\n";
}

PartValueFn oracle_fn(const UtilityOracle& oracle) {
  return [&oracle](const QueryId& q, const Part& p) {
    return oracle.part_utility(q, p);
  };
}

ApproxUtilitySpec approx_from_flags(const std::string& mode, double scale,
                                    double horizon, double floor) {
  ApproxUtilitySpec spec;
  if (mode == "constant")
    spec.mode = ApproxMode::ConstantOne;
  else if (mode == "rank-decay")
    spec.mode = ApproxMode::RankDecayLinear;
  else if (mode == "rank-decay-recip")
    spec.mode = ApproxMode::RankDecayReciprocal;
  else if (mode == "true-utility")
    spec.mode = ApproxMode::TrueUtility;
  else
    throw input_error("unknown approx-utility mode '" + mode + "'");
  spec.scale = scale;
  spec.horizon = horizon;
  spec.floor = floor;
  return spec;
}

// ---------------------------------------------------------------------------
// Subcommand options

struct SynthGenOpts {
  std::size_t users = 600, items = 200;
  std::string alpha = "0.54,0.25,0.175,0.03,0.005";
  std::string levels = "0,1,2,3,4";
  std::uint64_t seed = 0;
  bool paper_scale = false;
  std::string out_dir;
};

void run_synth_gen(const SynthGenOpts& o) {
  SynthConfig cfg;
  cfg.n_queries = o.paper_scale ? 6000 : o.users;
  cfg.n_docs = o.paper_scale ? 2000 : o.items;
  cfg.dirichlet_alpha = parse_doubles(o.alpha);
  cfg.utility_levels = parse_doubles(o.levels);
  cfg.seed = o.seed;
  const SynthData data = gen_synth(cfg);
  atomic_write(o.out_dir + "/qrels.txt", write_qrels_text(data.oracle));
  atomic_write(o.out_dir + "/opt.run", write_run_text(data.opt));
  std::cout << "wrote " << o.out_dir << "/qrels.txt and " << o.out_dir
            << "/opt.run (" << cfg.n_queries << " queries x " << cfg.n_docs
            << " docs)\n";
}

struct DeriveOpts {
  std::string run, transform, id, out;
};

void run_derive(const DeriveOpts& o) {
  const System base = ingest_run(o.run);
  const System derived =
      derive_system(base, SystemTransform::parse(o.transform), o.id);
  atomic_write(o.out, write_run_text(derived));
  std::cout << "wrote " << o.out << " (system " << derived.id << ")\n";
}

struct DesignOpts {
  std::string task;
  std::vector<std::string> runs;
  std::string baseline_run;
  std::string metric;
  double max_utility = 1.0;
  double log_base = 2.0;
  std::string approx = "rank-decay";
  double approx_scale = 0.0, approx_horizon = 0.0, approx_floor = 0.0;
  double epsilon = 0.05;
  std::string id, out;
};

void run_design(const DesignOpts& o) {
  std::vector<std::string> paths = o.runs;
  if (!o.baseline_run.empty()) paths.push_back(o.baseline_run);
  LoadedRuns loaded = load_runs(paths);

  SamplerSpec spec;
  spec.metric = o.metric;
  spec.max_utility = o.max_utility;
  spec.log_base = o.log_base;
  spec.approx = approx_from_flags(o.approx, o.approx_scale, o.approx_horizon,
                                  o.approx_floor);
  spec.epsilon = o.epsilon;
  std::vector<std::string> ids(loaded.order.begin(), loaded.order.end());
  if (!o.baseline_run.empty()) {
    spec.baseline = ids.back();
    ids.pop_back();
  }
  spec.systems = ids;
  if (o.task == "single")
    spec.task = TaskKind::Single;
  else if (o.task == "pair")
    spec.task = TaskKind::Pair;
  else if (o.task == "vs-baseline")
    spec.task = TaskKind::VsBaseline;
  else if (o.task == "ranking")
    spec.task = TaskKind::Ranking;
  else if (o.task == "naive" || o.task == "uniform" || o.task == "target") {
    spec.task = TaskKind::Heuristic;
    spec.heuristic = o.task == "naive"
                         ? HeuristicKind::NaiveAverage
                         : (o.task == "uniform" ? HeuristicKind::Uniform
                                                : HeuristicKind::TargetOnly);
  } else {
    throw input_error("unknown sampler task '" + o.task + "'");
  }
  if (spec.task == TaskKind::VsBaseline && o.baseline_run.empty())
    throw input_error("vs-baseline needs --baseline-run");

  std::string id = o.id;
  if (id.empty()) {
    id = o.task + "(";
    for (std::size_t i = 0; i < spec.systems.size(); ++i)
      id += (i ? "," : "") + spec.systems[i];
    if (!spec.baseline.empty()) id += ";" + spec.baseline;
    id += ")";
  }
  spec.id = id;
  spec.validate();

  // Probe the build so bad parameters surface now; true-utility mode needs
  // judgments that only exist at sampling time.
  if (spec.approx.mode != ApproxMode::TrueUtility) {
    EvalContext ctx;
    ctx.systems = &loaded.registry;
    const SamplerOutcome probe =
        build_sampler(spec, ctx, loaded.query_sample);
    if (is_degenerate(probe))
      std::cerr << "warning: the systems induce identical target weights; "
                   "sampling will produce an exact-zero marker collection\n";
  }
  atomic_write(o.out, spec.dump() + "\n");
  std::cout << "wrote " << o.out << " (sampler " << spec.id << ")\n";
}

struct SampleOpts {
  std::string sampler;
  std::vector<std::string> runs;
  std::string qrels;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string noise;
  std::string out;
};

void run_sample(const SampleOpts& o) {
  std::ifstream in(o.sampler, std::ios::binary);
  if (!in) throw data_error("cannot open '" + o.sampler + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw data_error("bad sampler spec: " + std::string(e.what()));
  }
  const SamplerSpec spec = SamplerSpec::from_json(j);
  LoadedRuns loaded = load_runs(o.runs);
  UtilityOracle oracle = ingest_qrels(o.qrels);
  const MetricSpec metric =
      MetricSpec::parse(spec.metric, spec.max_utility, spec.log_base);
  oracle.validate_range(metric.max_utility);

  EvalContext ctx;
  ctx.systems = &loaded.registry;
  ctx.true_utilities = oracle_fn(oracle);

  JudgeModel judges;
  Elicitor who{&oracle, nullptr};
  if (!o.noise.empty()) {
    const auto colon = o.noise.find(':');
    if (o.noise.substr(0, colon) != "flip" || colon == std::string::npos)
      throw input_error("unknown noise model '" + o.noise +
                        "' (expected flip:<p>)");
    judges.base = &oracle;
    judges.flip_prob = std::stod(o.noise.substr(colon + 1));
    judges.validate();
    oracle.validate_range(1.0);  // flip noise assumes binary truth
    who = Elicitor{nullptr, &judges};
  }

  const TestCollection c =
      simulate_judgments(spec, ctx, who, loaded.query_sample, o.n, o.seed);
  atomic_write(o.out, write_collection_text(c));
  if (c.exact_zero)
    std::cout << "wrote " << o.out
              << " (exact-zero marker: identical target weights)\n";
  else
    std::cout << "wrote " << o.out << " (" << c.samples.size()
              << " judged samples)\n";
}

struct EstimateOpts {
  std::string collection, run, metric;
  double alpha = 0.05;
  std::string out;
};

void run_estimate(const EstimateOpts& o) {
  const TestCollection c = read_collection(o.collection);
  if (!o.metric.empty() && o.metric != c.metric)
    throw input_error("metric '" + o.metric +
                      "' does not match collection metric '" + c.metric + "'");
  const System sys = ingest_run(o.run);
  const MetricSpec metric = c.metric_spec();
  const Estimate est = estimate_utility(c, sys, metric, o.alpha);

  // Reuse check: warn when the recorded samplers demonstrably miss support.
  try {
    SystemRegistry registry;
    registry[sys.id] = sys;
    EvalContext ctx;
    ctx.systems = &registry;
    const std::size_t gaps = support_gap_count(
        c, target_distribution(sys, metric, c.query_sample), ctx);
    if (gaps > 0)
      std::cerr << "warning: " << gaps
                << " target slots lie outside every recorded sampler; the "
                   "estimate misses whatever utility they carry\n";
  } catch (const error&) {
    // sampler specs reference systems we do not have; nothing to check
  }

  atomic_write(o.out, estimate_csv_header() + estimate_csv_row(est));
  std::cout << "wrote " << o.out << "\n";
}

struct CompareOpts {
  std::string collection, run_a, run_b, metric;
  double alpha = 0.05;
  std::string out;
};

void run_compare(const CompareOpts& o) {
  const TestCollection c = read_collection(o.collection);
  if (!o.metric.empty() && o.metric != c.metric)
    throw input_error("metric '" + o.metric +
                      "' does not match collection metric '" + c.metric + "'");
  const System a = ingest_run(o.run_a);
  const System b = ingest_run(o.run_b);
  const DiffEstimate diff =
      estimate_diff(c, a, b, c.metric_spec(), o.alpha);
  atomic_write(o.out, estimate_csv_header() + estimate_csv_row(diff.est));
  std::cout << "wrote " << o.out << "\n";
}

struct RankOpts {
  std::string collection;
  std::vector<std::string> runs;
  std::string metric;
  double alpha = 0.05;
  std::string out;
};

void run_rank(const RankOpts& o) {
  const TestCollection c = read_collection(o.collection);
  if (!o.metric.empty() && o.metric != c.metric)
    throw input_error("metric '" + o.metric +
                      "' does not match collection metric '" + c.metric + "'");
  LoadedRuns loaded = load_runs(o.runs);
  std::vector<const System*> systems;
  for (const std::string& id : loaded.order)
    systems.push_back(&loaded.registry.at(id));
  const auto ranked = rank_systems(c, systems, c.metric_spec(), o.alpha);
  std::string csv = "rank," + estimate_csv_header();
  for (std::size_t i = 0; i < ranked.size(); ++i)
    csv += std::to_string(i + 1) + "," + estimate_csv_row(ranked[i].est);
  atomic_write(o.out, csv);
  std::cout << "wrote " << o.out << "\n";
}

struct PoolOpts {
  std::string mode, run, qrels, metric;
  double max_utility = 0.0;
  double log_base = 2.0;
  std::size_t budget = 0;
  std::size_t pool_depth = 0;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
};

void run_pool(const PoolOpts& o) {
  const System sys = ingest_run(o.run);
  UtilityOracle oracle = ingest_qrels(o.qrels);
  const double max_u =
      o.max_utility > 0.0 ? o.max_utility : oracle.max_utility;
  const MetricSpec metric = MetricSpec::parse(o.metric, max_u, o.log_base);
  oracle.validate_range(metric.max_utility);
  std::vector<QueryId> queries;
  for (const auto& [q, list] : sys.rankings) queries.push_back(q);

  double value = 0.0;
  if (o.mode == "shallow") {
    value = shallow_pool(sys, oracle, metric, o.budget, queries);
  } else if (o.mode == "deep") {
    if (!o.seed_given) throw input_error("deep pooling needs --seed");
    value = deep_pool(sys, oracle, metric, o.budget, o.pool_depth, queries,
                      o.seed);
  } else {
    throw input_error("unknown pooling mode '" + o.mode + "'");
  }
  std::string csv = "method,metric,budget,pool_depth,value\n";
  csv += o.mode + "," + metric.name() + "," + std::to_string(o.budget) + "," +
         std::to_string(o.pool_depth) + "," + format_double(value) + "\n";
  atomic_write(o.out, csv);
  std::cout << "wrote " << o.out << "\n";
}

struct VarianceOpts {
  std::string task;
  std::vector<std::string> runs;
  std::string baseline_run, qrels, sampler;
  std::size_t n = 1;
  std::string out;
};

void run_variance(const VarianceOpts& o) {
  std::ifstream in(o.sampler, std::ios::binary);
  if (!in) throw data_error("cannot open '" + o.sampler + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw data_error("bad sampler spec: " + std::string(e.what()));
  }
  const SamplerSpec spec = SamplerSpec::from_json(j);

  std::vector<std::string> paths = o.runs;
  if (!o.baseline_run.empty()) paths.push_back(o.baseline_run);
  LoadedRuns loaded = load_runs(paths);
  UtilityOracle oracle = ingest_qrels(o.qrels);
  const MetricSpec metric =
      MetricSpec::parse(spec.metric, spec.max_utility, spec.log_base);
  oracle.validate_range(metric.max_utility);

  EvalTask task;
  std::vector<const System*> systems;
  for (const std::string& id : loaded.order)
    systems.push_back(&loaded.registry.at(id));
  const System* baseline = nullptr;
  if (!o.baseline_run.empty()) {
    baseline = systems.back();
    systems.pop_back();
  }
  if (o.task == "single")
    task.kind = EvalTask::Kind::Single;
  else if (o.task == "pair")
    task.kind = EvalTask::Kind::Pair;
  else if (o.task == "vs-baseline")
    task.kind = EvalTask::Kind::VsBaseline;
  else if (o.task == "ranking")
    task.kind = EvalTask::Kind::Ranking;
  else
    throw input_error("unknown task '" + o.task + "'");
  task.systems = systems;
  task.baseline = baseline;

  EvalContext ctx;
  ctx.systems = &loaded.registry;
  ctx.true_utilities = oracle_fn(oracle);
  const SamplerOutcome out = build_sampler(spec, ctx, loaded.query_sample);

  double sigma = 0.0;
  if (!is_degenerate(out))
    sigma = analytic_variance(std::get<SamplingDistribution>(out), task,
                              oracle, metric, loaded.query_sample, o.n);
  std::string csv = "task,sampler,n,sigma,sigma_times_n\n";
  csv += o.task + "," + spec.id + "," + std::to_string(o.n) + "," +
         format_double(sigma) + "," + format_double(sigma * double(o.n)) +
         "\n";
  atomic_write(o.out, csv);
  std::cout << "wrote " << o.out << "\n";
}

struct ExperimentOpts {
  std::string scenario;
  std::vector<std::string> runs;
  std::string qrels;
  bool synth = false;
  std::size_t synth_users = 600, synth_items = 200;
  std::string synth_alpha = "0.54,0.25,0.175,0.03,0.005";
  std::string synth_levels = "0,1,2,3,4";
  std::uint64_t synth_seed = 1;
  std::string transforms = "opt,rev:8,rev:15,shift:1,shift:2";
  bool paper_scale = false;
  std::string metric;
  double max_utility = 0.0;
  double log_base = 2.0;
  std::string samplers = "qstar,naive,uniform";
  std::string budgets;
  std::size_t replicates = 100;
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  std::string approx = "rank-decay";
  double approx_scale = 0.0, approx_horizon = 0.0, approx_floor = 0.0;
  double alpha = 0.05;
  std::size_t window = 5;
  std::size_t jobs = 1;
  std::string out_dir;
};

void run_experiment_cmd(const ExperimentOpts& o) {
  UtilityOracle oracle;
  SystemRegistry registry;
  std::vector<const System*> systems;
  std::vector<QueryId> queries;

  if (o.synth || o.paper_scale) {
    SynthConfig cfg;
    cfg.n_queries = o.paper_scale ? 6000 : o.synth_users;
    cfg.n_docs = o.paper_scale ? 2000 : o.synth_items;
    cfg.dirichlet_alpha = parse_doubles(o.synth_alpha);
    cfg.utility_levels = parse_doubles(o.synth_levels);
    cfg.seed = o.synth_seed;
    SynthData data = gen_synth(cfg);
    oracle = std::move(data.oracle);
    queries = std::move(data.queries);
    const std::string transform_list =
        o.paper_scale ? "opt,rev:75,rev:150,shift:5,shift:7" : o.transforms;
    for (const std::string& name : parse_names(transform_list)) {
      const SystemTransform t = SystemTransform::parse(name);
      System s = derive_system(data.opt, t);
      registry[s.id] = std::move(s);
    }
  } else {
    if (o.runs.empty() || o.qrels.empty())
      throw input_error(
          "experiment needs either --synth/--paper-scale or --runs + --qrels");
    LoadedRuns loaded = load_runs(o.runs);
    registry = std::move(loaded.registry);
    queries = std::move(loaded.query_sample);
    oracle = ingest_qrels(o.qrels);
  }
  for (const auto& [id, sys] : registry) systems.push_back(&sys);

  const double max_u =
      o.max_utility > 0.0 ? o.max_utility : oracle.max_utility;
  const MetricSpec metric = MetricSpec::parse(o.metric, max_u, o.log_base);
  oracle.validate_range(metric.max_utility);

  ExperimentSpec spec;
  spec.scenario = parse_scenario(o.scenario);
  spec.samplers = parse_names(o.samplers);
  spec.budgets = parse_sizes(o.budgets);
  spec.replicates = o.replicates;
  spec.seed = o.seed;
  spec.epsilon = o.epsilon;
  spec.approx = approx_from_flags(o.approx, o.approx_scale, o.approx_horizon,
                                  o.approx_floor);
  spec.alpha = o.alpha;
  spec.window = o.window;
  spec.jobs = o.jobs;

  const ExperimentReport report =
      run_experiment(spec, systems, oracle, metric, queries);
  const std::string stem = o.out_dir + "/" + scenario_name(spec.scenario);
  atomic_write(stem + "_aggregate.csv", report.aggregate_csv);
  atomic_write(stem + "_replicates.csv", report.replicate_csv);
  std::cout << "wrote " << stem << "_aggregate.csv and " << stem
            << "_replicates.csv\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "rankeval: unbiased sampling-based evaluation of ranking systems"};
  app.require_subcommand(1);

  SynthGenOpts synth;
  CLI::App* synth_cmd = app.add_subcommand(
      "synth-gen", "generate synthetic judgments and the ideal system");
  synth_cmd->add_option("--users", synth.users, "number of queries (users)");
  synth_cmd->add_option("--items", synth.items, "number of docs (items)");
  synth_cmd->add_option("--alpha", synth.alpha,
                        "Dirichlet hyper-parameters, comma separated");
  synth_cmd->add_option("--levels", synth.levels,
                        "utility levels, comma separated, ascending");
  synth_cmd->add_option("--seed", synth.seed, "generation seed")->required();
  synth_cmd->add_flag("--paper-scale", synth.paper_scale,
                      "full-scale preset: 6000 users x 2000 items");
  synth_cmd->add_option("-o,--out", synth.out_dir, "output directory")
      ->required();

  DeriveOpts derive;
  CLI::App* derive_cmd =
      app.add_subcommand("derive", "derive a transformed system from a run");
  derive_cmd->add_option("--run", derive.run, "input run file")->required();
  derive_cmd
      ->add_option("--transform", derive.transform,
                   "opt | shift:<m> | rev:<m>")
      ->required();
  derive_cmd->add_option("--id", derive.id, "output system id");
  derive_cmd->add_option("-o,--out", derive.out, "output run file")
      ->required();

  DesignOpts design;
  CLI::App* design_cmd = app.add_subcommand(
      "design-sampler", "design a sampling distribution spec");
  design_cmd
      ->add_option("--task", design.task,
                   "single | pair | vs-baseline | ranking | naive | uniform "
                   "| target")
      ->required();
  design_cmd
      ->add_option("--runs", design.runs, "run files, comma separated")
      ->required()
      ->delimiter(',');
  design_cmd->add_option("--baseline-run", design.baseline_run,
                         "baseline run (vs-baseline)");
  design_cmd
      ->add_option("--metric", design.metric,
                   "metric as name@param, e.g. dcg@100, prec@10, rbp@0.8")
      ->required();
  design_cmd->add_option("--max-utility", design.max_utility,
                         "utility ceiling M");
  design_cmd->add_option("--log-base", design.log_base, "dcg log base");
  design_cmd->add_option(
      "--approx", design.approx,
      "constant | rank-decay | rank-decay-recip | true-utility");
  design_cmd->add_option("--approx-scale", design.approx_scale,
                         "decay scale (0: auto)");
  design_cmd->add_option("--approx-horizon", design.approx_horizon,
                         "decay horizon/offset (0: auto)");
  design_cmd->add_option("--approx-floor", design.approx_floor,
                         "utility floor (0: 1e-6 * M)");
  design_cmd->add_option("--epsilon", design.epsilon,
                         "smoothing mass in [0,1)");
  design_cmd->add_option("--id", design.id, "sampler id");
  design_cmd->add_option("-o,--out", design.out, "output spec JSON")
      ->required();

  SampleOpts sample;
  CLI::App* sample_cmd = app.add_subcommand(
      "sample", "simulate judgment elicitation into a collection");
  sample_cmd->add_option("--sampler", sample.sampler, "sampler spec JSON")
      ->required();
  sample_cmd->add_option("--runs", sample.runs, "run files, comma separated")
      ->required()
      ->delimiter(',');
  sample_cmd->add_option("--qrels", sample.qrels, "judgment file")
      ->required();
  sample_cmd->add_option("--n", sample.n, "number of judgments")->required();
  sample_cmd->add_option("--seed", sample.seed, "sampling seed")->required();
  sample_cmd->add_option("--noise", sample.noise,
                         "assessor noise, e.g. flip:0.2 (binary truth)");
  sample_cmd->add_option("-o,--out", sample.out, "output collection JSONL")
      ->required();

  EstimateOpts estimate;
  CLI::App* estimate_cmd = app.add_subcommand(
      "estimate", "estimate one system's utility from a collection");
  estimate_cmd
      ->add_option("--collection", estimate.collection, "collection JSONL")
      ->required();
  estimate_cmd->add_option("--run", estimate.run, "system run file")
      ->required();
  estimate_cmd->add_option("--metric", estimate.metric,
                           "must match the collection metric");
  estimate_cmd->add_option("--alpha", estimate.alpha, "CI significance");
  estimate_cmd->add_option("-o,--out", estimate.out, "output CSV")
      ->required();

  CompareOpts compare;
  CLI::App* compare_cmd = app.add_subcommand(
      "compare", "estimate the difference between two systems");
  compare_cmd
      ->add_option("--collection", compare.collection, "collection JSONL")
      ->required();
  compare_cmd->add_option("--run-a", compare.run_a, "first system run")
      ->required();
  compare_cmd->add_option("--run-b", compare.run_b, "second system run")
      ->required();
  compare_cmd->add_option("--metric", compare.metric,
                          "must match the collection metric");
  compare_cmd->add_option("--alpha", compare.alpha, "CI significance");
  compare_cmd->add_option("-o,--out", compare.out, "output CSV")->required();

  RankOpts rank;
  CLI::App* rank_cmd = app.add_subcommand(
      "rank", "rank systems by estimated differences against tau");
  rank_cmd->add_option("--collection", rank.collection, "collection JSONL")
      ->required();
  rank_cmd->add_option("--runs", rank.runs, "run files, comma separated")
      ->required()
      ->delimiter(',');
  rank_cmd->add_option("--metric", rank.metric,
                       "must match the collection metric");
  rank_cmd->add_option("--alpha", rank.alpha, "CI significance");
  rank_cmd->add_option("-o,--out", rank.out, "output CSV")->required();

  PoolOpts pool;
  CLI::App* pool_cmd = app.add_subcommand(
      "pool-eval", "evaluate a system under a deterministic judgment pool");
  pool_cmd->add_option("--mode", pool.mode, "shallow | deep")->required();
  pool_cmd->add_option("--run", pool.run, "system run file")->required();
  pool_cmd->add_option("--qrels", pool.qrels, "judgment file")->required();
  pool_cmd->add_option("--metric", pool.metric, "metric as name@param")
      ->required();
  pool_cmd->add_option("--max-utility", pool.max_utility,
                       "utility ceiling M (0: from qrels)");
  pool_cmd->add_option("--log-base", pool.log_base, "dcg log base");
  pool_cmd->add_option("--budget", pool.budget, "judgment budget")
      ->required();
  pool_cmd->add_option("--pool-depth", pool.pool_depth,
                       "deep pool depth b (0: metric cutoff)");
  pool_cmd->add_option("--seed", pool.seed, "query-sampling seed (deep)")
      ->each([&pool](const std::string&) { pool.seed_given = true; });
  pool_cmd->add_option("-o,--out", pool.out, "output CSV")->required();

  VarianceOpts variance;
  CLI::App* variance_cmd = app.add_subcommand(
      "variance", "enumerate the analytic estimator variance of a sampler");
  variance_cmd
      ->add_option("--task", variance.task,
                   "single | pair | vs-baseline | ranking")
      ->required();
  variance_cmd
      ->add_option("--runs", variance.runs, "run files, comma separated")
      ->required()
      ->delimiter(',');
  variance_cmd->add_option("--baseline-run", variance.baseline_run,
                           "baseline run (vs-baseline)");
  variance_cmd->add_option("--qrels", variance.qrels, "judgment file")
      ->required();
  variance_cmd->add_option("--sampler", variance.sampler, "sampler spec JSON")
      ->required();
  variance_cmd->add_option("--n", variance.n, "sample size for sigma(Q)");
  variance_cmd->add_option("-o,--out", variance.out, "output CSV")
      ->required();

  ExperimentOpts experiment;
  CLI::App* experiment_cmd = app.add_subcommand(
      "experiment", "replicate a sampling study and emit CSV tables");
  experiment_cmd
      ->add_option("--scenario", experiment.scenario,
                   "single | pair | vs-baseline | ranking")
      ->required();
  experiment_cmd->add_option("--runs", experiment.runs,
                             "run files, comma separated")
      ->delimiter(',');
  experiment_cmd->add_option("--qrels", experiment.qrels, "judgment file");
  experiment_cmd->add_flag("--synth", experiment.synth,
                           "generate synthetic data instead of loading runs");
  experiment_cmd->add_option("--synth-users", experiment.synth_users,
                             "synthetic query count");
  experiment_cmd->add_option("--synth-items", experiment.synth_items,
                             "synthetic doc count");
  experiment_cmd->add_option("--synth-alpha", experiment.synth_alpha,
                             "Dirichlet hyper-parameters");
  experiment_cmd->add_option("--synth-levels", experiment.synth_levels,
                             "utility levels");
  experiment_cmd->add_option("--synth-seed", experiment.synth_seed,
                             "synthetic generation seed");
  experiment_cmd->add_option(
      "--transforms", experiment.transforms,
      "system transforms, e.g. opt,rev:8,shift:1 (synthetic mode)");
  experiment_cmd->add_flag("--paper-scale", experiment.paper_scale,
                           "full-scale synthetic preset");
  experiment_cmd
      ->add_option("--metric", experiment.metric, "metric as name@param")
      ->required();
  experiment_cmd->add_option("--max-utility", experiment.max_utility,
                             "utility ceiling M (0: from data)");
  experiment_cmd->add_option("--log-base", experiment.log_base,
                             "dcg log base");
  experiment_cmd->add_option("--samplers", experiment.samplers,
                             "subset of qstar,naive,uniform,target");
  experiment_cmd
      ->add_option("--budgets", experiment.budgets,
                   "judgment budgets, comma separated")
      ->required();
  experiment_cmd->add_option("--replicates", experiment.replicates,
                             "replicates per configuration");
  experiment_cmd->add_option("--seed", experiment.seed, "replication seed")
      ->required();
  experiment_cmd->add_option("--epsilon", experiment.epsilon,
                             "smoothing mass in [0,1)");
  experiment_cmd->add_option(
      "--approx", experiment.approx,
      "constant | rank-decay | rank-decay-recip | true-utility");
  experiment_cmd->add_option("--approx-scale", experiment.approx_scale,
                             "decay scale (0: auto)");
  experiment_cmd->add_option("--approx-horizon", experiment.approx_horizon,
                             "decay horizon/offset (0: auto)");
  experiment_cmd->add_option("--approx-floor", experiment.approx_floor,
                             "utility floor (0: 1e-6 * M)");
  experiment_cmd->add_option("--alpha", experiment.alpha, "CI significance");
  experiment_cmd->add_option("--window", experiment.window,
                             "sliding window size (vs-baseline, ranking)");
  experiment_cmd->add_option("--jobs", experiment.jobs,
                             "worker threads (output-independent)");
  experiment_cmd->add_option("-o,--out", experiment.out_dir,
                             "output directory")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (synth_cmd->parsed()) run_synth_gen(synth);
    else if (derive_cmd->parsed()) run_derive(derive);
    else if (design_cmd->parsed()) run_design(design);
    else if (sample_cmd->parsed()) run_sample(sample);
    else if (estimate_cmd->parsed()) run_estimate(estimate);
    else if (compare_cmd->parsed()) run_compare(compare);
    else if (rank_cmd->parsed()) run_rank(rank);
    else if (pool_cmd->parsed()) run_pool(pool);
    else if (variance_cmd->parsed()) run_variance(variance);
    else if (experiment_cmd->parsed()) run_experiment_cmd(experiment);
  } catch (const internal_error& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 4;
  } catch (const rankeval::error& e) {
    std::cerr << "error: validation: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
