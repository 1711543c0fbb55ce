#pragma once

#include <filesystem>

#include "exact_bench.hpp"
#include "rounding.hpp"

namespace qcm {

// {"patience": int | "inf", "n_actions": k, "elements": [{"p": [k], "x": [k]}], "meta": optional}
inline PrcrsInput prcrs_input_from_json(const json& doc) {
  using namespace detail;
  check_keys(doc, "$", {"patience", "n_actions", "elements", "meta"});
  if (!doc.contains("patience") || !doc.contains("elements")) throw InvalidInput("$: patience and elements required");
  Patience ell = parse_patience(doc["patience"], "$.patience");
  std::size_t na = 1;
  if (doc.contains("n_actions")) {
    if (!doc["n_actions"].is_number_integer() || doc["n_actions"].get<long>() < 1)
      throw InvalidInput("$.n_actions: expected positive integer");
    na = doc["n_actions"].get<std::size_t>();
  }
  const json& els = doc["elements"];
  if (!els.is_array()) throw InvalidInput("$.elements: expected array");
  PrcrsInput in(els.size(), na, ell);
  for (std::size_t i = 0; i < els.size(); ++i) {
    std::string path = "$.elements[" + std::to_string(i) + "]";
    check_keys(els[i], path, {"p", "x"});
    for (const char* k : {"p", "x"})
      if (!els[i].contains(k) || !els[i][k].is_array() || els[i][k].size() != na)
        throw InvalidInput(path + "." + k + ": expected array of length n_actions");
    for (std::size_t a = 0; a < na; ++a)
      in.set(i, a, number(els[i]["p"][a], path + ".p"), number(els[i]["x"][a], path + ".x"));
  }
  auto viol = validate(in);
  if (!viol.empty()) throw InvalidInput("$." + viol.front().path + ": " + viol.front().message);
  return in;
}

inline PrcrsInput load_prcrs_input(const std::string& path) {
  try {
    return prcrs_input_from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw InvalidInput(path + ": malformed JSON: " + e.what());
  }
}

enum class Pipeline { kLpMGreedy, kLpCFull, kLpCColgenFull };

inline const char* to_string(Pipeline p) {
  switch (p) {
    case Pipeline::kLpMGreedy: return "lp-m+greedy";
    case Pipeline::kLpCFull: return "lp-c+full";
    default: return "lp-c-colgen+full";
  }
}

inline Pipeline parse_pipeline(const std::string& s, const std::string& path) {
  if (s == "lp-m+greedy") return Pipeline::kLpMGreedy;
  if (s == "lp-c+full") return Pipeline::kLpCFull;
  if (s == "lp-c-colgen+full") return Pipeline::kLpCColgenFull;
  throw InvalidInput(path + ": unknown pipeline \"" + s + "\"");
}

struct ExperimentConfig {
  std::string id = "experiment";
  std::optional<std::string> instance_path;
  std::optional<GeneratorParams> generator;
  std::uint64_t generator_seed = 0;
  Pipeline pipeline = Pipeline::kLpCFull;
  double eps = 0.0;
  PricingMode pricing = PricingMode::kExact;
  std::uint64_t trials = 10000;
  std::uint64_t seed = 0;
  std::optional<double> threshold;
  bool compute_opt = true;
  bool write_trials = true;

  // Ratio of LP value the policy must reach: beta(1-eps) for LP-C pipelines, 0 for the baseline.
  double effective_threshold() const {
    if (threshold) return *threshold;
    return pipeline == Pipeline::kLpMGreedy ? 0.0 : beta_two_sided() * (1.0 - eps);
  }
};

inline std::vector<Violation> validate(const ExperimentConfig& c) {
  std::vector<Violation> out;
  if (c.id.empty()) out.push_back({"id", "must be non-empty"});
  if (c.instance_path.has_value() == c.generator.has_value())
    out.push_back({"instance", "exactly one of a file path or generator parameters is required"});
  if (c.trials < 1) out.push_back({"trials", "must be >= 1"});
  if (!(c.eps >= 0.0 && c.eps < 1.0)) out.push_back({"eps", "must lie in [0,1)"});
  if (c.pricing == PricingMode::kEptas) {
    double inv = c.eps > 0.0 ? 1.0 / c.eps : 0.0;
    if (!(c.eps > 0.0) || std::abs(inv - std::round(inv)) > 1e-9)
      out.push_back({"eps", "must be in (0,1) with 1/eps an integer when EPTAS pricing is used"});
  }
  if (c.threshold && !(*c.threshold >= 0.0)) out.push_back({"threshold", "must be >= 0"});
  return out;
}

namespace detail {

inline std::vector<Patience> patience_list(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw InvalidInput(path + ": expected non-empty array");
  std::vector<Patience> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(parse_patience(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline std::uint64_t count(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 0) throw InvalidInput(path + ": expected non-negative integer");
  return j.get<std::uint64_t>();
}

}  // namespace detail

inline GeneratorParams generator_from_json(const json& j, const std::string& path, std::uint64_t* seed) {
  detail::check_keys(j, path,
                     {"n_u", "n_v", "n_actions", "patience", "patience_u", "q_model", "r_model", "r_max", "density", "seed"});
  GeneratorParams g;
  if (j.contains("n_u")) g.n_u = detail::count(j["n_u"], path + ".n_u");
  if (j.contains("n_v")) g.n_v = detail::count(j["n_v"], path + ".n_v");
  if (j.contains("n_actions")) g.n_actions = detail::count(j["n_actions"], path + ".n_actions");
  if (j.contains("patience")) g.patience_range = detail::patience_list(j["patience"], path + ".patience");
  if (j.contains("patience_u")) g.patience_u_range = detail::patience_list(j["patience_u"], path + ".patience_u");
  if (j.contains("q_model")) {
    auto s = j["q_model"].is_string() ? j["q_model"].get<std::string>() : "";
    if (s == "uniform") g.q_model = QModel::kUniform;
    else if (s == "sparse") g.q_model = QModel::kSparse;
    else throw InvalidInput(path + ".q_model: expected \"uniform\" or \"sparse\"");
  }
  if (j.contains("r_model")) {
    auto s = j["r_model"].is_string() ? j["r_model"].get<std::string>() : "";
    if (s == "uniform") g.r_model = RModel::kUniform;
    else if (s == "tradeoff") g.r_model = RModel::kTradeoff;
    else throw InvalidInput(path + ".r_model: expected \"uniform\" or \"tradeoff\"");
  }
  if (j.contains("r_max")) g.r_max = detail::number(j["r_max"], path + ".r_max");
  if (j.contains("density")) g.density = detail::number(j["density"], path + ".density");
  if (seed) *seed = j.contains("seed") ? detail::count(j["seed"], path + ".seed") : 0;
  return g;
}

// Relative instance paths resolve against `base_dir`.
inline ExperimentConfig experiment_from_json(const json& j, const std::string& path,
                                             const std::filesystem::path& base_dir = {}) {
  detail::check_keys(j, path, {"id", "instance", "generator", "pipeline", "eps", "pricing", "trials", "seed", "threshold",
                               "opt", "trial_log"});
  ExperimentConfig c;
  if (j.contains("id")) {
    if (!j["id"].is_string()) throw InvalidInput(path + ".id: expected string");
    c.id = j["id"].get<std::string>();
  }
  if (j.contains("instance")) {
    if (!j["instance"].is_string()) throw InvalidInput(path + ".instance: expected path string");
    std::filesystem::path p(j["instance"].get<std::string>());
    c.instance_path = (p.is_relative() && !base_dir.empty() ? base_dir / p : p).string();
  }
  if (j.contains("generator")) c.generator = generator_from_json(j["generator"], path + ".generator", &c.generator_seed);
  if (j.contains("pipeline")) {
    if (!j["pipeline"].is_string()) throw InvalidInput(path + ".pipeline: expected string");
    c.pipeline = parse_pipeline(j["pipeline"].get<std::string>(), path + ".pipeline");
  }
  if (j.contains("eps")) c.eps = detail::number(j["eps"], path + ".eps");
  if (j.contains("pricing")) {
    auto s = j["pricing"].is_string() ? j["pricing"].get<std::string>() : "";
    if (s == "exact") c.pricing = PricingMode::kExact;
    else if (s == "eptas") c.pricing = PricingMode::kEptas;
    else throw InvalidInput(path + ".pricing: expected \"exact\" or \"eptas\"");
  }
  if (j.contains("trials")) c.trials = detail::count(j["trials"], path + ".trials");
  if (j.contains("seed")) c.seed = detail::count(j["seed"], path + ".seed");
  if (j.contains("threshold")) c.threshold = detail::number(j["threshold"], path + ".threshold");
  if (j.contains("opt")) {
    if (!j["opt"].is_boolean()) throw InvalidInput(path + ".opt: expected boolean");
    c.compute_opt = j["opt"].get<bool>();
  }
  if (j.contains("trial_log")) {
    if (!j["trial_log"].is_boolean()) throw InvalidInput(path + ".trial_log: expected boolean");
    c.write_trials = j["trial_log"].get<bool>();
  }
  auto v = validate(c);
  if (!v.empty()) throw InvalidInput(path + "." + v.front().path + ": " + v.front().message);
  return c;
}

struct ExperimentResult {
  std::string id;
  Pipeline pipeline = Pipeline::kLpCFull;
  SimReport report;
  double threshold = 0.0;
  bool pass = false;
  std::size_t lp_columns = 0;
  std::vector<double> rewards;

  std::string report_json() const;
  std::string trial_csv() const;
};

namespace detail {
inline json optional_number(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }
}  // namespace detail

inline std::string ExperimentResult::report_json() const {
  nlohmann::ordered_json j;
  j["id"] = id;
  j["pipeline"] = to_string(pipeline);
  j["trials"] = report.trials;
  j["mean"] = report.mean;
  j["variance"] = report.variance;
  j["half_width"] = report.half_width;
  j["lp_value"] = detail::optional_number(report.lp_value);
  j["opt_value"] = detail::optional_number(report.opt_value);
  j["ratio_vs_lp"] = detail::optional_number(report.ratio_vs_lp);
  j["ratio_vs_opt"] = detail::optional_number(report.ratio_vs_opt);
  j["threshold"] = threshold;
  j["lp_columns"] = lp_columns;
  j["pass"] = pass;
  return j.dump(2) + "\n";
}

inline std::string ExperimentResult::trial_csv() const {
  std::string out = "trial,reward\n";
  for (std::size_t t = 0; t < rewards.size(); ++t) out += std::to_string(t) + "," + format_double(rewards[t]) + "\n";
  return out;
}

inline Instance experiment_instance(const ExperimentConfig& c) {
  if (c.instance_path) return load_instance(*c.instance_path);
  return random_instance(c.generator_seed, *c.generator);
}

inline std::optional<double> try_opt(const Instance& inst) {
  try {
    return opt_dp(inst).value();
  } catch (const BudgetExceeded&) {
    return std::nullopt;
  }
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, unsigned workers = 1) {
  auto v = validate(cfg);
  if (!v.empty()) throw InvalidInput(v.front().path + ": " + v.front().message);
  Instance inst = experiment_instance(cfg);
  require_valid(inst);
  ExperimentResult res;
  res.id = cfg.id;
  res.pipeline = cfg.pipeline;
  res.rewards.assign(cfg.trials, 0.0);
  double lp = 0.0;
  std::size_t n_chunks = static_cast<std::size_t>((cfg.trials + kTrialChunk - 1) / kTrialChunk);
  auto run = [&](auto&& trial) {
    parallel_chunks(n_chunks, workers, [&](std::size_t c) {
      std::uint64_t lo = c * kTrialChunk, hi = std::min<std::uint64_t>(cfg.trials, lo + kTrialChunk);
      for (std::uint64_t t = lo; t < hi; ++t) res.rewards[t] = trial(t);
    });
  };
  if (cfg.pipeline == Pipeline::kLpMGreedy) {
    EdgeLpSolution sol = solve_lp_m(inst);
    lp = sol.objective;
    res.lp_columns = sol.n_columns;
    run([&](std::uint64_t t) { return edge_greedy_trial(sol, inst, cfg.seed, t); });
  } else {
    LpSolution sol;
    if (cfg.pipeline == Pipeline::kLpCFull) {
      sol = solve_lp_c_explicit(inst);
    } else {
      ColgenOptions o;
      o.mode = cfg.pricing;
      if (cfg.pricing == PricingMode::kEptas) o.eptas_eps = cfg.eps;
      sol = solve_lp_c_colgen(inst, cfg.eps, o);
    }
    lp = sol.objective;
    res.lp_columns = sol.n_columns;
    RoundingPlan plan(sol, inst);
    run([&](std::uint64_t t) {
      NullObserver obs;
      return round_trial(plan, RoundingMode::kFull, cfg.seed, t, obs);
    });
  }
  RunningStats s;
  for (double r : res.rewards) s.add(r);
  res.report = SimReport::from(s);
  res.report.set_comparators(lp, cfg.compute_opt ? try_opt(inst) : std::nullopt);
  res.threshold = cfg.effective_threshold();
  res.pass = res.report.mean >= res.threshold * lp - 4.0 * res.report.std_error() - 1e-12;
  if (!cfg.write_trials) res.rewards.clear();
  return res;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InvalidInput(p.string() + ": cannot write");
  out << text;
}

inline void write_experiment(const ExperimentResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / (r.id + ".json"), r.report_json());
  if (!r.rewards.empty()) write_text(dir / (r.id + ".trials.csv"), r.trial_csv());
}

struct Manifest {
  std::vector<ExperimentConfig> experiments;
};

inline Manifest load_manifest(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw InvalidInput(path + ": malformed JSON: " + e.what());
  }
  detail::check_keys(doc, "manifest", {"experiments"});
  if (!doc.contains("experiments") || !doc["experiments"].is_array())
    throw InvalidInput("manifest.experiments: expected array");
  Manifest m;
  auto base = std::filesystem::path(path).parent_path();
  std::set<std::string> ids;
  for (std::size_t i = 0; i < doc["experiments"].size(); ++i) {
    std::string p = "manifest.experiments[" + std::to_string(i) + "]";
    auto c = experiment_from_json(doc["experiments"][i], p, base);
    if (!ids.insert(c.id).second) throw InvalidInput(p + ".id: duplicate id \"" + c.id + "\"");
    m.experiments.push_back(std::move(c));
  }
  return m;
}

struct SuiteResult {
  std::vector<ExperimentResult> rows;
  bool all_pass = true;
  std::string summary_csv() const;
};

inline std::string SuiteResult::summary_csv() const {
  auto opt = [](const std::optional<double>& x) { return x ? format_double(*x) : std::string(); };
  std::string out = "id,pipeline,lp,opt,mean,half_width,ratio_vs_lp,ratio_vs_opt,threshold,pass\n";
  for (const auto& r : rows)
    out += r.id + "," + to_string(r.pipeline) + "," + opt(r.report.lp_value) + "," + opt(r.report.opt_value) + "," +
           format_double(r.report.mean) + "," + format_double(r.report.half_width) + "," + opt(r.report.ratio_vs_lp) +
           "," + opt(r.report.ratio_vs_opt) + "," + format_double(r.threshold) + "," + (r.pass ? "pass" : "fail") + "\n";
  return out;
}

// Runs the experiments whose id contains `filter`; an empty selection is an error.
inline SuiteResult run_suite(const Manifest& m, const std::string& filter = "", unsigned workers = 1,
                             const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
  std::vector<const ExperimentConfig*> picked;
  for (const auto& c : m.experiments)
    if (filter.empty() || c.id.find(filter) != std::string::npos) picked.push_back(&c);
  if (picked.empty()) throw InvalidInput("manifest: no experiments selected");
  SuiteResult s;
  for (const auto* c : picked) {
    s.rows.push_back(run_experiment(*c, workers));
    if (out_dir) write_experiment(s.rows.back(), *out_dir);
    s.rows.back().rewards.clear();
    s.rows.back().rewards.shrink_to_fit();
    s.all_pass = s.all_pass && s.rows.back().pass;
  }
  if (out_dir) write_text(*out_dir / "summary.csv", s.summary_csv());
  return s;
}

}  // namespace qcm
