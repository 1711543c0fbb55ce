#include <CLI11.hpp>
#include <iostream>

#include "qcm/qcm.hpp"

using namespace qcm;
using ojson = nlohmann::ordered_json;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string out;
  unsigned workers = 1;
};

void emit(const Globals& g, const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
    return;
  }
  auto parent = std::filesystem::path(g.out).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  write_text(g.out, text);
}

void emit_json(const Globals& g, const ojson& j) { emit(g, j.dump(2) + "\n"); }

ojson marginals_json(const Instance& I, const Marginals& m) {
  ojson arr = ojson::array();
  for (std::size_t u = 0; u < I.num_u(); ++u)
    for (std::size_t v = 0; v < I.num_v(); ++v)
      for (std::size_t a = 0; a < I.num_actions(); ++a)
        if (m.at(u, v, a) > 1e-12)
          arr.push_back({{"u", I.u_ids()[u]}, {"v", I.v_ids()[v]}, {"a", I.action_ids()[a]}, {"z", m.at(u, v, a)}});
  return arr;
}

ojson lp_c_json(const Instance& I, const LpSolution& sol) {
  ojson alpha = ojson::object(), gamma = ojson::object(), beta = ojson::object();
  for (std::size_t u = 0; u < I.num_u(); ++u) {
    alpha[I.u_ids()[u]] = sol.duals.alpha[u];
    gamma[I.u_ids()[u]] = sol.duals.gamma[u];
  }
  for (std::size_t v = 0; v < I.num_v(); ++v) beta[I.v_ids()[v]] = sol.duals.beta[v];
  ojson configs = ojson::array();
  for (const auto& wc : sol.weights) {
    ojson seq = ojson::array();
    for (std::size_t i = 0; i < wc.config.us.size(); ++i)
      seq.push_back({{"u", I.u_ids()[wc.config.us[i]]}, {"a", I.action_ids()[wc.config.actions[i]]}});
    configs.push_back({{"v", I.v_ids()[wc.config.v]}, {"queries", seq}, {"weight", wc.weight}, {"value", wc.config.value}});
  }
  ojson j;
  j["value"] = sol.objective;
  j["n_columns"] = sol.n_columns;
  j["marginals"] = marginals_json(I, sol.marginals);
  j["duals"] = {{"alpha", alpha}, {"gamma", gamma}, {"beta", beta}};
  j["configs"] = configs;
  return j;
}

ojson lp_m_json(const Instance& I, const EdgeLpSolution& sol) {
  ojson match = ojson::object(), patience = ojson::object(), edge = ojson::array();
  std::size_t nvert = I.num_u() + I.num_v();
  auto id = [&](std::size_t s) { return s < I.num_u() ? I.u_ids()[s] : I.v_ids()[s - I.num_u()]; };
  if (!sol.duals.empty()) {
    for (std::size_t s = 0; s < nvert; ++s) {
      match[id(s)] = sol.duals[2 * s];
      patience[id(s)] = sol.duals[2 * s + 1];
    }
    for (std::size_t u = 0; u < I.num_u(); ++u)
      for (std::size_t v = 0; v < I.num_v(); ++v)
        edge.push_back({{"u", I.u_ids()[u]}, {"v", I.v_ids()[v]}, {"value", sol.duals[2 * nvert + I.edge(u, v)]}});
  }
  ojson j;
  j["value"] = sol.objective;
  j["n_columns"] = sol.n_columns;
  j["marginals"] = marginals_json(I, sol.z);
  j["duals"] = {{"match", match}, {"patience", patience}, {"edge", edge}};
  return j;
}

std::vector<Patience> parse_patience_list(const std::vector<std::string>& xs, const std::string& flag) {
  std::vector<Patience> out;
  for (const auto& s : xs) {
    if (s == "inf") {
      out.push_back(Patience::infinite());
      continue;
    }
    try {
      std::size_t used = 0;
      long n = std::stol(s, &used);
      if (used != s.size() || n < 0) throw std::invalid_argument(s);
      out.push_back(Patience::finite(n));
    } catch (const std::logic_error&) {
      throw InvalidInput(flag + ": expected a non-negative integer or \"inf\", got \"" + s + "\"");
    }
  }
  return out;
}

ojson report_json(const VerificationReport& r) {
  ojson j;
  j["suite"] = r.suite;
  j["points_checked"] = r.points_checked;
  j["min_margin"] = r.min_margin;
  j["witness"] = r.witness;
  j["pass"] = r.pass;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query-commit matching with patience: solvers, rounding and verification"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--out", g.out, "Output file (suite: output directory)");
  app.add_option("--workers", g.workers, "Worker threads")->check(CLI::Range(1u, 1024u))->capture_default_str();

  std::string instance_path;
  auto add_instance = [&](CLI::App* sub) { sub->add_option("instance", instance_path, "Instance JSON file")->required(); };

  auto* gen = app.add_subcommand("gen", "Generate a random instance");
  GeneratorParams gp;
  std::vector<std::string> pv{"1"}, pu;
  std::string q_model = "uniform", r_model = "uniform";
  gen->add_option("--n-u", gp.n_u)->capture_default_str();
  gen->add_option("--n-v", gp.n_v)->capture_default_str();
  gen->add_option("--n-actions", gp.n_actions)->capture_default_str();
  gen->add_option("--patience", pv, "Online patience choices (integers or inf)");
  gen->add_option("--patience-u", pu, "Offline patience choices (default: same as --patience)");
  gen->add_option("--q-model", q_model)->check(CLI::IsMember({"uniform", "sparse"}))->capture_default_str();
  gen->add_option("--r-model", r_model)->check(CLI::IsMember({"uniform", "tradeoff"}))->capture_default_str();
  gen->add_option("--r-max", gp.r_max)->capture_default_str();
  gen->add_option("--density", gp.density)->capture_default_str();

  auto* opt = app.add_subcommand("opt", "Exact optimal adaptive policy value");
  add_instance(opt);
  auto* lpm = app.add_subcommand("lp-m", "Edge LP relaxation");
  add_instance(lpm);
  auto* lpc = app.add_subcommand("lp-c", "Configuration LP by explicit enumeration");
  add_instance(lpc);
  auto* colgen = app.add_subcommand("lp-c-colgen", "Configuration LP by column generation");
  add_instance(colgen);
  double eps = 0.0;
  std::string pricing = "exact";
  bool relaxed_stop = false;
  colgen->add_option("--eps", eps, "Approximation slack")->capture_default_str();
  colgen->add_option("--pricing", pricing)->check(CLI::IsMember({"exact", "eptas"}))->capture_default_str();
  colgen->add_flag("--relaxed-stop", relaxed_stop, "Stop once the relaxed dual is feasible");

  auto* round = app.add_subcommand("round", "Round the configuration LP and simulate the policy");
  add_instance(round);
  std::string policy = "full", lp_kind = "explicit";
  std::uint64_t trials = 10000;
  bool no_opt = false;
  round->add_option("--policy", policy)->check(CLI::IsMember({"full", "greedy"}))->capture_default_str();
  round->add_option("--trials", trials)->capture_default_str();
  round->add_option("--lp", lp_kind)->check(CLI::IsMember({"explicit", "colgen"}))->capture_default_str();
  round->add_flag("--no-opt", no_opt, "Skip the exact optimum");

  auto* prc = app.add_subcommand("prcrs-mc", "Monte Carlo selectability of the contention resolution scheme");
  std::string prcrs_input;
  prc->add_option("--input", prcrs_input)->required();
  prc->add_option("--trials", trials)->capture_default_str();

  auto* star = app.add_subcommand("star-eptas", "Approximation scheme for one online vertex");
  add_instance(star);
  std::string star_v;
  double star_eps = 0.5;
  star->add_option("--eps", star_eps)->capture_default_str();
  star->add_option("--v", star_v, "Online vertex id (default: the only one)");

  auto* ver = app.add_subcommand("verify-numerics", "Numerical verification suites");
  std::string suite_name = "all";
  ver->add_option("--suite", suite_name)->check(CLI::IsMember({"b", "exchange", "fl", "final", "bennett", "all"}))
      ->capture_default_str();

  auto* suite = app.add_subcommand("suite", "Run an experiment manifest");
  std::string manifest_path, filter;
  suite->add_option("manifest", manifest_path)->required();
  suite->add_option("--filter", filter, "Run only experiments whose id contains this text");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      gp.patience_range = parse_patience_list(pv, "--patience");
      gp.patience_u_range = parse_patience_list(pu, "--patience-u");
      gp.q_model = q_model == "sparse" ? QModel::kSparse : QModel::kUniform;
      gp.r_model = r_model == "tradeoff" ? RModel::kTradeoff : RModel::kUniform;
      emit(g, to_json(random_instance(g.seed, gp)));
      return 0;
    }
    if (opt->parsed()) {
      OptResult r = opt_dp(load_instance(instance_path));
      ojson j;
      j["value"] = r.value();
      j["states_expanded"] = r.states_expanded();
      emit_json(g, j);
      return 0;
    }
    if (lpm->parsed()) {
      Instance I = load_instance(instance_path);
      emit_json(g, lp_m_json(I, solve_lp_m(I)));
      return 0;
    }
    if (lpc->parsed()) {
      Instance I = load_instance(instance_path);
      emit_json(g, lp_c_json(I, solve_lp_c_explicit(I)));
      return 0;
    }
    if (colgen->parsed()) {
      Instance I = load_instance(instance_path);
      ColgenOptions o;
      o.relaxed_stop = relaxed_stop;
      if (pricing == "eptas") {
        require_eps(eps);
        o.mode = PricingMode::kEptas;
        o.eptas_eps = eps;
      }
      LpSolution sol = solve_lp_c_colgen(I, eps, o);
      ojson j = lp_c_json(I, sol);
      j["iterations"] = sol.iterations;
      emit_json(g, j);
      return 0;
    }
    if (round->parsed()) {
      Instance I = load_instance(instance_path);
      LpSolution sol = lp_kind == "colgen" ? solve_lp_c_colgen(I, 0.0) : solve_lp_c_explicit(I);
      std::optional<double> best;
      if (!no_opt) best = try_opt(I);
      SimReport r = evaluate_policy(policy == "full" ? PolicyKind::kFull : PolicyKind::kGreedy, I, sol, trials, g.seed,
                                    g.workers, best);
      ojson j;
      j["mean"] = r.mean;
      j["half_width"] = r.half_width;
      j["lp_value"] = *r.lp_value;
      if (r.opt_value) j["opt_value"] = *r.opt_value;
      j["ratio_vs_lp"] = r.ratio_vs_lp ? ojson(*r.ratio_vs_lp) : ojson(nullptr);
      if (r.ratio_vs_opt) j["ratio_vs_opt"] = *r.ratio_vs_opt;
      emit_json(g, j);
      return 0;
    }
    if (prc->parsed()) {
      PrcrsInput in = load_prcrs_input(prcrs_input);
      auto rows = estimate_selectability(in, trials, g.seed, g.workers);
      std::string csv = "i,a,x,p,estimate,half_width,bound,pass\n";
      bool all = true;
      for (const auto& r : rows) {
        csv += std::to_string(r.i) + "," + std::to_string(r.a) + "," + format_double(r.x) + "," + format_double(r.p) +
               "," + (r.suggested ? format_double(r.estimate) : std::string()) + "," + format_double(r.half_width) +
               "," + format_double(r.bound) + "," + (r.pass ? "pass" : "fail") + "\n";
        all = all && r.pass;
      }
      emit(g, csv);
      return all ? 0 : 1;
    }
    if (star->parsed()) {
      Instance I = load_instance(instance_path);
      std::size_t v = 0;
      if (star_v.empty()) {
        if (I.num_v() != 1) throw InvalidInput("--v: required when the instance has more than one online vertex");
      } else {
        auto it = std::find(I.v_ids().begin(), I.v_ids().end(), star_v);
        if (it == I.v_ids().end()) throw InvalidInput("--v: unknown online vertex \"" + star_v + "\"");
        v = static_cast<std::size_t>(it - I.v_ids().begin());
      }
      EptasResult r = eptas(star_of(I, v), star_eps);
      ojson j, order = ojson::array(), actions = ojson::array();
      for (std::size_t k = 0; k < r.policy.edges.size(); ++k) {
        order.push_back(I.u_ids()[r.policy.edges[k]]);
        actions.push_back(I.action_ids()[r.policy.actions[k]]);
      }
      j["value"] = r.policy.value;
      j["order"] = order;
      j["actions"] = actions;
      j["guesses_tried"] = r.guesses_tried;
      j["feasible_guesses"] = r.feasible_guesses;
      emit_json(g, j);
      return 0;
    }
    if (ver->parsed()) {
      std::vector<VerificationReport> reps;
      if (suite_name == "b" || suite_name == "all") reps.push_back(verify_b_properties());
      if (suite_name == "exchange" || suite_name == "all") reps.push_back(verify_exchange_l2());
      if (suite_name == "fl" || suite_name == "all") reps.push_back(verify_fl_monotonicity());
      if (suite_name == "final" || suite_name == "all") reps.push_back(verify_final_bounds());
      if (suite_name == "bennett" || suite_name == "all") reps.push_back(verify_bennett());
      bool all = true;
      for (const auto& r : reps) all = all && r.pass;
      if (reps.size() == 1) {
        emit_json(g, report_json(reps[0]));
      } else {
        ojson arr = ojson::array();
        for (const auto& r : reps) arr.push_back(report_json(r));
        ojson j;
        j["suite"] = "all";
        j["pass"] = all;
        j["reports"] = arr;
        emit_json(g, j);
      }
      return all ? 0 : 1;
    }
    if (suite->parsed()) {
      Manifest m = load_manifest(manifest_path);
      std::filesystem::path dir = g.out.empty() ? std::filesystem::path("results") : std::filesystem::path(g.out);
      SuiteResult s = run_suite(m, filter, g.workers, dir);
      std::cout << s.summary_csv();
      return s.all_pass ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
