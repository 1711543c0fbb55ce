#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"

using namespace qcm;

namespace {

LpSolution single_config(const Instance& inst, std::vector<std::pair<std::size_t, std::size_t>> chain, std::size_t v,
                         double w) {
  Config c;
  c.v = v;
  for (auto [u, a] : chain) c.us.push_back(u), c.actions.push_back(a);
  c.value = config_value(inst, c);
  LpSolution s;
  s.weights.push_back({c, w});
  s.objective = w * c.value;
  s.marginals = edge_marginals(s.weights, inst);
  return s;
}

Instance single_edge(Patience pu) {
  Instance I({"u"}, {"v"}, {"a"});
  I.set(0, 0, 0, 1.0, 1.0);
  I.set_patience_u(0, pu);
  return I;
}

void expect_marginals(const Instance& inst, const LpSolution& sol, RoundingMode mode, std::uint64_t trials,
                      std::uint64_t seed) {
  RoundingPlan plan(sol, inst);
  RoundingStats st = simulate_rounding(plan, mode, trials, seed);
  Marginals z = edge_marginals(sol, inst);
  double n = static_cast<double>(trials);
  for (std::size_t u = 0; u < inst.num_u(); ++u)
    for (std::size_t v = 0; v < inst.num_v(); ++v)
      for (std::size_t a = 0; a < inst.num_actions(); ++a) {
        double p = z.at(u, v, a), phat = st.suggested[inst.slot(u, v, a)] / n;
        double sigma = std::sqrt(std::max(p * (1 - p), 1e-6) / n);
        EXPECT_NEAR(phat, p, 4.5 * sigma) << u << "," << v << "," << a;
      }
  if (mode == RoundingMode::kRelaxed)
    EXPECT_NEAR(st.reward.mean(), sol.objective, 4.5 * std::sqrt(st.reward.variance() / n) + 1e-12);
}

Instance gen(std::uint64_t seed, std::size_t nu, std::size_t nv, std::size_t na, std::vector<Patience> pv,
             std::vector<Patience> pu = {}) {
  GeneratorParams g;
  g.n_u = nu;
  g.n_v = nv;
  g.n_actions = na;
  g.patience_range = std::move(pv);
  g.patience_u_range = std::move(pu);
  return random_instance(seed, g);
}

}  // namespace

TEST(RelaxedRound, SingleEdgeAlwaysMatched) {
  Instance I = single_edge(Patience::finite(1));
  auto sol = single_config(I, {{0, 0}}, 0, 1.0);
  for (std::uint64_t t = 0; t < 50; ++t) {
    auto o = relaxed_round(sol, I, 3, t);
    ASSERT_EQ(o.matching.size(), 1u);
    EXPECT_EQ(o.reward, 1.0);
    EXPECT_TRUE(check_outcome(o, I, RoundingMode::kRelaxed).empty());
  }
}

TEST(RelaxedRound, SuggestionFrequenciesMatchMarginals) {
  for (std::uint64_t seed : {1, 2, 3}) {
    Instance I = gen(seed, 3, 3, 2, {Patience::finite(1), Patience::finite(2), Patience::infinite()});
    LpSolution sol = solve_lp_c_explicit(I);
    expect_marginals(I, sol, RoundingMode::kRelaxed, 100000, seed);
  }
}

TEST(FullRound, SuggestionFrequenciesMatchMarginals) {
  for (std::uint64_t seed : {4, 5, 6}) {
    Instance I = gen(seed, 3, 3, 2, {Patience::finite(1), Patience::finite(2)});
    LpSolution sol = solve_lp_c_explicit(I);
    expect_marginals(I, sol, RoundingMode::kFull, 100000, seed);
  }
}

TEST(FullRound, SingleEdgeInfinitePatience) {
  Instance I = single_edge(Patience::infinite());
  auto sol = single_config(I, {{0, 0}}, 0, 1.0);
  SimReport r = evaluate_policy(PolicyKind::kFull, I, sol, 200000, 11);
  EXPECT_NEAR(r.mean, one_minus_inv_e(), 4 * r.std_error());
  ASSERT_TRUE(r.ratio_vs_lp.has_value());
  EXPECT_NEAR(*r.ratio_vs_lp, one_minus_inv_e(), 4 * r.std_error());
}

TEST(FullRound, EmptySolution) {
  Instance I = gen(7, 2, 2, 1, {Patience::finite(1)});
  LpSolution empty;
  empty.marginals = Marginals(I);
  auto o = full_round(empty, I, SchemeFamily::kPrcrs, 1);
  EXPECT_TRUE(o.matching.empty());
  EXPECT_EQ(o.reward, 0.0);
  EXPECT_TRUE(o.log.empty());
  EXPECT_EQ(evaluate_policy(PolicyKind::kFull, I, empty, 100, 1).mean, 0.0);
}

TEST(GreedyRound, SingleEdgeNoContention) {
  Instance I = single_edge(Patience::finite(1));
  auto sol = single_config(I, {{0, 0}}, 0, 1.0);
  for (std::uint64_t t = 0; t < 50; ++t) {
    auto o = greedy_round(sol, I, 5, t);
    ASSERT_EQ(o.matching.size(), 1u);
    EXPECT_EQ(o.reward, 1.0);
  }
}

TEST(RoundingTrace, EveryTrialValidAndConsistentWithSchemes) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Instance I = gen(seed, 3, 3, 2, {Patience::finite(1), Patience::finite(2), Patience::infinite()},
                     {Patience::finite(1), Patience::finite(2), Patience::finite(3)});
    LpSolution sol = solve_lp_c_explicit(I);
    for (SchemeFamily fam : {SchemeFamily::kPrcrs, SchemeFamily::kGreedy}) {
      RoundingPlan plan(sol, I, fam);
      for (std::uint64_t t = 0; t < 200; ++t) {
        auto o = detail::traced_round(plan, RoundingMode::kFull, seed, t);
        auto bad = check_outcome(o, I, RoundingMode::kFull);
        ASSERT_TRUE(bad.empty()) << seed << " " << t << " " << bad[0].path << ": " << bad[0].message;
        for (std::size_t u = 0; u < I.num_u(); ++u) {
          std::vector<std::size_t> real;
          for (const auto& q : o.log)
            if (q.real && q.u == u) real.push_back(q.v);
          EXPECT_EQ(real, o.psi_queried[u]);
          EXPECT_EQ(o.psi_arrivals[u].size(), I.num_v());
          std::set<std::size_t> seen(o.psi_arrivals[u].begin(), o.psi_arrivals[u].end());
          EXPECT_EQ(seen.size(), I.num_v());
        }
        for (std::size_t u = 0; u < I.num_u(); ++u) {
          std::vector<std::size_t> pos(I.num_v());
          for (std::size_t k = 0; k < o.permutation.size(); ++k) pos[o.permutation[k]] = k;
          for (std::size_t k = 1; k < o.psi_arrivals[u].size(); ++k)
            EXPECT_LT(pos[o.psi_arrivals[u][k - 1]], pos[o.psi_arrivals[u][k]]);
        }
      }
      for (std::uint64_t t = 0; t < 50; ++t) {
        auto o = detail::traced_round(plan, RoundingMode::kRelaxed, seed, t);
        auto bad = check_outcome(o, I, RoundingMode::kRelaxed);
        ASSERT_TRUE(bad.empty()) << bad[0].path << ": " << bad[0].message;
      }
    }
  }
}

TEST(RoundingTrace, SuggestionsFollowConfigOrder) {
  Instance I = gen(9, 3, 2, 1, {Patience::infinite()});
  LpSolution sol = solve_lp_c_explicit(I);
  for (std::uint64_t t = 0; t < 100; ++t) {
    auto o = full_round(sol, I, SchemeFamily::kPrcrs, 2, t);
    std::size_t k = 0;
    for (const auto& q : o.log) {
      while (k < o.suggestions.size() && !(o.suggestions[k][0] == q.u && o.suggestions[k][1] == q.v)) ++k;
      ASSERT_LT(k, o.suggestions.size());
      EXPECT_EQ(o.suggestions[k][2], q.a);
    }
  }
}

TEST(GreedyRound, AboveBaselineFactorOnRandomInstances) {
  double beta0 = 0.47;
  for (std::uint64_t seed = 100; seed < 115; ++seed) {
    Instance I = gen(seed, 3, 3, 2, {Patience::finite(1), Patience::finite(2)});
    LpSolution sol = solve_lp_c_explicit(I);
    SimReport r = evaluate_policy(PolicyKind::kGreedy, I, sol, 20000, seed);
    EXPECT_GE(r.mean, beta0 * sol.objective - 4 * r.std_error()) << seed;
  }
}

TEST(EvaluatePolicy, TwoSidedRatioOnRandomInstances) {
  for (std::uint64_t seed = 200; seed < 215; ++seed) {
    Instance I = gen(seed, 3, 3, 2, {Patience::finite(1), Patience::finite(2), Patience::finite(3)},
                     {Patience::finite(2), Patience::finite(3)});
    LpSolution sol = solve_lp_c_explicit(I);
    double opt = opt_dp(I).value();
    SimReport r = evaluate_policy(PolicyKind::kFull, I, sol, 20000, seed, 1, opt);
    EXPECT_GE(r.mean, beta_two_sided() * sol.objective - 4 * r.std_error()) << seed;
    EXPECT_LE(r.mean, opt + 4 * r.std_error()) << seed;
    ASSERT_TRUE(r.ratio_vs_opt.has_value());
  }
}

TEST(EvaluatePolicy, OneSidedRatioOnRandomInstances) {
  for (std::uint64_t seed = 300; seed < 315; ++seed) {
    Instance I = gen(seed, 3, 3, 1, {Patience::finite(1), Patience::finite(2)}, {Patience::infinite()});
    LpSolution sol = solve_lp_c_explicit(I);
    SimReport r = evaluate_policy(PolicyKind::kFull, I, sol, 20000, seed);
    EXPECT_GE(r.mean, one_minus_inv_e() * sol.objective - 4 * r.std_error()) << seed;
  }
}

TEST(EvaluatePolicy, FullBeatsGreedyOnPoissonFixture) {
  // One offline vertex with patience 2 and single-edge configurations:
  // a heavy edge, a block of valuable light edges, and a block of certain failures.
  std::vector<std::string> V;
  std::vector<std::tuple<double, double, double>> rows;  // q, x, r
  rows.emplace_back(1.0, 0.5, 1.0);
  for (int i = 0; i < 25; ++i) rows.emplace_back(1.0, 0.02, 10.0);
  for (int i = 0; i < 50; ++i) rows.emplace_back(0.0, 0.02, 1.0);
  for (std::size_t i = 0; i < rows.size(); ++i) V.push_back("v" + std::to_string(i));
  Instance I({"u"}, V, {"a"});
  I.set_patience_u(0, Patience::finite(2));
  LpSolution sol;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto [q, x, r] = rows[i];
    I.set(0, i, 0, q, r);
    Config c;
    c.v = i;
    c.us = {0};
    c.actions = {0};
    c.value = config_value(I, c);
    sol.weights.push_back({c, x});
    sol.objective += x * c.value;
  }
  sol.marginals = edge_marginals(sol, I);
  PrcrsInput in(I.num_v(), 1, Patience::finite(2));
  for (std::size_t v = 0; v < I.num_v(); ++v) in.set(v, 0, I.q(0, v, 0), sol.marginals.at(0, v, 0));
  ASSERT_TRUE(validate(in).empty());
  SimReport full = evaluate_policy(PolicyKind::kFull, I, sol, 200000, 21);
  SimReport greedy = evaluate_policy(PolicyKind::kGreedy, I, sol, 200000, 22);
  double se = std::sqrt(full.std_error() * full.std_error() + greedy.std_error() * greedy.std_error());
  EXPECT_GT(full.mean, greedy.mean + 3 * se) << full.mean << " vs " << greedy.mean;
}

TEST(EvaluatePolicy, DeterministicAcrossWorkers) {
  Instance I = gen(17, 3, 3, 2, {Patience::finite(2)});
  LpSolution sol = solve_lp_c_explicit(I);
  SimReport a = evaluate_policy(PolicyKind::kFull, I, sol, 10000, 5, 1);
  SimReport b = evaluate_policy(PolicyKind::kFull, I, sol, 10000, 5, 3);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.variance, b.variance);
  SimReport c = evaluate_policy(PolicyKind::kFull, I, sol, 10000, 6, 1);
  EXPECT_NE(a.mean, c.mean);
}

TEST(EvaluatePolicy, RejectsZeroTrials) {
  Instance I = single_edge(Patience::finite(1));
  auto sol = single_config(I, {{0, 0}}, 0, 1.0);
  EXPECT_THROW(evaluate_policy(PolicyKind::kFull, I, sol, 0, 1), InvalidInput);
}

TEST(EdgeGreedy, ValidAgainstEdgeLp) {
  for (std::uint64_t seed = 400; seed < 410; ++seed) {
    Instance I = gen(seed, 3, 3, 2, {Patience::finite(1), Patience::finite(2)});
    EdgeLpSolution m = solve_lp_m(I);
    SimReport r = evaluate_edge_greedy(I, m, 5000, seed);
    EXPECT_GE(r.mean, 0.0);
    EXPECT_LE(r.mean, m.objective + 4 * r.std_error());
  }
}
