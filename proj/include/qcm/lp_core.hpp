#pragma once

#include <array>
#include <map>

#include "exact_bench.hpp"
#include "simplex.hpp"
#include "star_eptas.hpp"

namespace qcm {

// Dense per-(u, v, a) table.
struct Marginals {
  std::size_t nu = 0, nv = 0, na = 0;
  std::vector<double> z;

  Marginals() = default;
  explicit Marginals(const Instance& inst)
      : nu(inst.num_u()), nv(inst.num_v()), na(inst.num_actions()), z(nu * nv * na, 0.0) {}
  double& at(std::size_t u, std::size_t v, std::size_t a) { return z[(u * nv + v) * na + a]; }
  double at(std::size_t u, std::size_t v, std::size_t a) const { return z[(u * nv + v) * na + a]; }
};

// Ordered sequence of distinct offline vertices queried from v, with one action each.
struct Config {
  std::size_t v = 0;
  std::vector<std::size_t> us;
  std::vector<std::size_t> actions;
  double value = 0.0;

  bool same_policy(const Config& o) const { return v == o.v && us == o.us && actions == o.actions; }
};

inline double config_value(const Instance& inst, const Config& c) {
  double fail = 1.0, total = 0.0;
  for (std::size_t i = 0; i < c.us.size(); ++i) {
    double q = inst.q(c.us[i], c.v, c.actions[i]);
    total += inst.r(c.us[i], c.v, c.actions[i]) * q * fail;
    fail *= 1.0 - q;
  }
  return total;
}

struct WeightedConfig {
  Config config;
  double weight = 0.0;
};

struct DualPrices {
  std::vector<double> alpha, gamma, beta;
};

struct LpSolution {
  std::vector<WeightedConfig> weights;
  double objective = 0.0;
  Marginals marginals;
  DualPrices duals;
  std::size_t n_columns = 0;
  std::size_t iterations = 0;
};

inline Marginals edge_marginals(const std::vector<WeightedConfig>& weights, const Instance& inst) {
  Marginals m(inst);
  for (const auto& wc : weights) {
    double fail = 1.0;
    const Config& c = wc.config;
    for (std::size_t i = 0; i < c.us.size(); ++i) {
      m.at(c.us[i], c.v, c.actions[i]) += fail * wc.weight;
      fail *= 1.0 - inst.q(c.us[i], c.v, c.actions[i]);
    }
  }
  return m;
}

inline Marginals edge_marginals(const LpSolution& s, const Instance& inst) { return edge_marginals(s.weights, inst); }

// The three per-edge / per-offline-vertex inequalities satisfied by rounding marginals.
inline std::vector<Violation> check_marginal_feasibility(const Marginals& m, const Instance& inst, double tol = 1e-9) {
  std::vector<Violation> out;
  for (std::size_t u = 0; u < inst.num_u(); ++u) {
    double queried = 0.0, matched = 0.0;
    for (std::size_t v = 0; v < inst.num_v(); ++v) {
      double edge = 0.0;
      for (std::size_t a = 0; a < inst.num_actions(); ++a) {
        double z = m.at(u, v, a);
        if (z < -tol) out.push_back({"z[" + inst.u_ids()[u] + "," + inst.v_ids()[v] + "]", "negative marginal"});
        edge += z;
        matched += inst.q(u, v, a) * z;
      }
      queried += edge;
      if (edge > 1.0 + tol) out.push_back({"z[" + inst.u_ids()[u] + "," + inst.v_ids()[v] + "]", "edge mass exceeds 1"});
    }
    if (!inst.patience_u(u).is_infinite() && queried > static_cast<double>(inst.patience_u(u).value()) + tol)
      out.push_back({"u[" + inst.u_ids()[u] + "]", "query mass exceeds patience"});
    if (matched > 1.0 + tol) out.push_back({"u[" + inst.u_ids()[u] + "]", "match mass exceeds 1"});
  }
  return out;
}

// Constraints of the edge-based relaxation, on both sides.
inline std::vector<Violation> check_lp_m_feasibility(const Marginals& m, const Instance& inst, double tol = 1e-9) {
  std::vector<Violation> out = check_marginal_feasibility(m, inst, tol);
  for (std::size_t v = 0; v < inst.num_v(); ++v) {
    double queried = 0.0, matched = 0.0;
    for (std::size_t u = 0; u < inst.num_u(); ++u)
      for (std::size_t a = 0; a < inst.num_actions(); ++a) {
        queried += m.at(u, v, a);
        matched += inst.q(u, v, a) * m.at(u, v, a);
      }
    if (!inst.patience_v(v).is_infinite() && queried > static_cast<double>(inst.patience_v(v).value()) + tol)
      out.push_back({"v[" + inst.v_ids()[v] + "]", "query mass exceeds patience"});
    if (matched > 1.0 + tol) out.push_back({"v[" + inst.v_ids()[v] + "]", "match mass exceeds 1"});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Edge-based relaxation

struct EdgeLpSolution {
  Marginals z;
  double objective = 0.0;
  std::vector<double> duals;
  std::size_t n_columns = 0;
};

inline EdgeLpSolution solve_lp_m(const Instance& inst) {
  require_valid(inst);
  const std::size_t nu = inst.num_u(), nv = inst.num_v(), na = inst.num_actions();
  std::vector<std::array<std::size_t, 3>> vars;
  for (std::size_t u = 0; u < nu; ++u)
    for (std::size_t v = 0; v < nv; ++v)
      for (std::size_t a = 0; a < na; ++a)
        if (inst.q(u, v, a) > 0.0 && inst.r(u, v, a) > 0.0) vars.push_back({u, v, a});
  // Rows: match(s), patience(s) for every vertex s in U then V, then one row per edge.
  std::size_t nvert = nu + nv;
  LpProblem lp(2 * nvert + nu * nv, vars.size());
  for (std::size_t s = 0; s < nvert; ++s) {
    Patience p = s < nu ? inst.patience_u(s) : inst.patience_v(s - nu);
    long deg = static_cast<long>(s < nu ? nv : nu);
    lp.b[2 * s] = 1.0;
    lp.b[2 * s + 1] = static_cast<double>(p.cap(deg));
  }
  for (std::size_t e = 0; e < nu * nv; ++e) lp.b[2 * nvert + e] = 1.0;
  for (std::size_t k = 0; k < vars.size(); ++k) {
    auto [u, v, a] = vars[k];
    double q = inst.q(u, v, a);
    lp.c[k] = inst.r(u, v, a) * q;
    for (std::size_t s : {u, nu + v}) {
      lp.at(2 * s, k) = q;
      lp.at(2 * s + 1, k) = 1.0;
    }
    lp.at(2 * nvert + inst.edge(u, v), k) = 1.0;
  }
  EdgeLpSolution out;
  out.z = Marginals(inst);
  out.n_columns = vars.size();
  if (vars.empty()) return out;
  LpResult r = solve_lp_or_throw(lp, "LP-M");
  for (std::size_t k = 0; k < vars.size(); ++k) out.z.at(vars[k][0], vars[k][1], vars[k][2]) = r.x[k];
  out.objective = r.value;
  out.duals = r.duals;
  return out;
}

// ---------------------------------------------------------------------------
// Configuration LP

inline constexpr std::uint64_t kDefaultConfigBudget = 2'000'000;

inline std::vector<Config> enumerate_configs(const Instance& inst, std::size_t v,
                                             std::uint64_t budget = enumeration_budget(kDefaultConfigBudget)) {
  const std::size_t n = inst.num_u(), na = inst.num_actions();
  const long L = inst.cap_v(v);
  std::uint64_t total = 0, perm = 1, apow = 1;
  for (long k = 1; k <= L; ++k) {
    perm *= n - static_cast<std::size_t>(k) + 1;
    apow *= na;
    total += perm * apow;
    if (total > budget) throw BudgetExceeded("enumerate_configs: too many configurations", total);
  }
  std::vector<Config> out;
  out.reserve(total);
  Config cur;
  cur.v = v;
  std::vector<char> used(n, 0);
  auto rec = [&](auto&& self) -> void {
    if (static_cast<long>(cur.us.size()) == L) return;
    for (std::size_t u = 0; u < n; ++u) {
      if (used[u]) continue;
      used[u] = 1;
      cur.us.push_back(u);
      for (std::size_t a = 0; a < na; ++a) {
        cur.actions.push_back(a);
        cur.value = config_value(inst, cur);
        out.push_back(cur);
        self(self);
        cur.actions.pop_back();
      }
      cur.us.pop_back();
      used[u] = 0;
    }
  };
  rec(rec);
  return out;
}

namespace detail {

struct MasterLayout {
  std::vector<long> patience_row;  // per u, row index or -1
  std::size_t v_row0 = 0, rows = 0;
};

inline MasterLayout master_layout(const Instance& inst) {
  MasterLayout L;
  std::size_t row = inst.num_u();
  L.patience_row.assign(inst.num_u(), -1);
  for (std::size_t u = 0; u < inst.num_u(); ++u)
    if (!inst.patience_u(u).is_infinite()) L.patience_row[u] = static_cast<long>(row++);
  L.v_row0 = row;
  L.rows = row + inst.num_v();
  return L;
}

inline void fill_column(const Instance& inst, const MasterLayout& L, const Config& c, LpProblem& lp, std::size_t k) {
  lp.c[k] = c.value;
  double fail = 1.0;
  for (std::size_t i = 0; i < c.us.size(); ++i) {
    std::size_t u = c.us[i];
    double q = inst.q(u, c.v, c.actions[i]);
    lp.at(u, k) += q * fail;
    if (L.patience_row[u] >= 0) lp.at(static_cast<std::size_t>(L.patience_row[u]), k) += fail;
    fail *= 1.0 - q;
  }
  lp.at(L.v_row0 + c.v, k) = 1.0;
}

inline LpSolution solve_master(const Instance& inst, const std::vector<Config>& cols) {
  MasterLayout L = master_layout(inst);
  LpSolution sol;
  sol.duals.alpha.assign(inst.num_u(), 0.0);
  sol.duals.gamma.assign(inst.num_u(), 0.0);
  sol.duals.beta.assign(inst.num_v(), 0.0);
  sol.n_columns = cols.size();
  if (!cols.empty()) {
    LpProblem lp(L.rows, cols.size());
    for (std::size_t u = 0; u < inst.num_u(); ++u) {
      lp.b[u] = 1.0;
      if (L.patience_row[u] >= 0)
        lp.b[static_cast<std::size_t>(L.patience_row[u])] = static_cast<double>(std::max(0L, inst.patience_u(u).value()));
    }
    for (std::size_t v = 0; v < inst.num_v(); ++v) lp.b[L.v_row0 + v] = 1.0;
    for (std::size_t k = 0; k < cols.size(); ++k) fill_column(inst, L, cols[k], lp, k);
    LpResult r = solve_lp_or_throw(lp, "LP-C master");
    sol.objective = r.value;
    for (std::size_t k = 0; k < cols.size(); ++k)
      if (r.x[k] > 1e-12) sol.weights.push_back({cols[k], r.x[k]});
    for (std::size_t u = 0; u < inst.num_u(); ++u) {
      sol.duals.alpha[u] = r.duals[u];
      if (L.patience_row[u] >= 0) sol.duals.gamma[u] = r.duals[static_cast<std::size_t>(L.patience_row[u])];
    }
    for (std::size_t v = 0; v < inst.num_v(); ++v) sol.duals.beta[v] = r.duals[L.v_row0 + v];
  }
  // A zero-patience row costs nothing in the dual objective, so its price can dominate any config.
  double dominate = 1.0;
  for (std::size_t u = 0; u < inst.num_u(); ++u) {
    dominate += sol.duals.alpha[u] + sol.duals.gamma[u];
    for (std::size_t v = 0; v < inst.num_v(); ++v)
      for (std::size_t a = 0; a < inst.num_actions(); ++a) dominate += inst.r(u, v, a);
  }
  for (std::size_t u = 0; u < inst.num_u(); ++u)
    if (L.patience_row[u] >= 0 && inst.patience_u(u).value() <= 0) sol.duals.gamma[u] = dominate;
  sol.marginals = edge_marginals(sol.weights, inst);
  return sol;
}

}  // namespace detail

inline LpSolution solve_lp_c_explicit(const Instance& inst, std::uint64_t budget = enumeration_budget(kDefaultConfigBudget)) {
  require_valid(inst);
  std::vector<Config> cols;
  for (std::size_t v = 0; v < inst.num_v(); ++v) {
    for (auto& c : enumerate_configs(inst, v, budget))
      if (c.value > 0.0) cols.push_back(std::move(c));
  }
  return detail::solve_master(inst, cols);
}

enum class PricingMode { kExact, kEptas };

struct PricingResult {
  std::optional<Config> config;
  double reduced_value = 0.0;  // val under the modified rewards
};

// Star at v with rewards max(r - alpha_u - gamma_u / q, 0); actions with q = 0 are dropped.
inline Star modified_star(const Instance& inst, std::size_t v, const DualPrices& d) {
  Star s(inst.num_u(), inst.num_actions(), inst.cap_v(v));
  for (std::size_t u = 0; u < inst.num_u(); ++u) {
    if (inst.cap_u(u) == 0) continue;
    for (std::size_t a = 0; a < inst.num_actions(); ++a) {
      double q = inst.q(u, v, a);
      if (q <= 0.0) continue;
      double rh = std::max(inst.r(u, v, a) - d.alpha[u] - d.gamma[u] / q, 0.0);
      s.set(u, a, q, rh);
    }
  }
  return s;
}

inline PricingResult price_configs(const Instance& inst, std::size_t v, const DualPrices& duals,
                                   PricingMode mode = PricingMode::kExact, double eptas_eps = 0.5) {
  for (const auto* vec : {&duals.alpha, &duals.gamma, &duals.beta})
    for (double x : *vec)
      if (x < 0.0) throw InvalidInput("price_configs: negative dual");
  Star s = modified_star(inst, v, duals);
  StarPolicy p = mode == PricingMode::kExact ? star_opt_bruteforce(s) : eptas(s, eptas_eps).policy;
  // Positions with zero modified reward only delay later ones.
  StarPolicy kept;
  for (std::size_t i = 0; i < p.edges.size(); ++i)
    if (s.r_at(p.edges[i], p.actions[i]) > 0.0) kept.edges.push_back(p.edges[i]), kept.actions.push_back(p.actions[i]);
  PricingResult res;
  if (kept.edges.empty()) return res;
  res.reduced_value = star_policy_value(s, kept.edges, kept.actions);
  Config c;
  c.v = v;
  c.us = kept.edges;
  c.actions = kept.actions;
  c.value = config_value(inst, c);
  res.config = c;
  return res;
}

struct ColgenOptions {
  PricingMode mode = PricingMode::kExact;
  double eptas_eps = 0.5;
  // Exact pricing normally runs to optimality; with this set it stops once every
  // priced value is within a 1/(1-eps) factor of the dual price.
  bool relaxed_stop = false;
  std::size_t max_columns = 10000;
};

inline LpSolution solve_lp_c_colgen(const Instance& inst, double eps, const ColgenOptions& opt = {}) {
  require_valid(inst);
  if (!(eps >= 0.0 && eps < 1.0)) throw InvalidInput("eps must lie in [0,1)");
  std::vector<Config> cols;
  auto add = [&](const Config& c) {
    for (const auto& o : cols)
      if (o.same_policy(c)) return false;
    if (cols.size() >= opt.max_columns) throw IterationLimit("column generation: column limit reached");
    cols.push_back(c);
    return true;
  };
  DualPrices zero{std::vector<double>(inst.num_u(), 0.0), std::vector<double>(inst.num_u(), 0.0),
                  std::vector<double>(inst.num_v(), 0.0)};
  for (std::size_t v = 0; v < inst.num_v(); ++v) {
    PricingResult pr = price_configs(inst, v, zero, opt.mode, opt.eptas_eps);
    if (pr.config && pr.reduced_value > 0.0) add(*pr.config);
  }
  std::size_t iterations = 0;
  while (true) {
    ++iterations;
    LpSolution sol = detail::solve_master(inst, cols);
    bool added = false;
    for (std::size_t v = 0; v < inst.num_v(); ++v) {
      PricingResult pr = price_configs(inst, v, sol.duals, opt.mode, opt.eptas_eps);
      if (!pr.config) continue;
      double threshold = sol.duals.beta[v];
      if (opt.mode == PricingMode::kExact && opt.relaxed_stop) threshold /= (1.0 - eps);
      if (pr.reduced_value > threshold + 1e-9) added = add(*pr.config) || added;
    }
    if (!added) {
      sol.iterations = iterations;
      return sol;
    }
  }
}

// Largest violation of (1-eps) val <= sum_i (q_i alpha + gamma) prod_{j<i}(1-q_j) + beta_v over all configs.
inline double relaxed_dual_violation(const Instance& inst, const DualPrices& d, double eps,
                                     std::uint64_t budget = enumeration_budget(kDefaultConfigBudget)) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < inst.num_v(); ++v)
    for (const auto& c : enumerate_configs(inst, v, budget)) {
      double fail = 1.0, charge = 0.0;
      for (std::size_t i = 0; i < c.us.size(); ++i) {
        double q = inst.q(c.us[i], v, c.actions[i]);
        charge += (q * d.alpha[c.us[i]] + d.gamma[c.us[i]]) * fail;
        fail *= 1.0 - q;
      }
      worst = std::max(worst, (1.0 - eps) * c.value - charge - d.beta[v]);
    }
  return worst;
}

}  // namespace qcm
