#pragma once

#include <map>

#include "exact_bench.hpp"
#include "simplex.hpp"

namespace qcm {

inline void require_eps(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidInput("eps must lie in (0,1)");
  double inv = 1.0 / eps;
  if (std::abs(inv - std::round(inv)) > 1e-9) throw InvalidInput("1/eps must be an integer");
}

// Value of the single-vertex relaxation: max sum r q z s.t. sum q z <= 1, sum z <= l, sum_a z_j(a) <= 1.
inline double lp_c_s_value(const Star& s) {
  std::vector<std::pair<std::size_t, std::size_t>> vars;
  for (std::size_t j = 0; j < s.n_edges; ++j)
    for (std::size_t a = 0; a < s.n_actions; ++a)
      if (s.q_at(j, a) > 0.0 && s.r_at(j, a) > 0.0) vars.push_back({j, a});
  if (vars.empty() || s.max_length() == 0) return 0.0;
  LpProblem lp(2 + s.n_edges, vars.size());
  lp.b[0] = 1.0;
  lp.b[1] = static_cast<double>(s.max_length());
  for (std::size_t j = 0; j < s.n_edges; ++j) lp.b[2 + j] = 1.0;
  for (std::size_t k = 0; k < vars.size(); ++k) {
    auto [j, a] = vars[k];
    lp.c[k] = s.r_at(j, a) * s.q_at(j, a);
    lp.at(0, k) = s.q_at(j, a);
    lp.at(1, k) = 1.0;
    lp.at(2 + j, k) = 1.0;
  }
  return solve_lp_or_throw(lp, "LP-C-s").value;
}

// Powers of (1+eps) in [LPOPT/2, LPOPT], followed by LPOPT/2 itself when it is not one of them.
inline std::vector<double> estimate_opt(const Star& s, double eps) {
  require_eps(eps);
  double lp = lp_c_s_value(s);
  std::vector<double> out;
  if (!(lp > 0.0)) return out;
  double base = 1.0 + eps;
  long k = static_cast<long>(std::floor(std::log(lp) / std::log(base)));
  while (std::pow(base, k + 1) <= lp * (1.0 + 1e-12)) ++k;
  while (std::pow(base, k) > lp * (1.0 + 1e-12)) --k;
  double lower = lp / 2.0;
  for (; std::pow(base, k) >= lower * (1.0 - 1e-12); --k) out.push_back(std::min(lp, std::pow(base, k)));
  if (out.empty() || out.back() > lower * (1.0 + 1e-12)) out.push_back(lower);
  return out;
}

inline double load(const Star& s, std::size_t j, double base_guess) {
  double best = 0.0;
  for (std::size_t a = 0; a < s.n_actions; ++a) best = std::max(best, (s.r_at(j, a) - base_guess) * s.q_at(j, a));
  return best;
}

// Buckets are 0-based: index 0 is the first stable bucket (queried last), odd indices are jumps.
struct BucketPlan {
  double eps = 0.5;
  double estimate = 1.0;
  std::size_t jumps = 0;
  std::vector<long> base_units, delta_units;

  std::size_t num_buckets() const { return 2 * jumps + 1; }
  static bool is_jump(std::size_t i) { return i % 2 == 1; }
  long grid_top() const { return std::lround(1.0 / (eps * eps)); }
  double unit() const { return eps * eps * estimate; }
  double base_guess(std::size_t i) const { return static_cast<double>(base_units[i]) * unit(); }
  double delta_guess(std::size_t i) const { return static_cast<double>(delta_units[i]) * unit(); }
};

struct Assignment {
  std::vector<int> bucket_of;  // per edge, -1 when unassigned
};

inline double load_tolerance(const BucketPlan& p, const Star& s) {
  return 1e-9 * p.estimate * static_cast<double>(1 + s.n_edges);
}

inline std::vector<Violation> check_assignment(const BucketPlan& plan, const Star& s, const Assignment& x) {
  std::vector<Violation> out;
  std::size_t M = plan.num_buckets();
  if (x.bucket_of.size() != s.n_edges) return {{"bucket_of", "size mismatch"}};
  std::vector<double> acc(M, 0.0);
  std::vector<int> count(M, 0);
  long total = 0;
  for (std::size_t j = 0; j < s.n_edges; ++j) {
    int b = x.bucket_of[j];
    if (b < 0) continue;
    if (static_cast<std::size_t>(b) >= M) {
      out.push_back({"bucket_of[" + std::to_string(j) + "]", "bucket out of range"});
      continue;
    }
    acc[b] += load(s, j, plan.base_guess(b));
    ++count[b];
    ++total;
  }
  double tol = load_tolerance(plan, s);
  for (std::size_t i = 0; i < M; ++i) {
    if (BucketPlan::is_jump(i) && count[i] > 1) out.push_back({"bucket[" + std::to_string(i) + "]", "jump capacity exceeded"});
    if (acc[i] < plan.delta_guess(i) - tol) out.push_back({"bucket[" + std::to_string(i) + "]", "load below guess"});
  }
  if (total > s.max_length()) out.push_back({"assignment", "budget exceeded"});
  return out;
}

inline constexpr std::uint64_t kDefaultNodeBudget = 5'000'000;

// Exact branch-and-bound for the threshold assignment program.
inline std::optional<Assignment> solve_ip_th(const BucketPlan& plan, const Star& s,
                                             std::uint64_t node_budget = enumeration_budget(kDefaultNodeBudget)) {
  const std::size_t M = plan.num_buckets(), n = s.n_edges;
  const long L = s.max_length();
  const double tol = load_tolerance(plan, s);
  std::vector<std::vector<double>> c(M, std::vector<double>(n));
  std::vector<double> need(M);
  for (std::size_t i = 0; i < M; ++i) {
    need[i] = plan.delta_guess(i) - tol;
    for (std::size_t j = 0; j < n; ++j) c[i][j] = load(s, j, plan.base_guess(i));
  }
  // rest[i][j]: best load bucket i can still collect from edges j..n-1.
  std::vector<std::vector<double>> rest(M, std::vector<double>(n + 1, 0.0));
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = n; j-- > 0;)
      rest[i][j] = BucketPlan::is_jump(i) ? std::max(rest[i][j + 1], c[i][j]) : rest[i][j + 1] + c[i][j];

  Assignment cur{std::vector<int>(n, -1)};
  std::vector<double> acc(M, 0.0);
  std::vector<int> cnt(M, 0);
  long used = 0;
  std::uint64_t nodes = 0;

  auto rec = [&](auto&& self, std::size_t j) -> bool {
    if (++nodes > node_budget) throw BudgetExceeded("solve_ip_th: node budget exceeded", nodes);
    std::size_t open = 0;
    for (std::size_t i = 0; i < M; ++i) {
      if (acc[i] >= need[i]) continue;
      ++open;
      double bound = (BucketPlan::is_jump(i) && cnt[i] > 0) ? 0.0 : rest[i][j];
      if (acc[i] + bound < need[i]) return false;
    }
    if (open == 0) return true;
    if (j == n || static_cast<long>(open) > L - used) return false;
    if (self(self, j + 1)) return true;
    if (used >= L) return false;
    for (std::size_t i = 0; i < M; ++i) {
      if (c[i][j] <= 0.0 || acc[i] >= need[i]) continue;
      if (BucketPlan::is_jump(i) && cnt[i] > 0) continue;
      cur.bucket_of[j] = static_cast<int>(i);
      acc[i] += c[i][j];
      ++cnt[i];
      ++used;
      if (self(self, j + 1)) return true;
      --used;
      --cnt[i];
      acc[i] -= c[i][j];
      cur.bucket_of[j] = -1;
    }
    return false;
  };
  if (!rec(rec, 0)) return std::nullopt;
  return cur;
}

// Highest bucket is queried first; ascending edge id inside a bucket.
inline StarPolicy reconstruct(const Assignment& x, const BucketPlan& plan, const Star& s) {
  StarPolicy p;
  for (std::size_t i = plan.num_buckets(); i-- > 0;)
    for (std::size_t j = 0; j < s.n_edges; ++j)
      if (x.bucket_of[j] == static_cast<int>(i)) p.edges.push_back(j);
  FutureValues fv = star_future_values(s, p.edges);
  p.actions = fv.actions;
  p.value = fv.R[0];
  return p;
}

struct EptasOptions {
  bool prune_guesses = true;
  std::uint64_t guess_budget = enumeration_budget(10'000'000);
  std::uint64_t node_budget = enumeration_budget(kDefaultNodeBudget);
};

struct EptasResult {
  StarPolicy policy;
  std::uint64_t guesses_tried = 0;
  std::uint64_t feasible_guesses = 0;
};

struct GuessLimits {
  long top_units = -1;   // upper bound on base + delta in grid units, -1 for none
  long max_nonzero = -1;  // most buckets with positive delta, -1 for none
};

inline GuessLimits guess_limits(const Star& s, double eps, double E, double lp) {
  GuessLimits lim;
  lim.top_units = static_cast<long>(std::floor(lp / (eps * eps * E) * (1.0 + 1e-9)));
  lim.max_nonzero = s.max_length();
  return lim;
}

// Calls fn(plan) for every guess vector of a fixed (E, K).
template <class F>
void for_each_guess(double eps, double E, std::size_t K, bool prune, F&& fn, GuessLimits lim = {}) {
  BucketPlan plan;
  plan.eps = eps;
  plan.estimate = E;
  plan.jumps = K;
  const std::size_t M = plan.num_buckets();
  const long g = plan.grid_top();
  const long jump_min = std::lround(1.0 / eps);
  plan.base_units.assign(M, 0);
  plan.delta_units.assign(M, 0);
  if (prune && lim.max_nonzero >= 0 && static_cast<long>(K) > lim.max_nonzero) return;
  auto rec = [&](auto&& self, std::size_t i, long nonzero) -> void {
    if (i == M) {
      fn(static_cast<const BucketPlan&>(plan));
      return;
    }
    long blo = 0, bhi = g;
    if (prune) {
      if (i == 0) {
        bhi = 0;
      } else {
        long reach = plan.base_units[i - 1] + plan.delta_units[i - 1];
        blo = std::min(g, reach);
        bhi = std::min(g, reach + 1);
      }
    }
    for (long b = blo; b <= bhi; ++b) {
      plan.base_units[i] = b;
      long dlo = (prune && BucketPlan::is_jump(i)) ? jump_min : 0;
      if (prune && i + 1 == M) dlo = std::max(dlo, g - 1 - b);
      long dhi = g;
      if (prune && lim.top_units >= 0) dhi = std::min(dhi, lim.top_units - b);
      for (long d = dlo; d <= dhi; ++d) {
        long nz = nonzero + (d > 0 ? 1 : 0);
        if (prune && lim.max_nonzero >= 0 && nz > lim.max_nonzero) break;
        plan.delta_units[i] = d;
        self(self, i + 1, nz);
      }
    }
  };
  rec(rec, 0, 0);
}

inline EptasResult eptas(const Star& s, double eps, const EptasOptions& opt = {}) {
  require_eps(eps);
  EptasResult res;
  std::vector<double> candidates = estimate_opt(s, eps);
  const long L = s.max_length();
  const std::size_t kmax = std::min<std::size_t>(std::lround(1.0 / eps), static_cast<std::size_t>(std::max(0L, L)));
  const double lp = lp_c_s_value(s);
  std::map<std::vector<std::size_t>, double> seen;
  for (double E : candidates) {
    GuessLimits lim = guess_limits(s, eps, E, lp);
    for (std::size_t K = 0; K <= kmax; ++K)
      for_each_guess(eps, E, K, opt.prune_guesses, [&](const BucketPlan& plan) {
        if (++res.guesses_tried > opt.guess_budget)
          throw BudgetExceeded("eptas: guess budget exceeded", res.guesses_tried);
        auto x = solve_ip_th(plan, s, opt.node_budget);
        if (!x) return;
        ++res.feasible_guesses;
        StarPolicy p;
        for (std::size_t i = plan.num_buckets(); i-- > 0;)
          for (std::size_t j = 0; j < s.n_edges; ++j)
            if (x->bucket_of[j] == static_cast<int>(i)) p.edges.push_back(j);
        if (seen.count(p.edges)) return;
        p = reconstruct(*x, plan, s);
        seen[p.edges] = p.value;
        if (p.value > res.policy.value) res.policy = p;
      }, lim);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Bucket structure of a known policy (used to audit the guessing step).

struct PolicyBuckets {
  std::vector<double> R;                     // R[0] = R_1 ... R[k] = 0
  std::vector<std::size_t> jump_positions;   // 1-based positions
  std::vector<std::vector<std::size_t>> positions;  // per bucket, 1-based positions
  std::vector<double> base_val, delta_val;
};

inline PolicyBuckets bucket_policy(const Star& s, const StarPolicy& p, double eps) {
  PolicyBuckets out;
  out.R = star_future_values(s, p.edges).R;
  const std::size_t k = p.edges.size();
  const double R1 = out.R[0];
  for (std::size_t i = 1; i <= k; ++i)
    if (R1 > 0.0 && out.R[i - 1] - out.R[i] >= eps * R1) out.jump_positions.push_back(i);
  const std::size_t K = out.jump_positions.size(), M = 2 * K + 1;
  out.positions.assign(M, {});
  out.base_val.assign(M, 0.0);
  std::vector<std::size_t> t(K + 2);
  t[0] = 0;
  for (std::size_t m = 0; m < K; ++m) t[m + 1] = out.jump_positions[m];
  t[K + 1] = k + 1;
  auto Rat = [&](std::size_t pos) { return out.R[pos - 1]; };  // 1-based R_pos
  for (std::size_t m = 0; m <= K; ++m) {
    std::size_t lo = t[K - m], hi = t[K - m + 1];  // stable bucket 2m covers (lo, hi)
    for (std::size_t pos = lo + 1; pos < hi; ++pos) out.positions[2 * m].push_back(pos);
    out.base_val[2 * m] = Rat(hi);
    if (m >= 1) {
      std::size_t tj = t[K - m + 1];
      out.positions[2 * m - 1].push_back(tj);
      out.base_val[2 * m - 1] = Rat(tj + 1);
    }
  }
  out.delta_val.assign(M, 0.0);
  for (std::size_t i = 0; i < M; ++i) out.delta_val[i] = (i + 1 < M ? out.base_val[i + 1] : R1) - out.base_val[i];
  return out;
}

// Guesses obtained by rounding the true bucket values down to the grid.
inline BucketPlan truth_rounded_plan(const PolicyBuckets& pb, double eps, double E) {
  BucketPlan plan;
  plan.eps = eps;
  plan.estimate = E;
  plan.jumps = pb.jump_positions.size();
  const long g = plan.grid_top();
  auto rnd = [&](double v) { return std::clamp(static_cast<long>(std::floor(v / plan.unit() + 1e-9)), 0L, g); };
  for (std::size_t i = 0; i < pb.base_val.size(); ++i) {
    plan.base_units.push_back(rnd(pb.base_val[i]));
    plan.delta_units.push_back(rnd(pb.delta_val[i]));
  }
  return plan;
}

inline Assignment assignment_from_policy(const PolicyBuckets& pb, const StarPolicy& p, std::size_t n_edges) {
  Assignment x{std::vector<int>(n_edges, -1)};
  for (std::size_t i = 0; i < pb.positions.size(); ++i)
    for (std::size_t pos : pb.positions[i]) x.bucket_of[p.edges[pos - 1]] = static_cast<int>(i);
  return x;
}

// Whether the guesses satisfy the consistency rules used to prune the enumeration.
inline bool guess_consistent(const BucketPlan& plan, GuessLimits lim = {}) {
  const std::size_t M = plan.num_buckets();
  const long g = plan.grid_top(), jump_min = std::lround(1.0 / plan.eps);
  if (plan.base_units[0] != 0) return false;
  long nonzero = 0;
  for (std::size_t i = 0; i < M; ++i) {
    if (BucketPlan::is_jump(i) && plan.delta_units[i] < jump_min) return false;
    if (lim.top_units >= 0 && plan.base_units[i] + plan.delta_units[i] > lim.top_units) return false;
    nonzero += plan.delta_units[i] > 0 ? 1 : 0;
    if (i + 1 < M) {
      long reach = plan.base_units[i] + plan.delta_units[i];
      if (plan.base_units[i + 1] < std::min(g, reach) || plan.base_units[i + 1] > std::min(g, reach + 1)) return false;
    }
  }
  if (lim.max_nonzero >= 0 && nonzero > lim.max_nonzero) return false;
  return plan.base_units[M - 1] + plan.delta_units[M - 1] >= g - 1;
}

}  // namespace qcm
