#pragma once

#include <bit>
#include <span>
#include <unordered_map>

#include "instance.hpp"

namespace qcm {

// Single online vertex with n candidate edges; q and r indexed [edge * n_actions + action].
struct Star {
  std::size_t n_edges = 0;
  std::size_t n_actions = 1;
  long patience = 1;
  std::vector<double> q, r;

  Star() = default;
  Star(std::size_t n, std::size_t na, long ell) : n_edges(n), n_actions(na), patience(ell), q(n * na, 0.0), r(n * na, 0.0) {}
  double q_at(std::size_t j, std::size_t a) const { return q[j * n_actions + a]; }
  double r_at(std::size_t j, std::size_t a) const { return r[j * n_actions + a]; }
  void set(std::size_t j, std::size_t a, double qv, double rv) {
    q[j * n_actions + a] = qv;
    r[j * n_actions + a] = rv;
  }
  long max_length() const { return std::min<long>(std::max(0L, patience), static_cast<long>(n_edges)); }
};

// Edge j of the star is offline vertex j. Offline vertices with zero patience get empty edges.
inline Star star_of(const Instance& inst, std::size_t v) {
  Star s(inst.num_u(), inst.num_actions(), inst.cap_v(v));
  for (std::size_t u = 0; u < inst.num_u(); ++u) {
    if (inst.cap_u(u) == 0) continue;
    for (std::size_t a = 0; a < inst.num_actions(); ++a) s.set(u, a, inst.q(u, v, a), inst.r(u, v, a));
  }
  return s;
}

struct StarPolicy {
  std::vector<std::size_t> edges;
  std::vector<std::size_t> actions;
  double value = 0.0;
};

struct FutureValues {
  std::vector<double> R;  // R[0] = R_1, ..., R[k] = R_{k+1} = 0
  std::vector<std::size_t> actions;
};

inline FutureValues star_future_values(const Star& s, std::span<const std::size_t> order) {
  FutureValues fv;
  std::size_t k = order.size();
  fv.R.assign(k + 1, 0.0);
  fv.actions.assign(k, 0);
  for (std::size_t i = k; i-- > 0;) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < s.n_actions; ++a) {
      double q = s.q_at(order[i], a);
      double val = s.r_at(order[i], a) * q + fv.R[i + 1] * (1.0 - q);
      if (val > best) best = val, fv.actions[i] = a;
    }
    fv.R[i] = best;
  }
  return fv;
}

// Expected reward of querying edges in order with the given actions until the first success.
inline double star_policy_value(const Star& s, std::span<const std::size_t> edges, std::span<const std::size_t> actions) {
  double fail = 1.0, total = 0.0;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    double q = s.q_at(edges[i], actions[i]);
    total += s.r_at(edges[i], actions[i]) * q * fail;
    fail *= 1.0 - q;
  }
  return total;
}

inline std::uint64_t count_orderings(std::size_t n, long max_len, std::uint64_t cap) {
  std::uint64_t total = 0, term = 1;
  for (long k = 1; k <= max_len; ++k) {
    term *= static_cast<std::uint64_t>(n - static_cast<std::size_t>(k) + 1);
    total += term;
    if (total > cap) return total;
  }
  return total;
}

inline constexpr std::uint64_t kDefaultOrderingBudget = 10'000'000;

inline StarPolicy star_opt_bruteforce(const Star& s, std::uint64_t budget = enumeration_budget(kDefaultOrderingBudget)) {
  long L = s.max_length();
  std::uint64_t count = count_orderings(s.n_edges, L, budget);
  if (count > budget) throw BudgetExceeded("star_opt_bruteforce: too many orderings", count);
  if (s.n_edges > 63) throw BudgetExceeded("star_opt_bruteforce: too many edges", count);

  // Orderings are grown from the back so R of the new head follows from R of the suffix.
  std::vector<std::size_t> suffix;  // suffix[0] is the last position
  std::vector<std::size_t> best_order;
  double best = 0.0;
  std::uint64_t used = 0;
  auto rec = [&](auto&& self, double r_next) -> void {
    if (static_cast<long>(suffix.size()) == L) return;
    for (std::size_t j = 0; j < s.n_edges; ++j) {
      if (used >> j & 1) continue;
      double rj = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < s.n_actions; ++a) {
        double q = s.q_at(j, a);
        rj = std::max(rj, s.r_at(j, a) * q + r_next * (1.0 - q));
      }
      suffix.push_back(j);
      used |= 1ULL << j;
      if (rj > best) {
        best = rj;
        best_order.assign(suffix.rbegin(), suffix.rend());
      }
      self(self, rj);
      used &= ~(1ULL << j);
      suffix.pop_back();
    }
  };
  rec(rec, 0.0);

  StarPolicy p;
  p.edges = best_order;
  p.actions = star_future_values(s, p.edges).actions;
  p.value = star_policy_value(s, p.edges, p.actions);
  return p;
}

// ---------------------------------------------------------------------------
// Exact optimal adaptive policy via memoized dynamic programming over
// (queried edges, matched offline vertices, matched online vertices).

struct MdpState {
  std::uint64_t queried = 0;
  std::uint64_t matched_u = 0;
  std::uint64_t matched_v = 0;
};

struct MdpDecision {
  std::size_t u = 0, v = 0, a = 0;
};

inline constexpr std::uint64_t kDefaultStateBudget = 20'000'000;

class OptResult {
 public:
  double value() const { return value_; }
  std::uint64_t states_expanded() const { return memo_.size(); }

  // Optimal next query in a state reachable under the optimal policy, or none to stop.
  std::optional<MdpDecision> decision(const MdpState& s) const {
    auto it = memo_.find(key(s));
    if (it == memo_.end() || it->second.choice < 0) return std::nullopt;
    std::size_t e = static_cast<std::size_t>(it->second.choice) / na_;
    return MdpDecision{e / nv_, e % nv_, static_cast<std::size_t>(it->second.choice) % na_};
  }
  bool contains(const MdpState& s) const { return memo_.count(key(s)) > 0; }

 private:
  friend OptResult opt_dp(const Instance&, std::uint64_t);
  struct Entry {
    double value;
    long choice;  // e * n_actions + a, or -1
  };
  std::uint64_t key(const MdpState& s) const { return s.queried | s.matched_u << ne_ | s.matched_v << (ne_ + nu_); }

  std::size_t nu_ = 0, nv_ = 0, na_ = 1, ne_ = 0;
  double value_ = 0.0;
  std::unordered_map<std::uint64_t, Entry> memo_;
};

inline OptResult opt_dp(const Instance& inst, std::uint64_t budget = enumeration_budget(kDefaultStateBudget)) {
  OptResult res;
  res.nu_ = inst.num_u();
  res.nv_ = inst.num_v();
  res.na_ = inst.num_actions();
  res.ne_ = inst.num_edges();
  const std::size_t nu = res.nu_, nv = res.nv_, na = res.na_, ne = res.ne_;
  if (ne + nu + nv > 64) throw BudgetExceeded("opt_dp: instance too large for state encoding", ~0ULL);

  // Edges whose every action has q*r = 0 never help and are skipped.
  std::vector<char> useful(ne, 0);
  std::vector<std::uint64_t> inc_u(nu, 0), inc_v(nv, 0);
  for (std::size_t u = 0; u < nu; ++u)
    for (std::size_t v = 0; v < nv; ++v) {
      std::size_t e = inst.edge(u, v);
      inc_u[u] |= 1ULL << e;
      inc_v[v] |= 1ULL << e;
      for (std::size_t a = 0; a < na; ++a)
        if (inst.q(u, v, a) > 0.0 && inst.r(u, v, a) > 0.0) useful[e] = 1;
    }
  std::vector<long> cap_u(nu), cap_v(nv);
  for (std::size_t u = 0; u < nu; ++u) cap_u[u] = inst.cap_u(u);
  for (std::size_t v = 0; v < nv; ++v) cap_v[v] = inst.cap_v(v);
  std::size_t bits = nu + nv;
  for (char c : useful) bits += c ? 1 : 0;
  const std::uint64_t state_bound = bits >= 63 ? ~0ULL : 1ULL << bits;

  auto& memo = res.memo_;
  auto solve = [&](auto&& self, std::uint64_t queried, std::uint64_t mu, std::uint64_t mv) -> double {
    std::uint64_t k = queried | mu << ne | mv << (ne + nu);
    if (auto it = memo.find(k); it != memo.end()) return it->second.value;
    if (memo.size() >= budget) throw BudgetExceeded("opt_dp: state budget exceeded", std::max<std::uint64_t>(state_bound, memo.size() + 1));
    double best = 0.0;
    long choice = -1;
    for (std::size_t u = 0; u < nu; ++u) {
      if (mu >> u & 1) continue;
      if (std::popcount(queried & inc_u[u]) >= cap_u[u]) continue;
      for (std::size_t v = 0; v < nv; ++v) {
        std::size_t e = u * nv + v;
        if (!useful[e] || (queried >> e & 1) || (mv >> v & 1)) continue;
        if (std::popcount(queried & inc_v[v]) >= cap_v[v]) continue;
        double vs = self(self, queried | 1ULL << e, mu | 1ULL << u, mv | 1ULL << v);
        double vf = self(self, queried | 1ULL << e, mu, mv);
        for (std::size_t a = 0; a < na; ++a) {
          double q = inst.q(u, v, a);
          if (q <= 0.0) continue;
          double val = q * (inst.r(u, v, a) + vs) + (1.0 - q) * vf;
          if (val > best) best = val, choice = static_cast<long>(e * na + a);
        }
      }
    }
    memo[k] = {best, choice};
    return best;
  };
  res.value_ = solve(solve, 0, 0, 0);
  return res;
}

}  // namespace qcm
