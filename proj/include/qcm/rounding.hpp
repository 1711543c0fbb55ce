#pragma once

#include <array>

#include "lp_core.hpp"
#include "prcrs.hpp"

namespace qcm {

struct QueryRecord {
  std::size_t u = 0, v = 0, a = 0;
  bool real = true;
  bool success = false;
};

struct RunOutcome {
  std::vector<std::array<std::size_t, 3>> matching;  // (u, v, a)
  double reward = 0.0;
  std::vector<QueryRecord> log;
  std::vector<std::size_t> permutation;
  std::vector<std::array<std::size_t, 3>> suggestions;  // positions reached in sampled configs
  std::vector<std::vector<std::size_t>> psi_arrivals;   // per u: online vertices in the order fed to its scheme
  std::vector<std::vector<std::size_t>> psi_queried;    // per u: online vertices its scheme chose to query
};

// Per-trial sampling data derived once from an LP solution.
class RoundingPlan {
 public:
  RoundingPlan(const LpSolution& sol, const Instance& inst, SchemeFamily family = SchemeFamily::kPrcrs)
      : inst_(inst), family_(family), by_v_(inst.num_v()) {
    for (const auto& wc : sol.weights) {
      if (wc.config.v >= inst.num_v()) throw InvalidInput("solution references an unknown online vertex");
      if (wc.weight > 0.0 && !wc.config.us.empty()) by_v_[wc.config.v].push_back({wc.weight, wc.config});
    }
    for (auto& list : by_v_) {
      double total = 0.0;
      for (auto& e : list) total += e.first;
      double scale = total > 1.0 ? 1.0 / total : 1.0;
      double acc = 0.0;
      for (auto& e : list) acc += e.first * scale, e.first = acc;
    }
    Marginals z = edge_marginals(sol.weights, inst);
    for (std::size_t u = 0; u < inst.num_u(); ++u) {
      PrcrsInput in(inst.num_v(), inst.num_actions(), inst.patience_u(u));
      for (std::size_t v = 0; v < inst.num_v(); ++v)
        for (std::size_t a = 0; a < inst.num_actions(); ++a)
          in.set(v, a, inst.q(u, v, a), std::clamp(z.at(u, v, a), 0.0, 1.0));
      schemes_.emplace_back(in, family);
    }
  }

  const Instance& instance() const { return inst_; }
  const PrcrsScheme& scheme(std::size_t u) const { return schemes_[u]; }
  SchemeFamily family() const { return family_; }

  // Config of v selected by the uniform draw w, or null for the empty config.
  const Config* sample(std::size_t v, double w) const {
    for (const auto& [cum, c] : by_v_[v])
      if (w < cum) return &c;
    return nullptr;
  }

 private:
  Instance inst_;
  SchemeFamily family_;
  std::vector<std::vector<std::pair<double, Config>>> by_v_;
  std::vector<PrcrsScheme> schemes_;
};

enum class RoundingMode { kRelaxed, kFull };

// Observer with no-op hooks; subclasses shadow what they need.
struct NullObserver {
  static constexpr bool kFeedAll = false;
  void permutation(const std::vector<std::size_t>&) {}
  void suggest(std::size_t, std::size_t, std::size_t) {}
  void query(std::size_t, std::size_t, std::size_t, bool, bool) {}
  void match(std::size_t, std::size_t, std::size_t) {}
  void scheme_arrival(std::size_t, std::size_t) {}
  void scheme_query(std::size_t, std::size_t) {}
};

template <class Obs>
double round_trial(const RoundingPlan& plan, RoundingMode mode, std::uint64_t seed, std::uint64_t t, Obs& obs) {
  const Instance& I = plan.instance();
  const std::size_t nu = I.num_u(), nv = I.num_v();
  Stream perm(seed, streams::kPermutation, t), cfg(seed, streams::kConfigSampling, t);
  Stream qbits(seed, streams::kQBits, t), qtilde(seed, streams::kQTildeBits, t), att(seed, streams::kAttenuationBits, t);
  std::vector<std::size_t> order(nv);
  for (std::size_t v = 0; v < nv; ++v) order[v] = v;
  perm.shuffle(order);
  obs.permutation(order);
  std::vector<PrcrsRun> psi;
  if (mode == RoundingMode::kFull) {
    psi.reserve(nu);
    for (std::size_t u = 0; u < nu; ++u) psi.emplace_back(plan.scheme(u));
  }
  std::vector<char> offered;
  double reward = 0.0;
  for (std::size_t v : order) {
    const Config* c = plan.sample(v, cfg.uniform_at(v));
    if constexpr (Obs::kFeedAll) offered.assign(nu, 0);
    if (c != nullptr) {
      for (std::size_t j = 0; j < c->us.size(); ++j) {
        std::size_t u = c->us[j], a = c->actions[j], slot = I.slot(u, v, a);
        double q = I.q(u, v, a);
        obs.suggest(u, v, a);
        if (mode == RoundingMode::kRelaxed) {
          bool ok = qbits.bernoulli_at(slot, q);
          obs.query(u, v, a, true, ok);
          if (ok) {
            reward += I.r(u, v, a);
            obs.match(u, v, a);
            break;
          }
          continue;
        }
        if constexpr (Obs::kFeedAll) {
          offered[u] = 1;
          obs.scheme_arrival(u, v);
        }
        bool bit = att.bernoulli_at(I.edge(u, v), plan.scheme(u).attenuation(v));
        if (psi[u].offer(v, static_cast<int>(a), bit)) {
          obs.scheme_query(u, v);
          bool ok = qbits.bernoulli_at(slot, q);
          psi[u].observe(ok);
          obs.query(u, v, a, true, ok);
          if (ok) {
            reward += I.r(u, v, a);
            obs.match(u, v, a);
            break;
          }
        } else {
          bool fake = qtilde.bernoulli_at(slot, q);
          obs.query(u, v, a, false, fake);
          if (fake) break;
        }
      }
    }
    if constexpr (Obs::kFeedAll) {
      if (mode == RoundingMode::kFull)
        for (std::size_t u = 0; u < nu; ++u)
          if (!offered[u]) {
            psi[u].offer(v, -1, false);
            obs.scheme_arrival(u, v);
          }
    }
  }
  return reward;
}

namespace detail {
struct TraceObserver : NullObserver {
  static constexpr bool kFeedAll = true;
  RunOutcome* out;
  explicit TraceObserver(RunOutcome* o) : out(o) {}
  void permutation(const std::vector<std::size_t>& p) { out->permutation = p; }
  void suggest(std::size_t u, std::size_t v, std::size_t a) { out->suggestions.push_back({u, v, a}); }
  void query(std::size_t u, std::size_t v, std::size_t a, bool real, bool ok) { out->log.push_back({u, v, a, real, ok}); }
  void match(std::size_t u, std::size_t v, std::size_t a) { out->matching.push_back({u, v, a}); }
  void scheme_arrival(std::size_t u, std::size_t v) { out->psi_arrivals[u].push_back(v); }
  void scheme_query(std::size_t u, std::size_t v) { out->psi_queried[u].push_back(v); }
};

inline RunOutcome traced_round(const RoundingPlan& plan, RoundingMode mode, std::uint64_t seed, std::uint64_t trial) {
  RunOutcome out;
  out.psi_arrivals.resize(plan.instance().num_u());
  out.psi_queried.resize(plan.instance().num_u());
  TraceObserver obs(&out);
  out.reward = round_trial(plan, mode, seed, trial, obs);
  return out;
}
}  // namespace detail

inline RunOutcome relaxed_round(const LpSolution& sol, const Instance& inst, std::uint64_t seed, std::uint64_t trial = 0) {
  return detail::traced_round(RoundingPlan(sol, inst), RoundingMode::kRelaxed, seed, trial);
}

inline RunOutcome full_round(const LpSolution& sol, const Instance& inst, SchemeFamily family, std::uint64_t seed,
                             std::uint64_t trial = 0) {
  return detail::traced_round(RoundingPlan(sol, inst, family), RoundingMode::kFull, seed, trial);
}

inline RunOutcome greedy_round(const LpSolution& sol, const Instance& inst, std::uint64_t seed, std::uint64_t trial = 0) {
  return full_round(sol, inst, SchemeFamily::kGreedy, seed, trial);
}

// Per-trial validity: matching on both sides (one side for relaxed), patience, one query per edge.
inline std::vector<Violation> check_outcome(const RunOutcome& o, const Instance& inst, RoundingMode mode) {
  std::vector<Violation> out;
  std::vector<int> mu(inst.num_u(), 0), mv(inst.num_v(), 0);
  std::vector<long> ru(inst.num_u(), 0), rv(inst.num_v(), 0);
  std::vector<char> seen(inst.num_edges(), 0);
  double reward = 0.0;
  for (const auto& q : o.log) {
    std::size_t e = inst.edge(q.u, q.v);
    if (seen[e]) out.push_back({"edge " + inst.u_ids()[q.u] + "," + inst.v_ids()[q.v], "queried twice"});
    seen[e] = 1;
    if (!q.real) continue;
    ++ru[q.u];
    ++rv[q.v];
    if (mode == RoundingMode::kFull && mu[q.u]) out.push_back({"u " + inst.u_ids()[q.u], "queried after being matched"});
    if (q.success) ++mu[q.u], ++mv[q.v], reward += inst.r(q.u, q.v, q.a);
  }
  for (std::size_t u = 0; u < inst.num_u(); ++u) {
    if (mode == RoundingMode::kFull && mu[u] > 1) out.push_back({"u " + inst.u_ids()[u], "matched twice"});
    if (mode == RoundingMode::kFull && ru[u] > inst.cap_u(u)) out.push_back({"u " + inst.u_ids()[u], "patience exceeded"});
  }
  for (std::size_t v = 0; v < inst.num_v(); ++v) {
    if (mv[v] > 1) out.push_back({"v " + inst.v_ids()[v], "matched twice"});
    if (rv[v] > inst.cap_v(v)) out.push_back({"v " + inst.v_ids()[v], "patience exceeded"});
  }
  if (std::abs(reward - o.reward) > 1e-12 * std::max(1.0, reward)) out.push_back({"reward", "does not match log"});
  if (o.matching.size() != static_cast<std::size_t>(std::count_if(o.log.begin(), o.log.end(), [](const QueryRecord& q) {
        return q.real && q.success;
      })))
    out.push_back({"matching", "does not match log"});
  return out;
}

// Frequencies of suggestion bits and the reward over many trials.
struct RoundingStats {
  std::vector<std::uint64_t> suggested;  // per instance slot
  RunningStats reward;
  void merge(const RoundingStats& o) {
    for (std::size_t k = 0; k < suggested.size(); ++k) suggested[k] += o.suggested[k];
    reward.merge(o.reward);
  }
};

inline RoundingStats simulate_rounding(const RoundingPlan& plan, RoundingMode mode, std::uint64_t trials,
                                       std::uint64_t seed, unsigned workers = 1) {
  struct Counter : NullObserver {
    const Instance* I;
    RoundingStats* s;
    void suggest(std::size_t u, std::size_t v, std::size_t a) { ++s->suggested[I->slot(u, v, a)]; }
  };
  const Instance& I = plan.instance();
  RoundingStats init{std::vector<std::uint64_t>(I.num_edges() * I.num_actions(), 0), {}};
  return chunked_trials(trials, workers, init, [&](RoundingStats& acc, std::uint64_t t) {
    Counter c;
    c.I = &I;
    c.s = &acc;
    acc.reward.add(round_trial(plan, mode, seed, t, c));
  });
}

enum class PolicyKind { kFull, kGreedy };

inline SimReport evaluate_policy(PolicyKind kind, const Instance& inst, const LpSolution& sol, std::uint64_t trials,
                                 std::uint64_t seed, unsigned workers = 1, std::optional<double> opt_value = std::nullopt) {
  if (trials < 1) throw InvalidInput("trials must be >= 1");
  RoundingPlan plan(sol, inst, kind == PolicyKind::kFull ? SchemeFamily::kPrcrs : SchemeFamily::kGreedy);
  struct Acc {
    RunningStats s;
    void merge(const Acc& o) { s.merge(o.s); }
  };
  Acc acc = chunked_trials(trials, workers, Acc{}, [&](Acc& a, std::uint64_t t) {
    NullObserver obs;
    a.s.add(round_trial(plan, RoundingMode::kFull, seed, t, obs));
  });
  SimReport r = SimReport::from(acc.s);
  r.set_comparators(sol.objective, opt_value);
  return r;
}

// Baseline on the edge relaxation: random edge order, action a with probability z_e(a),
// query when both endpoints are free and have patience left.
inline double edge_greedy_trial(const EdgeLpSolution& sol, const Instance& inst, std::uint64_t seed, std::uint64_t t) {
  Stream perm(seed, streams::kPermutation, t), pick(seed, streams::kConfigSampling, t), qbits(seed, streams::kQBits, t);
  std::vector<std::size_t> order(inst.num_edges());
  for (std::size_t e = 0; e < order.size(); ++e) order[e] = e;
  perm.shuffle(order);
  std::vector<char> mu(inst.num_u(), 0), mv(inst.num_v(), 0);
  std::vector<long> lu(inst.num_u(), 0), lv(inst.num_v(), 0);
  double reward = 0.0;
  for (std::size_t e : order) {
    std::size_t u = e / inst.num_v(), v = e % inst.num_v();
    double w = pick.uniform_at(e), acc = 0.0;
    long a = -1;
    for (std::size_t k = 0; k < inst.num_actions(); ++k) {
      acc += sol.z.at(u, v, k);
      if (w < acc) {
        a = static_cast<long>(k);
        break;
      }
    }
    if (a < 0 || mu[u] || mv[v] || lu[u] >= inst.cap_u(u) || lv[v] >= inst.cap_v(v)) continue;
    ++lu[u];
    ++lv[v];
    std::size_t slot = inst.slot(u, v, static_cast<std::size_t>(a));
    if (qbits.bernoulli_at(slot, inst.q(u, v, static_cast<std::size_t>(a)))) {
      mu[u] = mv[v] = 1;
      reward += inst.r(u, v, static_cast<std::size_t>(a));
    }
  }
  return reward;
}

inline SimReport evaluate_edge_greedy(const Instance& inst, const EdgeLpSolution& sol, std::uint64_t trials,
                                      std::uint64_t seed, unsigned workers = 1,
                                      std::optional<double> opt_value = std::nullopt) {
  if (trials < 1) throw InvalidInput("trials must be >= 1");
  struct Acc {
    RunningStats s;
    void merge(const Acc& o) { s.merge(o.s); }
  };
  Acc acc = chunked_trials(trials, workers, Acc{},
                           [&](Acc& a, std::uint64_t t) { a.s.add(edge_greedy_trial(sol, inst, seed, t)); });
  SimReport r = SimReport::from(acc.s);
  r.set_comparators(sol.objective, opt_value);
  return r;
}

}  // namespace qcm
