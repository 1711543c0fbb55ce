#pragma once

#include <functional>

#include "core.hpp"

namespace qcm {

// (19 - 67 e^{-3}) / 27
inline double beta_two_sided() { return (19.0 - 67.0 * std::exp(-3.0)) / 27.0; }
inline double one_minus_inv_e() { return -std::expm1(-1.0); }

namespace detail {
// Integral over [0,1] of e^{-c y} (1 + 2y + 2y^2).
inline double poisson3_integral(double c) {
  double e = std::exp(-c);
  double i0 = (1.0 - e) / c;
  double i1 = (1.0 - e * (1.0 + c)) / (c * c);
  double i2 = (2.0 - e * (c * c + 2.0 * c + 2.0)) / (c * c * c);
  return i0 + 2.0 * i1 + 2.0 * i2;
}
}  // namespace detail

// Attenuation for finite patience >= 2.
inline double attenuation_b(double s) {
  s = std::clamp(s, 0.0, 1.0);
  return detail::poisson3_integral(3.0) / detail::poisson3_integral(3.0 - s);
}

// Attenuation for patience 1 or infinite.
inline double attenuation_b_inf(double s) {
  s = std::clamp(s, 0.0, 1.0);
  double t = 1.0 - s;
  double ratio = t == 0.0 ? 1.0 : t / -std::expm1(-t);
  return one_minus_inv_e() * ratio;
}

// Contention-resolution input; p and x are indexed [element * n_actions + action].
struct PrcrsInput {
  std::size_t n = 0;
  std::size_t n_actions = 1;
  Patience patience = Patience::finite(1);
  std::vector<double> p, x;

  PrcrsInput() = default;
  PrcrsInput(std::size_t n_, std::size_t na, Patience ell) : n(n_), n_actions(na), patience(ell), p(n_ * na, 0.0), x(n_ * na, 0.0) {}
  double p_at(std::size_t i, std::size_t a) const { return p[i * n_actions + a]; }
  double x_at(std::size_t i, std::size_t a) const { return x[i * n_actions + a]; }
  void set(std::size_t i, std::size_t a, double pv, double xv) {
    p[i * n_actions + a] = pv;
    x[i * n_actions + a] = xv;
  }
};

inline std::vector<Violation> validate(const PrcrsInput& in, double tol = 1e-9) {
  std::vector<Violation> out;
  if (in.p.size() != in.n * in.n_actions || in.x.size() != in.p.size()) return {{"$", "size mismatch"}};
  if (!in.patience.is_infinite() && in.patience.value() < 1) out.push_back({"patience", "patience must be at least 1"});
  double sx = 0.0, spx = 0.0;
  for (std::size_t i = 0; i < in.n; ++i) {
    double xi = 0.0;
    for (std::size_t a = 0; a < in.n_actions; ++a) {
      double p = in.p_at(i, a), x = in.x_at(i, a);
      std::string path = "[" + std::to_string(i) + "," + std::to_string(a) + "]";
      if (!(p >= 0.0 && p <= 1.0)) out.push_back({"p" + path, "probability out of range"});
      if (!(x >= 0.0 && x <= 1.0)) out.push_back({"x" + path, "probability out of range"});
      xi += x;
      sx += x;
      spx += p * x;
    }
    if (xi > 1.0 + tol) out.push_back({"x[" + std::to_string(i) + "]", "element mass exceeds 1"});
  }
  if (!in.patience.is_infinite() && sx > static_cast<double>(in.patience.value()) + tol)
    out.push_back({"x", "total mass exceeds patience"});
  if (spx > 1.0 + tol) out.push_back({"p*x", "success mass exceeds 1"});
  return out;
}

// Aggregates actions per element: x_i = sum_a x_i(a), p_i = sum_a p_i(a) x_i(a) / x_i (0 when x_i = 0).
inline PrcrsInput reduce_to_single_action(const PrcrsInput& in) {
  PrcrsInput out(in.n, 1, in.patience);
  for (std::size_t i = 0; i < in.n; ++i) {
    double xi = 0.0, pxi = 0.0;
    std::size_t support = 0, last = 0;
    for (std::size_t a = 0; a < in.n_actions; ++a) {
      xi += in.x_at(i, a), pxi += in.p_at(i, a) * in.x_at(i, a);
      if (in.x_at(i, a) > 0.0) ++support, last = a;
    }
    double pi = support == 1 ? in.p_at(i, last) : xi > 0.0 ? std::min(1.0, pxi / xi) : 0.0;
    out.set(i, 0, pi, xi);
  }
  return out;
}

enum class SchemeFamily { kPrcrs, kGreedy };

class PrcrsScheme {
 public:
  explicit PrcrsScheme(const PrcrsInput& in, SchemeFamily family = SchemeFamily::kPrcrs)
      : input_(in), reduced_(reduce_to_single_action(in)), family_(family), atten_(in.n, 1.0) {
    cap_ = std::max(0L, in.patience.cap(static_cast<long>(in.n)));
    if (family == SchemeFamily::kGreedy) return;
    bool rcrs = in.patience.is_infinite() || in.patience == Patience::finite(1);
    for (std::size_t i = 0; i < in.n; ++i) {
      double xi = reduced_.x_at(i, 0), pi = reduced_.p_at(i, 0);
      if (in.patience == Patience::finite(1))
        atten_[i] = attenuation_b_inf(xi);
      else if (rcrs)
        atten_[i] = attenuation_b_inf(pi * xi);
      else
        atten_[i] = attenuation_b(pi * xi);
    }
  }

  const PrcrsInput& input() const { return input_; }
  const PrcrsInput& reduced() const { return reduced_; }
  SchemeFamily family() const { return family_; }
  double attenuation(std::size_t i) const { return atten_[i]; }
  long cap() const { return cap_; }
  // Selection guarantee of the scheme for this patience.
  double bound() const {
    if (family_ == SchemeFamily::kGreedy) return 0.0;
    bool rcrs = input_.patience.is_infinite() || input_.patience == Patience::finite(1);
    return rcrs ? one_minus_inv_e() : beta_two_sided();
  }

 private:
  PrcrsInput input_, reduced_;
  SchemeFamily family_;
  std::vector<double> atten_;
  long cap_ = 0;
};

// Online state of one scheme execution.
class PrcrsRun {
 public:
  explicit PrcrsRun(const PrcrsScheme& s) : cap_(s.cap()) {}

  // Returns true when element i, suggested via `suggested` (or -1), should be queried.
  bool offer(std::size_t i, int suggested, bool attenuation_bit) {
    if (suggested >= 0 && attenuation_bit && queries_ < cap_ && !output_) {
      ++queries_;
      pending_ = i;
      queried_.push_back(i);
      return true;
    }
    return false;
  }
  void observe(bool success) {
    if (success) output_ = pending_;
  }

  long queries() const { return queries_; }
  bool done() const { return output_.has_value(); }
  std::optional<std::size_t> output() const { return output_; }
  const std::vector<std::size_t>& queried() const { return queried_; }

 private:
  long cap_;
  long queries_ = 0;
  std::size_t pending_ = 0;
  std::optional<std::size_t> output_;
  std::vector<std::size_t> queried_;
};

// ---------------------------------------------------------------------------
// Traces

struct TraceEvent {
  enum Kind { kQuery, kPass, kReveal, kPostHocReveal, kAuxiliary } kind;
  std::size_t i;
  int a;
  bool value;
};

struct PrcrsTrace {
  std::vector<std::size_t> order;
  std::vector<int> suggestion;    // per element: action or -1
  std::vector<char> attenuation;  // B_i
  std::vector<int> decision;      // per element: queried action or -1
  std::vector<TraceEvent> events;
  std::optional<std::pair<std::size_t, std::size_t>> output;
  long queries = 0;
  // Coupled single-action view (multi-action runs only); p is -1 when unknown.
  std::vector<char> coupled_x;
  std::vector<int> coupled_p;
};

struct PrcrsDraws {
  std::vector<std::size_t> order;
  std::vector<int> suggestion;
  std::vector<char> attenuation;
};

using StateOracle = std::function<bool(std::size_t i, std::size_t a)>;

enum class ArrivalModel { kPermutation, kArrivalTimes };

inline std::vector<std::size_t> draw_arrivals(std::size_t n, Stream& rng, ArrivalModel model) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (model == ArrivalModel::kPermutation) {
    rng.shuffle(order);
  } else {
    std::vector<double> y(n);
    for (auto& t : y) t = rng.uniform();
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
  }
  return order;
}

// Suggestion of element i: action a with probability x_i(a), none otherwise.
inline int draw_suggestion(const PrcrsInput& in, std::size_t i, double u) {
  double acc = 0.0;
  for (std::size_t a = 0; a < in.n_actions; ++a) {
    acc += in.x_at(i, a);
    if (u < acc) return static_cast<int>(a);
  }
  return -1;
}

inline PrcrsDraws draw_prcrs(const PrcrsScheme& s, std::uint64_t seed, std::uint64_t trial,
                             ArrivalModel model = ArrivalModel::kPermutation) {
  const PrcrsInput& in = s.input();
  PrcrsDraws d;
  Stream perm(seed, streams::kPermutation, trial);
  d.order = draw_arrivals(in.n, perm, model);
  Stream sugg(seed, streams::kSuggestions, trial), bits(seed, streams::kAttenuationBits, trial);
  d.suggestion.resize(in.n);
  d.attenuation.resize(in.n);
  for (std::size_t i = 0; i < in.n; ++i) {
    d.suggestion[i] = draw_suggestion(in, i, sugg.uniform_at(i));
    d.attenuation[i] = bits.bernoulli_at(i, s.attenuation(i));
  }
  return d;
}

namespace detail {

inline PrcrsTrace run_scheme(const PrcrsScheme& s, const PrcrsDraws& d, const StateOracle& oracle, bool couple,
                             Stream* aux, bool post_hoc) {
  const PrcrsInput& in = s.input();
  PrcrsTrace t;
  t.order = d.order;
  t.suggestion = d.suggestion;
  t.attenuation = d.attenuation;
  t.decision.assign(in.n, -1);
  if (couple) {
    t.coupled_x.assign(in.n, 0);
    t.coupled_p.assign(in.n, -1);
  }
  PrcrsRun run(s);
  for (std::size_t i : d.order) {
    int a = d.suggestion[i];
    if (run.offer(i, a, d.attenuation[i])) {
      t.decision[i] = a;
      t.events.push_back({TraceEvent::kQuery, i, a, true});
      bool state = oracle(i, static_cast<std::size_t>(a));
      t.events.push_back({TraceEvent::kReveal, i, a, state});
      run.observe(state);
      if (state) t.output = {{i, static_cast<std::size_t>(a)}};
      if (couple) t.coupled_x[i] = 1, t.coupled_p[i] = state;
    } else {
      t.events.push_back({TraceEvent::kPass, i, a, false});
      if (!couple) continue;
      if (a >= 0) {
        t.coupled_x[i] = 1;
        if (post_hoc) {
          bool state = oracle(i, static_cast<std::size_t>(a));
          t.events.push_back({TraceEvent::kPostHocReveal, i, a, state});
          t.coupled_p[i] = state;
        }
      } else {
        bool tilde = aux->bernoulli_at(i, s.reduced().p_at(i, 0));
        t.events.push_back({TraceEvent::kAuxiliary, i, -1, tilde});
        t.coupled_p[i] = tilde;
      }
    }
  }
  t.queries = run.queries();
  return t;
}

}  // namespace detail

// Single-action scheme execution.
inline PrcrsTrace prcrs_run(const PrcrsScheme& s, const PrcrsDraws& d, const StateOracle& oracle) {
  if (s.input().n_actions != 1) throw InvalidInput("prcrs_run: expected a single action");
  return detail::run_scheme(s, d, oracle, false, nullptr, false);
}

// Runs the aggregated single-action scheme and queries via the suggested action; also
// records the coupled (X_i, P_i) pair for every element.
inline PrcrsTrace prcrs_multi_action_run(const PrcrsScheme& s, const PrcrsDraws& d, const StateOracle& oracle,
                                         Stream& aux, bool post_hoc_reveals = true) {
  return detail::run_scheme(s, d, oracle, true, &aux, post_hoc_reveals);
}

// Checks ordering rules of a trace; returns the violated rules.
inline std::vector<Violation> audit_trace(const PrcrsTrace& t, long cap) {
  std::vector<Violation> out;
  std::vector<char> decided(t.suggestion.size(), 0);
  bool output = false;
  long queries = 0;
  for (std::size_t k = 0; k < t.events.size(); ++k) {
    const TraceEvent& e = t.events[k];
    std::string path = "events[" + std::to_string(k) + "]";
    switch (e.kind) {
      case TraceEvent::kQuery:
        if (decided[e.i]) out.push_back({path, "element decided twice"});
        if (output) out.push_back({path, "query after output"});
        if (e.a < 0 || e.a != t.suggestion[e.i]) out.push_back({path, "query via unsuggested action"});
        decided[e.i] = 1;
        if (++queries > cap) out.push_back({path, "query cap exceeded"});
        break;
      case TraceEvent::kPass:
        if (decided[e.i]) out.push_back({path, "element decided twice"});
        decided[e.i] = 1;
        break;
      case TraceEvent::kReveal:
        if (k == 0 || t.events[k - 1].kind != TraceEvent::kQuery || t.events[k - 1].i != e.i)
          out.push_back({path, "reveal without preceding query"});
        if (e.value) {
          if (output) out.push_back({path, "second output"});
          output = true;
        }
        break;
      case TraceEvent::kPostHocReveal:
      case TraceEvent::kAuxiliary:
        if (!decided[e.i]) out.push_back({path, "state used before decision"});
        break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo selectability

struct SelectabilityReport {
  std::size_t i = 0, a = 0;
  double x = 0.0, p = 0.0;
  std::uint64_t suggested = 0, queried = 0;
  double estimate = 0.0;
  double half_width = 0.0;  // Wilson 95%
  double std_error = 0.0;
  double bound = 0.0;
  bool pass = true;
};

inline double wilson_half_width(std::uint64_t k, std::uint64_t n, double z = 1.96) {
  if (n == 0) return 0.0;
  double nn = static_cast<double>(n), ph = static_cast<double>(k) / nn, z2 = z * z;
  return z / (1.0 + z2 / nn) * std::sqrt(ph * (1.0 - ph) / nn + z2 / (4.0 * nn * nn));
}

namespace detail {
struct SelectCounts {
  std::vector<std::uint64_t> suggested, queried;
  void merge(const SelectCounts& o) {
    for (std::size_t k = 0; k < suggested.size(); ++k) suggested[k] += o.suggested[k], queried[k] += o.queried[k];
  }
};
}  // namespace detail

inline std::vector<SelectabilityReport> estimate_selectability(const PrcrsInput& in, std::uint64_t trials,
                                                               std::uint64_t seed, unsigned workers = 1,
                                                               SchemeFamily family = SchemeFamily::kPrcrs) {
  if (trials < 1) throw InvalidInput("trials must be >= 1");
  auto viol = validate(in);
  if (!viol.empty()) throw InvalidInput(viol.front().path + ": " + viol.front().message);
  const PrcrsScheme scheme(in, family);
  const std::size_t n = in.n, na = in.n_actions, slots = n * na;
  detail::SelectCounts init{std::vector<std::uint64_t>(slots, 0), std::vector<std::uint64_t>(slots, 0)};
  auto counts = chunked_trials(trials, workers, init, [&](detail::SelectCounts& acc, std::uint64_t t) {
    // Only suggested elements can be queried, so the arrival order is drawn among them.
    Stream sugg(seed, streams::kSuggestions, t), times(seed, streams::kPermutation, t);
    Stream bits(seed, streams::kAttenuationBits, t), states(seed, streams::kQBits, t);
    thread_local std::vector<std::pair<double, std::size_t>> arrivals;
    arrivals.clear();
    for (std::size_t i = 0; i < n; ++i) {
      int a = draw_suggestion(in, i, sugg.uniform_at(i));
      if (a < 0) continue;
      ++acc.suggested[i * na + static_cast<std::size_t>(a)];
      arrivals.push_back({times.uniform_at(i), i * na + static_cast<std::size_t>(a)});
    }
    std::sort(arrivals.begin(), arrivals.end());
    PrcrsRun run(scheme);
    for (auto [y, slot] : arrivals) {
      std::size_t i = slot / na;
      if (!run.offer(i, static_cast<int>(slot % na), bits.bernoulli_at(i, scheme.attenuation(i)))) {
        if (run.done() || run.queries() >= scheme.cap()) break;
        continue;
      }
      ++acc.queried[slot];
      run.observe(states.bernoulli_at(slot, in.p[slot]));
    }
  });
  std::vector<SelectabilityReport> out;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < na; ++a) {
      SelectabilityReport r;
      std::size_t slot = i * na + a;
      r.i = i;
      r.a = a;
      r.x = in.x[slot];
      r.p = in.p[slot];
      r.suggested = counts.suggested[slot];
      r.queried = counts.queried[slot];
      r.bound = scheme.bound();
      if (r.suggested > 0) {
        double nn = static_cast<double>(r.suggested);
        r.estimate = static_cast<double>(r.queried) / nn;
        r.std_error = std::sqrt(r.estimate * (1.0 - r.estimate) / nn);
        r.half_width = wilson_half_width(r.queried, r.suggested);
        r.pass = r.estimate >= r.bound - 4.0 * r.std_error;
      } else {
        r.estimate = std::numeric_limits<double>::quiet_NaN();
      }
      out.push_back(r);
    }
  return out;
}

}  // namespace qcm
