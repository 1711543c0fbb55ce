#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "core.hpp"

namespace qcm {

using json = nlohmann::json;

// Bipartite action-reward instance. Entries not set are (q=0, r=0).
class Instance {
 public:
  Instance() = default;
  Instance(std::vector<std::string> u_ids, std::vector<std::string> v_ids, std::vector<std::string> action_ids)
      : u_(std::move(u_ids)),
        v_(std::move(v_ids)),
        a_(std::move(action_ids)),
        q_(u_.size() * v_.size() * a_.size(), 0.0),
        r_(q_.size(), 0.0),
        pu_(u_.size(), Patience::finite(1)),
        pv_(v_.size(), Patience::finite(1)) {}

  std::size_t num_u() const { return u_.size(); }
  std::size_t num_v() const { return v_.size(); }
  std::size_t num_actions() const { return a_.size(); }
  std::size_t num_edges() const { return u_.size() * v_.size(); }

  const std::vector<std::string>& u_ids() const { return u_; }
  const std::vector<std::string>& v_ids() const { return v_; }
  const std::vector<std::string>& action_ids() const { return a_; }

  std::size_t edge(std::size_t u, std::size_t v) const { return u * v_.size() + v; }
  std::size_t slot(std::size_t u, std::size_t v, std::size_t a) const { return edge(u, v) * a_.size() + a; }

  double q(std::size_t u, std::size_t v, std::size_t a) const { return q_[slot(u, v, a)]; }
  double r(std::size_t u, std::size_t v, std::size_t a) const { return r_[slot(u, v, a)]; }
  void set(std::size_t u, std::size_t v, std::size_t a, double q, double r) {
    q_[slot(u, v, a)] = q;
    r_[slot(u, v, a)] = r;
  }

  Patience patience_u(std::size_t u) const { return pu_[u]; }
  Patience patience_v(std::size_t v) const { return pv_[v]; }
  void set_patience_u(std::size_t u, Patience p) { pu_[u] = p; }
  void set_patience_v(std::size_t v, Patience p) { pv_[v] = p; }
  // Patience capped by the number of incident edges.
  long cap_u(std::size_t u) const { return std::max(0L, pu_[u].cap(static_cast<long>(v_.size()))); }
  long cap_v(std::size_t v) const { return std::max(0L, pv_[v].cap(static_cast<long>(u_.size()))); }

  // True when every offline vertex has patience 1 or infinite.
  bool one_sided() const {
    for (const auto& p : pu_)
      if (!(p.is_infinite() || p == Patience::finite(1))) return false;
    return true;
  }

  const json& meta() const { return meta_; }
  void set_meta(json m) { meta_ = std::move(m); }

  bool operator==(const Instance& o) const {
    return u_ == o.u_ && v_ == o.v_ && a_ == o.a_ && q_ == o.q_ && r_ == o.r_ && pu_ == o.pu_ && pv_ == o.pv_ &&
           meta_ == o.meta_;
  }

 private:
  std::vector<std::string> u_, v_, a_;
  std::vector<double> q_, r_;
  std::vector<Patience> pu_, pv_;
  json meta_;
};

inline std::vector<Violation> validate(const Instance& inst) {
  std::vector<Violation> out;
  std::set<std::string> seen;
  auto check_ids = [&](const std::vector<std::string>& ids, const char* name, bool shared) {
    std::set<std::string> local;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      bool dup = shared ? !seen.insert(ids[i]).second : !local.insert(ids[i]).second;
      if (dup) out.push_back({std::string(name) + "[" + std::to_string(i) + "]", "duplicate id"});
    }
  };
  check_ids(inst.u_ids(), "U", true);
  check_ids(inst.v_ids(), "V", true);
  check_ids(inst.action_ids(), "A", false);
  for (std::size_t u = 0; u < inst.num_u(); ++u)
    for (std::size_t v = 0; v < inst.num_v(); ++v)
      for (std::size_t a = 0; a < inst.num_actions(); ++a) {
        std::string path = "edges[" + inst.u_ids()[u] + "," + inst.v_ids()[v] + "].actions[" + inst.action_ids()[a] + "]";
        double q = inst.q(u, v, a), r = inst.r(u, v, a);
        if (!(q >= 0.0 && q <= 1.0)) out.push_back({path + ".q", "probability out of range"});
        if (!(r >= 0.0) || !std::isfinite(r)) out.push_back({path + ".r", "reward negative"});
      }
  for (std::size_t u = 0; u < inst.num_u(); ++u)
    if (!inst.patience_u(u).is_infinite() && inst.patience_u(u).value() < 0)
      out.push_back({"patience." + inst.u_ids()[u], "patience negative"});
  for (std::size_t v = 0; v < inst.num_v(); ++v)
    if (!inst.patience_v(v).is_infinite() && inst.patience_v(v).value() < 0)
      out.push_back({"patience." + inst.v_ids()[v], "patience negative"});
  return out;
}

inline void require_valid(const Instance& inst) {
  auto viol = validate(inst);
  if (!viol.empty()) throw InvalidInput(viol.front().path + ": " + viol.front().message);
}

// ---------------------------------------------------------------------------
// JSON

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

inline std::string json_string(const std::string& s) { return json(s).dump(); }

inline std::string to_json(const Instance& inst) {
  std::ostringstream os;
  auto id_list = [&](const std::vector<std::string>& ids) {
    os << "[";
    for (std::size_t i = 0; i < ids.size(); ++i) os << (i ? ", " : "") << json_string(ids[i]);
    os << "]";
  };
  os << "{\n  \"U\": ";
  id_list(inst.u_ids());
  os << ",\n  \"V\": ";
  id_list(inst.v_ids());
  os << ",\n  \"A\": ";
  id_list(inst.action_ids());
  os << ",\n  \"patience\": {";
  bool first = true;
  auto pat = [&](const std::string& id, Patience p) {
    os << (first ? "" : ", ") << json_string(id) << ": " << (p.is_infinite() ? "\"inf\"" : std::to_string(p.value()));
    first = false;
  };
  for (std::size_t u = 0; u < inst.num_u(); ++u) pat(inst.u_ids()[u], inst.patience_u(u));
  for (std::size_t v = 0; v < inst.num_v(); ++v) pat(inst.v_ids()[v], inst.patience_v(v));
  os << "},\n  \"edges\": [";
  first = true;
  for (std::size_t u = 0; u < inst.num_u(); ++u)
    for (std::size_t v = 0; v < inst.num_v(); ++v) {
      std::vector<std::size_t> live;
      for (std::size_t a = 0; a < inst.num_actions(); ++a)
        if (inst.q(u, v, a) != 0.0 || inst.r(u, v, a) != 0.0) live.push_back(a);
      if (live.empty()) continue;
      os << (first ? "\n" : ",\n") << "    {\"u\": " << json_string(inst.u_ids()[u])
         << ", \"v\": " << json_string(inst.v_ids()[v]) << ", \"actions\": [";
      first = false;
      for (std::size_t k = 0; k < live.size(); ++k) {
        std::size_t a = live[k];
        os << (k ? ", " : "") << "{\"a\": " << json_string(inst.action_ids()[a])
           << ", \"q\": " << format_double(inst.q(u, v, a)) << ", \"r\": " << format_double(inst.r(u, v, a)) << "}";
      }
      os << "]}";
    }
  os << (first ? "]" : "\n  ]");
  if (!inst.meta().is_null()) os << ",\n  \"meta\": " << inst.meta().dump();
  os << "\n}\n";
  return os.str();
}

namespace detail {

inline void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw InvalidInput(path + ": expected object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok) throw InvalidInput(path + "." + it.key() + ": unknown key");
  }
}

inline std::vector<std::string> id_array(const json& j, const std::string& path) {
  if (!j.is_array()) throw InvalidInput(path + ": expected array of strings");
  std::vector<std::string> out;
  for (const auto& e : j) {
    if (!e.is_string()) throw InvalidInput(path + ": expected array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

inline Patience parse_patience(const json& j, const std::string& path) {
  if (j.is_string() && j.get<std::string>() == "inf") return Patience::infinite();
  if (j.is_number_integer()) return Patience::finite(j.get<long>());
  throw InvalidInput(path + ": expected integer or \"inf\"");
}

inline std::size_t find_id(const std::vector<std::string>& ids, const std::string& id, const std::string& path) {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == id) return i;
  throw InvalidInput(path + ": unknown id \"" + id + "\"");
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw InvalidInput(path + ": expected number");
  return j.get<double>();
}

}  // namespace detail

inline Instance instance_from_json(const json& doc) {
  using namespace detail;
  check_keys(doc, "$", {"U", "V", "A", "patience", "edges", "meta"});
  for (const char* k : {"U", "V", "A", "patience", "edges"})
    if (!doc.contains(k)) throw InvalidInput(std::string("$.") + k + ": missing");
  Instance inst(id_array(doc["U"], "$.U"), id_array(doc["V"], "$.V"), id_array(doc["A"], "$.A"));
  const json& pat = doc["patience"];
  if (!pat.is_object()) throw InvalidInput("$.patience: expected object");
  for (auto it = pat.begin(); it != pat.end(); ++it) {
    bool found = false;
    for (std::size_t u = 0; u < inst.num_u(); ++u)
      if (inst.u_ids()[u] == it.key()) inst.set_patience_u(u, parse_patience(*it, "$.patience." + it.key())), found = true;
    for (std::size_t v = 0; v < inst.num_v(); ++v)
      if (inst.v_ids()[v] == it.key()) inst.set_patience_v(v, parse_patience(*it, "$.patience." + it.key())), found = true;
    if (!found) throw InvalidInput("$.patience." + it.key() + ": unknown vertex");
  }
  for (const auto& id : inst.u_ids())
    if (!pat.contains(id)) throw InvalidInput("$.patience." + id + ": missing");
  for (const auto& id : inst.v_ids())
    if (!pat.contains(id)) throw InvalidInput("$.patience." + id + ": missing");
  if (!doc["edges"].is_array()) throw InvalidInput("$.edges: expected array");
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t k = 0; k < doc["edges"].size(); ++k) {
    const json& e = doc["edges"][k];
    std::string path = "$.edges[" + std::to_string(k) + "]";
    check_keys(e, path, {"u", "v", "actions"});
    if (!e.contains("u") || !e["u"].is_string() || !e.contains("v") || !e["v"].is_string())
      throw InvalidInput(path + ": u and v must be strings");
    std::size_t u = find_id(inst.u_ids(), e["u"].get<std::string>(), path + ".u");
    std::size_t v = find_id(inst.v_ids(), e["v"].get<std::string>(), path + ".v");
    if (!seen.insert({u, v}).second) throw InvalidInput(path + ": duplicate edge");
    if (!e.contains("actions") || !e["actions"].is_array()) throw InvalidInput(path + ".actions: expected array");
    std::set<std::size_t> seen_a;
    for (std::size_t j = 0; j < e["actions"].size(); ++j) {
      const json& ac = e["actions"][j];
      std::string apath = path + ".actions[" + std::to_string(j) + "]";
      check_keys(ac, apath, {"a", "q", "r"});
      if (!ac.contains("a") || !ac["a"].is_string()) throw InvalidInput(apath + ".a: expected string");
      std::size_t a = find_id(inst.action_ids(), ac["a"].get<std::string>(), apath + ".a");
      if (!seen_a.insert(a).second) throw InvalidInput(apath + ": duplicate action");
      if (!ac.contains("q") || !ac.contains("r")) throw InvalidInput(apath + ": q and r required");
      inst.set(u, v, a, number(ac["q"], apath + ".q"), number(ac["r"], apath + ".r"));
    }
  }
  if (doc.contains("meta")) inst.set_meta(doc["meta"]);
  return inst;
}

inline Instance instance_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string("malformed JSON: ") + e.what());
  }
  return instance_from_json(doc);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput(path + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Instance load_instance(const std::string& path) { return instance_from_json(std::string_view(read_file(path))); }

inline void save_instance(const std::string& path, const Instance& inst) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput(path + ": cannot write");
  out << to_json(inst);
}

// ---------------------------------------------------------------------------
// Reductions

struct DiscreteDist {
  std::vector<std::pair<double, double>> atoms;  // (value, probability)
};

enum class PricingObjective { kRevenue, kWelfare };

struct PricePoint {
  double payment = 0.0;
  double prob = 0.0;
};

// Jobs are offline vertices, workers online.
struct PricingSpec {
  std::vector<std::string> jobs, workers;
  std::vector<double> job_value;
  std::vector<Patience> job_patience, worker_patience;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<PricePoint>> acceptance;
  std::map<std::pair<std::size_t, std::size_t>, DiscreteDist> cost;
  PricingObjective objective = PricingObjective::kRevenue;
};

inline std::vector<Violation> validate(const DiscreteDist& d, const std::string& path) {
  std::vector<Violation> out;
  double total = 0.0;
  for (std::size_t i = 0; i < d.atoms.size(); ++i) {
    auto [x, p] = d.atoms[i];
    if (!(p >= 0.0 && p <= 1.0)) out.push_back({path + ".atoms[" + std::to_string(i) + "]", "probability out of range"});
    if (!(x >= 0.0)) out.push_back({path + ".atoms[" + std::to_string(i) + "]", "value negative"});
    total += p;
  }
  if (!d.atoms.empty() && std::abs(total - 1.0) > 1e-9) out.push_back({path, "probabilities do not sum to 1"});
  return out;
}

inline std::vector<Violation> validate(const PricingSpec& s) {
  std::vector<Violation> out;
  if (s.job_value.size() != s.jobs.size() || s.job_patience.size() != s.jobs.size() ||
      s.worker_patience.size() != s.workers.size())
    out.push_back({"$", "size mismatch"});
  for (std::size_t i = 0; i < s.job_value.size(); ++i)
    if (!(s.job_value[i] >= 0.0)) out.push_back({"job_value[" + std::to_string(i) + "]", "value negative"});
  for (const auto& [e, curve] : s.acceptance) {
    std::string path = "acceptance[" + std::to_string(e.first) + "," + std::to_string(e.second) + "]";
    if (e.first >= s.jobs.size() || e.second >= s.workers.size()) out.push_back({path, "unknown edge"});
    for (const auto& pt : curve) {
      if (!(pt.prob >= 0.0 && pt.prob <= 1.0)) out.push_back({path, "probability out of range"});
      if (!(pt.payment >= 0.0)) out.push_back({path, "payment negative"});
    }
  }
  for (const auto& [e, d] : s.cost) {
    auto v = validate(d, "cost[" + std::to_string(e.first) + "," + std::to_string(e.second) + "]");
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

inline Instance from_pricing(const PricingSpec& spec) {
  auto viol = validate(spec);
  if (!viol.empty()) throw InvalidInput(viol.front().path + ": " + viol.front().message);
  std::set<double> levels;
  for (const auto& [e, curve] : spec.acceptance)
    for (const auto& pt : curve) levels.insert(pt.payment);
  std::vector<double> taus(levels.begin(), levels.end());
  std::vector<std::string> ids;
  for (double t : taus) ids.push_back("tau=" + format_double(t));
  Instance inst(spec.jobs, spec.workers, ids);
  for (std::size_t u = 0; u < spec.jobs.size(); ++u) inst.set_patience_u(u, spec.job_patience[u]);
  for (std::size_t v = 0; v < spec.workers.size(); ++v) inst.set_patience_v(v, spec.worker_patience[v]);
  for (const auto& [e, curve] : spec.acceptance) {
    auto [u, v] = e;
    const DiscreteDist* cost = nullptr;
    if (spec.objective == PricingObjective::kWelfare) {
      auto it = spec.cost.find(e);
      if (it == spec.cost.end() || it->second.atoms.empty()) throw InvalidInput("cost distribution required");
      cost = &it->second;
    }
    for (const auto& pt : curve) {
      std::size_t a = static_cast<std::size_t>(std::lower_bound(taus.begin(), taus.end(), pt.payment) - taus.begin());
      double reward;
      if (cost == nullptr) {
        reward = spec.job_value[u] - pt.payment;
      } else {
        double mass = 0.0, sum = 0.0;
        for (auto [c, p] : cost->atoms)
          if (c <= pt.payment) mass += p, sum += p * c;
        if (mass <= 0.0) {
          if (pt.prob > 0.0)
            throw InvalidInput("acceptance probability positive but no cost mass below payment " + format_double(pt.payment));
          continue;
        }
        reward = spec.job_value[u] - sum / mass;
      }
      inst.set(u, v, a, pt.prob, std::max(0.0, reward));
    }
  }
  return inst;
}

struct ProphetSpec {
  std::vector<std::string> U, V;
  std::vector<Patience> patience_u, patience_v;
  std::map<std::pair<std::size_t, std::size_t>, DiscreteDist> weights;
};

inline std::vector<Violation> validate(const ProphetSpec& s) {
  std::vector<Violation> out;
  if (s.patience_u.size() != s.U.size() || s.patience_v.size() != s.V.size()) out.push_back({"$", "size mismatch"});
  for (const auto& [e, d] : s.weights) {
    std::string path = "weights[" + std::to_string(e.first) + "," + std::to_string(e.second) + "]";
    if (e.first >= s.U.size() || e.second >= s.V.size()) out.push_back({path, "unknown edge"});
    auto v = validate(d, path);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

// Action k of edge e is the k-th smallest support point of its weight distribution.
inline Instance from_prophet(const ProphetSpec& spec) {
  auto viol = validate(spec);
  if (!viol.empty()) throw InvalidInput(viol.front().path + ": " + viol.front().message);
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::pair<double, double>>> support;
  std::size_t width = 0;
  for (const auto& [e, d] : spec.weights) {
    std::map<double, double> merged;
    for (auto [x, p] : d.atoms)
      if (p > 0.0) merged[x] += p;
    if (merged.empty()) throw InvalidInput("weights: empty support");
    support[e].assign(merged.begin(), merged.end());
    width = std::max(width, merged.size());
  }
  std::vector<std::string> ids;
  for (std::size_t k = 0; k < width; ++k) ids.push_back("t" + std::to_string(k));
  Instance inst(spec.U, spec.V, ids);
  for (std::size_t u = 0; u < spec.U.size(); ++u) inst.set_patience_u(u, spec.patience_u[u]);
  for (std::size_t v = 0; v < spec.V.size(); ++v) inst.set_patience_v(v, spec.patience_v[v]);
  for (const auto& [e, atoms] : support) {
    double tail = 0.0, tail_sum = 0.0;
    for (std::size_t k = atoms.size(); k-- > 0;) {
      tail += atoms[k].second;
      tail_sum += atoms[k].second * atoms[k].first;
      inst.set(e.first, e.second, k, std::min(1.0, tail), tail_sum / tail);
    }
  }
  return inst;
}

// ---------------------------------------------------------------------------
// Random instances

enum class QModel { kUniform, kSparse };
enum class RModel { kUniform, kTradeoff };

struct GeneratorParams {
  std::size_t n_u = 2, n_v = 2, n_actions = 1;
  std::vector<Patience> patience_range{Patience::finite(1)};
  std::vector<Patience> patience_u_range;  // empty: use patience_range
  QModel q_model = QModel::kUniform;
  RModel r_model = RModel::kUniform;
  double r_max = 1.0;
  double density = 0.6;  // edge presence probability for kSparse
};

inline const char* to_string(QModel m) { return m == QModel::kUniform ? "uniform" : "sparse"; }
inline const char* to_string(RModel m) { return m == RModel::kUniform ? "uniform" : "tradeoff"; }

inline Instance random_instance(std::uint64_t seed, const GeneratorParams& g) {
  if (g.n_u < 1 || g.n_v < 1 || g.n_actions < 1) throw InvalidInput("random_instance: sizes must be >= 1");
  if (g.patience_range.empty()) throw InvalidInput("random_instance: empty patience range");
  Stream rng(seed, streams::kInstanceGen);
  std::vector<std::string> U, V, A;
  for (std::size_t i = 0; i < g.n_u; ++i) U.push_back("u" + std::to_string(i));
  for (std::size_t i = 0; i < g.n_v; ++i) V.push_back("v" + std::to_string(i));
  for (std::size_t i = 0; i < g.n_actions; ++i) A.push_back("a" + std::to_string(i));
  Instance inst(U, V, A);
  const auto& pu = g.patience_u_range.empty() ? g.patience_range : g.patience_u_range;
  for (std::size_t u = 0; u < g.n_u; ++u) inst.set_patience_u(u, pu[rng.index(pu.size())]);
  for (std::size_t v = 0; v < g.n_v; ++v) inst.set_patience_v(v, g.patience_range[rng.index(g.patience_range.size())]);
  for (std::size_t u = 0; u < g.n_u; ++u)
    for (std::size_t v = 0; v < g.n_v; ++v) {
      bool present = g.q_model == QModel::kUniform || rng.uniform() < g.density;
      std::vector<double> qs(g.n_actions), rs(g.n_actions);
      for (auto& x : qs) x = rng.uniform();
      for (auto& x : rs) x = g.r_max * rng.uniform();
      if (!present) continue;
      if (g.r_model == RModel::kTradeoff) {
        std::sort(qs.begin(), qs.end());
        std::sort(rs.rbegin(), rs.rend());
      }
      for (std::size_t a = 0; a < g.n_actions; ++a) inst.set(u, v, a, qs[a], rs[a]);
    }
  json pr = json::array(), pur = json::array();
  for (auto p : g.patience_range) pr.push_back(p.to_string());
  for (auto p : pu) pur.push_back(p.to_string());
  inst.set_meta({{"generator", "random_instance"},
                 {"family", std::string("q=") + to_string(g.q_model) + ",r=" + to_string(g.r_model)},
                 {"seed", seed},
                 {"n_u", g.n_u},
                 {"n_v", g.n_v},
                 {"n_actions", g.n_actions},
                 {"patience_v_range", pr},
                 {"patience_u_range", pur},
                 {"r_max", g.r_max}});
  return inst;
}

}  // namespace qcm
