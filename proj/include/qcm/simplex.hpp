#pragma once

#include <vector>

#include "core.hpp"

namespace qcm {

// max c^T x  s.t.  A x <= b, x >= 0.  A is row-major rows x cols.
struct LpProblem {
  std::size_t rows = 0, cols = 0;
  std::vector<double> A, b, c;

  LpProblem() = default;
  LpProblem(std::size_t m, std::size_t n) : rows(m), cols(n), A(m * n, 0.0), b(m, 0.0), c(n, 0.0) {}
  double& at(std::size_t i, std::size_t j) { return A[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return A[i * cols + j]; }
};

enum class LpStatus { kOptimal, kInfeasible, kUnbounded, kIterationLimit };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::kOptimal: return "optimal";
    case LpStatus::kInfeasible: return "infeasible";
    case LpStatus::kUnbounded: return "unbounded";
    default: return "iteration limit";
  }
}

struct LpResult {
  LpStatus status = LpStatus::kOptimal;
  std::vector<double> x;
  std::vector<double> duals;  // one per row, >= 0 at optimum
  double value = 0.0;
  std::size_t iterations = 0;
};

struct SimplexOptions {
  double feasibility_tol = 1e-9;
  double optimality_tol = 1e-9;
  double pivot_tol = 1e-11;
  std::size_t max_iterations = 200000;
  std::size_t refactor_every = 40;
};

namespace detail {

class RevisedSimplex {
 public:
  RevisedSimplex(const LpProblem& p, const SimplexOptions& o) : p_(p), o_(o), m_(p.rows), n_(p.cols) {
    // Columns: structural [0,n), slack [n, n+m), artificial [n+m, n+2m).
    sign_.assign(m_, 1.0);
    for (std::size_t i = 0; i < m_; ++i)
      if (p.b[i] < 0) sign_[i] = -1.0;
    basis_.resize(m_);
    is_basic_.assign(n_ + 2 * m_, 0);
    for (std::size_t i = 0; i < m_; ++i) {
      basis_[i] = sign_[i] > 0 ? n_ + i : n_ + m_ + i;
      is_basic_[basis_[i]] = 1;
    }
    binv_.assign(m_ * m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) binv_[i * m_ + i] = 1.0;
    xb_.resize(m_);
    for (std::size_t i = 0; i < m_; ++i) xb_[i] = std::abs(p.b[i]);
  }

  LpResult solve() {
    LpResult res;
    bool any_art = false;
    for (std::size_t i = 0; i < m_; ++i) any_art = any_art || basis_[i] >= n_ + m_;
    if (any_art) {
      phase_ = 1;
      LpStatus s = iterate(res.iterations);
      if (s == LpStatus::kIterationLimit) return fail(res, s);
      double infeas = 0.0;
      for (std::size_t i = 0; i < m_; ++i)
        if (basis_[i] >= n_ + m_) infeas += xb_[i];
      if (infeas > o_.feasibility_tol * std::max(1.0, max_abs_b())) return fail(res, LpStatus::kInfeasible);
      drive_out_artificials();
    }
    phase_ = 2;
    LpStatus s = iterate(res.iterations);
    if (s != LpStatus::kOptimal) return fail(res, s);
    res.status = LpStatus::kOptimal;
    res.x.assign(n_, 0.0);
    for (std::size_t i = 0; i < m_; ++i)
      if (basis_[i] < n_) res.x[basis_[i]] = std::max(0.0, xb_[i]);
    res.value = 0.0;
    for (std::size_t j = 0; j < n_; ++j) res.value += p_.c[j] * res.x[j];
    auto y = prices();
    res.duals.resize(m_);
    for (std::size_t i = 0; i < m_; ++i) res.duals[i] = std::max(0.0, y[i] * sign_[i]);
    return res;
  }

 private:
  double max_abs_b() const {
    double m = 0.0;
    for (double v : p_.b) m = std::max(m, std::abs(v));
    return m;
  }

  LpResult& fail(LpResult& r, LpStatus s) {
    r.status = s;
    return r;
  }

  double cost(std::size_t j) const {
    if (phase_ == 1) return j >= n_ + m_ ? -1.0 : 0.0;
    return j < n_ ? p_.c[j] : 0.0;
  }

  // Column j of the sign-normalized constraint matrix.
  void column(std::size_t j, std::vector<double>& out) const {
    out.assign(m_, 0.0);
    if (j < n_) {
      for (std::size_t i = 0; i < m_; ++i) out[i] = sign_[i] * p_.at(i, j);
    } else if (j < n_ + m_) {
      out[j - n_] = sign_[j - n_];
    } else {
      out[j - n_ - m_] = 1.0;
    }
  }

  double column_dot(std::size_t j, const std::vector<double>& y) const {
    if (j < n_) {
      double s = 0.0;
      for (std::size_t i = 0; i < m_; ++i) s += y[i] * sign_[i] * p_.at(i, j);
      return s;
    }
    if (j < n_ + m_) return y[j - n_] * sign_[j - n_];
    return y[j - n_ - m_];
  }

  std::vector<double> prices() const {
    std::vector<double> y(m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      double cb = cost(basis_[i]);
      if (cb == 0.0) continue;
      for (std::size_t k = 0; k < m_; ++k) y[k] += cb * binv_[i * m_ + k];
    }
    return y;
  }

  bool allowed(std::size_t j) const { return phase_ == 1 || j < n_ + m_; }

  LpStatus iterate(std::size_t& iters) {
    std::vector<double> a, w(m_);
    std::size_t since_refactor = 0;
    while (true) {
      if (iters >= o_.max_iterations) return LpStatus::kIterationLimit;
      auto y = prices();
      std::size_t enter = SIZE_MAX;
      for (std::size_t j = 0; j < n_ + 2 * m_; ++j) {
        if (is_basic_[j] || !allowed(j)) continue;
        if (cost(j) - column_dot(j, y) > o_.optimality_tol) {
          enter = j;
          break;
        }
      }
      if (enter == SIZE_MAX) return LpStatus::kOptimal;
      column(enter, a);
      for (std::size_t i = 0; i < m_; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < m_; ++k) s += binv_[i * m_ + k] * a[k];
        w[i] = s;
      }
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < m_; ++i)
        if (w[i] > o_.pivot_tol) best = std::min(best, std::max(0.0, xb_[i]) / w[i]);
      std::size_t leave = SIZE_MAX;
      for (std::size_t i = 0; i < m_; ++i) {
        if (w[i] <= o_.pivot_tol || std::max(0.0, xb_[i]) / w[i] > best + 1e-12) continue;
        if (leave == SIZE_MAX || basis_[i] < basis_[leave]) leave = i;
      }
      if (leave == SIZE_MAX) return LpStatus::kUnbounded;
      pivot(enter, leave, w);
      ++iters;
      if (++since_refactor >= o_.refactor_every) {
        refactor();
        since_refactor = 0;
      }
    }
  }

  void pivot(std::size_t enter, std::size_t r, const std::vector<double>& w) {
    double theta = std::max(0.0, xb_[r]) / w[r];
    for (std::size_t i = 0; i < m_; ++i) xb_[i] -= theta * w[i];
    xb_[r] = theta;
    double piv = w[r];
    for (std::size_t k = 0; k < m_; ++k) binv_[r * m_ + k] /= piv;
    for (std::size_t i = 0; i < m_; ++i) {
      if (i == r || w[i] == 0.0) continue;
      double f = w[i];
      for (std::size_t k = 0; k < m_; ++k) binv_[i * m_ + k] -= f * binv_[r * m_ + k];
    }
    is_basic_[basis_[r]] = 0;
    basis_[r] = enter;
    is_basic_[enter] = 1;
  }

  // Rebuilds B^{-1} by Gauss-Jordan elimination with partial pivoting.
  void refactor() {
    std::vector<double> B(m_ * m_), col;
    for (std::size_t i = 0; i < m_; ++i) {
      column(basis_[i], col);
      for (std::size_t k = 0; k < m_; ++k) B[k * m_ + i] = col[k];
    }
    std::vector<double> inv(m_ * m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) inv[i * m_ + i] = 1.0;
    for (std::size_t c = 0; c < m_; ++c) {
      std::size_t pr = c;
      for (std::size_t r = c + 1; r < m_; ++r)
        if (std::abs(B[r * m_ + c]) > std::abs(B[pr * m_ + c])) pr = r;
      if (std::abs(B[pr * m_ + c]) < 1e-14) return;  // keep the product-form inverse
      if (pr != c)
        for (std::size_t k = 0; k < m_; ++k) {
          std::swap(B[pr * m_ + k], B[c * m_ + k]);
          std::swap(inv[pr * m_ + k], inv[c * m_ + k]);
        }
      double d = B[c * m_ + c];
      for (std::size_t k = 0; k < m_; ++k) B[c * m_ + k] /= d, inv[c * m_ + k] /= d;
      for (std::size_t r = 0; r < m_; ++r) {
        if (r == c) continue;
        double f = B[r * m_ + c];
        if (f == 0.0) continue;
        for (std::size_t k = 0; k < m_; ++k) B[r * m_ + k] -= f * B[c * m_ + k], inv[r * m_ + k] -= f * inv[c * m_ + k];
      }
    }
    binv_ = std::move(inv);
    for (std::size_t i = 0; i < m_; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < m_; ++k) s += binv_[i * m_ + k] * std::abs(p_.b[k]);
      xb_[i] = s;
    }
  }

  // Replace zero-level artificials in the basis by real columns where possible.
  void drive_out_artificials() {
    std::vector<double> a, w(m_);
    for (std::size_t r = 0; r < m_; ++r) {
      if (basis_[r] < n_ + m_) continue;
      for (std::size_t j = 0; j < n_ + m_; ++j) {
        if (is_basic_[j]) continue;
        column(j, a);
        double s = 0.0;
        for (std::size_t k = 0; k < m_; ++k) s += binv_[r * m_ + k] * a[k];
        if (std::abs(s) < 1e-9) continue;
        for (std::size_t i = 0; i < m_; ++i) {
          double t = 0.0;
          for (std::size_t k = 0; k < m_; ++k) t += binv_[i * m_ + k] * a[k];
          w[i] = t;
        }
        xb_[r] = 0.0;
        pivot(j, r, w);
        break;
      }
    }
  }

  const LpProblem& p_;
  SimplexOptions o_;
  std::size_t m_, n_;
  int phase_ = 2;
  std::vector<double> sign_;
  std::vector<std::size_t> basis_;
  std::vector<char> is_basic_;
  std::vector<double> binv_, xb_;
};

}  // namespace detail

inline LpResult solve_generic_lp(const LpProblem& p, const SimplexOptions& o = {}) {
  if (p.A.size() != p.rows * p.cols || p.b.size() != p.rows || p.c.size() != p.cols)
    throw InvalidInput("solve_generic_lp: dimension mismatch");
  if (p.rows == 0) {
    LpResult r;
    r.x.assign(p.cols, 0.0);
    for (double c : p.c)
      if (c > o.optimality_tol) r.status = LpStatus::kUnbounded;
    return r;
  }
  return detail::RevisedSimplex(p, o).solve();
}

// Throws on any non-optimal status.
inline LpResult solve_lp_or_throw(const LpProblem& p, const char* what, const SimplexOptions& o = {}) {
  LpResult r = solve_generic_lp(p, o);
  if (r.status == LpStatus::kIterationLimit) throw IterationLimit(std::string(what) + ": simplex iteration limit");
  if (r.status != LpStatus::kOptimal) throw SolverError(std::string(what) + ": LP " + to_string(r.status));
  return r;
}

}  // namespace qcm
