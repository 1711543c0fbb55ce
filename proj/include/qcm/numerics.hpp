#pragma once

#include <functional>
#include <string>

#include "prcrs.hpp"

namespace qcm {

namespace detail {
template <class F>
double simpson_rec(const F& f, double a, double b, double fa, double fm, double fb, double whole, double tol, int depth) {
  double m = 0.5 * (a + b), lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm), right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  double diff = left + right - whole;
  if (depth <= 0 || std::abs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
  return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

// Adaptive Simpson quadrature with absolute tolerance; the interval is pre-split into `pieces`.
template <class F>
double integrate(const F& f, double a, double b, double tol = 1e-10, int pieces = 8, int max_depth = 40) {
  if (b <= a) return 0.0;
  double h = (b - a) / pieces, total = 0.0;
  for (int k = 0; k < pieces; ++k) {
    double lo = a + k * h, hi = k + 1 == pieces ? b : lo + h;
    double flo = f(lo), fhi = f(hi), fm = f(0.5 * (lo + hi));
    double whole = (hi - lo) / 6.0 * (flo + 4.0 * fm + fhi);
    total += detail::simpson_rec(f, lo, hi, flo, fm, fhi, whole, tol / pieces, max_depth);
  }
  return total;
}

// P[Pois(mu) < k].
inline double poisson_cdf_lt(long k, double mu) {
  if (k < 1) throw InvalidInput("poisson_cdf_lt: k must be >= 1");
  if (mu < 0.0) throw InvalidInput("poisson_cdf_lt: mu must be >= 0");
  if (mu == 0.0) return 1.0;
  double lm = std::log(mu), sum = 0.0;
  for (long i = 0; i < k; ++i) sum += std::exp(-mu + static_cast<double>(i) * lm - std::lgamma(static_cast<double>(i) + 1.0));
  return std::min(1.0, sum);
}

// P[Pois(mu) >= k], summed directly when the tail is the small side.
inline double poisson_tail_ge(long k, double mu) {
  if (k <= 0) return 1.0;
  if (mu == 0.0) return 0.0;
  if (mu >= static_cast<double>(k)) return 1.0 - poisson_cdf_lt(k, mu);
  double lm = std::log(mu), sum = 0.0;
  for (long i = k;; ++i) {
    double term = std::exp(-mu + static_cast<double>(i) * lm - std::lgamma(static_cast<double>(i) + 1.0));
    sum += term;
    if (term < 1e-18 * sum || i > k + 2000) break;
  }
  return std::min(1.0, sum);
}

// Gamma(s, z) for integer s = (s-1)! e^{-z} sum_{k<s} z^k / k!.
inline double upper_incomplete_gamma_int(long s, double z) {
  if (s < 1) throw InvalidInput("upper_incomplete_gamma_int: s must be >= 1");
  if (z < 0.0) throw InvalidInput("upper_incomplete_gamma_int: z must be >= 0");
  return std::tgamma(static_cast<double>(s)) * poisson_cdf_lt(s, z);
}

// Integral over [0, Y] of e^{-d y} P[Pois(m y) < l] dy, as
// sum_{k<l} m^k / c^{k+1} P[Pois(c Y) >= k+1] with c = m + d.
inline double discounted_poisson_integral(double d, double m, long l, double Y) {
  double c = m + d;
  if (c <= 0.0) return Y;
  double sum = 0.0, ratio = 1.0;
  for (long k = 0; k < l; ++k) {
    sum += ratio * poisson_tail_ge(k + 1, c * Y);
    ratio *= m / c;
  }
  return sum / c;
}

struct WorstCaseParams {
  long ell = 2;
  double x1 = 0.0;
  double xN1 = 0.0;
  std::optional<double> x_i0;
};

inline std::vector<Violation> validate(const WorstCaseParams& w) {
  std::vector<Violation> out;
  if (w.ell < 2) out.push_back({"ell", "must be >= 2"});
  if (!(w.x1 >= 0.0 && w.x1 <= 1.0)) out.push_back({"x1", "out of [0,1]"});
  if (!(w.xN1 >= 0.0 && w.xN1 <= 1.0)) out.push_back({"xN1", "out of [0,1]"});
  if (w.x1 + w.xN1 > 1.0 + 1e-12) out.push_back({"x1+xN1", "exceeds 1"});
  if (w.x_i0 && !(*w.x_i0 >= 0.0 && *w.x_i0 <= 1.0)) out.push_back({"x_i0", "out of [0,1]"});
  return out;
}

// Integrand of the availability bound: e^{-y(l - x1)} sum_{k<l} (y x(N0))^k / k! on [0, (l-1)/x(N0)].
inline double availability_integrand(long l, double x1, double xN1, double y) {
  double m = static_cast<double>(l) - x1 - xN1;
  return std::exp(-y * xN1) * poisson_cdf_lt(l, m * y);
}

inline double F_ell(long l, double x1, double xN1) {
  auto viol = validate(WorstCaseParams{l, x1, xN1, std::nullopt});
  if (!viol.empty()) throw InvalidInput("F_ell: " + viol.front().path + " " + viol.front().message);
  double L = static_cast<double>(l);
  double m = L - x1 - xN1, c = L - x1, d = xN1;
  if (d < 1e-6)
    return integrate([&](double y) { return availability_integrand(l, x1, xN1, y); }, 0.0, (L - 1.0) / m, 1e-13);
  double top = 1.0 - poisson_cdf_lt(l, L - 1.0) * std::exp(-(L - 1.0) * d / m) -
               std::pow(m / c, L) * poisson_tail_ge(l, (L - 1.0) * c / m);
  return top / d;
}

inline double final_bound_mid(long l, double x1) {
  if (l < 2 || l > 119) throw InvalidInput("final_bound_mid: l must lie in [2,119]");
  if (!(x1 >= 0.0 && x1 <= 1.0)) throw InvalidInput("final_bound_mid: x1 out of [0,1]");
  return attenuation_b(x1) * discounted_poisson_integral(1.0 - x1, static_cast<double>(l - 1), l, 1.0);
}

inline double bennett_integrand(double x1, double y) {
  double decay = std::exp(-y * (1.0 - x1));
  if (y <= 0.0) return decay;
  double h = y - std::log(y) - 1.0;
  return -std::expm1(-120.0 * h) * decay;
}

inline double bennett_bound_large(double x1) {
  if (!(x1 >= 0.0 && x1 <= 1.0)) throw InvalidInput("bennett_bound_large: x1 out of [0,1]");
  return attenuation_b(x1) * integrate([&](double y) { return bennett_integrand(x1, y); }, 0.0, 1.0, 1e-12, 16);
}

// Exchange-argument integrands for patience 2.
inline double exchange_integrand(double x1, double xN1, double xi0, double y) {
  double s = 1.0 - xN1 - x1;
  double n0 = 2.0 - xN1 - x1 - xi0;
  if (xi0 > s) {
    double t1 = (std::exp(-y * xN1) - std::exp(-y * (1.0 - x1))) * (1.0 - y * n0);
    double t2 = (std::exp(-y * s) * (1.0 - y * (xi0 - s)) - (1.0 - y * xi0)) * y * n0 * std::exp(-y * (1.0 - x1 - xi0));
    return t1 - t2;
  }
  double t1 = std::exp(-y * xN1) * -std::expm1(-y * xi0) * (1.0 - y) * (1.0 - y * (s - xi0));
  double t2 = (std::exp(-y * xi0) - (1.0 - y * xi0)) * y * n0 * std::exp(-y * (1.0 - x1 - xi0));
  return t1 - t2;
}

inline double exchange_integral(double x1, double xN1, double xi0) {
  return integrate([&](double y) { return exchange_integrand(x1, xN1, xi0, y); }, 0.0, 1.0, 1e-11, 4);
}

// b-property integrand difference: (1 - y z b(z)) - (1 - y z b(z/2)/2)^2.
inline double b_property_f(double z, double y) {
  double bz = attenuation_b(z), bh = attenuation_b(z / 2.0);
  return y * z * (bh - bz) - y * y * z * z * bh * bh / 4.0;
}

inline double b_property_margin(double z) {
  double bz = attenuation_b(z), bh = attenuation_b(z / 2.0);
  return (z * bh - z * bz) / 2.0 - z * z * bh * bh / 12.0;
}

inline double b_property_root(double z) {
  double bz = attenuation_b(z), bh = attenuation_b(z / 2.0);
  return 4.0 * (bh - bz) / (z * bh * bh);
}

// ---------------------------------------------------------------------------
// Verification suites

struct VerificationReport {
  std::string suite;
  std::uint64_t points_checked = 0;
  double min_margin = std::numeric_limits<double>::infinity();
  std::vector<double> witness;
  bool pass = true;

  void observe(double margin, std::vector<double> where) {
    ++points_checked;
    if (margin < min_margin) min_margin = margin, witness = std::move(where);
  }
  void finish(double tol = 1e-9) { pass = pass && min_margin >= -tol; }
};

inline VerificationReport verify_b_properties(long N = 1000) {
  if (N < 1) throw InvalidInput("grid resolution must be >= 1");
  VerificationReport r;
  r.suite = "b";
  r.observe(1e-12 - std::abs(attenuation_b(0.0) - 1.0), {0.0});
  double prev = attenuation_b(0.0);
  for (long k = 0; k <= N; ++k) {
    double z = static_cast<double>(k) / static_cast<double>(N);
    double bz = attenuation_b(z);
    if (k > 0) r.observe(prev - bz, {z});
    prev = bz;
    r.observe(b_property_margin(z), {z});
    if (k == 0) continue;
    double root = b_property_root(z);
    r.observe(1e-12 - std::abs(b_property_f(z, root)), {z, root});
    for (int j = 1; j <= 200; ++j) {
      double y = j / 200.0;
      double f = b_property_f(z, y);
      r.observe(y <= root ? f + 1e-15 : -f + 1e-15, {z, y});
    }
  }
  r.finish();
  return r;
}

inline VerificationReport verify_exchange_l2(long N = 50) {
  if (N < 2) throw InvalidInput("grid resolution must be >= 2");
  VerificationReport r;
  r.suite = "exchange";
  const double h = 1.0 / static_cast<double>(N - 1);
  for (long i = 0; i < N; ++i)
    for (long j = 0; j < N; ++j) {
      double x1 = i * h, xN1 = j * h;
      if (x1 + xN1 > 1.0 + 1e-12) continue;
      xN1 = std::min(xN1, 1.0 - x1);
      for (long k = 0; k < N; ++k) {
        double xi0 = k * h;
        r.observe(exchange_integral(x1, xN1, xi0), {x1, xN1, xi0});
      }
    }
  r.finish();
  return r;
}

inline VerificationReport verify_fl_monotonicity(const std::vector<long>& ells = {3, 4, 5, 10, 50, 119}, long N = 100) {
  VerificationReport r;
  r.suite = "fl";
  for (long l : ells)
    for (long i = 0; i <= N; ++i) {
      double x1 = static_cast<double>(i) / static_cast<double>(N);
      double floor_value = F_ell(l, x1, 1.0 - x1);
      for (long j = 0; j < N - i; ++j) {
        double xN1 = static_cast<double>(j) / static_cast<double>(N);
        r.observe(F_ell(l, x1, xN1) - floor_value, {static_cast<double>(l), x1, xN1});
      }
    }
  r.finish();
  return r;
}

inline VerificationReport verify_final_bounds(long N = 1000) {
  VerificationReport r;
  r.suite = "final";
  const double beta = beta_two_sided();
  for (long l : {2L, 3L, 4L, 5L, 10L, 20L, 50L, 100L, 119L})
    for (long i = 0; i <= N; ++i) {
      double x1 = static_cast<double>(i) / static_cast<double>(N);
      r.observe(final_bound_mid(l, x1) - beta, {static_cast<double>(l), x1});
    }
  r.observe(1e-9 - std::abs(final_bound_mid(3, 0.0) - beta), {3.0, 0.0});
  r.finish();
  return r;
}

inline VerificationReport verify_bennett(long N = 1000) {
  VerificationReport r;
  r.suite = "bennett";
  const double beta = beta_two_sided();
  for (long i = 0; i <= N; ++i) {
    double x1 = static_cast<double>(i) / static_cast<double>(N);
    r.observe(bennett_bound_large(x1) - beta, {x1});
  }
  r.observe(bennett_bound_large(1.0) - (0.5803 - 1e-6), {1.0});
  r.finish();
  return r;
}

}  // namespace qcm
