#pragma once

// Closed-form bound evaluators. Universal constants are an explicit input C
// (default 1); an unknown R makes every bound that uses it +inf.

#include "specuniv/core.hpp"
#include "specuniv/params.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace specuniv {

struct BoundInputs {
  int d = 1;
  double sigma = 0.0;
  double sigma_star = 0.0;
  double v = 0.0;
  double r = 0.0;
  double third_moment_sum = 0.0;
  double C = 1.0;

  static BoundInputs from(const ParameterSet& p, double c = 1.0) {
    BoundInputs b;
    b.d = p.d;
    b.sigma = p.sigma.value;
    b.sigma_star = p.sigma_star.value;
    b.v = p.v.value;
    b.r = p.r_for_bounds();
    b.third_moment_sum = p.third_moment_sum.value;
    b.C = c;
    return b;
  }

  void check() const {
    if (!(C > 0.0)) throw std::invalid_argument("bounds: constant C must be positive");
    if (d < 1) throw std::invalid_argument("bounds: d must be >= 1");
    if (sigma < 0.0 || sigma_star < 0.0 || v < 0.0 || r < 0.0)
      throw std::invalid_argument("bounds: parameters must be nonnegative");
  }

  BoundInputs scaled(double s) const {
    BoundInputs b = *this;
    b.sigma *= s;
    b.sigma_star *= s;
    b.v *= s;
    b.r *= s;
    b.third_moment_sum *= s * s * s;
    return b;
  }
};

namespace detail {

/// x * y with 0 * inf = 0, so deterministic models give 0 even when R is unknown.
inline double mul0(double x, double y) { return (x == 0.0 || y == 0.0) ? 0.0 : x * y; }

inline void require_t(double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("bounds: t must be nonnegative");
}
inline void require_p(double p) {
  if (!(p >= 1.0)) throw std::invalid_argument("bounds: p must be >= 1");
}
inline void require_im(double im_z) {
  if (!(im_z > 0.0)) throw std::invalid_argument("bounds: Im z must be positive");
}

/// R^{1/3} sigma^{2/3}
inline double mixed(double r, double s) { return mul0(std::cbrt(r), std::pow(s, 2.0 / 3.0)); }

}  // namespace detail

/// C (sigma_* t^{1/2} + R^{1/3} sigma^{2/3} t^{2/3} + R t)
inline double eps_universality(const BoundInputs& in, double t) {
  in.check();
  detail::require_t(t);
  return in.C * (in.sigma_star * std::sqrt(t) + detail::mul0(detail::mixed(in.r, in.sigma), std::pow(t, 2.0 / 3.0)) +
                 detail::mul0(in.r, t));
}

inline double edge_expectation_bound(const BoundInputs& in) {
  return eps_universality(in, std::log(static_cast<double>(in.d)));
}

struct MomentParams {
  double sigma_q = 0.0;
  double r_q = 0.0;
};

inline void require_q(int p, double q) {
  detail::require_p(p);
  if (q < 2.0 * p) throw std::invalid_argument("bounds: need q >= 2p");
}

/// C (R_q^{1/3} sigma_q^{2/3} p^{2/3} + R_q p)
inline double moment_universality_bound(const MomentParams& m, int p, double q, double c = 1.0) {
  require_q(p, q);
  if (!(c > 0.0)) throw std::invalid_argument("bounds: constant C must be positive");
  return c * (detail::mul0(detail::mixed(m.r_q, m.sigma_q), std::pow(p, 2.0 / 3.0)) + detail::mul0(m.r_q, p));
}

/// C R_q p^2
inline double variant_montsm(const MomentParams& m, int p, double q, double c = 1.0) {
  require_q(p, q);
  return c * detail::mul0(m.r_q, static_cast<double>(p) * p);
}

/// C (kappa R'_q^{1/3} sigma_q^{2/3} p^{2/3} + kappa R'_q p)
inline double subexp_bound(double kappa, double r_q_prime, double sigma_q, int p, double c = 1.0) {
  detail::require_p(p);
  if (kappa < 0.0) throw std::invalid_argument("bounds: kappa must be nonnegative");
  return c * kappa *
         (detail::mul0(detail::mixed(r_q_prime, sigma_q), std::pow(p, 2.0 / 3.0)) + detail::mul0(r_q_prime, p));
}

/// C (R sigma^2 p^2 + R^3 p^3) / (Im z)^4
inline double resolvent_bound(const BoundInputs& in, int p, double im_z) {
  in.check();
  detail::require_p(p);
  detail::require_im(im_z);
  const double pp = p;
  return in.C * (detail::mul0(in.r, in.sigma * in.sigma * pp * pp) + detail::mul0(in.r, in.r * in.r * pp * pp * pp)) /
         std::pow(im_z, 4);
}

/// C sum_i E tr|Z_i|^3 / (Im z)^4
inline double stieltjes_bound(const BoundInputs& in, double im_z) {
  in.check();
  detail::require_im(im_z);
  if (!(in.third_moment_sum >= 0.0)) throw std::invalid_argument("stieltjes_bound: third-moment sum unavailable");
  return in.C * in.third_moment_sum / std::pow(im_z, 4);
}

enum class SobolevKind { W51, W61 };

/// W51: C ||phi|| sum E tr|Z_i|^3.  W61: C (v^2 + R) sigma^2 ||f||.
inline double smooth_stat_bound(const BoundInputs& in, double sobolev_norm, SobolevKind which) {
  in.check();
  if (sobolev_norm < 0.0) throw std::invalid_argument("smooth_stat_bound: norm must be nonnegative");
  if (which == SobolevKind::W51) return in.C * detail::mul0(sobolev_norm, in.third_moment_sum);
  return in.C * detail::mul0(in.v * in.v + in.r, in.sigma * in.sigma * sobolev_norm);
}

/// C v^{1/2} sigma^{1/2} (log d)^{3/4} + eps(t)
inline double sharp_concentration_bound(const BoundInputs& in, double t) {
  const double ld = std::log(static_cast<double>(in.d));
  return in.C * std::sqrt(in.v * in.sigma) * std::pow(ld, 0.75) + eps_universality(in, t);
}

/// C (v^{1/2} sigma^{1/2} p^{3/4} + R^{1/3} sigma^{2/3} p^{2/3} + R p)
inline double ssconc_moment_bound(const BoundInputs& in, int p) {
  in.check();
  detail::require_p(p);
  return in.C * (std::sqrt(in.v * in.sigma) * std::pow(p, 0.75) +
                 detail::mul0(detail::mixed(in.r, in.sigma), std::pow(p, 2.0 / 3.0)) + detail::mul0(in.r, p));
}

/// C (v^2 sigma^2 p^3 / (Im z)^5 + (R sigma^2 p^2 + R^3 p^3) / (Im z)^4)
inline double ssconc_resolvent_bound(const BoundInputs& in, int p, double im_z) {
  in.check();
  detail::require_p(p);
  detail::require_im(im_z);
  const double pp = p;
  return in.C * in.v * in.v * in.sigma * in.sigma * pp * pp * pp / std::pow(im_z, 5) + resolvent_bound(in, p, im_z);
}

struct ClassicalBounds {
  double khintchine = 0.0;
  double bernstein = 0.0;
  /// +inf unless a free-model edge was supplied.
  double bbv = kInf;
  std::optional<double> rosenthal;
};

/// Each bound carries the same constant C. `free_edge` is the leading
/// ||X_free|| term of the BBV bound; `rosenthal` needs (sigma_2p, R_2p).
inline ClassicalBounds classical_bounds(const BoundInputs& in, std::optional<double> free_edge = std::nullopt,
                                        std::optional<MomentParams> m2p = std::nullopt, int p = 1) {
  in.check();
  const double ld = std::log(static_cast<double>(in.d));
  ClassicalBounds b;
  b.khintchine = in.C * in.sigma * std::sqrt(ld);
  b.bernstein = b.khintchine + in.C * detail::mul0(in.r, ld);
  if (free_edge) b.bbv = *free_edge + in.C * std::sqrt(in.sigma * in.v) * std::pow(ld, 0.75);
  if (m2p) {
    detail::require_p(p);
    b.rosenthal = in.C * (m2p->sigma_q * std::sqrt(static_cast<double>(p)) + detail::mul0(m2p->r_q, p));
  }
  return b;
}

// ---------------------------------------------------------------------------
// Sample covariance

/// C (sigma_*(Y) L^{1/2} + R(Y)^{1/3} sigma(Y)^{2/3} L^{2/3} + R(Y) L), L = log(d + n)
inline double wishart_delta(const RectParameters& y, int d, int n, double c = 1.0) {
  if (d < 1 || n < 1) throw std::invalid_argument("wishart_delta: d, n must be positive");
  BoundInputs in;
  in.d = d + n;
  in.sigma = y.sigma;
  in.sigma_star = y.sigma_star;
  in.r = y.r;
  in.C = c;
  return edge_expectation_bound(in);
}

/// C (delta E||H|| + delta^2) with delta taken at constant 1.
inline double wishart_gap_bound(const RectParameters& y, int d, int n, double e_norm_h, double c = 1.0) {
  const double delta = wishart_delta(y, d, n);
  return c * (detail::mul0(delta, e_norm_h) + delta * delta);
}

// ---------------------------------------------------------------------------
// Sparse Wigner thresholds

enum class SparseRegime { finite_p, subgauss_beta, rate_p };

inline std::string to_string(SparseRegime r) {
  switch (r) {
    case SparseRegime::finite_p: return "finite_p";
    case SparseRegime::subgauss_beta: return "subgauss_beta";
    case SparseRegime::rate_p: return "rate_p";
  }
  return "?";
}

/// finite_p: c d^{4/p} (log d)^4, p > 4.  subgauss_beta: c (log d)^{4+2 beta}.
/// rate_p: c d^{2/(p-2)} (log d)^{4p/(p-2)}, p > 2 (p = inf allowed).
inline double sparse_thresholds(double d, SparseRegime regime, double param, double c = 1.0) {
  if (!(d > 1.0)) throw std::invalid_argument("sparse_thresholds: need d > 1");
  const double ld = std::log(d);
  switch (regime) {
    case SparseRegime::finite_p:
      if (!(param > 4.0)) throw std::invalid_argument("sparse_thresholds: finite_p needs p > 4");
      return c * std::pow(d, 4.0 / param) * std::pow(ld, 4.0);
    case SparseRegime::subgauss_beta:
      if (!(param >= 0.0)) throw std::invalid_argument("sparse_thresholds: beta must be >= 0");
      return c * std::pow(ld, 4.0 + 2.0 * param);
    case SparseRegime::rate_p:
      if (!(param > 2.0)) throw std::invalid_argument("sparse_thresholds: rate_p needs p > 2");
      if (std::isinf(param)) return c * std::pow(ld, 4.0);
      return c * std::pow(d, 2.0 / (param - 2.0)) * std::pow(ld, 4.0 * param / (param - 2.0));
  }
  return kInf;
}

/// Heavy-tail lower-bound level k^{1/p - 1/2} d^{1/p} / log d.
inline double heavy_tail_threshold(double d, double k, double p) {
  if (!(d > 1.0 && k >= 1.0 && p > 0.0)) throw std::invalid_argument("heavy_tail_threshold: bad arguments");
  return std::pow(k, 1.0 / p - 0.5) * std::pow(d, 1.0 / p) / std::log(d);
}

}  // namespace specuniv
