#pragma once

// Centered scalar laws used for series coefficients and matrix entries.

#include "specuniv/core.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace specuniv {

struct Atom {
  double prob = 0.0;
  double value = 0.0;
};

enum class LawKind { rademacher, gaussian, uniform, two_point, pareto_tail, finite };

inline std::string to_string(LawKind k) {
  switch (k) {
    case LawKind::rademacher: return "rademacher";
    case LawKind::gaussian: return "gaussian";
    case LawKind::uniform: return "uniform";
    case LawKind::two_point: return "two_point";
    case LawKind::pareto_tail: return "pareto_tail";
    case LawKind::finite: return "finite";
  }
  return "?";
}

namespace detail {

// E[|eta0|^k 1{|eta0|>e}] for P[|eta0|>x] = (x log x)^{-p}, x >= e, written
// in u = log x: e^k e^{-p} + int_1^inf k e^{(k-p)u} u^{-p} du.
inline double pareto_tail_moment(double p, int k) {
  if (k > p) return kInf;
  const double head = std::exp(static_cast<double>(k) - p);
  if (k == 0) return head;
  // Substitution u = 1/s maps [1, inf) to (0, 1]; integrand k e^{(k-p)/s} s^{p-2}.
  const int n = 200000;
  const double h = 1.0 / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double s = i * h;
    double f = 0.0;
    if (s > 0.0) f = k * std::exp((k - p) / s) * std::pow(s, p - 2.0);
    acc += (i == 0 || i == n) ? 0.5 * f : f;
  }
  return head + acc * h;
}

}  // namespace detail

/// A centered real law. Unit variance except `finite`, which is taken as
/// given (must be centered).
class ScalarLaw {
 public:
  static ScalarLaw rademacher() { return ScalarLaw(LawKind::rademacher); }
  static ScalarLaw gaussian() { return ScalarLaw(LawKind::gaussian); }
  /// Uniform on [-sqrt3, sqrt3].
  static ScalarLaw uniform() { return ScalarLaw(LawKind::uniform); }
  /// Centered standardized Bernoulli(q): (1-q)/s w.p. q, -q/s w.p. 1-q, s = sqrt(q(1-q)).
  static ScalarLaw two_point(double q) {
    if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("two_point: parameter must lie in (0,1)");
    ScalarLaw l(LawKind::two_point);
    l.param_ = q;
    const double s = std::sqrt(q * (1.0 - q));
    l.atoms_ = {{q, (1.0 - q) / s}, {1.0 - q, -q / s}};
    return l;
  }
  /// Symmetric law with P[|eta0| > x] = (x log x)^{-p} for x >= e and
  /// |eta0| = 1 otherwise, rescaled to unit variance.
  static ScalarLaw pareto_tail(double p) {
    if (!(p > 2.0)) throw std::invalid_argument("pareto_tail: need p > 2 for finite variance");
    ScalarLaw l(LawKind::pareto_tail);
    l.param_ = p;
    const double var0 = (1.0 - std::exp(-p)) + detail::pareto_tail_moment(p, 2);
    l.scale_ = 1.0 / std::sqrt(var0);
    return l;
  }
  static ScalarLaw finite(std::vector<Atom> atoms) {
    double total = 0.0, mean = 0.0;
    for (const auto& a : atoms) {
      if (a.prob < 0.0) throw std::invalid_argument("finite law: negative probability");
      total += a.prob;
      mean += a.prob * a.value;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("finite law: probabilities must sum to 1");
    if (std::abs(mean) > 1e-12) throw std::invalid_argument("finite law: must be centered");
    ScalarLaw l(LawKind::finite);
    l.atoms_ = std::move(atoms);
    return l;
  }

  LawKind kind() const noexcept { return kind_; }
  double parameter() const noexcept { return param_; }
  const std::vector<Atom>& atoms_list() const noexcept { return atoms_; }

  template <class Rng>
  double sample(Rng& rng) const {
    switch (kind_) {
      case LawKind::rademacher: return (rng() >> 63) ? 1.0 : -1.0;
      case LawKind::gaussian: {
        std::normal_distribution<double> nd(0.0, 1.0);
        return nd(rng);
      }
      case LawKind::uniform: {
        std::uniform_real_distribution<double> ud(-std::sqrt(3.0), std::sqrt(3.0));
        return ud(rng);
      }
      case LawKind::two_point:
      case LawKind::finite: {
        std::uniform_real_distribution<double> ud(0.0, 1.0);
        double u = ud(rng);
        for (const auto& a : atoms_) {
          if (u < a.prob) return a.value;
          u -= a.prob;
        }
        return atoms_.back().value;
      }
      case LawKind::pareto_tail: {
        std::uniform_real_distribution<double> ud(0.0, 1.0);
        const double sign = (rng() >> 63) ? 1.0 : -1.0;
        const double u = 1.0 - ud(rng);  // (0, 1]
        double x = 1.0;
        if (u < std::exp(-param_)) {
          // solve x log x = u^{-1/p}, x >= e
          const double y = std::pow(u, -1.0 / param_);
          x = std::max(std::numbers::e, y / std::log(y));
          for (int it = 0; it < 60; ++it) {
            const double g = x * std::log(x) - y;
            const double step = g / (std::log(x) + 1.0);
            x -= step;
            if (std::abs(step) <= 1e-15 * x) break;
          }
        }
        return sign * x * scale_;
      }
    }
    return 0.0;
  }

  double variance() const { return moment(2); }

  /// E[eta^k]; +inf when the moment does not exist.
  double moment(int k) const {
    switch (kind_) {
      case LawKind::rademacher: return (k % 2 == 0) ? 1.0 : 0.0;
      case LawKind::gaussian: {
        if (k % 2 == 1) return 0.0;
        double m = 1.0;
        for (int j = k - 1; j > 0; j -= 2) m *= j;
        return m;
      }
      case LawKind::uniform:
        return (k % 2 == 1) ? 0.0 : std::pow(3.0, k / 2.0) / (k + 1.0);
      case LawKind::two_point:
      case LawKind::finite: {
        double m = 0.0;
        for (const auto& a : atoms_) m += a.prob * std::pow(a.value, k);
        return m;
      }
      case LawKind::pareto_tail: {
        if (k % 2 == 1) return 0.0;
        const double raw = (1.0 - std::exp(-param_)) + detail::pareto_tail_moment(param_, k);
        return raw * std::pow(scale_, k);
      }
    }
    return 0.0;
  }

  /// E|eta|^q for real q >= 0, when available in closed form.
  std::optional<double> abs_moment(double q) const {
    switch (kind_) {
      case LawKind::rademacher: return 1.0;
      case LawKind::gaussian:
        return std::pow(2.0, q / 2.0) * std::tgamma((q + 1.0) / 2.0) / std::sqrt(std::numbers::pi);
      case LawKind::uniform: return std::pow(3.0, q / 2.0) / (q + 1.0);
      case LawKind::two_point:
      case LawKind::finite: {
        double m = 0.0;
        for (const auto& a : atoms_) m += a.prob * std::pow(std::abs(a.value), q);
        return m;
      }
      case LawKind::pareto_tail: {
        const double k = std::round(q);
        if (std::abs(k - q) > 1e-12) return std::nullopt;
        const double raw = (1.0 - std::exp(-param_)) + detail::pareto_tail_moment(param_, static_cast<int>(k));
        return raw * std::pow(scale_, q);
      }
    }
    return std::nullopt;
  }

  /// Essential supremum of |eta|, if finite.
  std::optional<double> bound() const {
    switch (kind_) {
      case LawKind::rademacher: return 1.0;
      case LawKind::uniform: return std::sqrt(3.0);
      case LawKind::two_point:
      case LawKind::finite: {
        double b = 0.0;
        for (const auto& a : atoms_)
          if (a.prob > 0.0) b = std::max(b, std::abs(a.value));
        return b;
      }
      default: return std::nullopt;
    }
  }

  /// Finite support, when the law has one.
  std::optional<std::vector<Atom>> support() const {
    switch (kind_) {
      case LawKind::rademacher: return std::vector<Atom>{{0.5, 1.0}, {0.5, -1.0}};
      case LawKind::two_point:
      case LawKind::finite: return atoms_;
      default: return std::nullopt;
    }
  }

  /// Rescaling applied to the raw pareto_tail variable (1 otherwise).
  double standardization() const noexcept { return scale_; }

 private:
  explicit ScalarLaw(LawKind k) : kind_(k) {}

  LawKind kind_;
  double param_ = 0.0;
  double scale_ = 1.0;
  std::vector<Atom> atoms_;
};

}  // namespace specuniv
