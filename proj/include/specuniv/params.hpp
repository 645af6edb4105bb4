#pragma once

// Scalar matrix parameters sigma, sigma_*, v, R, sigma_q, R_q and the
// third-moment sum. All `tr` quantities use the normalized trace Tr/d.

#include "specuniv/core.hpp"
#include "specuniv/linalg.hpp"
#include "specuniv/model.hpp"

#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace specuniv {

enum class Provenance { exact, empirical, declared, unavailable };

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::exact: return "exact";
    case Provenance::empirical: return "empirical";
    case Provenance::declared: return "declared";
    case Provenance::unavailable: return "unavailable";
  }
  return "?";
}

struct ParamValue {
  double value = 0.0;
  Provenance provenance = Provenance::exact;
  double stderr_ = 0.0;
  /// Empirical R is only a lower estimate of an essential supremum.
  bool lower_estimate = false;
  std::string note;
};

struct ParameterSet {
  int d = 0;
  ParamValue sigma;
  ParamValue sigma_star;
  ParamValue v;
  ParamValue r;
  ParamValue third_moment_sum;
  std::map<double, ParamValue> sigma_q;
  std::map<double, ParamValue> r_q;

  /// R to feed into bound formulas: +inf unless declared or exact.
  double r_for_bounds() const {
    if (r.provenance == Provenance::declared || r.provenance == Provenance::exact) return r.value;
    return kInf;
  }
};

struct Estimate {
  double value = 0.0;
  double stderr_ = 0.0;
};

/// Jackknife over `groups` contiguous blocks of per-sample contributions
/// (`stat` maps a block-sum vector mean to a scalar).
template <class Stat>
Estimate grouped_jackknife(const std::vector<CMatrix>& block_sums, std::size_t total, Stat&& stat) {
  const std::size_t g = block_sums.size();
  CMatrix all = block_sums.front();
  for (std::size_t i = 1; i < g; ++i) all += block_sums[i];
  Estimate e;
  e.value = stat(CMatrix(all / static_cast<double>(total)));
  if (g < 2) return e;
  const double per = static_cast<double>(total) / g;
  std::vector<double> loo(g);
  for (std::size_t i = 0; i < g; ++i) loo[i] = stat(CMatrix((all - block_sums[i]) / (total - per)));
  const double mean = std::accumulate(loo.begin(), loo.end(), 0.0) / g;
  double ss = 0.0;
  for (double x : loo) ss += (x - mean) * (x - mean);
  e.stderr_ = std::sqrt((g - 1.0) / g * ss);
  return e;
}

// ---------------------------------------------------------------------------
// sigma

/// sum_i E Z_i^2 from oracles; nullopt if some summand has none.
inline std::optional<CMatrix> second_moment_sum(const MatrixModel& m) {
  CMatrix acc = CMatrix::Zero(m.dim, m.dim);
  for (const auto& z : m.summands) {
    auto s = z.second_moment();
    if (!s) return std::nullopt;
    s->add_to(acc, 1.0);
  }
  return acc;
}

/// ||sum_i E Z_i^2||^{1/2}
inline double sigma(const MatrixModel& m) {
  const auto s = second_moment_sum(m);
  if (!s) throw std::invalid_argument("sigma: summand without second-moment oracle (use sigma_empirical)");
  return std::sqrt(std::max(0.0, herm_norm(*s)));
}

inline Estimate sigma_empirical(const MatrixModel& m, std::size_t samples, std::uint64_t seed, int threads = 1,
                                std::size_t groups = 20) {
  if (samples < 2) throw std::invalid_argument("sigma_empirical: need at least 2 samples");
  groups = std::min(groups, samples);
  std::vector<CMatrix> sq(samples);
  parallel_for(samples, threads, [&](std::size_t s) {
    const CMatrix dx = sample_centered(m, derive_seed(seed, s));
    sq[s] = dx * dx;
  });
  std::vector<CMatrix> blocks(groups, CMatrix::Zero(m.dim, m.dim));
  for (std::size_t s = 0; s < samples; ++s) blocks[s * groups / samples] += sq[s];
  return grouped_jackknife(blocks, samples, [](const CMatrix& mean) { return std::sqrt(herm_norm(mean)); });
}

// ---------------------------------------------------------------------------
// sigma_*

struct SigmaStarOptions {
  int restarts = 16;
  double tol = 1e-10;
  int max_iter = 500;
  std::uint64_t seed = 0x5157A8;
  /// Above this max(rows, cols) the large_* settings apply; the landscape is
  /// flat there and dense power steps dominate the cost.
  int large_dim = 128;
  int large_restarts = 2;
  double large_tol = 1e-7;
};

struct SigmaStarResult {
  double value = 0.0;
  bool converged = false;
  /// Every restart's objective sequence was nondecreasing.
  bool monotone = true;
  int iterations = 0;
};

namespace detail {

/// Top eigenvector of the PSD matrix sum_j u_j u_j^*; power iteration warm
/// started at `start` for large sizes (keeps the Rayleigh quotient monotone).
inline CVector top_vector_psd(const CMatrix& m, const CVector& start, double rel_tol = 1e-13) {
  if (m.rows() <= 48) return top_eigenpair(m).vector;
  CVector x = start.normalized();
  double prev = (x.adjoint() * m * x)(0).real();
  for (int it = 0; it < 300; ++it) {
    CVector y = m * x;
    const double ny = y.norm();
    if (ny == 0.0) return x;
    x = y / ny;
    const double r = (x.adjoint() * m * x)(0).real();
    if (r - prev <= rel_tol * std::max(r, 1e-300)) break;
    prev = r;
  }
  return x;
}

inline CVector random_unit(int n, SplitMix64& rng) {
  std::normal_distribution<double> nd;
  CVector x(n);
  for (int i = 0; i < n; ++i) x(i) = cplx(nd(rng), nd(rng));
  return x.normalized();
}

}  // namespace detail

/// Alternating maximization of sum_j |v^* B_j w|^2 over unit v, w. The
/// returned value is achieved by explicit vectors, so it is a lower bound on
/// sigma_*.
inline SigmaStarResult sigma_star_factors(const std::vector<RectTerm>& factors, int rows, int cols,
                                          const SigmaStarOptions& opt = {}) {
  SigmaStarResult best;
  if (factors.empty()) {
    best.converged = true;
    return best;
  }
  auto objective = [&](const CVector& v, const CVector& w) {
    double acc = 0.0;
    for (const auto& f : factors) {
      cplx s{};
      for (const auto& e : f.entries) s += std::conj(v(e.row)) * e.value * w(e.col);
      acc += std::norm(s);
    }
    return acc;
  };
  // M_w = sum_j (B_j w)(B_j w)^*, N_v = sum_j (B_j^* v)(B_j^* v)^*
  auto left_gram = [&](const CVector& w) {
    CMatrix m = CMatrix::Zero(rows, rows);
    std::vector<std::pair<int, cplx>> u;
    for (const auto& f : factors) {
      u.clear();
      for (const auto& e : f.entries) u.emplace_back(e.row, e.value * w(e.col));
      for (const auto& [i, a] : u)
        for (const auto& [j, b] : u) m(i, j) += a * std::conj(b);
    }
    return m;
  };
  auto right_gram = [&](const CVector& v) {
    CMatrix m = CMatrix::Zero(cols, cols);
    std::vector<std::pair<int, cplx>> u;
    for (const auto& f : factors) {
      u.clear();
      for (const auto& e : f.entries) u.emplace_back(e.col, std::conj(e.value) * v(e.row));
      for (const auto& [i, a] : u)
        for (const auto& [j, b] : u) m(i, j) += a * std::conj(b);
    }
    return m;
  };

  const bool large = std::max(rows, cols) > opt.large_dim;
  const int restarts = std::max(large ? std::min(opt.restarts, opt.large_restarts) : opt.restarts, 1);
  const double tol = large ? std::max(opt.tol, opt.large_tol) : opt.tol;
  const double power_tol = large ? 1e-3 * tol : 1e-13;
  best.value = -1.0;
  for (int r = 0; r < restarts; ++r) {
    SplitMix64 rng(derive_seed(opt.seed, static_cast<std::uint64_t>(r)));
    CVector w = detail::random_unit(cols, rng);
    CVector v = detail::random_unit(rows, rng);
    v = detail::top_vector_psd(left_gram(w), v, power_tol);
    double val = objective(v, w);
    bool conv = false;
    int it = 0;
    for (; it < opt.max_iter; ++it) {
      w = detail::top_vector_psd(right_gram(v), w, power_tol);
      v = detail::top_vector_psd(left_gram(w), v, power_tol);
      const double next = objective(v, w);
      if (next < val - 1e-12 * std::max(val, 1e-300)) best.monotone = false;
      const bool small = next - val <= tol * std::max(next, 1e-300);
      val = std::max(val, next);
      if (small) {
        conv = true;
        break;
      }
    }
    best.iterations += it;
    if (val > best.value) {
      best.value = val;
      best.converged = conv;
    }
  }
  best.value = std::sqrt(std::max(best.value, 0.0));
  return best;
}

inline std::vector<RectTerm> as_rect_terms(const std::vector<SparseHerm>& factors) {
  std::vector<RectTerm> out;
  out.reserve(factors.size());
  for (const auto& f : factors) out.push_back({f.dim, f.dim, f.entries});
  return out;
}

inline SigmaStarResult sigma_star(const MatrixModel& m, const SigmaStarOptions& opt = {}) {
  const auto factors = all_covariance_factors(m);
  return sigma_star_factors(as_rect_terms(factors), m.dim, m.dim, opt);
}

// ---------------------------------------------------------------------------
// v

namespace detail {

/// Sparse Hermitian-basis coordinates of a sparse Hermitian term.
inline std::vector<std::pair<std::int64_t, double>> sparse_coordinates(const SparseHerm& s) {
  const std::int64_t d = s.dim;
  std::map<std::int64_t, double> acc;
  const double r2 = std::sqrt(2.0);
  auto pair_index = [d](std::int64_t i, std::int64_t j) {
    // position of the (i,j), i<j symmetric coordinate in the basis ordering
    const std::int64_t before = i * d - i * (i + 1) / 2;  // pairs with first index < i
    return d + 2 * (before + (j - i - 1));
  };
  for (const auto& e : s.entries) {
    if (e.row == e.col) {
      acc[e.row] += e.value.real();
    } else if (e.row < e.col) {
      const auto p = pair_index(e.row, e.col);
      acc[p] += r2 * e.value.real();
      acc[p + 1] += r2 * e.value.imag();
    }
  }
  return {acc.begin(), acc.end()};
}

}  // namespace detail

namespace detail {

using SparseCoords = std::vector<std::pair<std::int64_t, double>>;

inline double sparse_dot(const SparseCoords& a, const SparseCoords& b) {
  double acc = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first < b[j].first) {
      ++i;
    } else if (b[j].first < a[i].first) {
      ++j;
    } else {
      acc += a[i++].second * b[j++].second;
    }
  }
  return acc;
}

/// sqrt(lambda_max) of the Gram matrix <b_j, b_k>: dense for few vectors,
/// power iteration on sum_j b_j b_j^T in R^n otherwise.
inline double gram_top_sqrt(const std::vector<SparseCoords>& coords, std::int64_t n) {
  const std::size_t m = coords.size();
  if (m == 0) return 0.0;
  if (m <= 2000) {
    RMatrix gram(m, m);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = j; k < m; ++k) gram(j, k) = gram(k, j) = sparse_dot(coords[j], coords[k]);
    Eigen::SelfAdjointEigenSolver<RMatrix> es(gram, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
  }
  RVector x = RVector::Ones(n).normalized();
  double lam = 0.0;
  for (int it = 0; it < 1000; ++it) {
    RVector y = RVector::Zero(n);
    for (const auto& c : coords) {
      double dot = 0.0;
      for (const auto& [i, b] : c) dot += b * x(i);
      for (const auto& [i, b] : c) y(i) += b * dot;
    }
    const double next = x.dot(y);
    const double ny = y.norm();
    if (ny == 0.0) return 0.0;
    x = y / ny;
    const bool done = std::abs(next - lam) <= 1e-13 * next;
    lam = next;
    if (done) break;
  }
  return std::sqrt(std::max(lam, 0.0));
}

/// Real coordinates (Re, Im per entry) of a rectangular term.
inline SparseCoords rect_coordinates(const RectTerm& t) {
  std::map<std::int64_t, double> acc;
  for (const auto& e : t.entries) {
    const std::int64_t base = 2 * (static_cast<std::int64_t>(e.col) * t.rows + e.row);
    acc[base] += e.value.real();
    acc[base + 1] += e.value.imag();
  }
  return {acc.begin(), acc.end()};
}

}  // namespace detail

/// sqrt(lambda_max) of the Gram matrix Tr(B_j B_k) of the covariance factors.
inline double v_param_factors(const std::vector<SparseHerm>& factors, int d) {
  std::vector<detail::SparseCoords> coords;
  coords.reserve(factors.size());
  for (const auto& f : factors) coords.push_back(detail::sparse_coordinates(f));
  return detail::gram_top_sqrt(coords, static_cast<std::int64_t>(d) * d);
}

inline double v_param(const MatrixModel& m) { return v_param_factors(all_covariance_factors(m), m.dim); }

// ---------------------------------------------------------------------------
// R

/// max_i of the declared essential bounds.
inline double r_declared(const MatrixModel& m) {
  double r = 0.0;
  for (std::size_t i = 0; i < m.summands.size(); ++i) {
    const auto b = m.summands[i].r_bound();
    if (!b) throw std::invalid_argument("r_param: summand " + std::to_string(i) + " has no declared bound");
    r = std::max(r, *b);
  }
  return r;
}

/// Observed max_i ||Z_i|| over draws; a lower estimate of R only.
inline double r_empirical(const MatrixModel& m, std::size_t samples, std::uint64_t seed) {
  double r = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const auto base = derive_seed(seed, s);
    for (std::size_t i = 0; i < m.summands.size(); ++i)
      r = std::max(r, herm_norm(m.summands[i].draw(derive_seed(base, i))));
  }
  return r;
}

// ---------------------------------------------------------------------------
// sigma_q, R_q, third-moment sum

/// (tr (sum E Z_i^2)^{q/2})^{1/q}; q = inf gives sigma.
inline double sigma_q(const MatrixModel& m, double q) {
  if (q < 2.0) throw std::invalid_argument("sigma_q: need q >= 2");
  if (std::isinf(q)) return sigma(m);
  const auto s = second_moment_sum(m);
  if (!s) throw std::invalid_argument("sigma_q: summand without second-moment oracle");
  double acc = 0.0;
  for (double e : eigvalsh(*s)) acc += std::pow(std::max(e, 0.0), q / 2.0);
  return std::pow(acc / m.dim, 1.0 / q);
}

/// E tr |Z|^q for one summand: closed form in coefficient form, enumeration
/// for finite support, Monte Carlo otherwise (provenance reported).
inline ParamValue summand_abs_trace_moment(const SummandSpec& z, double q, std::size_t mc_samples,
                                           std::uint64_t seed) {
  const double d = z.dim();
  if (z.is_scalar_times()) {
    if (const auto am = z.law()->abs_moment(q)) return {*am * trace_abs_power(z.base(), q) / d};
  }
  if (const auto sup = z.support()) {
    double acc = 0.0;
    for (const auto& a : *sup) acc += a.prob * trace_abs_power(a.matrix, q);
    return {acc / d};
  }
  if (mc_samples == 0) return {kInf, Provenance::unavailable};
  double acc = 0.0, acc2 = 0.0;
  for (std::size_t s = 0; s < mc_samples; ++s) {
    const double x = trace_abs_power(z.draw(derive_seed(seed, s)), q) / d;
    acc += x;
    acc2 += x * x;
  }
  const double mean = acc / mc_samples;
  const double var = std::max(0.0, acc2 / mc_samples - mean * mean);
  return {mean, Provenance::empirical, std::sqrt(var / mc_samples)};
}

/// sum_i E tr |Z_i|^q with merged provenance.
inline ParamValue abs_trace_moment_sum(const MatrixModel& m, double q, std::size_t mc_samples = 0,
                                       std::uint64_t seed = 0) {
  ParamValue out{0.0, Provenance::exact, 0.0};
  double var = 0.0;
  for (std::size_t i = 0; i < m.summands.size(); ++i) {
    const auto p = summand_abs_trace_moment(m.summands[i], q, mc_samples, derive_seed(seed, i));
    if (p.provenance == Provenance::unavailable) return p;
    if (p.provenance == Provenance::empirical) out.provenance = Provenance::empirical;
    out.value += p.value;
    var += p.stderr_ * p.stderr_;
  }
  out.stderr_ = std::sqrt(var);
  return out;
}

/// (sum_i E tr |Z_i|^q)^{1/q}; q = inf gives the declared R.
inline ParamValue r_q(const MatrixModel& m, double q, std::size_t mc_samples = 0, std::uint64_t seed = 0) {
  if (q < 2.0) throw std::invalid_argument("r_q: need q >= 2");
  if (std::isinf(q)) return {r_declared(m), Provenance::declared};
  auto s = abs_trace_moment_sum(m, q, mc_samples, seed);
  if (s.provenance == Provenance::unavailable) return s;
  const double v = std::pow(s.value, 1.0 / q);
  // delta method
  s.stderr_ = s.value > 0.0 ? v * s.stderr_ / (q * s.value) : 0.0;
  s.value = v;
  return s;
}

/// sum_i E tr |Z_i|^3
inline ParamValue third_moment_sum(const MatrixModel& m, std::size_t mc_samples = 0, std::uint64_t seed = 0) {
  return abs_trace_moment_sum(m, 3.0, mc_samples, seed);
}

// ---------------------------------------------------------------------------
// Aggregate

struct ParamOptions {
  SigmaStarOptions sigma_star;
  std::vector<double> q_values;
  /// 0 disables Monte Carlo fallbacks.
  std::size_t empirical_samples = 0;
  std::uint64_t seed = 0;
  int threads = 1;
  bool compute_v = true;
};

inline ParameterSet compute_parameters(const MatrixModel& m, const ParamOptions& opt = {}) {
  ParameterSet p;
  p.d = m.dim;
  if (const auto s = second_moment_sum(m)) {
    p.sigma = {std::sqrt(std::max(0.0, herm_norm(*s))), Provenance::exact};
  } else if (opt.empirical_samples > 1) {
    const auto e = sigma_empirical(m, opt.empirical_samples, derive_seed(opt.seed, 1), opt.threads);
    p.sigma = {e.value, Provenance::empirical, e.stderr_};
  } else {
    p.sigma = {kInf, Provenance::unavailable};
  }

  bool have_cov = true;
  std::vector<SparseHerm> factors;
  try {
    factors = all_covariance_factors(m);
  } catch (const std::invalid_argument&) {
    have_cov = false;
  }
  if (have_cov) {
    const auto ss = sigma_star_factors(as_rect_terms(factors), m.dim, m.dim, opt.sigma_star);
    p.sigma_star = {ss.value, Provenance::exact};
    p.sigma_star.lower_estimate = true;
    if (!ss.converged) p.sigma_star.note = "alternating iteration did not reach tolerance";
    if (opt.compute_v) {
      p.v = {v_param_factors(factors, m.dim), Provenance::exact};
    } else {
      p.v = {kInf, Provenance::unavailable};
    }
  } else {
    p.sigma_star = {kInf, Provenance::unavailable};
    p.v = {kInf, Provenance::unavailable};
  }

  try {
    p.r = {r_declared(m), Provenance::declared};
  } catch (const std::invalid_argument&) {
    if (opt.empirical_samples > 0) {
      p.r = {r_empirical(m, std::min<std::size_t>(opt.empirical_samples, 100), derive_seed(opt.seed, 2)),
             Provenance::empirical};
      p.r.lower_estimate = true;
      p.r.note = "observed maximum; lower estimate of the essential supremum";
    } else {
      p.r = {kInf, Provenance::unavailable};
    }
  }

  p.third_moment_sum = third_moment_sum(m, opt.empirical_samples, derive_seed(opt.seed, 3));
  for (double q : opt.q_values) {
    try {
      p.sigma_q[q] = {sigma_q(m, q), Provenance::exact};
    } catch (const std::invalid_argument&) {
      p.sigma_q[q] = {kInf, Provenance::unavailable};
    }
    try {
      p.r_q[q] = r_q(m, q, opt.empirical_samples, derive_seed(opt.seed, 4));
    } catch (const std::invalid_argument&) {
      p.r_q[q] = {kInf, Provenance::unavailable};
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Rectangular parameters (non-self-adjoint conventions)

struct RectParameters {
  int rows = 0;
  int cols = 0;
  double sigma = 0.0;  // max of the two one-sided second moments, square-rooted
  double sigma_star = 0.0;
  double v = 0.0;
  double r = kInf;
};

inline RectParameters rectangular_parameters(const RectangularModel& y, const SigmaStarOptions& opt = {}) {
  RectParameters p;
  p.rows = y.rows;
  p.cols = y.cols;
  CMatrix left = CMatrix::Zero(y.rows, y.rows), right = CMatrix::Zero(y.cols, y.cols);
  std::vector<RectTerm> factors;
  std::vector<detail::SparseCoords> coords;
  double r = 0.0;
  bool bounded = true;
  for (const auto& z : y.summands) {
    const double var = z.law->variance();
    const auto& es = z.base.entries;
    // B B^* and B^* B from the entries
    for (const auto& a : es)
      for (const auto& b : es) {
        if (a.col == b.col) left(a.row, b.row) += var * a.value * std::conj(b.value);
        if (a.row == b.row) right(a.col, b.col) += var * std::conj(a.value) * b.value;
      }
    RectTerm f = z.base;
    for (auto& e : f.entries) e.value *= std::sqrt(var);
    coords.push_back(detail::rect_coordinates(f));
    factors.push_back(std::move(f));
    if (const auto bd = z.law->bound()) {
      const double nb = es.size() == 1 ? std::abs(es.front().value) : spectral_norm(z.base.dense());
      r = std::max(r, *bd * nb);
    } else {
      bounded = false;
    }
  }
  p.sigma = std::sqrt(std::max(herm_norm(left), herm_norm(right)));
  p.sigma_star = sigma_star_factors(factors, y.rows, y.cols, opt).value;
  p.v = detail::gram_top_sqrt(coords, 2 * static_cast<std::int64_t>(y.rows) * y.cols);
  p.r = bounded ? r : kInf;
  return p;
}

}  // namespace specuniv
