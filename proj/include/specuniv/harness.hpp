#pragma once

// Monte Carlo spectra, spectral statistics with jackknife errors and the
// X-versus-G comparison report.

#include "specuniv/bounds.hpp"
#include "specuniv/core.hpp"
#include "specuniv/freeprob.hpp"
#include "specuniv/linalg.hpp"
#include "specuniv/model.hpp"
#include "specuniv/params.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace specuniv {

struct SpectralSamples {
  std::string label;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  /// Ascending eigenvalues per trial.
  std::vector<RVector> eigs;
  int dim() const { return eigs.empty() ? 0 : static_cast<int>(eigs.front().size()); }
};

/// Trial j draws sample(model, derive_seed(seed, j)).
inline SpectralSamples simulate_spectra(const MatrixModel& model, std::size_t trials, std::uint64_t seed,
                                        int threads = 1) {
  if (trials < 1) throw std::invalid_argument("simulate_spectra: trials must be >= 1");
  SpectralSamples s;
  s.label = model.label;
  s.trials = trials;
  s.seed = seed;
  s.eigs.resize(trials);
  parallel_for(trials, threads, [&](std::size_t j) {
    try {
      s.eigs[j] = eigvalsh(sample(model, derive_seed(seed, j)));
    } catch (const std::exception& e) {
      throw std::runtime_error("simulate_spectra: trial " + std::to_string(j) + ": " + e.what());
    }
  });
  return s;
}

/// Operator norms ||Y|| of rectangular samples.
inline std::vector<double> simulate_rect_norms(const RectangularModel& y, std::size_t trials, std::uint64_t seed,
                                               int threads = 1) {
  std::vector<double> out(trials);
  parallel_for(trials, threads, [&](std::size_t j) { out[j] = spectral_norm(sample(y, derive_seed(seed, j))); });
  return out;
}

// ---------------------------------------------------------------------------
// Hausdorff distance

namespace detail {

/// max_{x in a} dist(x, b) for sorted a, b.
template <class A, class B>
double directed_hausdorff(const A& a, const B& b, std::size_t na, std::size_t nb) {
  double worst = 0.0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < na; ++i) {
    const double x = a[i];
    while (j + 1 < nb && b[j + 1] <= x) ++j;
    double d = std::abs(x - b[j]);
    if (j + 1 < nb) d = std::min(d, std::abs(b[j + 1] - x));
    worst = std::max(worst, d);
  }
  return worst;
}

}  // namespace detail

inline double hausdorff_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("hausdorff_distance: empty input");
  return std::max(detail::directed_hausdorff(a, b, a.size(), b.size()),
                  detail::directed_hausdorff(b, a, b.size(), a.size()));
}

inline double hausdorff_distance(const RVector& a, const RVector& b) {
  if (a.size() == 0 || b.size() == 0) throw std::invalid_argument("hausdorff_distance: empty input");
  return std::max(detail::directed_hausdorff(a, b, a.size(), b.size()),
                  detail::directed_hausdorff(b, a, b.size(), a.size()));
}

// ---------------------------------------------------------------------------
// Statistics

/// Mean with standard error of the mean. Sums run relative to v[0], so
/// constant data has exactly zero error.
inline Estimate mean_estimate(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean_estimate: no values");
  const double n = static_cast<double>(v.size());
  const double x0 = v.front();
  double dm = 0.0;
  for (double x : v) dm += x - x0;
  dm /= n;
  if (v.size() < 2) return {x0 + dm, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - x0 - dm) * (x - x0 - dm);
  return {x0 + dm, std::sqrt(ss / (n - 1.0) / n)};
}

/// Leave-one-out jackknife of g(mean of per-trial values).
template <class G>
Estimate jackknife_of_mean(const std::vector<double>& v, G&& g) {
  const std::size_t n = v.size();
  if (n == 0) throw std::invalid_argument("jackknife: no values");
  const double x0 = v.front();
  double total = 0.0;  // relative to x0
  for (double x : v) total += x - x0;
  Estimate e{g(x0 + total / n), 0.0};
  if (n < 2) return e;
  std::vector<double> loo(n);
  for (std::size_t i = 0; i < n; ++i) loo[i] = g(x0 + (total - (v[i] - x0)) / (n - 1.0));
  const double m = std::accumulate(loo.begin(), loo.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : loo) ss += (x - m) * (x - m);
  e.stderr_ = std::sqrt((n - 1.0) / n * ss);
  return e;
}

inline std::vector<double> lambda_max_per_trial(const SpectralSamples& s) {
  std::vector<double> v;
  v.reserve(s.eigs.size());
  for (const auto& e : s.eigs) v.push_back(e(e.size() - 1));
  return v;
}

inline Estimate edge_statistic(const SpectralSamples& s) { return mean_estimate(lambda_max_per_trial(s)); }

/// (E tr X^{2p})^{1/(2p)}: root of the trial mean, jackknife error.
inline Estimate trace_moment_statistic(const SpectralSamples& s, int p) {
  if (p < 1) throw std::invalid_argument("trace_moment: need p >= 1");
  std::vector<double> v;
  for (const auto& e : s.eigs) v.push_back(e.array().pow(2.0 * p).mean());
  return jackknife_of_mean(v, [p](double m) { return std::pow(std::max(m, 0.0), 1.0 / (2.0 * p)); });
}

struct ComplexEstimate {
  cplx value{};
  double stderr_ = 0.0;
};

/// E tr (z - X)^{-1}
inline ComplexEstimate stieltjes_statistic(const SpectralSamples& s, cplx z) {
  if (!(z.imag() > 0.0)) throw std::invalid_argument("stieltjes: need Im z > 0");
  std::vector<double> re, im;
  for (const auto& e : s.eigs) {
    cplx acc{};
    for (Eigen::Index i = 0; i < e.size(); ++i) acc += 1.0 / (z - e(i));
    acc /= static_cast<double>(e.size());
    re.push_back(acc.real());
    im.push_back(acc.imag());
  }
  const auto r = mean_estimate(re), i = mean_estimate(im);
  return {{r.value, i.value}, std::hypot(r.stderr_, i.stderr_)};
}

struct Histogram {
  std::vector<double> edges;
  std::vector<double> mass;
};

/// Pooled eigenvalue histogram; masses sum to the fraction inside [lo, hi].
inline Histogram esd_histogram(const SpectralSamples& s, int bins, double lo, double hi) {
  if (bins < 1 || !(hi > lo)) throw std::invalid_argument("esd_histogram: bad binning");
  Histogram h;
  h.edges = linspace(lo, hi, bins + 1);
  h.mass.assign(bins, 0.0);
  double total = 0.0;
  for (const auto& e : s.eigs)
    for (Eigen::Index i = 0; i < e.size(); ++i) {
      total += 1.0;
      const double x = e(i);
      if (x < lo || x > hi) continue;
      const int b = std::min(bins - 1, static_cast<int>((x - lo) / (hi - lo) * bins));
      h.mass[b] += 1.0;
    }
  for (double& m : h.mass) m /= total;
  return h;
}

namespace detail {

/// Cumulative distribution of a density curve, normalized to total mass 1.
struct CurveCdf {
  std::vector<double> x, f;
  explicit CurveCdf(const DensityCurve& c) : x(c.x), f(c.x.size(), 0.0) {
    for (std::size_t i = 1; i < x.size(); ++i) f[i] = f[i - 1] + 0.5 * (x[i] - x[i - 1]) * (c.rho[i] + c.rho[i - 1]);
    const double total = f.back();
    if (!(total > 0.0)) throw std::invalid_argument("ks: density curve has no mass");
    for (double& v : f) v /= total;
  }
  double operator()(double t) const {
    if (t <= x.front()) return 0.0;
    if (t >= x.back()) return 1.0;
    const auto it = std::upper_bound(x.begin(), x.end(), t);
    const std::size_t i = it - x.begin();
    const double w = (t - x[i - 1]) / (x[i] - x[i - 1]);
    return f[i - 1] + w * (f[i] - f[i - 1]);
  }
};

inline double ks_pooled(std::vector<double> pts, const CurveCdf& cdf) {
  std::sort(pts.begin(), pts.end());
  const double n = static_cast<double>(pts.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double f = cdf(pts[i]);
    worst = std::max({worst, std::abs((i + 1) / n - f), std::abs(i / n - f)});
  }
  return worst;
}

}  // namespace detail

/// KS distance between the pooled empirical CDF and the integrated curve;
/// jackknife over trials when there are at least two.
inline Estimate ks_statistic(const SpectralSamples& s, const DensityCurve& curve) {
  const detail::CurveCdf cdf(curve);
  auto pooled = [&](std::size_t skip) {
    std::vector<double> pts;
    for (std::size_t j = 0; j < s.eigs.size(); ++j)
      if (j != skip) pts.insert(pts.end(), s.eigs[j].data(), s.eigs[j].data() + s.eigs[j].size());
    return pts;
  };
  Estimate e{detail::ks_pooled(pooled(s.eigs.size()), cdf), 0.0};
  const std::size_t n = s.eigs.size();
  if (n >= 2) {
    std::vector<double> loo(n);
    for (std::size_t j = 0; j < n; ++j) loo[j] = detail::ks_pooled(pooled(j), cdf);
    const double m = std::accumulate(loo.begin(), loo.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : loo) ss += (x - m) * (x - m);
    e.stderr_ = std::sqrt((n - 1.0) / n * ss);
  }
  return e;
}

struct EdgeStat {};
struct TraceMomentStat {
  int p = 1;
};
struct StieltjesStat {
  cplx z{0.0, 1.0};
};
struct HistogramStat {
  int bins = 50;
  double lo = -3.0;
  double hi = 3.0;
};
struct KsStat {
  DensityCurve curve;
};
using StatSpec = std::variant<EdgeStat, TraceMomentStat, StieltjesStat, HistogramStat, KsStat>;

struct StatResult {
  double value = 0.0;
  double stderr_ = 0.0;
  cplx complex_value{};
  Histogram histogram;
};

inline StatResult empirical_statistic(const SpectralSamples& s, const StatSpec& spec) {
  StatResult r;
  std::visit(
      [&](const auto& st) {
        using T = std::decay_t<decltype(st)>;
        if constexpr (std::is_same_v<T, EdgeStat>) {
          const auto e = edge_statistic(s);
          r.value = e.value;
          r.stderr_ = e.stderr_;
        } else if constexpr (std::is_same_v<T, TraceMomentStat>) {
          const auto e = trace_moment_statistic(s, st.p);
          r.value = e.value;
          r.stderr_ = e.stderr_;
        } else if constexpr (std::is_same_v<T, StieltjesStat>) {
          const auto e = stieltjes_statistic(s, st.z);
          r.complex_value = e.value;
          r.value = std::abs(e.value);
          r.stderr_ = e.stderr_;
        } else if constexpr (std::is_same_v<T, HistogramStat>) {
          r.histogram = esd_histogram(s, st.bins, st.lo, st.hi);
        } else {
          const auto e = ks_statistic(s, st.curve);
          r.value = e.value;
          r.stderr_ = e.stderr_;
        }
      },
      spec);
  return r;
}

// ---------------------------------------------------------------------------
// X versus G

struct CompareConfig {
  std::uint64_t seed = 0;
  int threads = 1;
  std::vector<int> moment_p{1, 2};
  std::vector<cplx> stieltjes_z{cplx(0.0, 1.0)};
  double C = 1.0;
  ParamOptions params;
};

struct GapEstimate {
  double x = 0.0;
  double g = 0.0;
  double gap = 0.0;
  double stderr_ = 0.0;
  double bound = 0.0;
  /// gap / bound (+inf when the bound is 0 and the gap is not).
  double c_fit = 0.0;
};

struct ComplexGap {
  cplx z{};
  cplx x{};
  cplx g{};
  double gap = 0.0;
  double stderr_ = 0.0;
  double bound = 0.0;
  double c_fit = 0.0;
};

struct ComparisonReport {
  std::string label;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  ParameterSet params;
  std::vector<double> hausdorff;
  std::vector<double> edge_gap;
  std::vector<double> lambda_max_x;
  std::vector<double> lambda_max_g;
  double eps_log_d = 0.0;
  double median_hausdorff = 0.0;
  /// max over trials of d_H / eps(log d).
  double c_fit_hausdorff = 0.0;
  GapEstimate edge;
  std::map<int, GapEstimate> moments;
  std::vector<ComplexGap> stieltjes;
};

inline double fit_ratio(double observed, double bound) {
  if (bound > 0.0) return observed / bound;
  return observed == 0.0 ? 0.0 : kInf;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: no values");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// X and G are simulated independently with seeds derive(seed, 0) and
/// derive(seed, 1).
inline ComparisonReport compare_models(const MatrixModel& model, std::size_t trials, const CompareConfig& cfg = {}) {
  ComparisonReport rep;
  rep.label = model.label;
  rep.trials = trials;
  rep.seed = cfg.seed;
  const MatrixModel g = gaussian_counterpart(model);
  const auto sx = simulate_spectra(model, trials, derive_seed(cfg.seed, 0), cfg.threads);
  const auto sg = simulate_spectra(g, trials, derive_seed(cfg.seed, 1), cfg.threads);

  ParamOptions po = cfg.params;
  for (int p : cfg.moment_p) po.q_values.push_back(2.0 * p);
  rep.params = compute_parameters(model, po);
  const BoundInputs in = BoundInputs::from(rep.params, cfg.C);
  const double logd = std::log(static_cast<double>(model.dim));
  rep.eps_log_d = eps_universality(in, logd);

  for (std::size_t j = 0; j < trials; ++j) {
    const double dh = hausdorff_distance(sx.eigs[j], sg.eigs[j]);
    const double lx = sx.eigs[j](sx.eigs[j].size() - 1), lg = sg.eigs[j](sg.eigs[j].size() - 1);
    rep.hausdorff.push_back(dh);
    rep.lambda_max_x.push_back(lx);
    rep.lambda_max_g.push_back(lg);
    rep.edge_gap.push_back(std::abs(lx - lg));
    rep.c_fit_hausdorff = std::max(rep.c_fit_hausdorff, fit_ratio(dh, rep.eps_log_d));
  }
  rep.median_hausdorff = median(rep.hausdorff);

  const auto ex = mean_estimate(rep.lambda_max_x), eg = mean_estimate(rep.lambda_max_g);
  rep.edge = {ex.value, eg.value, std::abs(ex.value - eg.value), std::hypot(ex.stderr_, eg.stderr_),
              edge_expectation_bound(in), 0.0};
  rep.edge.c_fit = fit_ratio(rep.edge.gap, rep.edge.bound);

  for (int p : cfg.moment_p) {
    const auto mx = trace_moment_statistic(sx, p), mg = trace_moment_statistic(sg, p);
    GapEstimate e{mx.value, mg.value, std::abs(mx.value - mg.value), std::hypot(mx.stderr_, mg.stderr_), kInf, 0.0};
    const double q = 2.0 * p;
    const auto& sq = rep.params.sigma_q.at(q);
    const auto& rq = rep.params.r_q.at(q);
    if (sq.provenance != Provenance::unavailable && rq.provenance != Provenance::unavailable)
      e.bound = moment_universality_bound({sq.value, rq.value}, p, q, cfg.C);
    e.c_fit = fit_ratio(e.gap, e.bound);
    rep.moments[p] = e;
  }
  for (cplx z : cfg.stieltjes_z) {
    const auto zx = stieltjes_statistic(sx, z), zg = stieltjes_statistic(sg, z);
    ComplexGap c{z, zx.value, zg.value, std::abs(zx.value - zg.value), std::hypot(zx.stderr_, zg.stderr_), kInf, 0.0};
    if (rep.params.third_moment_sum.provenance != Provenance::unavailable) c.bound = stieltjes_bound(in, z.imag());
    c.c_fit = fit_ratio(c.gap, c.bound);
    rep.stieltjes.push_back(c);
  }
  return rep;
}

}  // namespace specuniv
