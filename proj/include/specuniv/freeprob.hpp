#pragma once

// Spectral data of the operator-valued semicircular model
// X_free = a (x) 1 + sum_j A_j (x) s_j: Lehner edge, Dyson resolvent,
// density and exact moments.

#include "specuniv/core.hpp"
#include "specuniv/linalg.hpp"
#include "specuniv/model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

namespace specuniv {

struct FreeModel {
  int dim = 1;
  CMatrix mean;
  std::vector<SparseHerm> kraus;

  /// Phi(B) = sum_j A_j B A_j
  CMatrix phi(const CMatrix& b) const {
    const int d = dim;
    CMatrix out = CMatrix::Zero(d, d);
    const double dense_cost = 2.0 * d * d * d;
    for (const auto& a : kraus) {
      const double nnz = static_cast<double>(a.entries.size());
      if (nnz * nnz <= dense_cost) {
        for (const auto& x : a.entries)
          for (const auto& y : a.entries) out(x.row, y.col) += x.value * b(x.col, y.row) * y.value;
      } else {
        const CMatrix ad = a.dense();
        out.noalias() += ad * b * ad;
      }
    }
    return out;
  }

  CMatrix phi_identity() const {
    CMatrix out = CMatrix::Zero(dim, dim);
    for (const auto& a : kraus)
      for (const auto& x : a.entries)
        for (const auto& y : a.entries)
          if (x.col == y.row) out(x.row, y.col) += x.value * y.value;
    return out;
  }

  /// ||Phi(I)||
  double sigma2() const { return herm_norm(phi_identity()); }
};

inline void validate(const FreeModel& f) {
  if (f.dim < 1) throw std::invalid_argument("free model: dim must be >= 1");
  if (f.mean.rows() != f.dim || f.mean.cols() != f.dim) throw std::invalid_argument("free model: mean shape");
  if (hermitian_defect(f.mean) > 1e-12) throw std::invalid_argument("free model: mean is not Hermitian");
  for (std::size_t j = 0; j < f.kraus.size(); ++j) {
    if (f.kraus[j].dim != f.dim) throw std::invalid_argument("free model: factor " + std::to_string(j) + " shape");
    if (f.kraus[j].entries.size() && f.kraus[j].max_hermitian_defect() > 1e-12)
      throw std::invalid_argument("free model: factor " + std::to_string(j) + " is not Hermitian");
  }
}

inline FreeModel free_counterpart(const MatrixModel& m) {
  FreeModel f;
  f.dim = m.dim;
  f.mean = m.mean;
  f.kraus = all_covariance_factors(m);
  return f;
}

inline FreeModel free_model(const CMatrix& mean, const std::vector<CMatrix>& kraus) {
  FreeModel f;
  f.dim = static_cast<int>(mean.rows());
  f.mean = mean;
  for (const auto& a : kraus) f.kraus.push_back(SparseHerm::from_dense(a));
  validate(f);
  return f;
}

/// ||mean|| + 2 ||Phi(I)||^{1/2}
inline double simple_norm_bound(const FreeModel& f) { return herm_norm(f.mean) + 2.0 * std::sqrt(f.sigma2()); }

namespace detail {

/// (mu, c) when mean = mu I and Phi(I) = c I; then G(z) = g(z) I exactly.
inline std::optional<std::pair<double, double>> isotropic_form(const FreeModel& f) {
  const int d = f.dim;
  const double mu = f.mean.diagonal().real().mean();
  const CMatrix p = f.phi_identity();
  const double c = p.diagonal().real().mean();
  const CMatrix id = CMatrix::Identity(d, d);
  const double tol = 1e-12;
  if ((f.mean - mu * id).cwiseAbs().maxCoeff() > tol * std::max(1.0, std::abs(mu))) return std::nullopt;
  if ((p - c * id).cwiseAbs().maxCoeff() > tol * std::max(1.0, c)) return std::nullopt;
  return std::make_pair(mu, c);
}

/// Root of c g^2 - (z - mu) g + 1 = 0 with Im g < 0.
inline cplx scalar_semicircle_g(cplx z, double mu, double c) {
  const cplx w = z - mu;
  if (c == 0.0) return 1.0 / w;
  const cplx s = std::sqrt(w * w - 4.0 * c);
  const cplx g1 = (w - s) / (2.0 * c), g2 = (w + s) / (2.0 * c);
  return g1.imag() <= g2.imag() ? g1 : g2;
}

inline double max_eig_imag_part(const CMatrix& g) {
  const CMatrix im = (g - g.adjoint()) / cplx(0.0, 2.0);
  return lambda_max(im);
}

}  // namespace detail

/// The 1x1 model (mu, sqrt(c)) when mean = mu I and Phi(I) = c I. Its
/// normalized moments, resolvent trace and edge equal those of f.
inline std::optional<FreeModel> reduce_isotropic(const FreeModel& f) {
  const auto iso = detail::isotropic_form(f);
  if (!iso) return std::nullopt;
  FreeModel r;
  r.dim = 1;
  r.mean = CMatrix::Constant(1, 1, iso->first);
  if (iso->second > 0.0) {
    SparseHerm a(1);
    a.entries.push_back({0, 0, std::sqrt(iso->second)});
    r.kraus.push_back(std::move(a));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Matrix Dyson equation

struct DysonOptions {
  double tol = 1e-10;
  int max_iter = 10000;
  double damping = 0.5;
  /// Newton polish for dim <= newton_max_dim.
  bool newton = true;
  int newton_max_dim = 16;
};

struct DysonInfo {
  int iterations = 0;
  double residual = 0.0;
  bool newton_used = false;
  bool closed_form = false;
};

/// Caches the per-model data needed by repeated resolvent solves.
class DysonSolver {
 public:
  explicit DysonSolver(const FreeModel& f, DysonOptions opt = {}) : f_(f), opt_(opt) {
    if (!(opt_.tol > 0.0)) throw std::invalid_argument("dyson: tol must be positive");
    if (!(opt_.damping > 0.0 && opt_.damping <= 1.0)) throw std::invalid_argument("dyson: damping must lie in (0,1]");
    iso_ = detail::isotropic_form(f);
    scale_ = simple_norm_bound(f) + 1.0;
    if (!iso_ && opt_.newton && f.dim <= opt_.newton_max_dim) build_kron();
  }

  const FreeModel& model() const noexcept { return f_; }
  bool isotropic() const noexcept { return iso_.has_value(); }

  /// G(z) = (z - mean - Phi(G))^{-1}, Im z > 0.
  CMatrix solve(cplx z, const CMatrix* warm = nullptr, DysonInfo* info = nullptr) const {
    if (!(z.imag() > 0.0)) throw std::invalid_argument("dyson_resolvent: need Im z > 0");
    const int d = f_.dim;
    DysonInfo local;
    DysonInfo& inf = info ? *info : local;
    inf = {};
    if (iso_) {
      inf.closed_form = true;
      return detail::scalar_semicircle_g(z, iso_->first, iso_->second) * CMatrix::Identity(d, d);
    }
    if (warm) return iterate(z, *warm, inf);
    // Cold start near the real axis: continue down from a large imaginary part.
    const double top = scale_;
    if (z.imag() >= 0.05 * top) return iterate(z, CMatrix::Identity(d, d) / z, inf);
    CMatrix g = CMatrix::Identity(d, d) / cplx(z.real(), top);
    int total = 0;
    for (double eta = top; eta > z.imag(); eta *= 0.25) {
      g = iterate(cplx(z.real(), eta), g, inf);
      total += inf.iterations;
    }
    g = iterate(z, g, inf);
    inf.iterations += total;
    return g;
  }

 private:
  CMatrix iterate(cplx z, CMatrix g, DysonInfo& inf) const {
    const int d = f_.dim;
    double gamma = opt_.damping;
    double prev = kInf;
    int since_newton = 0;
    bool restarted = false;
    for (int it = 0; it < opt_.max_iter; ++it) {
      const CMatrix w = map(z, g);
      const double res = (g - w).norm();
      inf.iterations = it + 1;
      inf.residual = res;
      if (res <= opt_.tol) {
        if (detail::max_eig_imag_part(g) <= 1e-10) return g;
        if (restarted) break;
        // left the physical branch; restart cold with stronger damping
        restarted = true;
        g = CMatrix::Identity(d, d) / z;
        gamma = 0.5 * opt_.damping;
        prev = kInf;
        continue;
      }
      gamma = res > prev ? std::max(gamma * 0.5, 1e-3) : std::min(opt_.damping, gamma * 1.25);
      prev = res;
      if (kron_.size() && res < 0.1 && ++since_newton >= 3) {
        since_newton = 0;
        if (auto gn = newton(z, g)) {
          inf.newton_used = true;
          inf.residual = (*gn - map(z, *gn)).norm();
          return *gn;
        }
      }
      g = (1.0 - gamma) * g + gamma * w;
    }
    throw ConvergenceError("dyson_resolvent: max_iter exceeded", inf.residual);
  }

  CMatrix map(cplx z, const CMatrix& g) const {
    const int d = f_.dim;
    CMatrix m = z * CMatrix::Identity(d, d) - f_.mean - f_.phi(g);
    return m.partialPivLu().inverse();
  }

  // K = sum_j A_j^T (x) A_j so that vec(Phi(H)) = K vec(H) (column-major vec)
  void build_kron() {
    const int d = f_.dim, n = d * d;
    kron_ = CMatrix::Zero(n, n);
    for (const auto& a : f_.kraus)
      for (const auto& x : a.entries)      // A_ik
        for (const auto& y : a.entries) {  // A_lj
          kron_(y.col * d + x.row, y.row * d + x.col) += x.value * y.value;
        }
  }

  /// Newton on R(G) = G - (z - mean - Phi(G))^{-1}; nullopt if it fails.
  std::optional<CMatrix> newton(cplx z, CMatrix g) const {
    const int d = f_.dim, n = d * d;
    for (int it = 0; it < 30; ++it) {
      const CMatrix w = map(z, g);
      const CMatrix r = g - w;
      if (r.norm() <= opt_.tol) {
        if (detail::max_eig_imag_part(g) > 1e-10) return std::nullopt;
        return g;
      }
      CMatrix ww(n, n);  // W^T (x) W
      for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i)
          for (int l = 0; l < d; ++l)
            for (int k = 0; k < d; ++k) ww(j * d + i, l * d + k) = w(l, j) * w(i, k);
      const CMatrix jac = CMatrix::Identity(n, n) - ww * kron_;
      const CVector rhs = -Eigen::Map<const CVector>(r.data(), n);
      const CVector h = jac.partialPivLu().solve(rhs);
      if (!h.allFinite()) return std::nullopt;
      g += Eigen::Map<const CMatrix>(h.data(), d, d);
    }
    return std::nullopt;
  }

  FreeModel f_;
  DysonOptions opt_;
  std::optional<std::pair<double, double>> iso_;
  double scale_ = 1.0;
  CMatrix kron_;
};

inline CMatrix dyson_resolvent(const FreeModel& f, cplx z, const DysonOptions& opt = {}, DysonInfo* info = nullptr) {
  return DysonSolver(f, opt).solve(z, nullptr, info);
}

/// tr G(z), normalized trace.
inline cplx free_stieltjes(const FreeModel& f, cplx z, const DysonOptions& opt = {}) {
  return dyson_resolvent(f, z, opt).trace() / static_cast<double>(f.dim);
}

// ---------------------------------------------------------------------------
// Density

struct DensityCurve {
  std::vector<double> x;
  std::vector<double> rho;
  double eta = 0.0;  // 0 marks an extrapolated curve

  /// Trapezoid rule for int x^m rho(x) dx.
  double moment(int m) const {
    double acc = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i)
      acc += 0.5 * (x[i] - x[i - 1]) * (std::pow(x[i], m) * rho[i] + std::pow(x[i - 1], m) * rho[i - 1]);
    return acc;
  }
  double mass() const { return moment(0); }
};

inline std::vector<double> linspace(double lo, double hi, int points) {
  if (points < 2) throw std::invalid_argument("grid: need at least 2 points");
  if (!(hi > lo)) throw std::invalid_argument("grid: need lo < hi");
  std::vector<double> x(points);
  for (int i = 0; i < points; ++i) x[i] = lo + (hi - lo) * i / (points - 1);
  return x;
}

namespace detail {

// Fixed chunk so results do not depend on the worker count.
inline constexpr std::size_t kDensityChunk = 64;

/// rho_eta at each x; warm starts run within fixed chunks.
inline std::vector<double> density_values(const DysonSolver& s, const std::vector<double>& xs, double eta,
                                          int threads) {
  if (!(eta > 0.0)) throw std::invalid_argument("free_density: eta must be positive");
  std::vector<double> rho(xs.size());
  const std::size_t chunks = (xs.size() + kDensityChunk - 1) / kDensityChunk;
  const double d = s.model().dim;
  parallel_for(chunks, threads, [&](std::size_t c) {
    CMatrix warm;
    const std::size_t end = std::min(xs.size(), (c + 1) * kDensityChunk);
    for (std::size_t i = c * kDensityChunk; i < end; ++i) {
      const CMatrix g = s.solve(cplx(xs[i], eta), warm.size() ? &warm : nullptr);
      rho[i] = -g.trace().imag() / (std::numbers::pi * d);
      warm = g;
    }
  });
  return rho;
}

/// Linear extrapolation to eta -> 0 from two levels.
inline double extrapolate_zero(double r1, double e1, double r2, double e2) {
  return r2 - e2 * (r1 - r2) / (e1 - e2);
}

}  // namespace detail

inline DensityCurve free_density(const FreeModel& f, double lo, double hi, int points, double eta,
                                 const DysonOptions& opt = {}, int threads = 1) {
  DysonSolver s(f, opt);
  DensityCurve c;
  c.x = linspace(lo, hi, points);
  c.eta = eta;
  c.rho = detail::density_values(s, c.x, eta, threads);
  return c;
}

/// Pointwise extrapolation of rho_eta to eta -> 0 from two levels
/// (eta1 > eta2); negative values are clipped.
inline DensityCurve free_density_extrapolated(const FreeModel& f, double lo, double hi, int points,
                                              double eta1 = 1e-3, double eta2 = 1e-4, const DysonOptions& opt = {},
                                              int threads = 1) {
  if (!(eta1 > eta2 && eta2 > 0.0)) throw std::invalid_argument("free_density: need eta1 > eta2 > 0");
  DysonSolver s(f, opt);
  DensityCurve c;
  c.x = linspace(lo, hi, points);
  const auto r1 = detail::density_values(s, c.x, eta1, threads);
  const auto r2 = detail::density_values(s, c.x, eta2, threads);
  c.rho.resize(c.x.size());
  for (std::size_t i = 0; i < c.x.size(); ++i)
    c.rho[i] = std::max(0.0, detail::extrapolate_zero(r1[i], eta1, r2[i], eta2));
  return c;
}

/// Interval guaranteed to contain the support, padded.
inline std::pair<double, double> support_window(const FreeModel& f, double pad_fraction = 0.05) {
  const double b = simple_norm_bound(f);
  const double pad = pad_fraction * std::max(b, 1e-3) + 1e-3;
  return {-b - pad, b + pad};
}

struct EtaEdges {
  double eta = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct SupportEdges {
  std::vector<EtaEdges> per_eta;
  /// Edges of the eta -> 0 extrapolated density.
  double lo = 0.0;
  double hi = 0.0;
};

struct SupportOptions {
  double threshold = 1e-4;
  std::vector<double> etas{1e-2, 1e-3, 1e-4};
  double x_tol = 1e-4;
  int grid_points = 801;
};

namespace detail {

/// Outermost crossings of rho > threshold on a grid, refined by bisection.
template <class Rho>
std::pair<double, double> threshold_edges(Rho&& rho, double lo, double hi, int points, double threshold,
                                          double x_tol) {
  const auto xs = linspace(lo, hi, points);
  std::vector<double> r(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) r[i] = rho(xs[i]);
  std::size_t first = xs.size(), last = 0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (r[i] > threshold) {
      first = std::min(first, i);
      last = i;
    }
  if (first == xs.size()) throw std::runtime_error("support_edges: density never exceeds threshold on the window");
  auto bisect = [&](double inside, double outside) {
    while (std::abs(outside - inside) > x_tol) {
      const double mid = 0.5 * (inside + outside);
      (rho(mid) > threshold ? inside : outside) = mid;
    }
    return 0.5 * (inside + outside);
  };
  const double left = first == 0 ? xs[0] : bisect(xs[first], xs[first - 1]);
  const double right = last + 1 == xs.size() ? xs[last] : bisect(xs[last], xs[last + 1]);
  return {left, right};
}

}  // namespace detail

inline SupportEdges support_edges(const FreeModel& f, const SupportOptions& so = {}, const DysonOptions& opt = {}) {
  if (!(so.threshold > 0.0)) throw std::invalid_argument("support_edges: threshold must be positive");
  if (so.etas.size() < 2) throw std::invalid_argument("support_edges: need at least two eta levels");
  for (double e : so.etas)
    if (!(e > 0.0)) throw std::invalid_argument("support_edges: eta must be positive");
  DysonSolver s(f, opt);
  const double d = f.dim;
  auto rho_at = [&](double x, double eta) {
    return -s.solve(cplx(x, eta)).trace().imag() / (std::numbers::pi * d);
  };
  const auto [wlo, whi] = support_window(f);
  SupportEdges out;
  for (double eta : so.etas) {
    // Cauchy tails of rho_eta stay above threshold out to ~ sqrt(eta / (pi threshold))
    const double spread = std::sqrt(eta / (std::numbers::pi * so.threshold)) + 0.1;
    const auto [l, h] = detail::threshold_edges([&](double x) { return rho_at(x, eta); }, wlo - spread,
                                                whi + spread, so.grid_points, so.threshold, so.x_tol);
    out.per_eta.push_back({eta, l, h});
  }
  std::vector<double> sorted = so.etas;
  std::sort(sorted.begin(), sorted.end());
  const double e2 = sorted[0], e1 = sorted[1];
  auto rho0 = [&](double x) { return detail::extrapolate_zero(rho_at(x, e1), e1, rho_at(x, e2), e2); };
  const auto [l, h] = detail::threshold_edges(rho0, wlo, whi, so.grid_points, so.threshold, so.x_tol);
  out.lo = l;
  out.hi = h;
  return out;
}

// ---------------------------------------------------------------------------
// Lehner's variational formula

struct LehnerOptions {
  double tol_edge = 1e-6;
  int bisection_steps = 60;
  /// Iteration budget per bisection point scales down with d^3.
  int fixed_point_iter = 20000;
  int descent_iter = 2000;
  std::vector<double> init_scales{0.5, 1.0, 2.0};
  /// Models with mean = mu I and Phi(I) = c I and dim above this use mu + 2 sqrt(c).
  int shortcut_min_dim = 65;
};

struct LehnerResult {
  double value = kInf;
  double fixed_point = kInf;
  double descent = kInf;
  bool agree = true;
  /// Feasible B achieving `value`.
  CMatrix certificate;
  std::string method;
};

/// f(B) = lambda_max(B^{-1} + mean + Phi(B)); +inf unless B is positive definite.
inline double lehner_objective(const FreeModel& f, const CMatrix& b) {
  Eigen::LLT<CMatrix> llt(0.5 * (b + b.adjoint()));
  if (llt.info() != Eigen::Success) return kInf;
  const CMatrix binv = llt.solve(CMatrix::Identity(f.dim, f.dim));
  CMatrix m = binv + f.mean + f.phi(b);
  m = (0.5 * (m + m.adjoint())).eval();
  return lambda_max(m);
}

/// Bisection on c with B <- (c I - mean - Phi(B))^{-1} from B = 0; every
/// positive definite iterate is a certificate.
inline LehnerResult lehner_edge_fixed_point(const FreeModel& f, const LehnerOptions& opt = {}) {
  const int d = f.dim;
  const CMatrix id = CMatrix::Identity(d, d);
  LehnerResult best;
  best.method = "fixed_point";
  auto consider = [&](const CMatrix& b) {
    const double v = lehner_objective(f, b);
    if (v < best.fixed_point) {
      best.fixed_point = v;
      best.certificate = b;
    }
  };
  const double scale = simple_norm_bound(f) + 1e-300;
  const double d3 = static_cast<double>(d) * d * d;
  const int budget = static_cast<int>(std::max(200.0, std::min<double>(opt.fixed_point_iter, 2e8 / d3)));
  const int every = d == 1 ? 1 : 10;

  // 1: converged (feasible), 0: infeasible or undecided
  auto run = [&](double c) {
    CMatrix b = CMatrix::Zero(d, d);
    for (int it = 0; it < budget; ++it) {
      CMatrix m = c * id - f.mean - f.phi(b);
      m = (0.5 * (m + m.adjoint())).eval();
      Eigen::LLT<CMatrix> llt(m);
      if (llt.info() != Eigen::Success) return false;
      CMatrix next = llt.solve(id);
      const double step = (next - b).norm();
      b = std::move(next);
      if (it % every == 0) consider(b);
      if (step <= 1e-14 * b.norm()) {
        consider(b);
        return true;
      }
    }
    consider(b);
    return false;
  };
  double lo = lambda_max(f.mean);
  double hi = simple_norm_bound(f) + 1e-3 * scale;
  if (!run(hi)) hi += scale;
  run(hi);
  for (int s = 0; s < opt.bisection_steps && hi - lo > 1e-10 * scale; ++s) {
    const double mid = 0.5 * (lo + hi);
    (run(mid) ? hi : lo) = mid;
  }
  best.value = best.fixed_point;
  return best;
}

/// Gradient descent over B = L L^* on a log-sum-exp smoothing of lambda_max
/// with an increasing inverse temperature; tracks the exact objective.
inline LehnerResult lehner_edge_descent(const FreeModel& f, const LehnerOptions& opt = {}) {
  const int d = f.dim;
  const CMatrix id = CMatrix::Identity(d, d);
  LehnerResult best;
  best.method = "descent";
  const double sig = std::sqrt(std::max(f.sigma2(), 1e-300));
  const double scale = simple_norm_bound(f) + 1e-300;

  // smoothed value and gradient with respect to B
  auto smooth = [&](const CMatrix& l, double beta, CMatrix* grad, double* exact) {
    const CMatrix b = l * l.adjoint();
    Eigen::LLT<CMatrix> llt(b);
    if (llt.info() != Eigen::Success) return kInf;
    const CMatrix binv = llt.solve(id);
    CMatrix m = binv + f.mean + f.phi(b);
    m = (0.5 * (m + m.adjoint())).eval();
    Eigen::SelfAdjointEigenSolver<CMatrix> es(m);
    const RVector& ev = es.eigenvalues();
    const double top = ev.maxCoeff();
    if (exact) *exact = top;
    RVector w = ((ev.array() - top) * beta).exp();
    const double z = w.sum();
    w /= z;
    if (grad) {
      const CMatrix p = es.eigenvectors() * w.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
      const CMatrix gb = f.phi(p) - binv * p * binv;
      *grad = 2.0 * gb * l;
    }
    return top + std::log(z) / beta;
  };

  for (double s0 : opt.init_scales) {
    CMatrix l = std::sqrt(s0 / sig) * id;
    double step = 0.1 / (sig * sig + 1e-300);
    for (double kappa : {1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7}) {
      const double beta = kappa / scale;
      CMatrix g;
      double exact = kInf;
      double val = smooth(l, beta, &g, &exact);
      if (exact < best.descent) {
        best.descent = exact;
        best.certificate = l * l.adjoint();
      }
      for (int it = 0; it < opt.descent_iter; ++it) {
        const double gn2 = g.squaredNorm();
        if (gn2 <= 1e-30) break;
        bool moved = false;
        for (int ls = 0; ls < 40; ++ls) {
          const CMatrix trial = l - step * g;
          CMatrix gt;
          double ex = kInf;
          const double vt = smooth(trial, beta, &gt, &ex);
          if (vt <= val - 1e-4 * step * gn2) {
            l = trial;
            g = std::move(gt);
            val = vt;
            if (ex < best.descent) {
              best.descent = ex;
              best.certificate = l * l.adjoint();
            }
            step *= 2.0;
            moved = true;
            break;
          }
          step *= 0.5;
        }
        if (!moved) break;
      }
    }
  }
  best.value = best.descent;
  return best;
}

inline LehnerResult lehner_edge(const FreeModel& f, const LehnerOptions& opt = {}) {
  bool any = false;
  for (const auto& a : f.kraus)
    if (!a.entries.empty()) any = true;
  if (!any) throw std::invalid_argument("lehner_edge: need at least one nonzero factor");
  if (f.dim >= opt.shortcut_min_dim) {
    if (const auto iso = detail::isotropic_form(f)) {
      LehnerResult r;
      r.method = "isotropic";
      const double c = iso->second;
      r.value = r.fixed_point = r.descent = iso->first + 2.0 * std::sqrt(c);
      r.certificate = CMatrix::Identity(f.dim, f.dim) / std::sqrt(c);
      return r;
    }
  }
  auto a = lehner_edge_fixed_point(f, opt);
  auto b = lehner_edge_descent(f, opt);
  LehnerResult r = a.fixed_point <= b.descent ? a : b;
  r.fixed_point = a.fixed_point;
  r.descent = b.descent;
  r.value = std::min(a.fixed_point, b.descent);
  r.agree = std::abs(a.fixed_point - b.descent) <= opt.tol_edge;
  r.method = "min(fixed_point, descent)";
  return r;
}

// ---------------------------------------------------------------------------
// Exact moments through noncrossing pairings

inline constexpr int kMaxSemicircularMoment = 16;
inline constexpr int kMaxWordLength = 12;

/// Matrix-valued moments F(k) = E[X_free^k] (id (x) tau), k = 0..m, via
/// F(k) = mean F(k-1) + sum_{i=0}^{k-2} Phi(F(i)) F(k-2-i).
inline std::vector<CMatrix> ov_semicircular_moments(const FreeModel& f, int m) {
  if (m < 0) throw std::invalid_argument("ov_semicircular_moment: need m >= 0");
  if (m > kMaxSemicircularMoment)
    throw std::invalid_argument("ov_semicircular_moment: m above guard " + std::to_string(kMaxSemicircularMoment));
  const int d = f.dim;
  std::vector<CMatrix> F(m + 1);
  std::vector<CMatrix> phiF(m + 1);
  F[0] = CMatrix::Identity(d, d);
  for (int k = 1; k <= m; ++k) {
    phiF[k - 1] = f.phi(F[k - 1]);
    F[k] = f.mean * F[k - 1];
    for (int i = 0; i + 2 <= k; ++i) F[k] += phiF[i] * F[k - 2 - i];
  }
  return F;
}

/// (tr (x) tau)(X_free^m)
inline double ov_semicircular_moment(const FreeModel& f, int m) {
  return ov_semicircular_moments(f, m).back().trace().real() / f.dim;
}

/// (tr (x) tau)(X_1 ... X_q) for letters of a free family with zero means;
/// a letter pairs only with the same letter, through its own Phi.
inline double free_word_trace(const std::vector<FreeModel>& family, const std::vector<int>& word) {
  if (static_cast<int>(word.size()) > kMaxWordLength)
    throw std::invalid_argument("free_word_trace: word longer than guard " + std::to_string(kMaxWordLength));
  if (family.empty()) throw std::invalid_argument("free_word_trace: empty family");
  const int d = family.front().dim;
  for (const auto& m : family) {
    if (m.dim != d) throw std::invalid_argument("free_word_trace: dimension mismatch in family");
    if (m.mean.size() && m.mean.cwiseAbs().maxCoeff() > 1e-12)
      throw std::invalid_argument("free_word_trace: family members must have zero mean");
  }
  for (int k : word)
    if (k < 0 || k >= static_cast<int>(family.size())) throw std::invalid_argument("free_word_trace: bad letter");
  if (d > 1) {
    // isotropic letters keep every partial expectation scalar
    std::vector<FreeModel> reduced;
    for (const auto& m : family)
      if (auto r = reduce_isotropic(m)) reduced.push_back(std::move(*r));
    if (reduced.size() == family.size()) return free_word_trace(reduced, word);
  }
  const int q = static_cast<int>(word.size());
  std::map<std::pair<int, int>, CMatrix> memo;
  const CMatrix id = CMatrix::Identity(d, d);
  // value of positions [l, r)
  std::function<CMatrix(int, int)> w = [&](int l, int r) -> CMatrix {
    if (l == r) return id;
    if ((r - l) % 2 == 1) return CMatrix::Zero(d, d);
    const auto key = std::make_pair(l, r);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    CMatrix acc = CMatrix::Zero(d, d);
    for (int j = l + 1; j < r; j += 2)
      if (word[j] == word[l]) acc += family[word[l]].phi(w(l + 1, j)) * w(j + 1, r);
    memo.emplace(key, acc);
    return acc;
  };
  return w(0, q).trace().real() / d;
}

}  // namespace specuniv
