#pragma once

// The random matrix model X = Z0 + sum_i Z_i with independent centered
// self-adjoint summands, its builders, samplers and derived models.

#include "specuniv/core.hpp"
#include "specuniv/laws.hpp"
#include "specuniv/linalg.hpp"

#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace specuniv {

enum class SummandKind { series_term, scaled_entry_pair, sparse_edge, rank_one_centered, finite_support, custom };

inline std::string to_string(SummandKind k) {
  switch (k) {
    case SummandKind::series_term: return "series_term";
    case SummandKind::scaled_entry_pair: return "scaled_entry_pair";
    case SummandKind::sparse_edge: return "sparse_edge";
    case SummandKind::rank_one_centered: return "rank_one_centered";
    case SummandKind::finite_support: return "finite_support";
    case SummandKind::custom: return "custom";
  }
  return "?";
}

struct SupportAtom {
  double prob = 0.0;
  SparseHerm matrix;
};

/// Adds scale * Z(seed) into acc.
using Accumulator = std::function<void(std::uint64_t seed, double scale, CMatrix& acc)>;

/// One independent summand Z_i. Two storage forms:
///  - coefficient form, Z = eta * base with eta drawn from a scalar law; every
///    oracle follows from (law, base) and is computed on demand;
///  - general form, an explicit sampler plus whatever oracles the builder
///    could determine.
class SummandSpec {
 public:
  static SummandSpec scalar_times(SummandKind kind, std::shared_ptr<const ScalarLaw> law, SparseHerm base) {
    SummandSpec s;
    s.kind_ = kind;
    s.dim_ = base.dim;
    s.law_ = std::move(law);
    s.base_ = std::move(base);
    return s;
  }

  static SummandSpec general(SummandKind kind, int dim, Accumulator sampler) {
    SummandSpec s;
    s.kind_ = kind;
    s.dim_ = dim;
    s.sampler_ = std::make_shared<const Accumulator>(std::move(sampler));
    return s;
  }

  SummandSpec& with_r_bound(double r) {
    r_bound_ = r;
    return *this;
  }
  SummandSpec& with_second_moment(std::shared_ptr<const SparseHerm> m) {
    second_moment_ = std::move(m);
    return *this;
  }
  SummandSpec& with_factors(std::shared_ptr<const std::vector<SparseHerm>> f) {
    factors_ = std::move(f);
    return *this;
  }
  SummandSpec& with_support(std::shared_ptr<const std::vector<SupportAtom>> s) {
    support_ = std::move(s);
    return *this;
  }

  SummandKind kind() const noexcept { return kind_; }
  int dim() const noexcept { return dim_; }
  bool is_scalar_times() const noexcept { return static_cast<bool>(law_); }
  const ScalarLaw* law() const noexcept { return law_.get(); }
  const SparseHerm& base() const noexcept { return base_; }

  void accumulate(std::uint64_t seed, double scale, CMatrix& acc) const {
    if (law_) {
      SplitMix64 rng(seed);
      base_.add_to(acc, scale * law_->sample(rng));
    } else {
      (*sampler_)(seed, scale, acc);
    }
  }

  CMatrix draw(std::uint64_t seed) const {
    CMatrix m = CMatrix::Zero(dim_, dim_);
    accumulate(seed, 1.0, m);
    return m;
  }

  std::optional<double> r_bound() const {
    if (law_) {
      const auto b = law_->bound();
      if (!b) return std::nullopt;
      return *b * herm_norm(base_);
    }
    return r_bound_;
  }

  /// E[Z^2]
  std::optional<SparseHerm> second_moment() const {
    if (law_) {
      const double var = law_->variance();
      const auto idx = base_.support_indices();
      SparseHerm out(dim_);
      if (idx.empty()) return out;
      const CMatrix c = base_.compressed(idx);
      const CMatrix sq = c * c * var;
      for (int j = 0; j < sq.cols(); ++j)
        for (int i = 0; i < sq.rows(); ++i)
          if (sq(i, j) != cplx{}) out.entries.push_back({idx[i], idx[j], sq(i, j)});
      return out;
    }
    if (second_moment_) return *second_moment_;
    if (support_) {
      CMatrix acc = CMatrix::Zero(dim_, dim_);
      for (const auto& a : *support_) {
        const CMatrix m = a.matrix.dense();
        acc += a.prob * m * m;
      }
      return SparseHerm::from_dense(acc);
    }
    return std::nullopt;
  }

  /// Hermitian factors {B_j} with Cov(Z) = sum_j b_j b_j^T in the Hermitian basis.
  std::optional<std::vector<SparseHerm>> covariance_factors() const {
    if (law_) return std::vector<SparseHerm>{base_.scaled(std::sqrt(law_->variance()))};
    if (factors_) return *factors_;
    return std::nullopt;
  }

  std::optional<std::vector<SupportAtom>> support() const {
    if (law_) {
      const auto atoms = law_->support();
      if (!atoms) return std::nullopt;
      std::vector<SupportAtom> out;
      for (const auto& a : *atoms) out.push_back({a.prob, base_.scaled(a.value)});
      return out;
    }
    if (support_) return *support_;
    return std::nullopt;
  }

  bool has_support() const noexcept { return law_ ? law_->support().has_value() : static_cast<bool>(support_); }
  bool has_factors() const noexcept { return law_ || factors_; }

 private:
  SummandKind kind_ = SummandKind::custom;
  int dim_ = 0;
  std::shared_ptr<const ScalarLaw> law_;
  SparseHerm base_;
  std::shared_ptr<const Accumulator> sampler_;
  std::optional<double> r_bound_;
  std::shared_ptr<const SparseHerm> second_moment_;
  std::shared_ptr<const std::vector<SparseHerm>> factors_;
  std::shared_ptr<const std::vector<SupportAtom>> support_;
};

struct MatrixModel {
  int dim = 1;
  CMatrix mean;
  std::vector<SummandSpec> summands;
  std::string label;
  /// Deferred (non-fatal) problems found while building.
  std::vector<std::string> warnings;

  /// Scales X by s: mean and every summand.
  MatrixModel scaled(double s) const;
};

// ---------------------------------------------------------------------------
// Recipes

struct MatrixSeriesRecipe {
  CMatrix mean;
  std::vector<CMatrix> factors;
  ScalarLaw law = ScalarLaw::rademacher();
};

/// Symmetric matrix with X_ab = scale * eta_ab for a <= b.
struct IidEntryRecipe {
  int d = 2;
  ScalarLaw law = ScalarLaw::rademacher();
  std::optional<double> scale;  // default 1/sqrt(d)
  bool diagonal = true;
};

/// X_ij = k^{-1/2} eta_ij 1{ {i,j} in E } on a k-regular graph.
struct SparseWignerRecipe {
  int d = 2;
  int k = 1;
  std::optional<std::vector<std::pair<int, int>>> edges;
  std::optional<std::vector<int>> offsets;  // circulant offsets, default chosen from (d, k)
  ScalarLaw law = ScalarLaw::rademacher();
};

/// Z_i = (Y_i Y_i^* - E Y_i Y_i^*)/n with iid unit-variance entries in Y_i.
struct SampleCovarianceRecipe {
  int d = 2;
  int n = 1;
  ScalarLaw law = ScalarLaw::rademacher();
};

struct FiniteSupportRecipe {
  CMatrix mean;
  std::vector<std::vector<std::pair<double, CMatrix>>> supports;
};

/// n independent diagonal summands with iid centered Bernoulli(q) diagonals.
struct DiagonalBernoulliRecipe {
  int d = 2;
  int n = 1;
  double q = 0.5;
};

using ModelRecipe = std::variant<MatrixSeriesRecipe, IidEntryRecipe, SparseWignerRecipe, SampleCovarianceRecipe,
                                 FiniteSupportRecipe, DiagonalBernoulliRecipe>;

inline constexpr double kRankTol = 1e-10;
inline constexpr std::size_t kMaxEnumeratedSupport = 4096;

namespace detail {

inline void require_hermitian(const CMatrix& m, const std::string& what) {
  if (m.rows() != m.cols()) throw std::invalid_argument(what + ": matrix must be square");
  if (hermitian_defect(m) > 1e-12) throw std::invalid_argument(what + ": matrix is not Hermitian");
}

inline SparseHerm pair_unit(int d, int a, int b, double s) {
  SparseHerm h(d);
  if (a == b) {
    h.entries.push_back({a, a, s});
  } else {
    h.entries.push_back({a, b, s});
    h.entries.push_back({b, a, s});
  }
  return h;
}

/// Factors of a covariance given in the Hermitian basis, eigenvalues below
/// rank_tol * lambda_max dropped.
inline std::vector<SparseHerm> factors_from_covariance(const RMatrix& cov, int d, double rank_tol = kRankTol) {
  const RMatrix sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<RMatrix> es(sym);
  const RVector& ev = es.eigenvalues();
  const double top = ev.size() ? ev.maxCoeff() : 0.0;
  std::vector<SparseHerm> out;
  if (top <= 0.0) return out;
  for (int j = static_cast<int>(ev.size()) - 1; j >= 0; --j) {
    if (ev(j) <= rank_tol * top) break;
    const RVector b = es.eigenvectors().col(j) * std::sqrt(ev(j));
    out.push_back(SparseHerm::from_dense(herm_from_coordinates(b, d), 1e-15));
  }
  return out;
}

inline RMatrix covariance_of_support(const std::vector<SupportAtom>& atoms, int d) {
  RMatrix cov = RMatrix::Zero(d * d, d * d);
  for (const auto& a : atoms) {
    const RVector xi = herm_coordinates(a.matrix);
    cov += a.prob * xi * xi.transpose();
  }
  return cov;
}

/// All sign/atom combinations of a vector of iid entries; empty if too many.
inline std::vector<std::pair<double, std::vector<double>>> product_atoms(const std::vector<Atom>& atoms, int len,
                                                                         std::size_t limit) {
  double count = std::pow(static_cast<double>(atoms.size()), len);
  if (count > static_cast<double>(limit)) return {};
  std::vector<std::pair<double, std::vector<double>>> out{{1.0, {}}};
  for (int i = 0; i < len; ++i) {
    std::vector<std::pair<double, std::vector<double>>> next;
    for (const auto& [p, v] : out)
      for (const auto& a : atoms) {
        auto w = v;
        w.push_back(a.value);
        next.emplace_back(p * a.prob, std::move(w));
      }
    out = std::move(next);
  }
  return out;
}

/// Default symmetric circulant offset set of size k in Z_d.
inline std::vector<int> circulant_offsets(int d, int k) {
  if (k < 1 || k > d) throw std::invalid_argument("sparse_wigner: need 1 <= k <= d");
  std::vector<int> s;
  if (k == d) {
    for (int i = 0; i < d; ++i) s.push_back(i);
    return s;
  }
  if (k == d - 1) {
    for (int i = 1; i < d; ++i) s.push_back(i);
    return s;
  }
  if (k % 2 == 1) s.push_back(d % 2 == 0 ? d / 2 : 0);
  for (int j = 1; static_cast<int>(s.size()) < k; ++j) {
    s.push_back(j);
    s.push_back(d - j);
  }
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Builders

inline MatrixModel build_model(const MatrixSeriesRecipe& r) {
  if (r.factors.empty() && r.mean.size() == 0) throw std::invalid_argument("matrix_series: need a mean or factors");
  const int d = r.mean.size() ? static_cast<int>(r.mean.rows()) : static_cast<int>(r.factors.front().rows());
  MatrixModel m;
  m.dim = d;
  m.mean = r.mean.size() ? r.mean : CMatrix::Zero(d, d);
  detail::require_hermitian(m.mean, "matrix_series mean");
  m.label = "matrix_series";
  auto law = std::make_shared<const ScalarLaw>(r.law);
  for (std::size_t i = 0; i < r.factors.size(); ++i) {
    const auto& a = r.factors[i];
    if (a.rows() != d || a.cols() != d) throw std::invalid_argument("matrix_series: factor dimension mismatch");
    detail::require_hermitian(a, "matrix_series factor " + std::to_string(i));
    m.summands.push_back(SummandSpec::scalar_times(SummandKind::series_term, law, SparseHerm::from_dense(a)));
  }
  if (!r.law.bound()) m.warnings.push_back("r_bound unavailable: coefficient law has no declared bound");
  return m;
}

inline MatrixModel build_model(const IidEntryRecipe& r) {
  if (r.d < 1) throw std::invalid_argument("iid_entry: d must be positive");
  const int d = r.d;
  const double s = r.scale.value_or(1.0 / std::sqrt(static_cast<double>(d)));
  MatrixModel m;
  m.dim = d;
  m.mean = CMatrix::Zero(d, d);
  m.label = "iid_entry";
  auto law = std::make_shared<const ScalarLaw>(r.law);
  for (int a = 0; a < d; ++a)
    for (int b = r.diagonal ? a : a + 1; b < d; ++b)
      m.summands.push_back(
          SummandSpec::scalar_times(SummandKind::scaled_entry_pair, law, detail::pair_unit(d, a, b, s)));
  if (!r.law.bound()) m.warnings.push_back("r_bound unavailable: entry law has no declared bound");
  return m;
}

inline MatrixModel build_model(const SparseWignerRecipe& r) {
  if (r.d < 1) throw std::invalid_argument("sparse_wigner: d must be positive");
  const int d = r.d;
  std::vector<std::pair<int, int>> edges;
  if (r.edges) {
    std::vector<int> degree(d, 0);
    for (auto [i, j] : *r.edges) {
      if (i < 0 || j < 0 || i >= d || j >= d) throw std::invalid_argument("sparse_wigner: edge out of range");
      if (i > j) std::swap(i, j);
      edges.emplace_back(i, j);
      ++degree[i];
      if (i != j) ++degree[j];
    }
    for (int i = 0; i < d; ++i)
      if (degree[i] != r.k) throw std::invalid_argument("sparse_wigner: edge list is not k-regular");
  } else {
    const std::vector<int> offsets = r.offsets ? *r.offsets : detail::circulant_offsets(d, r.k);
    std::vector<bool> in(d, false);
    for (int o : offsets) {
      const int oo = ((o % d) + d) % d;
      if (in[oo]) throw std::invalid_argument("sparse_wigner: repeated offset");
      in[oo] = true;
    }
    if (static_cast<int>(offsets.size()) != r.k)
      throw std::invalid_argument("sparse_wigner: k does not match the offset-set size");
    for (int o = 0; o < d; ++o)
      if (in[o] != in[(d - o) % d]) throw std::invalid_argument("sparse_wigner: offset set is not symmetric");
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j)
        if (in[(i - j + d) % d]) edges.emplace_back(i, j);
  }
  MatrixModel m;
  m.dim = d;
  m.mean = CMatrix::Zero(d, d);
  m.label = "sparse_wigner";
  const double s = 1.0 / std::sqrt(static_cast<double>(r.k));
  auto law = std::make_shared<const ScalarLaw>(r.law);
  for (auto [i, j] : edges)
    m.summands.push_back(SummandSpec::scalar_times(SummandKind::sparse_edge, law, detail::pair_unit(d, i, j, s)));
  if (!r.law.bound()) m.warnings.push_back("r_bound unavailable: entry law has no declared bound");
  return m;
}

inline MatrixModel build_model(const SampleCovarianceRecipe& r) {
  if (r.d < 1 || r.n < 1) throw std::invalid_argument("sample_covariance_centered: d, n must be positive");
  const int d = r.d;
  const double n = r.n;
  MatrixModel m;
  m.dim = d;
  m.mean = CMatrix::Zero(d, d);
  m.label = "sample_covariance_centered";

  const double m4 = r.law.moment(4);
  auto second = std::make_shared<SparseHerm>(d);
  if (std::isfinite(m4))
    for (int a = 0; a < d; ++a) second->entries.push_back({a, a, (m4 + d - 2.0) / (n * n)});
  auto factors = std::make_shared<std::vector<SparseHerm>>();
  if (std::isfinite(m4) && m4 - 1.0 > 1e-14)
    for (int a = 0; a < d; ++a) factors->push_back(detail::pair_unit(d, a, a, std::sqrt(m4 - 1.0) / n));
  for (int a = 0; a < d; ++a)
    for (int b = a + 1; b < d; ++b) factors->push_back(detail::pair_unit(d, a, b, 1.0 / n));

  const ScalarLaw law = r.law;
  Accumulator sampler = [law, d, n](std::uint64_t seed, double scale, CMatrix& acc) {
    SplitMix64 rng(seed);
    RVector y(d);
    for (int a = 0; a < d; ++a) y(a) = law.sample(rng);
    const double c = scale / n;
    for (int b = 0; b < d; ++b)
      for (int a = 0; a < d; ++a) acc(a, b) += c * (y(a) * y(b) - (a == b ? 1.0 : 0.0));
  };

  std::shared_ptr<const std::vector<SupportAtom>> support;
  if (const auto atoms = law.support()) {
    const auto combos = detail::product_atoms(*atoms, d, kMaxEnumeratedSupport);
    if (!combos.empty()) {
      auto sup = std::make_shared<std::vector<SupportAtom>>();
      for (const auto& [p, v] : combos) {
        CMatrix z = CMatrix::Zero(d, d);
        for (int b = 0; b < d; ++b)
          for (int a = 0; a < d; ++a) z(a, b) = (v[a] * v[b] - (a == b ? 1.0 : 0.0)) / n;
        sup->push_back({p, SparseHerm::from_dense(z)});
      }
      support = sup;
    }
  }

  const auto b = law.bound();
  for (int i = 0; i < r.n; ++i) {
    auto s = SummandSpec::general(SummandKind::rank_one_centered, d, sampler);
    if (std::isfinite(m4)) s.with_second_moment(second).with_factors(factors);
    if (b) s.with_r_bound(d * (*b) * (*b) / n);
    if (support) s.with_support(support);
    m.summands.push_back(std::move(s));
  }
  if (!b) m.warnings.push_back("r_bound unavailable: column law has no declared bound");
  return m;
}

inline MatrixModel build_model(const FiniteSupportRecipe& r) {
  if (r.mean.size() == 0) throw std::invalid_argument("finite_support: mean is required (fixes the dimension)");
  detail::require_hermitian(r.mean, "finite_support mean");
  const int d = static_cast<int>(r.mean.rows());
  MatrixModel m;
  m.dim = d;
  m.mean = r.mean;
  m.label = "finite_support";
  for (std::size_t i = 0; i < r.supports.size(); ++i) {
    const auto& sup = r.supports[i];
    if (sup.empty()) throw std::invalid_argument("finite_support: empty support");
    auto atoms = std::make_shared<std::vector<SupportAtom>>();
    double total = 0.0, rb = 0.0;
    CMatrix mean = CMatrix::Zero(d, d), second = CMatrix::Zero(d, d);
    for (const auto& [p, mat] : sup) {
      if (mat.rows() != d || mat.cols() != d) throw std::invalid_argument("finite_support: dimension mismatch");
      detail::require_hermitian(mat, "finite_support atom");
      if (p < 0.0) throw std::invalid_argument("finite_support: negative probability");
      total += p;
      mean += p * mat;
      second += p * mat * mat;
      rb = std::max(rb, herm_norm(mat));
      atoms->push_back({p, SparseHerm::from_dense(mat)});
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("finite_support: probabilities must sum to 1");
    if (mean.cwiseAbs().maxCoeff() > 1e-12) throw std::invalid_argument("finite_support: summand is not centered");
    auto factors = std::make_shared<std::vector<SparseHerm>>(
        detail::factors_from_covariance(detail::covariance_of_support(*atoms, d), d));
    std::shared_ptr<const std::vector<SupportAtom>> shared = atoms;
    Accumulator sampler = [shared](std::uint64_t seed, double scale, CMatrix& acc) {
      SplitMix64 rng(seed);
      double u = rng.uniform();
      for (const auto& a : *shared) {
        if (u < a.prob) {
          a.matrix.add_to(acc, scale);
          return;
        }
        u -= a.prob;
      }
      shared->back().matrix.add_to(acc, scale);
    };
    auto s = SummandSpec::general(SummandKind::finite_support, d, sampler);
    s.with_support(shared)
        .with_second_moment(std::make_shared<const SparseHerm>(SparseHerm::from_dense(second)))
        .with_factors(factors)
        .with_r_bound(rb);
    m.summands.push_back(std::move(s));
  }
  return m;
}

inline MatrixModel build_model(const DiagonalBernoulliRecipe& r) {
  if (r.d < 1 || r.n < 1) throw std::invalid_argument("diagonal_bernoulli: d, n must be positive");
  if (!(r.q > 0.0 && r.q < 1.0)) throw std::invalid_argument("diagonal_bernoulli: q must lie in (0,1)");
  const int d = r.d;
  const double q = r.q;
  MatrixModel m;
  m.dim = d;
  m.mean = CMatrix::Zero(d, d);
  m.label = "diagonal_bernoulli";
  auto second = std::make_shared<SparseHerm>(d);
  auto factors = std::make_shared<std::vector<SparseHerm>>();
  for (int a = 0; a < d; ++a) {
    second->entries.push_back({a, a, q * (1.0 - q)});
    factors->push_back(detail::pair_unit(d, a, a, std::sqrt(q * (1.0 - q))));
  }
  Accumulator sampler = [d, q](std::uint64_t seed, double scale, CMatrix& acc) {
    SplitMix64 rng(seed);
    for (int a = 0; a < d; ++a) acc(a, a) += scale * ((rng.uniform() < q ? 1.0 : 0.0) - q);
  };
  std::shared_ptr<const std::vector<SupportAtom>> support;
  const auto combos = detail::product_atoms({{q, 1.0 - q}, {1.0 - q, -q}}, d, kMaxEnumeratedSupport);
  if (!combos.empty()) {
    auto sup = std::make_shared<std::vector<SupportAtom>>();
    for (const auto& [p, v] : combos) {
      SparseHerm z(d);
      for (int a = 0; a < d; ++a) z.entries.push_back({a, a, v[a]});
      sup->push_back({p, std::move(z)});
    }
    support = sup;
  }
  for (int i = 0; i < r.n; ++i) {
    auto s = SummandSpec::general(SummandKind::custom, d, sampler);
    s.with_second_moment(second).with_factors(factors).with_r_bound(std::max(q, 1.0 - q));
    if (support) s.with_support(support);
    m.summands.push_back(std::move(s));
  }
  return m;
}

inline MatrixModel build_model(const ModelRecipe& recipe) {
  return std::visit([](const auto& r) { return build_model(r); }, recipe);
}

inline MatrixModel MatrixModel::scaled(double s) const {
  MatrixModel out;
  out.dim = dim;
  out.mean = mean * s;
  out.label = label + " x" + std::to_string(s);
  out.warnings = warnings;
  for (const auto& z : summands) {
    if (z.is_scalar_times()) {
      out.summands.push_back(SummandSpec::scalar_times(z.kind(), std::make_shared<const ScalarLaw>(*z.law()),
                                                       z.base().scaled(s)));
      continue;
    }
    auto inner = z;
    auto spec = SummandSpec::general(z.kind(), dim, [inner, s](std::uint64_t seed, double scale, CMatrix& acc) {
      inner.accumulate(seed, scale * s, acc);
    });
    if (auto r = z.r_bound()) spec.with_r_bound(*r * std::abs(s));
    if (auto m2 = z.second_moment()) spec.with_second_moment(std::make_shared<const SparseHerm>(m2->scaled(s * s)));
    if (auto f = z.covariance_factors()) {
      auto fs = std::make_shared<std::vector<SparseHerm>>();
      for (const auto& b : *f) fs->push_back(b.scaled(s));
      spec.with_factors(fs);
    }
    if (auto sup = z.support()) {
      auto ss = std::make_shared<std::vector<SupportAtom>>();
      for (const auto& a : *sup) ss->push_back({a.prob, a.matrix.scaled(s)});
      spec.with_support(ss);
    }
    out.summands.push_back(std::move(spec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation

/// Checks the structural invariants; throws std::invalid_argument.
inline void validate(const MatrixModel& m) {
  if (m.dim < 1) throw std::invalid_argument("model: dim must be >= 1");
  if (m.mean.rows() != m.dim || m.mean.cols() != m.dim) throw std::invalid_argument("model: mean has wrong shape");
  if (hermitian_defect(m.mean) > 1e-12) throw std::invalid_argument("model: mean is not Hermitian");
  for (std::size_t i = 0; i < m.summands.size(); ++i) {
    const auto& z = m.summands[i];
    const std::string tag = "summand " + std::to_string(i);
    if (z.dim() != m.dim) throw std::invalid_argument(tag + ": dimension mismatch");
    if (!z.is_scalar_times()) {
      if (const auto sup = z.support()) {
        double total = 0.0;
        CMatrix mean = CMatrix::Zero(m.dim, m.dim);
        for (const auto& a : *sup) {
          if (a.prob < 0.0) throw std::invalid_argument(tag + ": negative probability");
          total += a.prob;
          a.matrix.add_to(mean, a.prob);
        }
        if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument(tag + ": probabilities do not sum to 1");
        if (mean.cwiseAbs().maxCoeff() > 1e-12) throw std::invalid_argument(tag + ": not centered");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Sampling

/// Z0 + sum_i sampler_i(derive_seed(seed, i)).
inline CMatrix sample(const MatrixModel& m, std::uint64_t seed) {
  CMatrix x = m.mean;
  for (std::size_t i = 0; i < m.summands.size(); ++i) m.summands[i].accumulate(derive_seed(seed, i), 1.0, x);
  return x;
}

/// Centered sample X - E X.
inline CMatrix sample_centered(const MatrixModel& m, std::uint64_t seed) {
  CMatrix x = CMatrix::Zero(m.dim, m.dim);
  for (std::size_t i = 0; i < m.summands.size(); ++i) m.summands[i].accumulate(derive_seed(seed, i), 1.0, x);
  return x;
}

// ---------------------------------------------------------------------------
// Gaussian counterpart

struct EmpiricalSource {
  std::size_t sample_count = 10000;
  std::uint64_t seed = 0;
};

/// Gaussian series G = E X + sum_j g_j A_j with the same entry covariance.
inline MatrixModel gaussian_series(const CMatrix& mean, const std::vector<SparseHerm>& factors, std::string label) {
  MatrixModel g;
  g.dim = static_cast<int>(mean.rows());
  g.mean = mean;
  g.label = std::move(label);
  auto law = std::make_shared<const ScalarLaw>(ScalarLaw::gaussian());
  g.summands.reserve(factors.size());
  for (const auto& f : factors) g.summands.push_back(SummandSpec::scalar_times(SummandKind::series_term, law, f));
  return g;
}

/// Factors of every summand, concatenated. Summands without a factor oracle
/// but with finite support get factors from the eigendecomposition of their
/// Hermitian-basis covariance.
inline std::vector<SparseHerm> all_covariance_factors(const MatrixModel& m) {
  std::vector<SparseHerm> out;
  for (std::size_t i = 0; i < m.summands.size(); ++i) {
    const auto& z = m.summands[i];
    if (auto f = z.covariance_factors()) {
      out.insert(out.end(), f->begin(), f->end());
    } else if (auto sup = z.support()) {
      auto f2 = detail::factors_from_covariance(detail::covariance_of_support(*sup, m.dim), m.dim);
      out.insert(out.end(), f2.begin(), f2.end());
    } else {
      throw std::invalid_argument("gaussian_counterpart: summand " + std::to_string(i) +
                                  " has neither covariance factors nor finite support");
    }
  }
  return out;
}

inline MatrixModel gaussian_counterpart(const MatrixModel& m) {
  return gaussian_series(m.mean, all_covariance_factors(m), "gaussian(" + m.label + ")");
}

/// Empirical mode: estimates the d^2 x d^2 Hermitian-basis covariance from
/// samples, symmetrizes it and clips negative eigenvalues.
inline MatrixModel gaussian_counterpart(const MatrixModel& m, const EmpiricalSource& src) {
  const int d = m.dim;
  const int nb = d * d;
  const std::size_t n = src.sample_count;
  if (n < 2) throw std::invalid_argument("gaussian_counterpart: need at least 2 samples");
  RVector mean = RVector::Zero(nb);
  RMatrix second = RMatrix::Zero(nb, nb);
  for (std::size_t s = 0; s < n; ++s) {
    const RVector xi = herm_coordinates(sample_centered(m, derive_seed(src.seed, s)));
    mean += xi;
    second.selfadjointView<Eigen::Lower>().rankUpdate(xi);
  }
  mean /= static_cast<double>(n);
  RMatrix cov = second.selfadjointView<Eigen::Lower>();
  cov = (cov - static_cast<double>(n) * mean * mean.transpose()) / static_cast<double>(n - 1);
  auto g = gaussian_series(m.mean, detail::factors_from_covariance(cov, d), "gaussian_empirical(" + m.label + ")");
  if (n < static_cast<std::size_t>(nb))
    g.warnings.push_back("rank-deficient covariance estimate: sample_count " + std::to_string(n) + " < d^2 = " +
                         std::to_string(nb));
  return g;
}

/// Hermitian-basis covariance operator sum_j b_j b_j^T (small d only).
inline RMatrix covariance_operator(const std::vector<SparseHerm>& factors, int d) {
  RMatrix c = RMatrix::Zero(d * d, d * d);
  for (const auto& f : factors) {
    const RVector b = herm_coordinates(f);
    c += b * b.transpose();
  }
  return c;
}

/// Covariance operator from oracles: factors if present, else support.
inline RMatrix covariance_operator(const MatrixModel& m) {
  RMatrix c = RMatrix::Zero(m.dim * m.dim, m.dim * m.dim);
  for (const auto& z : m.summands) {
    if (auto sup = z.support()) {
      c += detail::covariance_of_support(*sup, m.dim);
    } else if (auto f = z.covariance_factors()) {
      c += covariance_operator(*f, m.dim);
    } else {
      throw std::invalid_argument("covariance_operator: summand without oracles");
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Interpolation X(t) = E X + sqrt(t)(X - E X) + sqrt(1-t)(G - E G)

inline CMatrix interpolate(const MatrixModel& model, const MatrixModel& counterpart, double t, std::uint64_t seed) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("interpolate: t must lie in [0,1]");
  CMatrix x = model.mean;
  const double a = std::sqrt(t), b = std::sqrt(1.0 - t);
  const auto s1 = derive_seed(seed, 0), s2 = derive_seed(seed, 1);
  for (std::size_t i = 0; i < model.summands.size(); ++i) model.summands[i].accumulate(derive_seed(s1, i), a, x);
  for (std::size_t i = 0; i < counterpart.summands.size(); ++i)
    counterpart.summands[i].accumulate(derive_seed(s2, i), b, x);
  return x;
}

// ---------------------------------------------------------------------------
// Exhaustive outcomes

struct Outcome {
  double prob = 0.0;
  CMatrix matrix;
};

inline std::vector<Outcome> enumerate_support(const MatrixModel& m, std::size_t max_outcomes = 1u << 16) {
  double total = 1.0;
  std::vector<std::vector<SupportAtom>> supports;
  for (std::size_t i = 0; i < m.summands.size(); ++i) {
    auto s = m.summands[i].support();
    if (!s) throw std::invalid_argument("enumerate_support: summand " + std::to_string(i) + " has no finite support");
    total *= static_cast<double>(s->size());
    if (total > static_cast<double>(max_outcomes))
      throw std::length_error("enumerate_support: more than " + std::to_string(max_outcomes) + " outcomes");
    supports.push_back(std::move(*s));
  }
  std::vector<Outcome> out{{1.0, m.mean}};
  for (const auto& sup : supports) {
    std::vector<Outcome> next;
    next.reserve(out.size() * sup.size());
    for (const auto& o : out)
      for (const auto& a : sup) {
        Outcome n{o.prob * a.prob, o.matrix};
        a.matrix.add_to(n.matrix, 1.0);
        next.push_back(std::move(n));
      }
    out = std::move(next);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rectangular models and dilation

/// d x n term stored by its nonzero entries.
struct RectTerm {
  int rows = 0;
  int cols = 0;
  std::vector<SparseEntry> entries;
  CMatrix dense() const {
    CMatrix m = CMatrix::Zero(rows, cols);
    for (const auto& e : entries) m(e.row, e.col) += e.value;
    return m;
  }
};

/// Rectangular summand Z = eta * base.
struct RectSummand {
  std::shared_ptr<const ScalarLaw> law;
  RectTerm base;
};

struct RectangularModel {
  int rows = 1;
  int cols = 1;
  CMatrix mean;
  std::vector<RectSummand> summands;
  std::string label;
};

/// Y = mean + sum_i eta_i B_i.
inline RectangularModel build_rectangular_series(const CMatrix& mean, const std::vector<CMatrix>& bases,
                                                 const ScalarLaw& law) {
  RectangularModel y;
  y.rows = static_cast<int>(mean.rows());
  y.cols = static_cast<int>(mean.cols());
  y.mean = mean;
  y.label = "rectangular_series";
  auto l = std::make_shared<const ScalarLaw>(law);
  for (const auto& b : bases) {
    if (b.rows() != y.rows || b.cols() != y.cols) throw std::invalid_argument("rectangular: dimension mismatch");
    RectTerm t{y.rows, y.cols, {}};
    for (int j = 0; j < b.cols(); ++j)
      for (int i = 0; i < b.rows(); ++i)
        if (b(i, j) != cplx{}) t.entries.push_back({i, j, b(i, j)});
    y.summands.push_back({l, std::move(t)});
  }
  return y;
}

/// d x n matrix with iid entries scale * eta, one summand per entry.
inline RectangularModel build_rectangular_iid(int d, int n, const ScalarLaw& law, double scale) {
  if (d < 1 || n < 1) throw std::invalid_argument("rectangular_iid: dimensions must be positive");
  RectangularModel y;
  y.rows = d;
  y.cols = n;
  y.mean = CMatrix::Zero(d, n);
  y.label = "rectangular_iid";
  auto l = std::make_shared<const ScalarLaw>(law);
  for (int b = 0; b < n; ++b)
    for (int a = 0; a < d; ++a) y.summands.push_back({l, RectTerm{d, n, {{a, b, scale}}}});
  return y;
}

inline CMatrix sample(const RectangularModel& y, std::uint64_t seed) {
  CMatrix m = y.mean;
  for (std::size_t i = 0; i < y.summands.size(); ++i) {
    SplitMix64 rng(derive_seed(seed, i));
    const double eta = y.summands[i].law->sample(rng);
    for (const auto& e : y.summands[i].base.entries) m(e.row, e.col) += eta * e.value;
  }
  return m;
}

/// [[0, M], [M^*, 0]]
inline CMatrix dilation(const CMatrix& m) {
  const auto d = m.rows(), n = m.cols();
  CMatrix out = CMatrix::Zero(d + n, d + n);
  out.topRightCorner(d, n) = m;
  out.bottomLeftCorner(n, d) = m.adjoint();
  return out;
}

/// Self-adjoint (d+n)-dimensional model whose samples are dilations of the
/// rectangular samples drawn with the same seed; summand structure is kept.
inline MatrixModel dilate(const RectangularModel& y) {
  const int d = y.rows, n = y.cols, D = d + n;
  MatrixModel m;
  m.dim = D;
  m.mean = dilation(y.mean);
  m.label = "dilation(" + y.label + ")";
  for (const auto& z : y.summands) {
    SparseHerm h(D);
    for (const auto& e : z.base.entries) {
      h.entries.push_back({e.row, d + e.col, e.value});
      h.entries.push_back({d + e.col, e.row, std::conj(e.value)});
    }
    m.summands.push_back(SummandSpec::scalar_times(SummandKind::series_term, z.law, std::move(h)));
  }
  return m;
}

}  // namespace specuniv
