#pragma once

// Set partitions, joint cumulants, the Wick formula, cumulant integration by
// parts and the interpolation-derivative check built on them.

#include "specuniv/core.hpp"
#include "specuniv/laws.hpp"
#include "specuniv/model.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace specuniv {

// ---------------------------------------------------------------------------
// Partitions

using Block = std::vector<int>;
using Partition = std::vector<Block>;

/// Restricted-growth string to blocks.
inline Partition blocks_of(const std::vector<int>& rgs) {
  const int nb = rgs.empty() ? 0 : *std::max_element(rgs.begin(), rgs.end()) + 1;
  Partition p(nb);
  for (int i = 0; i < static_cast<int>(rgs.size()); ++i) p[rgs[i]].push_back(i);
  return p;
}

/// Calls fn(rgs) for every restricted-growth string of length k in
/// lexicographic order.
template <class Fn>
void for_each_rgs(int k, Fn&& fn) {
  if (k == 0) {
    fn(std::vector<int>{});
    return;
  }
  std::vector<int> a(k, 0);
  while (true) {
    fn(a);
    // a[i] may grow up to max(a[0..i-1]) + 1
    int i = k - 1;
    while (i > 0 && a[i] == *std::max_element(a.begin(), a.begin() + i) + 1) --i;
    if (i == 0) return;
    ++a[i];
    for (int j = i + 1; j < k; ++j) a[j] = 0;
  }
}

inline std::vector<Partition> set_partitions(int k) {
  if (k < 1 || k > 12) throw std::invalid_argument("set_partitions: need 1 <= k <= 12");
  std::vector<Partition> out;
  for_each_rgs(k, [&](const std::vector<int>& a) { out.push_back(blocks_of(a)); });
  return out;
}

/// All pairings of {0..m-1}; empty for odd m.
inline std::vector<Partition> pair_partitions(int m) {
  if (m < 0 || m > 14) throw std::invalid_argument("pair_partitions: need 0 <= m <= 14");
  std::vector<Partition> out;
  if (m % 2) return out;
  Partition cur;
  std::vector<int> rest(m);
  std::iota(rest.begin(), rest.end(), 0);
  std::function<void(std::vector<int>)> rec = [&](std::vector<int> r) {
    if (r.empty()) {
      out.push_back(cur);
      return;
    }
    for (std::size_t j = 1; j < r.size(); ++j) {
      cur.push_back({r[0], r[j]});
      std::vector<int> next;
      for (std::size_t t = 1; t < r.size(); ++t)
        if (t != j) next.push_back(r[t]);
      rec(next);
      cur.pop_back();
    }
  };
  rec(rest);
  return out;
}

/// (-1)^{|pi|-1} (|pi|-1)!
inline double mobius_coefficient(std::size_t blocks) {
  double f = 1.0;
  for (std::size_t i = 2; i < blocks; ++i) f *= static_cast<double>(i);
  return (blocks % 2 == 1 ? 1.0 : -1.0) * f;
}

// ---------------------------------------------------------------------------
// Moments and cumulants

/// E[W_{i_1} ... W_{i_k}] as a function of the index multiset.
using MomentOracle = std::function<double(const std::vector<int>&)>;
/// kappa(W_{i_1}, ..., W_{i_k}).
using CumulantOracle = std::function<double(const std::vector<int>&)>;

inline double joint_cumulant(const MomentOracle& moment, const std::vector<int>& indices) {
  const int k = static_cast<int>(indices.size());
  if (k == 0) return 0.0;
  double acc = 0.0;
  for_each_rgs(k, [&](const std::vector<int>& a) {
    const Partition p = blocks_of(a);
    double prod = mobius_coefficient(p.size());
    for (const auto& b : p) {
      std::vector<int> sub;
      for (int s : b) sub.push_back(indices[s]);
      prod *= moment(sub);
      if (prod == 0.0) break;
    }
    acc += prod;
  });
  return acc;
}

inline double moments_from_cumulants(const CumulantOracle& kappa, const std::vector<int>& indices) {
  const int k = static_cast<int>(indices.size());
  if (k == 0) return 1.0;
  double acc = 0.0;
  for_each_rgs(k, [&](const std::vector<int>& a) {
    double prod = 1.0;
    for (const auto& b : blocks_of(a)) {
      std::vector<int> sub;
      for (int s : b) sub.push_back(indices[s]);
      prod *= kappa(sub);
      if (prod == 0.0) break;
    }
    acc += prod;
  });
  return acc;
}

/// Sum over pairings of products of cov(i, j); T may be complex for
/// bilinear covariances of complex-linear Gaussian combinations.
template <class T, class Cov>
T wick_moment(const Cov& cov, const std::vector<int>& indices) {
  const std::size_t m = indices.size();
  if (m % 2) return T(0);
  std::vector<int> r(indices);
  std::function<T(std::vector<int>&)> rec = [&](std::vector<int>& rest) -> T {
    if (rest.empty()) return T(1);
    T acc(0);
    const int first = rest[0];
    for (std::size_t j = 1; j < rest.size(); ++j) {
      const T c = cov(first, rest[j]);
      if (c == T(0)) continue;
      std::vector<int> next;
      next.reserve(rest.size() - 2);
      for (std::size_t t = 1; t < rest.size(); ++t)
        if (t != j) next.push_back(rest[t]);
      acc += c * rec(next);
    }
    return acc;
  };
  return rec(r);
}

inline double wick_moment(const RMatrix& cov, const std::vector<int>& indices) {
  return wick_moment<double>([&](int i, int j) { return cov(i, j); }, indices);
}

// ---------------------------------------------------------------------------
// Finite laws on R^m

struct VectorAtom {
  double prob = 0.0;
  std::vector<double> value;
};

class FiniteVectorLaw {
 public:
  explicit FiniteVectorLaw(std::vector<VectorAtom> atoms) : atoms_(std::move(atoms)) {
    if (atoms_.empty()) throw std::invalid_argument("finite law: no atoms");
    dim_ = static_cast<int>(atoms_.front().value.size());
    double total = 0.0;
    for (const auto& a : atoms_) {
      if (a.prob < 0.0) throw std::invalid_argument("finite law: negative probability");
      if (static_cast<int>(a.value.size()) != dim_) throw std::invalid_argument("finite law: ragged atoms");
      total += a.prob;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("finite law: probabilities must sum to 1");
  }

  /// Independent coordinates with the given scalar atoms.
  static FiniteVectorLaw product(const std::vector<std::vector<Atom>>& marginals) {
    std::vector<VectorAtom> out{{1.0, {}}};
    for (const auto& m : marginals) {
      std::vector<VectorAtom> next;
      for (const auto& v : out)
        for (const auto& a : m) {
          auto w = v.value;
          w.push_back(a.value);
          next.push_back({v.prob * a.prob, std::move(w)});
        }
      out = std::move(next);
    }
    return FiniteVectorLaw(std::move(out));
  }

  int dim() const noexcept { return dim_; }
  const std::vector<VectorAtom>& atoms() const noexcept { return atoms_; }

  template <class Fn>
  double expect(Fn&& fn) const {
    double acc = 0.0;
    for (const auto& a : atoms_) acc += a.prob * fn(a.value);
    return acc;
  }

  MomentOracle moment_oracle() const {
    return [this](const std::vector<int>& idx) {
      return expect([&](const std::vector<double>& w) {
        double p = 1.0;
        for (int i : idx) p *= w.at(i);
        return p;
      });
    };
  }

 private:
  std::vector<VectorAtom> atoms_;
  int dim_ = 0;
};

// ---------------------------------------------------------------------------
// Polynomials in m real variables

class Polynomial {
 public:
  using Exponent = std::vector<int>;

  explicit Polynomial(int vars) : vars_(vars) {}

  Polynomial& add(Exponent e, double c) {
    if (static_cast<int>(e.size()) != vars_) throw std::invalid_argument("polynomial: exponent arity");
    for (int x : e)
      if (x < 0) throw std::invalid_argument("polynomial: negative exponent");
    terms_[std::move(e)] += c;
    return *this;
  }

  int vars() const noexcept { return vars_; }
  const std::map<Exponent, double>& terms() const noexcept { return terms_; }

  int degree() const {
    int d = 0;
    for (const auto& [e, c] : terms_)
      if (c != 0.0) d = std::max(d, std::accumulate(e.begin(), e.end(), 0));
    return d;
  }

  double operator()(const std::vector<double>& x) const {
    double acc = 0.0;
    for (const auto& [e, c] : terms_) {
      double t = c;
      for (int i = 0; i < vars_; ++i)
        for (int p = 0; p < e[i]; ++p) t *= x[i];
      acc += t;
    }
    return acc;
  }

  Polynomial derivative(int var) const {
    Polynomial out(vars_);
    for (const auto& [e, c] : terms_) {
      if (e[var] == 0) continue;
      Exponent f = e;
      --f[var];
      out.terms_[f] += c * e[var];
    }
    return out;
  }

 private:
  int vars_;
  std::map<Exponent, double> terms_;
};

/// |E[W_i f(W)] - sum_k (1/k!) sum_J kappa(W_i, W_J) E[d^k f / dW_J]|.
inline double ibp_identity_residual(const FiniteVectorLaw& law, const Polynomial& f, int i) {
  if (f.vars() != law.dim()) throw std::invalid_argument("ibp: polynomial arity does not match the law");
  if (i < 0 || i >= law.dim()) throw std::invalid_argument("ibp: index out of range");
  const double lhs = law.expect([&](const std::vector<double>& w) { return w[i] * f(w); });
  const auto moment = law.moment_oracle();
  const int deg = f.degree();
  const int m = law.dim();
  double rhs = 0.0;
  double fact = 1.0;
  for (int k = 0; k <= deg; ++k) {
    if (k > 0) fact *= k;
    std::vector<int> js(k, 0);
    while (true) {
      Polynomial g = f;
      for (int j : js) g = g.derivative(j);
      if (!g.terms().empty()) {
        std::vector<int> idx{i};
        idx.insert(idx.end(), js.begin(), js.end());
        const double kap = joint_cumulant(moment, idx);
        if (kap != 0.0) rhs += kap * law.expect([&](const std::vector<double>& w) { return g(w); }) / fact;
      }
      int p = k - 1;
      while (p >= 0 && js[p] == m - 1) js[p--] = 0;
      if (p < 0) break;
      ++js[p];
    }
  }
  return std::abs(lhs - rhs);
}

// ---------------------------------------------------------------------------
// Exact Gaussian trace moments

struct GaussianMomentGuard {
  int max_dim = 4;
  int max_power = 6;
};

/// E[tr G^m] for the Gaussian model with the mean and covariance factors of
/// `model`: entrywise over index cycles with G_ab = M_ab + F_ab and the
/// bilinear covariance E[F_ab F_ce] = sum_j (A_j)_ab (A_j)_ce.
inline double gaussian_trace_moment_exact(const MatrixModel& model, int m, const GaussianMomentGuard& guard = {}) {
  const int d = model.dim;
  if (m < 0) throw std::invalid_argument("gaussian_trace_moment_exact: need m >= 0");
  if (d > guard.max_dim || m > guard.max_power)
    throw std::invalid_argument("gaussian_trace_moment_exact: cost guard exceeded (d <= " +
                                std::to_string(guard.max_dim) + ", m <= " + std::to_string(guard.max_power) + ")");
  if (m == 0) return 1.0;
  const auto factors = all_covariance_factors(model);
  const int n = d * d;
  CMatrix k = CMatrix::Zero(n, n);
  for (const auto& f : factors) {
    CVector v = CVector::Zero(n);
    for (const auto& e : f.entries) v(e.row * d + e.col) += e.value;
    k += v * v.transpose();
  }
  const CMatrix& mean = model.mean;
  cplx total{};
  std::vector<int> idx(m, 0);
  std::vector<int> ent(m);
  while (true) {
    for (int p = 0; p < m; ++p) ent[p] = idx[p] * d + idx[(p + 1) % m];
    // split positions into mean and fluctuation parts
    for (int mask = 0; mask < (1 << m); ++mask) {
      const int fluct = __builtin_popcount(static_cast<unsigned>(mask));
      if (fluct % 2) continue;
      cplx prod(1.0);
      std::vector<int> fl;
      for (int p = 0; p < m && prod != cplx{}; ++p) {
        if (mask >> p & 1) {
          fl.push_back(ent[p]);
        } else {
          prod *= mean(idx[p], idx[(p + 1) % m]);
        }
      }
      if (prod == cplx{}) continue;
      total += prod * wick_moment<cplx>([&](int a, int b) { return k(a, b); }, fl);
    }
    int p = m - 1;
    while (p >= 0 && idx[p] == d - 1) idx[p--] = 0;
    if (p < 0) break;
    ++idx[p];
  }
  return total.real() / d;
}

// ---------------------------------------------------------------------------
// Interpolation derivative

struct InterpolationReport {
  int power = 0;
  double t = 0.0;
  std::size_t trials = 0;
  double lhs = 0.0;
  double lhs_stderr = 0.0;
  double rhs = 0.0;
  double rhs_stderr = 0.0;
  /// Standard error of the paired per-trial difference.
  double stderr_ = 0.0;
  double zscore = 0.0;
};

namespace detail {

struct TupleWeight {
  std::vector<int> atoms;
  double weight;
};

/// Tuples (a_1..a_k) of atom indices with weight
/// sum_{pi <= ker a} (-1)^{|pi|-1}(|pi|-1)! prod_B p_{a_B}: the k-th
/// cumulant tensor of the summand is sum_a weight(a) z_{a_1} (x) ... (x) z_{a_k}.
inline std::vector<TupleWeight> cumulant_tuples(const std::vector<double>& probs, int k) {
  const int s = static_cast<int>(probs.size());
  std::vector<Partition> parts = k ? set_partitions(k) : std::vector<Partition>{};
  std::vector<TupleWeight> out;
  std::vector<int> a(k, 0);
  while (true) {
    double w = 0.0;
    for (const auto& pi : parts) {
      double prod = mobius_coefficient(pi.size());
      bool ok = true;
      for (const auto& b : pi) {
        for (int x : b)
          if (a[x] != a[b[0]]) ok = false;
        if (!ok) break;
        prod *= probs[a[b[0]]];
      }
      if (ok) w += prod;
    }
    if (std::abs(w) > 1e-300) out.push_back({a, w});
    int p = k - 1;
    while (p >= 0 && a[p] == s - 1) a[p--] = 0;
    if (p < 0) break;
    ++a[p];
  }
  return out;
}

}  // namespace detail

/// Finite-difference d/dt E[tr X(t)^m] against the cumulant series
/// (1/2) sum_{k=3}^m t^{k/2-1}/(k-1)! sum_i E[D^k tr X^m (X(t))[kappa_k(Z_i)]].
inline InterpolationReport interpolation_derivative_check(const MatrixModel& model, const MatrixModel& counterpart,
                                                          int m, double t, std::size_t trials, std::uint64_t seed,
                                                          int threads = 1, double h = 0.01) {
  if (m < 1 || m > 6) throw std::invalid_argument("interpolation_derivative_check: need 1 <= m <= 6");
  if (!(t - h > 0.0 && t + h < 1.0)) throw std::invalid_argument("interpolation_derivative_check: need h < t < 1-h");
  if (trials < 2) throw std::invalid_argument("interpolation_derivative_check: need at least 2 trials");
  const int d = model.dim;

  struct SummandData {
    std::vector<CMatrix> atoms;
    std::vector<std::vector<detail::TupleWeight>> tuples;  // by k
  };
  std::vector<SummandData> data;
  for (std::size_t i = 0; i < model.summands.size(); ++i) {
    const auto sup = model.summands[i].support();
    if (!sup) throw std::invalid_argument("interpolation_derivative_check: summand " + std::to_string(i) +
                                          " has no finite support");
    SummandData sd;
    std::vector<double> probs;
    for (const auto& a : *sup) {
      sd.atoms.push_back(a.matrix.dense());
      probs.push_back(a.prob);
    }
    sd.tuples.resize(m + 1);
    for (int k = 3; k <= m; ++k) sd.tuples[k] = detail::cumulant_tuples(probs, k);
    data.push_back(std::move(sd));
  }
  // position subsets of size k
  std::vector<std::vector<std::vector<int>>> subsets(m + 1);
  for (int mask = 0; mask < (1 << m); ++mask) {
    std::vector<int> s;
    for (int p = 0; p < m; ++p)
      if (mask >> p & 1) s.push_back(p);
    subsets[s.size()].push_back(s);
  }
  double kfact[7] = {1, 1, 2, 6, 24, 120, 720};

  auto trace_power = [&](const CMatrix& x) {
    CMatrix p = x;
    for (int j = 1; j < m; ++j) p = (p * x).eval();
    return p.trace().real() / d;
  };

  std::vector<double> lhs(trials), rhs(trials);
  parallel_for(trials, threads, [&](std::size_t s) {
    const auto ts = derive_seed(seed, s);
    const CMatrix y = sample_centered(model, derive_seed(ts, 0));
    const CMatrix u = sample_centered(counterpart, derive_seed(ts, 1));
    auto at = [&](double tt) { CMatrix x = model.mean + std::sqrt(tt) * y + std::sqrt(1.0 - tt) * u; return x; };
    lhs[s] = (trace_power(at(t + h)) - trace_power(at(t - h))) / (2.0 * h);
    const CMatrix x = at(t);
    double r = 0.0;
    for (int k = 3; k <= m; ++k) {
      double contraction = 0.0;
      for (const auto& sd : data)
        for (const auto& pos : subsets[k])
          for (const auto& tw : sd.tuples[k]) {
            CMatrix w = CMatrix::Identity(d, d);
            int slot = 0;
            for (int p = 0; p < m; ++p) {
              if (slot < k && pos[slot] == p) {
                w = (w * sd.atoms[tw.atoms[slot]]).eval();
                ++slot;
              } else {
                w = (w * x).eval();
              }
            }
            contraction += tw.weight * w.trace().real() / d;
          }
      r += 0.5 * std::pow(t, 0.5 * k - 1.0) / kfact[k - 1] * kfact[k] * contraction;
    }
    rhs[s] = r;
  });

  auto mean_se = [&](const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double mu = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    return std::make_pair(mu, std::sqrt(ss / (n - 1.0) / n));
  };
  InterpolationReport rep;
  rep.power = m;
  rep.t = t;
  rep.trials = trials;
  std::tie(rep.lhs, rep.lhs_stderr) = mean_se(lhs);
  std::tie(rep.rhs, rep.rhs_stderr) = mean_se(rhs);
  std::vector<double> diff(trials);
  for (std::size_t s = 0; s < trials; ++s) diff[s] = lhs[s] - rhs[s];
  const auto [dm, dse] = mean_se(diff);
  rep.stderr_ = dse;
  rep.zscore = dse > 0.0 ? dm / dse : (dm == 0.0 ? 0.0 : kInf);
  return rep;
}

}  // namespace specuniv
