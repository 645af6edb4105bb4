#pragma once

// Shared vocabulary for the toolkit: matrix aliases, sparse Hermitian terms,
// seed derivation, a small splittable generator and the error types.

#include <Eigen/Dense>

#include <algorithm>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

namespace specuniv {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr std::string_view kVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Errors. Exit codes of the CLI are derived from the dynamic type.

class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// ---------------------------------------------------------------------------
// Seeds

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGoldenOdd = 0x9E3779B97F4A7C15ULL;

/// Child seed i of `seed`; every random draw in the toolkit flows through this.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t i) noexcept {
  return mix64(seed ^ (kGoldenOdd * (i + 1)));
}

/// Counter-based splitmix64 stream. Cheap to construct, so every summand
/// and every trial owns one.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }
  result_type operator()() noexcept {
    state_ += kGoldenOdd;
    return mix64(state_);
  }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  /// Uniform in (0, 1).
  double uniform_open() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Sparse Hermitian terms

struct SparseEntry {
  int row = 0;
  int col = 0;
  cplx value{};
};

/// A d x d matrix stored as its nonzero entries (both triangles present).
/// Covariance factors, second-moment oracles and finite-support atoms all
/// use this form so that models with O(d^2) summands stay cheap.
struct SparseHerm {
  int dim = 0;
  std::vector<SparseEntry> entries;

  SparseHerm() = default;
  explicit SparseHerm(int d) : dim(d) {}

  static SparseHerm from_dense(const CMatrix& m, double drop = 0.0) {
    SparseHerm s(static_cast<int>(m.rows()));
    for (int j = 0; j < m.cols(); ++j)
      for (int i = 0; i < m.rows(); ++i)
        if (std::abs(m(i, j)) > drop) s.entries.push_back({i, j, m(i, j)});
    return s;
  }

  CMatrix dense() const {
    CMatrix m = CMatrix::Zero(dim, dim);
    for (const auto& e : entries) m(e.row, e.col) += e.value;
    return m;
  }

  void add_to(CMatrix& acc, cplx scale) const {
    for (const auto& e : entries) acc(e.row, e.col) += scale * e.value;
  }

  SparseHerm scaled(cplx s) const {
    SparseHerm out = *this;
    for (auto& e : out.entries) e.value *= s;
    return out;
  }

  /// y = S x
  CVector apply(const CVector& x) const {
    CVector y = CVector::Zero(dim);
    for (const auto& e : entries) y(e.row) += e.value * x(e.col);
    return y;
  }

  /// Row/column indices touched by the term, sorted and unique.
  std::vector<int> support_indices() const {
    std::vector<int> idx;
    idx.reserve(entries.size() * 2);
    for (const auto& e : entries) {
      idx.push_back(e.row);
      idx.push_back(e.col);
    }
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    return idx;
  }

  /// Principal submatrix on support_indices(); its nonzero spectrum is the
  /// nonzero spectrum of the full matrix.
  CMatrix compressed(const std::vector<int>& idx) const {
    const int k = static_cast<int>(idx.size());
    CMatrix m = CMatrix::Zero(k, k);
    for (const auto& e : entries) {
      const auto r = std::lower_bound(idx.begin(), idx.end(), e.row) - idx.begin();
      const auto c = std::lower_bound(idx.begin(), idx.end(), e.col) - idx.begin();
      m(r, c) += e.value;
    }
    return m;
  }

  double max_hermitian_defect() const {
    std::map<std::pair<int, int>, cplx> sum;
    for (const auto& e : entries) sum[{e.row, e.col}] += e.value;
    double worst = 0.0;
    for (const auto& [rc, v] : sum) {
      const auto it = sum.find({rc.second, rc.first});
      const cplx mirror = it == sum.end() ? cplx{} : std::conj(it->second);
      worst = std::max(worst, std::abs(v - mirror));
    }
    return worst;
  }
};

/// Tr(A B) for sparse A, B.
inline cplx trace_product(const SparseHerm& a, const SparseHerm& b) {
  // Tr(AB) = sum_{i,j} A_ij B_ji
  cplx acc{};
  if (a.entries.size() * b.entries.size() <= 4096) {
    for (const auto& x : a.entries)
      for (const auto& y : b.entries)
        if (x.row == y.col && x.col == y.row) acc += x.value * y.value;
    return acc;
  }
  std::vector<SparseEntry> bt = b.entries;
  auto key = [](int r, int c) { return std::pair<int, int>(r, c); };
  std::sort(bt.begin(), bt.end(), [&](const SparseEntry& l, const SparseEntry& r) {
    return key(l.col, l.row) < key(r.col, r.row);
  });
  for (const auto& x : a.entries) {
    auto it = std::lower_bound(bt.begin(), bt.end(), key(x.row, x.col),
                               [&](const SparseEntry& e, const std::pair<int, int>& k) {
                                 return key(e.col, e.row) < k;
                               });
    for (; it != bt.end() && it->col == x.row && it->row == x.col; ++it) acc += x.value * it->value;
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Threads

/// Default worker count: SPECUNIV_THREADS, else hardware concurrency.
inline int default_threads() {
  if (const char* env = std::getenv("SPECUNIV_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(i) for i in [0, count) on `threads` workers with static chunks.
/// fn must write only to slot i; results are then independent of `threads`.
template <class Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), std::max<std::size_t>(count, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace specuniv
