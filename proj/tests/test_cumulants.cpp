#include "test_util.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace specuniv;
using namespace testutil;

namespace {

long bell(int n) {
  // B_{n+1} = sum_k C(n, k) B_k
  std::vector<long> b{1};
  for (int i = 0; i < n; ++i) {
    long next = 0, c = 1;
    for (int k = 0; k <= i; ++k) {
      next += c * b[k];
      c = c * (i - k) / (k + 1);
    }
    b.push_back(next);
  }
  return b[n];
}

long double_factorial(int n) {
  long r = 1;
  for (int i = n; i > 1; i -= 2) r *= i;
  return r;
}

/// Random finite law on R^m with `atoms` atoms.
FiniteVectorLaw random_law(std::mt19937_64& rng, int m, int atoms) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::normal_distribution<double> nd;
  std::vector<VectorAtom> a;
  double total = 0.0;
  for (int i = 0; i < atoms; ++i) {
    VectorAtom v{u(rng), {}};
    for (int j = 0; j < m; ++j) v.value.push_back(nd(rng));
    total += v.prob;
    a.push_back(v);
  }
  // renormalize with the last weight absorbing rounding
  double acc = 0.0;
  for (int i = 0; i + 1 < atoms; ++i) acc += (a[i].prob /= total);
  a.back().prob = 1.0 - acc;
  return FiniteVectorLaw(a);
}

Polynomial random_polynomial(std::mt19937_64& rng, int vars, int max_degree, int terms) {
  std::uniform_int_distribution<int> e(0, max_degree);
  std::normal_distribution<double> nd;
  Polynomial f(vars);
  for (int t = 0; t < terms; ++t) {
    std::vector<int> ex(vars);
    int total = 0;
    for (int i = 0; i < vars; ++i) {
      ex[i] = std::min(e(rng), max_degree - total);
      total += ex[i];
    }
    f.add(ex, nd(rng));
  }
  return f;
}

MatrixModel rademacher_series(int d, int count, std::uint64_t seed, ScalarLaw law = ScalarLaw::rademacher()) {
  std::mt19937_64 rng(seed);
  MatrixSeriesRecipe r;
  r.mean = CMatrix::Zero(d, d);
  for (int j = 0; j < count; ++j) r.factors.push_back(random_hermitian(d, rng, true) / std::sqrt(count * d));
  r.law = law;
  return build_model(r);
}

}  // namespace

TEST(Cumulants, SetPartitionCountsAreBellNumbers) {
  EXPECT_EQ(set_partitions(1).size(), 1u);
  EXPECT_EQ(set_partitions(3).size(), 5u);
  EXPECT_EQ(set_partitions(5).size(), 52u);
  for (int k = 1; k <= 8; ++k) {
    const auto ps = set_partitions(k);
    EXPECT_EQ(static_cast<long>(ps.size()), bell(k)) << k;
    std::set<Partition> uniq(ps.begin(), ps.end());
    EXPECT_EQ(uniq.size(), ps.size());
    for (const auto& p : ps) {
      std::vector<int> seen(k, 0);
      for (const auto& b : p)
        for (int x : b) ++seen[x];
      for (int x : seen) EXPECT_EQ(x, 1);
    }
  }
  EXPECT_THROW(set_partitions(0), std::invalid_argument);
  EXPECT_THROW(set_partitions(13), std::invalid_argument);
}

TEST(Cumulants, PartitionOrderIsLexicographicRgs) {
  const auto ps = set_partitions(3);
  // {012}, {01|2}, {02|1}, {0|12}, {0|1|2}
  ASSERT_EQ(ps.size(), 5u);
  EXPECT_EQ(ps[0], (Partition{{0, 1, 2}}));
  EXPECT_EQ(ps[1], (Partition{{0, 1}, {2}}));
  EXPECT_EQ(ps[2], (Partition{{0, 2}, {1}}));
  EXPECT_EQ(ps[3], (Partition{{0}, {1, 2}}));
  EXPECT_EQ(ps[4], (Partition{{0}, {1}, {2}}));
}

TEST(Cumulants, PairPartitionCounts) {
  for (int m = 0; m <= 10; ++m) {
    const auto ps = pair_partitions(m);
    if (m % 2)
      EXPECT_TRUE(ps.empty());
    else
      EXPECT_EQ(static_cast<long>(ps.size()), double_factorial(m - 1)) << m;
  }
}

TEST(Cumulants, RademacherFourthCumulant) {
  const auto law = FiniteVectorLaw::product({{{0.5, 1.0}, {0.5, -1.0}}});
  EXPECT_NEAR(joint_cumulant(law.moment_oracle(), {0, 0, 0, 0}), -2.0, 1e-14);
  EXPECT_NEAR(joint_cumulant(law.moment_oracle(), {0, 0}), 1.0, 1e-14);
  EXPECT_NEAR(joint_cumulant(law.moment_oracle(), {0, 0, 0}), 0.0, 1e-14);
}

TEST(Cumulants, GaussianCumulantsVanish) {
  const RMatrix unit = RMatrix::Identity(1, 1);
  const MomentOracle g1 = [&](const std::vector<int>& idx) { return wick_moment(unit, idx); };
  for (int k = 3; k <= 6; ++k) EXPECT_NEAR(joint_cumulant(g1, std::vector<int>(k, 0)), 0.0, 1e-12) << k;

  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  RMatrix a(3, 3);
  for (int i = 0; i < 9; ++i) a(i / 3, i % 3) = nd(rng);
  const RMatrix cov = a * a.transpose();
  const MomentOracle g = [&](const std::vector<int>& idx) { return wick_moment(cov, idx); };
  EXPECT_NEAR(joint_cumulant(g, {0, 2}), cov(0, 2), 1e-12);
  for (const auto& idx : std::vector<std::vector<int>>{{0, 1, 2}, {0, 0, 1, 2}, {1, 1, 1, 1}, {0, 1, 2, 2, 1}})
    EXPECT_NEAR(joint_cumulant(g, idx), 0.0, 1e-10);
}

TEST(Cumulants, RoundTripOnFiniteLaws) {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 5; ++rep) {
    const auto law = random_law(rng, 3, 5);
    const auto mom = law.moment_oracle();
    const CumulantOracle kap = [&](const std::vector<int>& idx) { return joint_cumulant(mom, idx); };
    for (const auto& idx : std::vector<std::vector<int>>{
             {0}, {1, 2}, {0, 0, 1}, {0, 1, 2, 2}, {2, 2, 2, 2, 2}, {0, 1, 1, 2, 0}})
      EXPECT_NEAR(moments_from_cumulants(kap, idx), mom(idx), 1e-10);
  }
}

TEST(Cumulants, MomentsFromSimpleCumulants) {
  const double mu = 1.3;
  const CumulantOracle only_mean = [&](const std::vector<int>& idx) { return idx.size() == 1 ? mu : 0.0; };
  for (int m = 1; m <= 6; ++m) EXPECT_NEAR(moments_from_cumulants(only_mean, std::vector<int>(m, 0)), std::pow(mu, m), 1e-12);
  const CumulantOracle only_var = [](const std::vector<int>& idx) { return idx.size() == 2 ? 1.0 : 0.0; };
  EXPECT_NEAR(moments_from_cumulants(only_var, {0, 0, 0, 0}), 3.0, 1e-14);
}

TEST(Cumulants, WickBasics) {
  RMatrix one = RMatrix::Identity(1, 1);
  EXPECT_EQ(wick_moment(one, {0, 0}), 1.0);
  EXPECT_EQ(wick_moment(one, {0, 0, 0, 0}), 3.0);
  EXPECT_EQ(wick_moment(one, {0, 0, 0}), 0.0);
  RMatrix c(2, 2);
  c << 2.0, 0.5, 0.5, 1.0;
  EXPECT_EQ(wick_moment(c, {0, 1}), 0.5);
  // E[x^2 y^2] = c00 c11 + 2 c01^2
  EXPECT_NEAR(wick_moment(c, {0, 0, 1, 1}), 2.0 + 2 * 0.25, 1e-15);
}

TEST(Cumulants, IbpConstantAndHandCases) {
  const auto rad = FiniteVectorLaw::product({{{0.5, 1.0}, {0.5, -1.0}}});
  Polynomial c(1);
  c.add({0}, 2.5);
  EXPECT_LE(ibp_identity_residual(rad, c, 0), 1e-15);
  Polynomial cube(1);
  cube.add({3}, 1.0);
  EXPECT_LE(ibp_identity_residual(rad, cube, 0), 1e-12);
  // correlated pair: (1,1), (-1,-1), (1,-1) with unequal weights, centered
  const FiniteVectorLaw pair({{0.4, {1.0, 1.0}}, {0.4, {-1.0, -1.0}}, {0.1, {1.0, -1.0}}, {0.1, {-1.0, 1.0}}});
  Polynomial f(2);
  f.add({2, 1}, 1.0);
  EXPECT_LE(ibp_identity_residual(pair, f, 0), 1e-10);
  EXPECT_LE(ibp_identity_residual(pair, f, 1), 1e-10);
}

TEST(Cumulants, IbpRandomizedSuite) {
  std::mt19937_64 rng(8);
  for (int c = 0; c < 50; ++c) {
    const int m = 1 + c % 3;
    const auto law = random_law(rng, m, 3 + c % 4);
    const auto f = random_polynomial(rng, m, 4, 4);
    EXPECT_LE(ibp_identity_residual(law, f, c % m), 1e-10) << c;
  }
}

TEST(Cumulants, GaussianTraceMomentScalar) {
  const auto g = gaussian_series(CMatrix::Zero(1, 1), {SparseHerm::from_dense(CMatrix::Identity(1, 1))}, "g");
  EXPECT_NEAR(gaussian_trace_moment_exact(g, 4), 3.0, 1e-14);
  EXPECT_NEAR(gaussian_trace_moment_exact(g, 6), 15.0, 1e-13);
  EXPECT_NEAR(gaussian_trace_moment_exact(g, 3), 0.0, 1e-15);
}

TEST(Cumulants, GaussianTraceMomentMeanOnly) {
  std::mt19937_64 rng(9);
  const CMatrix m = random_hermitian(3, rng);
  const auto g = gaussian_series(m, {}, "mean");
  CMatrix p = CMatrix::Identity(3, 3);
  for (int k = 1; k <= 5; ++k) {
    p = p * m;
    EXPECT_NEAR(gaussian_trace_moment_exact(g, k), p.trace().real() / 3.0, 1e-10);
  }
}

TEST(Cumulants, GaussianTraceMomentAgainstMonteCarlo) {
  std::mt19937_64 rng(10);
  std::vector<SparseHerm> fs;
  for (int j = 0; j < 4; ++j) fs.push_back(SparseHerm::from_dense(random_hermitian(2, rng) / 2.0));
  const auto g = gaussian_series(random_hermitian(2, rng) * 0.3, fs, "gue-like");
  for (int m : {2, 3, 4}) {
    const double exact = gaussian_trace_moment_exact(g, m);
    const std::size_t n = 1000000;
    double mu = 0.0, mu2 = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const CMatrix x = sample(g, derive_seed(m, s));
      CMatrix p = x;
      for (int k = 1; k < m; ++k) p = p * x;
      const double v = p.trace().real() / 2.0;
      mu += v;
      mu2 += v * v;
    }
    mu /= n;
    const double se = std::sqrt((mu2 / n - mu * mu) / n);
    EXPECT_NEAR(exact, mu, 4.0 * se) << m;
  }
}

TEST(Cumulants, GaussianTraceMomentGuard) {
  EXPECT_THROW(gaussian_trace_moment_exact(gaussian_counterpart(wigner(5)), 2), std::invalid_argument);
  EXPECT_THROW(gaussian_trace_moment_exact(gaussian_counterpart(wigner(2)), 8), std::invalid_argument);
}

TEST(Cumulants, GaussianTraceMomentMatchesEnumerationForSecondMoment) {
  // E tr X^2 is a covariance quantity, equal for X and G
  const auto x = rademacher_series(3, 4, 11);
  double ex = 0.0;
  for (const auto& o : enumerate_support(x)) ex += o.prob * (o.matrix * o.matrix).trace().real() / 3.0;
  EXPECT_NEAR(gaussian_trace_moment_exact(gaussian_counterpart(x), 2), ex, 1e-12);
}

TEST(Cumulants, InterpolationDerivativeSecondPower) {
  const auto x = rademacher_series(3, 4, 12);
  const auto r = interpolation_derivative_check(x, gaussian_counterpart(x), 2, 0.5, 20000, 1);
  EXPECT_EQ(r.rhs, 0.0);
  EXPECT_LE(std::abs(r.lhs), 4.0 * r.lhs_stderr);
  EXPECT_LE(std::abs(r.zscore), 4.0);
}

TEST(Cumulants, InterpolationDerivativeSymmetricThirdPower) {
  const auto x = rademacher_series(3, 4, 13);
  const auto r = interpolation_derivative_check(x, gaussian_counterpart(x), 3, 0.5, 20000, 2);
  EXPECT_NEAR(r.rhs, 0.0, 1e-12);
  EXPECT_LE(std::abs(r.lhs), 4.0 * r.lhs_stderr);
}

TEST(Cumulants, InterpolationDerivativeAsymmetricThirdPower) {
  const auto x = rademacher_series(2, 3, 14, ScalarLaw::two_point(0.15));
  const auto r = interpolation_derivative_check(x, gaussian_counterpart(x), 3, 0.5, 20000, 3);
  EXPECT_GT(std::abs(r.rhs), 5.0 * r.rhs_stderr);
  EXPECT_LE(std::abs(r.zscore), 4.0);
}

TEST(Cumulants, InterpolationRejectsBadInputs) {
  const auto x = rademacher_series(2, 2, 15);
  const auto g = gaussian_counterpart(x);
  EXPECT_THROW(interpolation_derivative_check(x, g, 7, 0.5, 10, 0), std::invalid_argument);
  EXPECT_THROW(interpolation_derivative_check(x, g, 3, 0.0, 10, 0), std::invalid_argument);
  EXPECT_THROW(interpolation_derivative_check(wigner(2, ScalarLaw::gaussian()), g, 3, 0.5, 10, 0),
               std::invalid_argument);
}
