#include "test_util.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <numbers>

using namespace specuniv;
using namespace testutil;

namespace {

/// All pairings of {0..m-1} as partner arrays.
std::vector<std::vector<int>> all_pairings(int m) {
  std::vector<std::vector<int>> out;
  std::vector<int> partner(m, -1);
  std::function<void()> rec = [&] {
    int i = 0;
    while (i < m && partner[i] >= 0) ++i;
    if (i == m) {
      out.push_back(partner);
      return;
    }
    for (int j = i + 1; j < m; ++j)
      if (partner[j] < 0) {
        partner[i] = j;
        partner[j] = i;
        rec();
        partner[i] = partner[j] = -1;
      }
  };
  if (m % 2 == 0) rec();
  return out;
}

bool crossing(const std::vector<int>& partner) {
  const int m = static_cast<int>(partner.size());
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b) {
      const int c = partner[a], e = partner[b];
      if (c < a || e < b) continue;
      if (a < b && b < c && c < e) return true;
    }
  return false;
}

/// Number of noncrossing pairings of [m] whose pairs join equal letters.
long noncrossing_matching(const std::vector<int>& word) {
  long count = 0;
  for (const auto& p : all_pairings(static_cast<int>(word.size()))) {
    bool ok = !crossing(p);
    for (std::size_t i = 0; ok && i < word.size(); ++i) ok = word[i] == word[p[i]];
    count += ok;
  }
  return count;
}

double binom(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

FreeModel scalar_free(double s0, double mu = 0.0) {
  return free_model(CMatrix::Constant(1, 1, mu), {CMatrix::Constant(1, 1, s0)});
}

CMatrix random_psd(int d, std::mt19937_64& rng) {
  const CMatrix a = random_hermitian(d, rng);
  return a * a.adjoint();
}

}  // namespace

TEST(FreeProb, CatalanMomentsAgainstPairingEnumeration) {
  const auto f = scalar_free(1.0);
  const double catalan[] = {1, 1, 2, 5, 14, 42, 132, 429};
  for (int p = 0; p <= 7; ++p) {
    const long brute = noncrossing_matching(std::vector<int>(2 * p, 0));
    EXPECT_EQ(brute, static_cast<long>(catalan[p]));
    EXPECT_NEAR(ov_semicircular_moment(f, 2 * p), catalan[p], 1e-9);
  }
}

TEST(FreeProb, ScalarMomentsWithMeanAgainstEnumeration) {
  const double mu = 0.6, s0 = 1.3;
  const auto f = scalar_free(s0, mu);
  for (int m = 0; m <= 10; ++m) {
    double oracle = 0.0;
    for (int k = 0; k <= m; k += 2)
      oracle += binom(m, k) * std::pow(mu, m - k) * std::pow(s0, k) * noncrossing_matching(std::vector<int>(k, 0));
    EXPECT_NEAR(ov_semicircular_moment(f, m), oracle, 1e-9 * std::max(1.0, std::abs(oracle))) << m;
  }
}

TEST(FreeProb, OddMomentsVanishAndMeanOnly) {
  const auto f = random_free_model(3, 3, 2, false);
  for (int m : {1, 3, 5, 7}) EXPECT_NEAR(ov_semicircular_moment(f, m), 0.0, 1e-12);
  FreeModel g;
  g.dim = 1;
  g.mean = CMatrix::Constant(1, 1, 1.7);
  for (int m = 0; m <= 6; ++m) EXPECT_NEAR(ov_semicircular_moment(g, m), std::pow(1.7, m), 1e-12);
  EXPECT_THROW(ov_semicircular_moment(f, kMaxSemicircularMoment + 1), std::invalid_argument);
}

TEST(FreeProb, MatrixSecondAndFourthMoments) {
  const auto f = random_free_model(4, 3, 3, false);
  const CMatrix p = f.phi_identity();
  // tr Phi(I) and tr(Phi(I)^2 + Phi(Phi(I))) from the two noncrossing pairings of [4]
  EXPECT_NEAR(ov_semicircular_moment(f, 2), p.trace().real() / 3.0, 1e-12);
  EXPECT_NEAR(ov_semicircular_moment(f, 4), (p * p + f.phi(p)).trace().real() / 3.0, 1e-12);
}

TEST(FreeProb, CounterpartCarriesCovariance) {
  std::mt19937_64 rng(1);
  std::vector<SparseHerm> fs;
  for (int j = 0; j < 3; ++j) fs.push_back(SparseHerm::from_dense(random_hermitian(3, rng)));
  const auto g = gaussian_series(CMatrix::Zero(3, 3), fs, "g");
  const auto f = free_counterpart(g);
  ASSERT_EQ(f.kraus.size(), fs.size());
  for (std::size_t j = 0; j < fs.size(); ++j) EXPECT_EQ(max_abs(f.kraus[j].dense() - fs[j].dense()), 0.0);
  for (const auto& m : {wigner(5), wigner(4, ScalarLaw::two_point(0.2))}) {
    const double s = sigma(m);
    EXPECT_NEAR(free_counterpart(m).sigma2(), s * s, 1e-10);
  }
  const auto sc = free_counterpart(scalar_sign(0.8));
  ASSERT_EQ(sc.kraus.size(), 1u);
  EXPECT_NEAR(std::abs(sc.kraus[0].dense()(0, 0)), 0.8, 1e-15);
}

TEST(FreeProb, PhiIsPositive) {
  std::mt19937_64 rng(2);
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto f = random_free_model(10 + s);
    for (int i = 0; i < 100; ++i) {
      Eigen::SelfAdjointEigenSolver<CMatrix> es(f.phi(random_psd(3, rng)));
      EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
    }
  }
}

TEST(FreeProb, SimpleNormBound) {
  EXPECT_DOUBLE_EQ(simple_norm_bound(scalar_free(1.0)), 2.0);
  const auto f = free_model(3.0 * CMatrix::Identity(2, 2), {CMatrix::Identity(2, 2)});
  EXPECT_DOUBLE_EQ(simple_norm_bound(f), 5.0);
}

TEST(FreeProb, LehnerScalar) {
  for (double s0 : {1.0, 0.3, 2.5}) {
    const auto r = lehner_edge(scalar_free(s0));
    EXPECT_NEAR(r.value, 2.0 * s0, 1e-6);
  }
  const auto r = lehner_edge(scalar_free(1.0, 0.7));
  EXPECT_NEAR(r.value, 2.7, 1e-6);
  EXPECT_THROW(lehner_edge(free_model(CMatrix::Zero(2, 2), {})), std::invalid_argument);
}

TEST(FreeProb, LehnerBlockDiagonal) {
  CMatrix a1 = CMatrix::Zero(2, 2), a2 = CMatrix::Zero(2, 2);
  a1(0, 0) = 0.5;
  a2(1, 1) = 1.5;
  const auto r = lehner_edge(free_model(CMatrix::Zero(2, 2), {a1, a2}));
  EXPECT_NEAR(r.value, 3.0, 1e-6);
}

TEST(FreeProb, LehnerCertificateIsAnUpperBound) {
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto f = random_free_model(20 + s);
    const auto r = lehner_edge(f);
    EXPECT_LE(r.value, simple_norm_bound(f) + 1e-9);
    // the reported value is attained at the certificate
    EXPECT_NEAR(lehner_objective(f, r.certificate), r.value, 1e-8);
    // B = I / sigma gives the simple bound or less
    const double sg = std::sqrt(f.sigma2());
    EXPECT_LE(lehner_objective(f, CMatrix::Identity(3, 3) / sg), simple_norm_bound(f) + 1e-9);
  }
}

TEST(FreeProb, DysonScalarAtTwoI) {
  const cplx g = dyson_resolvent(scalar_free(1.0), cplx(0.0, 2.0))(0, 0);
  EXPECT_NEAR(g.real(), 0.0, 1e-10);
  EXPECT_NEAR(g.imag(), 1.0 - std::sqrt(2.0), 1e-9);
}

TEST(FreeProb, DysonIdentityKrausMatchesScalar) {
  const auto f = free_model(CMatrix::Zero(2, 2), {CMatrix::Identity(2, 2)});
  for (cplx z : {cplx(0.3, 0.5), cplx(-1.7, 0.05), cplx(2.5, 1.0)}) {
    const CMatrix g = dyson_resolvent(f, z);
    const cplx w = z, s = std::sqrt(w * w - 4.0);
    cplx oracle = (w - s) / 2.0;
    if (oracle.imag() > 0.0) oracle = (w + s) / 2.0;
    EXPECT_LE(std::abs(g(0, 0) - oracle), 1e-8);
    EXPECT_LE(std::abs(g(1, 1) - oracle), 1e-8);
    EXPECT_LE(std::abs(g(0, 1)), 1e-8);
  }
}

TEST(FreeProb, DysonAsymptoticsAndInvariants) {
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto f = random_free_model(30 + s);
    const double sig2 = f.sigma2();
    const double y = 1e3 * (1.0 + std::sqrt(sig2));
    const CMatrix g = dyson_resolvent(f, cplx(0.0, y));
    // G(iy) ~ 1/(iy), so iy G(iy) -> I
    const CMatrix dev = cplx(0.0, y) * g - CMatrix::Identity(3, 3);
    Eigen::JacobiSVD<CMatrix> svd(dev);
    EXPECT_LE(svd.singularValues()(0), (herm_norm(f.mean) + sig2 / y) * 2.0 / y);

    DysonOptions opt;
    for (cplx z : {cplx(0.1, 0.01), cplx(-0.8, 0.2), cplx(1.5, 1e-3)}) {
      DysonInfo info;
      const CMatrix gz = dyson_resolvent(f, z, opt, &info);
      const CMatrix inv = (z * CMatrix::Identity(3, 3) - f.mean - f.phi(gz)).inverse();
      EXPECT_LE((gz - inv).norm(), 1e-8);
      const CMatrix im = (gz - gz.adjoint()) / cplx(0.0, 2.0);
      Eigen::SelfAdjointEigenSolver<CMatrix> es(im);
      EXPECT_LE(es.eigenvalues().maxCoeff(), 1e-10);
    }
  }
}

TEST(FreeProb, SemicircleDensityAndEdges) {
  const auto f = scalar_free(1.0);
  const auto c = free_density_extrapolated(f, -2.2, 2.2, 2201);
  const auto mid = c.x.size() / 2;
  EXPECT_NEAR(c.x[mid], 0.0, 1e-12);
  EXPECT_NEAR(c.rho[mid], 1.0 / std::numbers::pi, 1e-3);
  EXPECT_NEAR(c.mass(), 1.0, 1e-3);
  const auto e = support_edges(f);
  EXPECT_NEAR(e.lo, -2.0, 1e-2);
  EXPECT_NEAR(e.hi, 2.0, 1e-2);
  ASSERT_EQ(e.per_eta.size(), 3u);
  // wider eta smears further
  EXPECT_GE(e.per_eta[0].hi, e.per_eta[2].hi);
}

TEST(FreeProb, StieltjesIsNormalizedTrace) {
  const auto f = random_free_model(40);
  const cplx z(0.2, 0.7);
  EXPECT_LE(std::abs(free_stieltjes(f, z) - dyson_resolvent(f, z).trace() / 3.0), 1e-15);
}

TEST(FreeProb, DensityMomentsMatchExactMoments) {
  const auto f = random_free_model(50);
  const auto [lo, hi] = support_window(f);
  const auto c = free_density_extrapolated(f, lo, hi, 2001);
  for (int m = 0; m <= 6; ++m) {
    const double exact = ov_semicircular_moment(f, m);
    const double grid = c.moment(m);
    if (std::abs(exact) > 1e-2)
      EXPECT_NEAR(grid / exact, 1.0, 0.02) << m;
    else
      EXPECT_NEAR(grid, exact, 2e-3) << m;
  }
}

TEST(FreeProb, LehnerAgreesWithSupportEdge) {
  const auto f = random_free_model(60);
  const auto r = lehner_edge(f);
  EXPECT_NEAR(r.value, support_edges(f).hi, 1e-2);
}

TEST(FreeProb, DensityIsThreadIndependent) {
  const auto f = random_free_model(61);
  const auto a = free_density(f, -2.0, 2.0, 300, 1e-2, {}, 1);
  const auto b = free_density(f, -2.0, 2.0, 300, 1e-2, {}, 3);
  EXPECT_EQ(a.rho, b.rho);
}

TEST(FreeProb, WordTracesScalar) {
  const std::vector<FreeModel> fam{scalar_free(1.0), scalar_free(1.0)};
  for (const auto& w : std::vector<std::vector<int>>{{0, 1, 0, 1}, {0, 0, 1, 1}, {0, 0, 0, 0}, {0, 1, 1, 0},
                                                      {0, 0, 1, 1, 0, 0}, {0, 1, 0, 1, 0, 1}}) {
    EXPECT_NEAR(free_word_trace(fam, w), static_cast<double>(noncrossing_matching(w)), 1e-12);
  }
  EXPECT_NEAR(free_word_trace(fam, {0, 1, 0, 1}), 0.0, 1e-15);
  EXPECT_NEAR(free_word_trace(fam, {0, 0, 1, 1}), 1.0, 1e-15);
  EXPECT_NEAR(free_word_trace(fam, {0, 0, 0, 0}), 2.0, 1e-15);
  EXPECT_THROW(free_word_trace(fam, std::vector<int>(kMaxWordLength + 2, 0)), std::invalid_argument);
  EXPECT_THROW(free_word_trace(fam, {0, 2}), std::invalid_argument);
}

TEST(FreeProb, WordTracesMatrixCoefficients) {
  const auto a = random_free_model(70, 3, 2, false), b = random_free_model(71, 3, 2, false);
  const std::vector<FreeModel> fam{a, b};
  const CMatrix pa = a.phi_identity(), pb = b.phi_identity();
  EXPECT_NEAR(free_word_trace(fam, {0, 0, 1, 1}), (pa * pb).trace().real() / 3.0, 1e-12);
  EXPECT_NEAR(free_word_trace(fam, {0, 1, 1, 0}), a.phi(pb).trace().real() / 3.0, 1e-12);
  EXPECT_NEAR(free_word_trace(fam, {0, 1, 0, 1}), 0.0, 1e-15);
}

TEST(FreeProb, IsotropicReductionPreservesWordTraces) {
  // an isotropic 3x3 family versus its explicit scalar reduction
  const auto w = free_counterpart(wigner(3));
  const auto r = reduce_isotropic(w);
  ASSERT_TRUE(r.has_value());
  EXPECT_EQ(r->dim, 1);
  EXPECT_NEAR(r->sigma2(), w.sigma2(), 1e-12);
  const std::vector<FreeModel> fam{w, w};
  for (const auto& word : std::vector<std::vector<int>>{{0, 0, 1, 1}, {0, 0, 0, 0, 1, 1}, {0, 1, 1, 0, 0, 0}})
    EXPECT_NEAR(free_word_trace(fam, word), static_cast<double>(noncrossing_matching(word)), 1e-12);
  EXPECT_FALSE(reduce_isotropic(random_free_model(72)).has_value());
}
