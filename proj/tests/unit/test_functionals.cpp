#include <cmath>

#include "doctest.h"
#include "krr/errors.hpp"
#include "krr/fixed_point.hpp"
#include "krr/functionals.hpp"
#include "krr/rng.hpp"

using namespace krr;

namespace {

// Straight from the definitions with a dense inverse.
Functionals direct(const FeatureSample& s, double lambda, const Eigen::MatrixXd& a) {
  const Eigen::Index p = s.matrix.cols();
  const double n = static_cast<double>(s.matrix.rows());
  const std::vector<double> xi = s.covariance.expanded();
  Eigen::VectorXd sd(p), var(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    sd[j] = std::sqrt(xi[j]);
    var[j] = xi[j];
  }
  const Eigen::MatrixXd xtx = s.matrix.transpose() * s.matrix;
  const Eigen::MatrixXd r = (xtx + lambda * Eigen::MatrixXd::Identity(p, p)).inverse();
  const Eigen::MatrixXd sr = sd.asDiagonal() * r;
  const Eigen::MatrixXd srs = sr * sd.asDiagonal();
  return {(a * srs).trace(), (xtx * r).trace() / n,
          (a * sr * var.asDiagonal() * sr.transpose()).trace(), (a * sr * (xtx / n) * sr.transpose()).trace()};
}

Eigen::MatrixXd target_dense(const Spectrum& cov, const Eigen::VectorXd& beta) {
  const std::vector<double> xi = cov.expanded();
  Eigen::VectorXd v(beta.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j) v[j] = beta[j] / xi[j];
  return v * v.transpose();
}

Eigen::MatrixXd random_psd(Eigen::Index p, Stream& rng) {
  Eigen::MatrixXd g(p, p);
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < p; ++j) g(i, j) = rng.normal();
  return g * g.transpose() / static_cast<double>(p);
}

void check_close(const Functionals& a, const Functionals& b, double tol) {
  for (int j = 0; j < 4; ++j) CHECK(a[j] == doctest::Approx(b[j]).epsilon(tol).scale(0));
}

Eigen::VectorXd random_beta(Eigen::Index p, Stream& rng) {
  Eigen::VectorXd b(p);
  for (Eigen::Index j = 0; j < p; ++j) b[j] = rng.normal();
  return b / b.norm();
}

}  // namespace

TEST_CASE("zero data matrix") {
  const std::uint64_t p = 7;
  const FeatureSample s{Eigen::MatrixXd::Zero(3, p), Spectrum({{1.0, p}}), 0};
  for (SolveForm f : {SolveForm::primal, SolveForm::dual}) {
    const Functionals phi = empirical_functionals(s, 2.0, TestMatrix::identity(), f);
    CHECK(phi[0] == doctest::Approx(p / 2.0));
    CHECK(std::abs(phi[1]) < 1e-14);
    CHECK(phi[2] == doctest::Approx(p / 4.0));
    CHECK(std::abs(phi[3]) < 1e-14);
  }
}

TEST_CASE("scalar oracle") {
  const FeatureSample s{Eigen::MatrixXd::Constant(1, 1, 2.0), Spectrum({{1.0, 1}}), 0};
  for (const TestMatrix& a : {TestMatrix::identity(), TestMatrix::dense(Eigen::MatrixXd::Ones(1, 1))}) {
    for (SolveForm f : {SolveForm::primal, SolveForm::dual}) {
      const Functionals phi = empirical_functionals(s, 1.0, a, f);
      CHECK(phi[0] == doctest::Approx(0.2));
      CHECK(phi[1] == doctest::Approx(0.8));
      CHECK(phi[2] == doctest::Approx(0.04));
      CHECK(phi[3] == doctest::Approx(0.16));
    }
  }
}

TEST_CASE("zero test matrix") {
  const FeatureSample s = sample_gaussian_features(Spectrum::power_law(30, 1.0), 10, 5);
  const TestMatrix zero = TestMatrix::dense(Eigen::MatrixXd::Zero(30, 30));
  for (SolveForm f : {SolveForm::primal, SolveForm::dual}) {
    const Functionals phi = empirical_functionals(s, 0.5, zero, f);
    CHECK(phi[0] == 0.0);
    CHECK(phi[2] == 0.0);
    CHECK(phi[3] == 0.0);
    CHECK(phi[1] > 0.0);
  }
  const Functionals psi = deterministic_functionals(Spectrum::power_law(30, 1.0), 10, 0.5, zero);
  CHECK(psi[0] == 0.0);
  CHECK(psi[2] == 0.0);
  CHECK(psi[3] == 0.0);
  CHECK(empirical_functionals(s, 0.5, TestMatrix::target(Eigen::VectorXd::Zero(30)))[0] == 0.0);
}

TEST_CASE("domain errors") {
  const FeatureSample s = sample_gaussian_features(Spectrum({{1.0, 4}}), 3, 1);
  CHECK_THROWS_AS(empirical_functionals(s, 0.0, TestMatrix::identity()), DomainError);
  CHECK_THROWS_AS(empirical_functionals(s, -1.0, TestMatrix::identity()), DomainError);
  CHECK_THROWS_AS(empirical_functionals(s, 1.0, TestMatrix::dense(Eigen::MatrixXd::Zero(3, 3))), DomainError);
  CHECK_THROWS_AS(empirical_functionals(s, 1.0, TestMatrix::target(Eigen::VectorXd::Ones(5))), DomainError);
  FeatureSample bad = s;
  bad.matrix = Eigen::MatrixXd::Zero(3, 5);
  CHECK_THROWS_AS(empirical_functionals(bad, 1.0, TestMatrix::identity()), DomainError);
  CHECK_THROWS_AS(deterministic_functionals(Spectrum({{1.0, 4}}), 3, 0.0, TestMatrix::identity()), DomainError);
}

TEST_CASE("sampler shape and covariance") {
  const Spectrum cov({{4.0, 2}, {0.25, 3}});
  const FeatureSample s = sample_gaussian_features(cov, 20000, 42);
  CHECK(s.matrix.rows() == 20000);
  CHECK(s.matrix.cols() == 5);
  const Eigen::VectorXd var = s.matrix.colwise().squaredNorm() / 20000.0;
  CHECK(var[0] == doctest::Approx(4.0).epsilon(0.05));
  CHECK(var[4] == doctest::Approx(0.25).epsilon(0.05));
  const FeatureSample again = sample_gaussian_features(cov, 20000, 42);
  CHECK(again.matrix == s.matrix);
  CHECK(sample_gaussian_features(cov, 20000, 42, 1).matrix != s.matrix);
}

TEST_CASE("primal, dual and direct agree") {
  Stream rng(17);
  struct Shape {
    std::uint64_t n, p;
  };
  for (Shape sh : {Shape{40, 25}, Shape{10, 60}, Shape{30, 30}, Shape{5, 80}}) {
    const Spectrum cov = Spectrum::power_law(sh.p, 1.5);
    const FeatureSample s = sample_gaussian_features(cov, sh.n, 100 + sh.p);
    const Eigen::MatrixXd dense = random_psd(static_cast<Eigen::Index>(sh.p), rng);
    const Eigen::VectorXd beta = random_beta(static_cast<Eigen::Index>(sh.p), rng);
    const double lambda = 0.05;
    const std::vector<TestMatrix> as{TestMatrix::identity(), TestMatrix::dense(dense), TestMatrix::target(beta)};
    const std::vector<Eigen::MatrixXd> oracle{Eigen::MatrixXd::Identity(sh.p, sh.p), dense, target_dense(cov, beta)};
    const auto primal = empirical_functionals(s, lambda, as, SolveForm::primal);
    const auto dual = empirical_functionals(s, lambda, as, SolveForm::dual);
    for (std::size_t k = 0; k < as.size(); ++k) {
      check_close(primal[k], dual[k], 1e-8);
      check_close(primal[k], direct(s, lambda, oracle[k]), 1e-8);
      check_close(empirical_functionals(s, lambda, as[k]), primal[k], 1e-8);
    }
  }
}

TEST_CASE("symmetrization invariance") {
  Stream rng(23);
  const Spectrum cov = Spectrum::power_law(20, 1.0);
  const FeatureSample s = sample_gaussian_features(cov, 15, 9);
  Eigen::MatrixXd a = random_psd(20, rng);
  Eigen::MatrixXd skew(20, 20);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j) skew(i, j) = rng.normal();
  skew = skew - skew.transpose().eval();
  const Functionals sym = empirical_functionals(s, 0.3, TestMatrix::dense(a));
  const Functionals asym = empirical_functionals(s, 0.3, TestMatrix::dense(a + 0.5 * skew));
  check_close(sym, asym, 1e-12);
  check_close(deterministic_functionals(cov, 15, 0.3, TestMatrix::dense(a)),
              deterministic_functionals(cov, 15, 0.3, TestMatrix::dense(a + 0.5 * skew)), 1e-14);
}

TEST_CASE("isotropic deterministic values") {
  const Functionals psi = deterministic_functionals(Spectrum({{1.0, 200}}), 100, 1.0, TestMatrix::identity());
  const double ls = (101 + std::sqrt(10601.0)) / 200;
  CHECK(psi[1] == doctest::Approx(1 - 1 / (100 * ls)).epsilon(1e-13));
  CHECK(psi[1] == doctest::Approx(0.990194).epsilon(1e-6));
  const double mu = 1 / ls, ups2 = 200 / (100 * (1 + ls) * (1 + ls));
  CHECK(psi[0] == doctest::Approx(200 / (mu + 1)).epsilon(1e-13));
  CHECK(psi[2] == doctest::Approx(200 / ((mu + 1) * (mu + 1)) / (1 - ups2)).epsilon(1e-12));
}

TEST_CASE("deterministic identities") {
  Stream rng(31);
  for (int it = 0; it < 40; ++it) {
    const auto p = 2 + static_cast<std::uint64_t>(rng.uniform() * 60);
    const Spectrum cov = Spectrum::power_law(p, 0.5 + 2 * rng.uniform());
    const auto n = 1 + static_cast<std::uint64_t>(rng.uniform() * 100);
    const double lambda = std::pow(10.0, -3 + 3 * rng.uniform());
    const EffectiveReg reg = solve_effective_reg(cov, n, lambda);
    const double nn = static_cast<double>(n);
    for (const TestMatrix& a : {TestMatrix::identity(), TestMatrix::dense(random_psd(static_cast<Eigen::Index>(p), rng)),
                                TestMatrix::target(random_beta(static_cast<Eigen::Index>(p), rng))}) {
      const Functionals psi = deterministic_functionals(cov, n, lambda, a);
      CHECK(psi[1] == doctest::Approx(1 - lambda / (nn * reg.lambda_star)).epsilon(1e-12));
      CHECK(psi[3] == doctest::Approx(reg.mu_star * reg.mu_star / (nn * nn) * psi[2]).epsilon(1e-12));
      for (double v : psi) CHECK(v > 0.0);
    }
  }
}

TEST_CASE("target functionals against the risk equivalents") {
  // With A = Sigma^{-1} beta beta^T Sigma^{-1}, lambda^2 Psi3 is the bias term.
  const Spectrum cov = Spectrum::power_law(50, 1.0);
  Stream rng(3);
  const Eigen::VectorXd beta = random_beta(50, rng);
  const std::uint64_t n = 20;
  const double lambda = 0.1;
  const Functionals psi = deterministic_functionals(cov, n, lambda, TestMatrix::target(beta));
  Alignment al;
  for (Eigen::Index j = 0; j < 50; ++j) al.energies.push_back(beta[j] * beta[j]);
  const DetEquivalents eq = deterministic_equivalents({n, lambda, cov, al, NoiseModel::gaussian(0.0)});
  CHECK(lambda * lambda * psi[2] == doctest::Approx(eq.bias).epsilon(1e-11));
}

TEST_CASE("quantile") {
  CHECK(quantile({3, 1, 2}, 0.5) == 2.0);
  CHECK(quantile({1, 2, 3, 4}, 0.5) == 2.5);
  CHECK(quantile({1, 2, 3, 4}, 0.25) == doctest::Approx(1.75));
  CHECK(quantile({7}, 0.9) == 7.0);
  CHECK_THROWS_AS(quantile({}, 0.5), DomainError);
}

TEST_CASE("convergence probe") {
  const SpectrumFamily fam = [](std::uint64_t) { return Spectrum::power_law(300, 2.0); };
  CHECK_THROWS_AS(convergence_probe(fam, {50, 200}, 0.1, TestMatrix::identity(), 0, 1), DomainError);
  CHECK_THROWS_AS(convergence_probe(fam, {200, 50}, 0.1, TestMatrix::identity(), 10, 1), DomainError);

  const auto rows = convergence_probe(fam, {50, 800}, 0.1, TestMatrix::identity(), 12, 77, 4);
  REQUIRE(rows.size() == 8);
  for (int j = 0; j < 4; ++j) {
    CHECK(rows[j].n == 50);
    CHECK(rows[j].functional_index == j + 1);
    CHECK(rows[4 + j].n == 800);
    CHECK(rows[4 + j].median_rel_err < rows[j].median_rel_err);
    CHECK(rows[j].q25 <= rows[j].median_rel_err);
    CHECK(rows[j].median_rel_err <= rows[j].q75);
  }
  const auto again = convergence_probe(fam, {50, 800}, 0.1, TestMatrix::identity(), 12, 77, 1);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(again[i].median_rel_err == rows[i].median_rel_err);

  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(300);
  e1[0] = 1;
  const auto t = convergence_probe(fam, {50}, 0.1, TestMatrix::target(e1), 5, 3);
  for (const ProbeRow& r : t) CHECK(std::isfinite(r.median_rel_err));
  CHECK(deterministic_functionals(fam(50), 50, 0.1, TestMatrix::target(e1))[2] > 0.0);
}
