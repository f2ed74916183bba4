#pragma once

// Resolvent functionals of a sampled feature matrix and their deterministic
// counterparts. With S = Sigma^{1/2} and R = (X^T X + lambda)^{-1}:
//   Phi1 = Tr(A S R S)
//   Phi2 = Tr(X^T X R) / n
//   Phi3 = Tr(A S R Sigma R S)
//   Phi4 = Tr(A S R (X^T X / n) R S)
// Covariances are diagonal in the coordinates of the expanded spectrum.

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "krr/spectrum.hpp"

namespace krr {

struct FeatureSample {
  Eigen::MatrixXd matrix;  // n x p, rows are x_i^T
  Spectrum covariance;
  std::uint64_t seed = 0;
};

/// Rows x = Sigma^{1/2} z with z ~ N(0, I_p), drawn from Stream(seed, stream).
FeatureSample sample_gaussian_features(const Spectrum& covariance, std::uint64_t n,
                                       std::uint64_t seed, std::uint64_t stream = 0);

/// The matrix A of the functionals. Target(beta) is the structured rank-one
/// A = Sigma^{-1} beta beta^T Sigma^{-1}, never formed densely.
class TestMatrix {
 public:
  enum class Kind { identity, dense, target };

  static TestMatrix identity();
  /// Stored as (A + A^T) / 2.
  static TestMatrix dense(const Eigen::MatrixXd& a);
  static TestMatrix target(Eigen::VectorXd beta);

  Kind kind() const noexcept { return kind_; }
  const Eigen::MatrixXd& matrix() const noexcept { return dense_; }
  const Eigen::VectorXd& beta() const noexcept { return beta_; }

  /// A_jj over the expanded coordinates of `covariance`.
  Eigen::VectorXd diagonal(const Spectrum& covariance) const;

 private:
  Kind kind_ = Kind::identity;
  Eigen::MatrixXd dense_;
  Eigen::VectorXd beta_;
};

using Functionals = std::array<double, 4>;

/// primal factors the p x p system, dual the n x n one; automatic picks
/// primal when p <= 4n.
enum class SolveForm { automatic, primal, dual };

Functionals empirical_functionals(const FeatureSample& sample, double lambda, const TestMatrix& a,
                                  SolveForm form = SolveForm::automatic);
/// One factorization shared across several test matrices.
std::vector<Functionals> empirical_functionals(const FeatureSample& sample, double lambda,
                                               const std::vector<TestMatrix>& as,
                                               SolveForm form = SolveForm::automatic);

Functionals deterministic_functionals(const Spectrum& spectrum, std::uint64_t n, double lambda,
                                      const TestMatrix& a);

struct FunctionalReport {
  Functionals phi{};
  Functionals psi{};
  Functionals rel_err{};
};

FunctionalReport functional_report(const FeatureSample& sample, double lambda,
                                   const TestMatrix& a);

struct ProbeRow {
  std::uint64_t n = 0;
  int functional_index = 0;  // 1..4
  double median_rel_err = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  std::uint64_t reps = 0;
  std::uint64_t seed = 0;
};

using SpectrumFamily = std::function<Spectrum(std::uint64_t n)>;

/// Replication r at grid point g samples from Stream(replication_seed(seed, r), g).
/// Output ordered by n, then functional index.
std::vector<ProbeRow> convergence_probe(const SpectrumFamily& family,
                                        const std::vector<std::uint64_t>& n_grid, double lambda,
                                        const TestMatrix& a, std::uint64_t reps, std::uint64_t seed,
                                        unsigned threads = 1);

void write_probe_csv(std::ostream& out, const std::vector<ProbeRow>& rows);

/// Linear-interpolated sample quantile, q in [0, 1]. Sorts a copy.
double quantile(std::vector<double> xs, double q);

}  // namespace krr
