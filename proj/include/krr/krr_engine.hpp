#pragma once

// Kernel ridge regression from a Gram matrix: fits, training error, the
// empirical Stieltjes transform, GCV and lambda sweeps, and test error
// (exact for linear features, Monte Carlo otherwise).

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "krr/functionals.hpp"

namespace krr {

/// Immutable symmetric n x n kernel matrix. Construction checks symmetry
/// (and stores the exactly symmetrized matrix); validate_psd() runs the
/// eigenvalue check separately because it costs an eigendecomposition.
class GramMatrix {
 public:
  explicit GramMatrix(Eigen::MatrixXd entries);

  const Eigen::MatrixXd& entries() const noexcept { return k_; }
  Eigen::Index size() const noexcept { return k_.rows(); }

  /// (min, max) eigenvalue.
  std::pair<double, double> extreme_eigenvalues() const;
  /// Throws DomainError when the smallest eigenvalue is below -1e-8 * ||K||.
  void validate_psd() const;

 private:
  Eigen::MatrixXd k_;
};

struct KrrFit {
  Eigen::VectorXd alpha;
  double lambda = 0.0;
  std::shared_ptr<const GramMatrix> gram;
};

/// lambda = 0 needs min eigenvalue > 1e-10 * max, else SolverError("interpolation ill-posed").
KrrFit fit_krr(std::shared_ptr<const GramMatrix> gram, const Eigen::VectorXd& y, double lambda);

/// (1/n) ||y - K alpha||^2.
double train_error(const KrrFit& fit, const Eigen::VectorXd& y);
/// Tr((K + lambda)^{-1}) / n, lambda > 0.
double empirical_stieltjes(const GramMatrix& gram, double lambda);
/// n y^T (K + lambda)^{-2} y / Tr((K + lambda)^{-1})^2.
double gcv(const GramMatrix& gram, const Eigen::VectorXd& y, double lambda);

struct GcvPoint {
  double lambda = 0.0;
  double value = 0.0;  // NaN when the point failed
  std::string error;
};

struct GcvResult {
  double lambda_hat = 0.0;
  std::vector<GcvPoint> curve;
};

/// Grid must be nonempty and sorted ascending; ties go to the smaller lambda.
/// Failed points are recorded in the curve; SolverError if every point fails.
GcvResult gcv_argmin(const GramMatrix& gram, const Eigen::VectorXd& y,
                     const std::vector<double>& lambda_grid);

struct SweepPoint {
  double lambda = 0.0;
  double gcv = 0.0;
  double train_error = 0.0;
  double stieltjes = 0.0;
  double test_error = 0.0;  // NaN when unavailable
};

/// One eigendecomposition of K, then O(n) per lambda.
class SpectralSweep {
 public:
  SpectralSweep(const GramMatrix& gram, const Eigen::VectorXd& y);

  SweepPoint at(double lambda) const;
  /// Descending.
  const Eigen::VectorXd& eigenvalues() const noexcept { return evals_; }

 private:
  Eigen::VectorXd evals_;
  Eigen::VectorXd proj_sq_;  // (V^T y)^2
  Eigen::VectorXd ones_;
  double max_abs_ = 0.0;
};

/// Same quantities with a fresh factorization per lambda.
SweepPoint sweep_point_direct(const GramMatrix& gram, const Eigen::VectorXd& y, double lambda);

/// Columns lambda,gcv,train_error,stieltjes,test_error_if_available.
void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& points);

/// ||theta_* - theta_hat||^2_Sigma + noise_variance, theta_hat the ridge
/// estimator with features X; primal solve when p <= n, dual otherwise.
double test_error_linear_exact(const FeatureSample& sample, const Eigen::VectorXd& theta_star,
                               double noise_variance, double lambda, const Eigen::VectorXd& y);

/// test_error_linear_exact over a lambda grid from one eigendecomposition of X X^T.
std::vector<double> test_error_linear_curve(const FeatureSample& sample,
                                            const Eigen::VectorXd& theta_star,
                                            double noise_variance, const Eigen::VectorXd& y,
                                            const std::vector<double>& lambda_grid);

/// (test points x train points) kernel block.
using CrossKernel = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& test,
                                                  const Eigen::MatrixXd& train)>;
using TargetFunction = std::function<Eigen::VectorXd(const Eigen::MatrixXd& points)>;

struct MonteCarloEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

MonteCarloEstimate test_error_monte_carlo(const KrrFit& fit, const CrossKernel& kernel,
                                          const TargetFunction& target, double noise_variance,
                                          const Eigen::MatrixXd& train_points,
                                          const Eigen::MatrixXd& test_points);

}  // namespace krr
