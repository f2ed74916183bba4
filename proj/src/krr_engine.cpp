#include "krr/krr_engine.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "krr/errors.hpp"
#include "krr/io.hpp"
#include "krr/linalg.hpp"
#include "krr/simd/kernels.hpp"

namespace krr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kFullRank = 1e-10;

void check_lambda(double lambda, const char* who) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw DomainError(std::string(who) + ": lambda must be finite and >= 0");
}

void check_labels(const GramMatrix& gram, const Eigen::VectorXd& y, const char* who) {
  if (y.size() != gram.size()) throw DomainError(std::string(who) + ": label length != Gram size");
}

void require_full_rank(const GramMatrix& gram) {
  const auto [lo, hi] = gram.extreme_eigenvalues();
  if (!(lo > kFullRank * hi)) throw SolverError("interpolation ill-posed: kernel matrix is rank deficient");
}

Eigen::LLT<Eigen::MatrixXd> factor_shifted(const Eigen::MatrixXd& k, double lambda) {
  Eigen::MatrixXd a = k;
  a.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success)
    throw SolverError("K + lambda I is not numerically positive definite");
  return llt;
}

// Solution and inverse trace of (K + lambda) after the lambda = 0 check.
struct Shifted {
  Eigen::VectorXd alpha;
  double inv_trace = 0.0;
};

Shifted solve_shifted(const GramMatrix& gram, const Eigen::VectorXd& y, double lambda) {
  if (lambda == 0.0) require_full_rank(gram);
  const auto llt = factor_shifted(gram.entries(), lambda);
  const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(gram.size(), gram.size()));
  return {llt.solve(y), inv.trace()};
}

}  // namespace

GramMatrix::GramMatrix(Eigen::MatrixXd entries) : k_(std::move(entries)) {
  if (k_.rows() != k_.cols() || k_.rows() == 0) throw DomainError("Gram matrix must be square and nonempty");
  if (!k_.allFinite()) throw DomainError("Gram matrix has non-finite entries");
  const double scale = k_.cwiseAbs().maxCoeff();
  if ((k_ - k_.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw DomainError("Gram matrix is not symmetric");
  k_ = 0.5 * (k_ + k_.transpose()).eval();
}

std::pair<double, double> GramMatrix::extreme_eigenvalues() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k_, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw SolverError("Gram eigendecomposition failed");
  return {es.eigenvalues()(0), es.eigenvalues()(k_.rows() - 1)};
}

void GramMatrix::validate_psd() const {
  const auto [lo, hi] = extreme_eigenvalues();
  const double norm = std::max(std::abs(lo), std::abs(hi));
  if (lo < -1e-8 * norm)
    throw DomainError("Gram matrix is not positive semidefinite (min eigenvalue " +
                      format_double(lo) + ")");
}

KrrFit fit_krr(std::shared_ptr<const GramMatrix> gram, const Eigen::VectorXd& y, double lambda) {
  if (!gram) throw DomainError("fit_krr: null Gram matrix");
  check_lambda(lambda, "fit_krr");
  check_labels(*gram, y, "fit_krr");
  if (lambda == 0.0) require_full_rank(*gram);
  const Eigen::MatrixXd& k = gram->entries();
  const auto llt = factor_shifted(k, lambda);
  Eigen::VectorXd alpha = llt.solve(y);
  auto residual = [&] { return (k * alpha + lambda * alpha - y).norm(); };
  const double tol = 1e-8 * y.norm();
  for (int refine = 0; refine < 3 && residual() > tol; ++refine)
    alpha -= llt.solve(k * alpha + lambda * alpha - y);
  if (residual() > tol) throw SolverError("fit_krr: residual certificate failed");
  return {std::move(alpha), lambda, std::move(gram)};
}

double train_error(const KrrFit& fit, const Eigen::VectorXd& y) {
  if (!fit.gram) throw DomainError("train_error: fit has no Gram matrix");
  check_labels(*fit.gram, y, "train_error");
  return (y - fit.gram->entries() * fit.alpha).squaredNorm() / static_cast<double>(y.size());
}

double empirical_stieltjes(const GramMatrix& gram, double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw DomainError("empirical_stieltjes: lambda must be positive");
  const auto llt = factor_shifted(gram.entries(), lambda);
  const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(gram.size(), gram.size()));
  return inv.trace() / static_cast<double>(gram.size());
}

double gcv(const GramMatrix& gram, const Eigen::VectorXd& y, double lambda) {
  check_lambda(lambda, "gcv");
  check_labels(gram, y, "gcv");
  const Shifted s = solve_shifted(gram, y, lambda);
  return static_cast<double>(y.size()) * s.alpha.squaredNorm() / (s.inv_trace * s.inv_trace);
}

GcvResult gcv_argmin(const GramMatrix& gram, const Eigen::VectorXd& y,
                     const std::vector<double>& lambda_grid) {
  if (lambda_grid.empty()) throw DomainError("gcv_argmin: empty lambda grid");
  for (std::size_t i = 1; i < lambda_grid.size(); ++i)
    if (lambda_grid[i] < lambda_grid[i - 1]) throw DomainError("gcv_argmin: grid must be sorted");
  GcvResult out;
  std::string first_error;
  double best = std::numeric_limits<double>::infinity();
  bool any = false;
  for (double lambda : lambda_grid) {
    GcvPoint pt{lambda, kNaN, {}};
    try {
      pt.value = gcv(gram, y, lambda);
    } catch (const std::exception& e) {
      pt.error = e.what();
      if (first_error.empty()) first_error = pt.error;
    }
    if (pt.error.empty() && pt.value < best) {
      best = pt.value;
      out.lambda_hat = lambda;
      any = true;
    }
    out.curve.push_back(std::move(pt));
  }
  if (!any) throw SolverError("gcv_argmin: every grid point failed (first: " + first_error + ")");
  return out;
}

SpectralSweep::SpectralSweep(const GramMatrix& gram, const Eigen::VectorXd& y) {
  check_labels(gram, y, "SpectralSweep");
  SpectralProjection sp = spectral_projection(gram.entries(), y);
  evals_ = std::move(sp.eigenvalues);
  proj_sq_ = sp.coords.cwiseAbs2();
  max_abs_ = evals_.cwiseAbs().maxCoeff();
  ones_ = Eigen::VectorXd::Ones(evals_.size());
}

SweepPoint SpectralSweep::at(double lambda) const {
  check_lambda(lambda, "SpectralSweep");
  const double lo = evals_(evals_.size() - 1);
  if (lambda == 0.0 && !(lo > kFullRank * evals_(0)))
    throw SolverError("interpolation ill-posed: kernel matrix is rank deficient");
  if (lo + lambda <= 1e-14 * max_abs_)
    throw SolverError("K + lambda I is not numerically positive definite");
  const auto n = static_cast<std::size_t>(evals_.size());
  const simd::ResolventSums r = simd::resolvent_sums(
      {evals_.data(), n}, {ones_.data(), n}, {proj_sq_.data(), n}, lambda);
  const double nn = static_cast<double>(n);
  return {lambda, nn * r.wsq / (r.inv * r.inv), lambda * lambda * r.wsq / nn, r.inv / nn, kNaN};
}

SweepPoint sweep_point_direct(const GramMatrix& gram, const Eigen::VectorXd& y, double lambda) {
  check_lambda(lambda, "sweep_point_direct");
  check_labels(gram, y, "sweep_point_direct");
  const Shifted s = solve_shifted(gram, y, lambda);
  const double nn = static_cast<double>(y.size());
  const double train = (y - gram.entries() * s.alpha).squaredNorm() / nn;
  return {lambda, nn * s.alpha.squaredNorm() / (s.inv_trace * s.inv_trace), train,
          s.inv_trace / nn, kNaN};
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& points) {
  out << "lambda,gcv,train_error,stieltjes,test_error_if_available\n";
  for (const SweepPoint& p : points)
    out << format_double(p.lambda) << ',' << format_double(p.gcv) << ','
        << format_double(p.train_error) << ',' << format_double(p.stieltjes) << ','
        << (std::isnan(p.test_error) ? std::string() : format_double(p.test_error)) << '\n';
}

namespace {

void check_linear(const FeatureSample& sample, const Eigen::VectorXd& theta_star,
                  const Eigen::VectorXd& y, double noise_variance) {
  if (theta_star.size() != sample.matrix.cols())
    throw DomainError("test_error_linear: theta_star length != p");
  if (y.size() != sample.matrix.rows()) throw DomainError("test_error_linear: label length != n");
  if (static_cast<std::uint64_t>(sample.matrix.cols()) != sample.covariance.total_rank())
    throw DomainError("test_error_linear: covariance rank != p");
  if (!(noise_variance >= 0.0)) throw DomainError("test_error_linear: negative noise variance");
}

Eigen::VectorXd covariance_diagonal(const Spectrum& s) {
  const std::vector<double> v = s.expanded();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

bool full_rank(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0) > kFullRank * es.eigenvalues()(a.rows() - 1);
}

}  // namespace

double test_error_linear_exact(const FeatureSample& sample, const Eigen::VectorXd& theta_star,
                               double noise_variance, double lambda, const Eigen::VectorXd& y) {
  check_linear(sample, theta_star, y, noise_variance);
  check_lambda(lambda, "test_error_linear_exact");
  const Eigen::MatrixXd& x = sample.matrix;
  const bool primal = x.cols() <= x.rows();
  Eigen::MatrixXd a = primal ? Eigen::MatrixXd(x.transpose() * x) : Eigen::MatrixXd(x * x.transpose());
  if (lambda == 0.0 && !full_rank(a))
    throw SolverError("interpolation ill-posed: feature Gram matrix is singular");
  a.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw SolverError("test_error_linear_exact: factorization failed");
  const Eigen::VectorXd theta =
      primal ? Eigen::VectorXd(llt.solve(x.transpose() * y)) : Eigen::VectorXd(x.transpose() * llt.solve(y));
  const Eigen::VectorXd diff = theta_star - theta;
  return covariance_diagonal(sample.covariance).dot(diff.cwiseAbs2()) + noise_variance;
}

std::vector<double> test_error_linear_curve(const FeatureSample& sample,
                                            const Eigen::VectorXd& theta_star,
                                            double noise_variance, const Eigen::VectorXd& y,
                                            const std::vector<double>& lambda_grid) {
  check_linear(sample, theta_star, y, noise_variance);
  const Eigen::MatrixXd& x = sample.matrix;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(x * x.transpose());
  if (es.info() != Eigen::Success) throw SolverError("test_error_linear_curve: eigendecomposition failed");
  const Eigen::VectorXd& e = es.eigenvalues();
  const Eigen::VectorXd z = es.eigenvectors().transpose() * y;
  const Eigen::MatrixXd w = x.transpose() * es.eigenvectors();
  const Eigen::VectorXd xi = covariance_diagonal(sample.covariance);
  std::vector<double> out;
  out.reserve(lambda_grid.size());
  for (double lambda : lambda_grid) {
    check_lambda(lambda, "test_error_linear_curve");
    if (lambda == 0.0 && !(e(0) > kFullRank * e(e.size() - 1)))
      throw SolverError("interpolation ill-posed: feature Gram matrix is singular");
    const Eigen::VectorXd coef = z.array() / (e.array() + lambda);
    const Eigen::VectorXd diff = theta_star - w * coef;
    out.push_back(xi.dot(diff.cwiseAbs2()) + noise_variance);
  }
  return out;
}

MonteCarloEstimate test_error_monte_carlo(const KrrFit& fit, const CrossKernel& kernel,
                                          const TargetFunction& target, double noise_variance,
                                          const Eigen::MatrixXd& train_points,
                                          const Eigen::MatrixXd& test_points) {
  const Eigen::Index m = test_points.rows();
  if (m == 0) throw DomainError("test_error_monte_carlo: empty test set");
  if (train_points.rows() != fit.alpha.size())
    throw DomainError("test_error_monte_carlo: train points do not match the fit");
  if (test_points.cols() != train_points.cols())
    throw DomainError("test_error_monte_carlo: point dimensions differ");
  constexpr Eigen::Index kChunk = 2048;
  double sum = 0.0, sum_sq = 0.0;
  for (Eigen::Index start = 0; start < m; start += kChunk) {
    const Eigen::Index rows = std::min(kChunk, m - start);
    const Eigen::MatrixXd pts = test_points.middleRows(start, rows);
    const Eigen::VectorXd pred = kernel(pts, train_points) * fit.alpha;
    const Eigen::VectorXd dev = (target(pts) - pred).cwiseAbs2();
    sum += dev.sum();
    sum_sq += dev.squaredNorm();
  }
  const double mm = static_cast<double>(m);
  const double mean = sum / mm;
  const double var = m > 1 ? std::max(0.0, (sum_sq - mm * mean * mean) / (mm - 1.0)) : 0.0;
  return {mean + noise_variance, std::sqrt(var / mm)};
}

}  // namespace krr
