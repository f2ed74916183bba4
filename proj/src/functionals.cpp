#include "krr/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "krr/errors.hpp"
#include "krr/fixed_point.hpp"
#include "krr/io.hpp"
#include "krr/parallel.hpp"
#include "krr/rng.hpp"

namespace krr {

namespace {

constexpr std::uint64_t kMaxExpanded = std::uint64_t{1} << 26;

Eigen::VectorXd expanded_vector(const Spectrum& s) {
  if (s.total_rank() > kMaxExpanded) throw DomainError("spectrum rank too large to expand");
  const std::vector<double> v = s.expanded();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void check_shape(const TestMatrix& a, Eigen::Index p) {
  if (a.kind() == TestMatrix::Kind::dense && (a.matrix().rows() != p || a.matrix().cols() != p))
    throw DomainError("test matrix: dense A must be p x p");
  if (a.kind() == TestMatrix::Kind::target && a.beta().size() != p)
    throw DomainError("test matrix: beta must have length p");
}

// Functionals of a dense A given R explicitly.
Functionals dense_from_resolvent(const Eigen::MatrixXd& a, const Eigen::MatrixXd& r,
                                 const Eigen::VectorXd& sd, double lambda, double n) {
  const Eigen::MatrixXd m = sd.asDiagonal() * r * sd.asDiagonal();
  const Eigen::MatrixXd rs = r * sd.asDiagonal();
  // S R (X^T X) R S = S R S - lambda S R^2 S
  const Eigen::MatrixXd q = m - lambda * (rs.transpose() * rs);
  return {a.cwiseProduct(m).sum(), 0.0, a.cwiseProduct(m * m).sum(), a.cwiseProduct(q).sum() / n};
}

}  // namespace

FeatureSample sample_gaussian_features(const Spectrum& covariance, std::uint64_t n,
                                       std::uint64_t seed, std::uint64_t stream) {
  if (n == 0) throw DomainError("sample_gaussian_features: n must be positive");
  const Eigen::VectorXd sd = expanded_vector(covariance).cwiseSqrt();
  const auto p = sd.size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), p);
  Stream rng(seed, stream);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = sd[j] * rng.normal();
  return {std::move(x), covariance, seed};
}

TestMatrix TestMatrix::identity() { return {}; }

TestMatrix TestMatrix::dense(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw DomainError("test matrix: A must be square");
  TestMatrix t;
  t.kind_ = Kind::dense;
  t.dense_ = 0.5 * (a + a.transpose());
  return t;
}

TestMatrix TestMatrix::target(Eigen::VectorXd beta) {
  TestMatrix t;
  t.kind_ = Kind::target;
  t.beta_ = std::move(beta);
  return t;
}

Eigen::VectorXd TestMatrix::diagonal(const Spectrum& covariance) const {
  const Eigen::VectorXd xi = expanded_vector(covariance);
  check_shape(*this, xi.size());
  switch (kind_) {
    case Kind::identity: return Eigen::VectorXd::Ones(xi.size());
    case Kind::dense: return dense_.diagonal();
    case Kind::target: return beta_.cwiseQuotient(xi).cwiseAbs2();
  }
  return {};
}

std::vector<Functionals> empirical_functionals(const FeatureSample& sample, double lambda,
                                               const std::vector<TestMatrix>& as,
                                               SolveForm form) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw DomainError("empirical_functionals: lambda must be positive");
  const Eigen::MatrixXd& x = sample.matrix;
  const Eigen::VectorXd xi = expanded_vector(sample.covariance);
  const Eigen::Index n = x.rows(), p = x.cols();
  if (p != xi.size()) throw DomainError("empirical_functionals: feature dimension != rank");
  if (n == 0) throw DomainError("empirical_functionals: empty sample");
  for (const TestMatrix& a : as) check_shape(a, p);
  const Eigen::VectorXd sd = xi.cwiseSqrt();
  const double nn = static_cast<double>(n);
  if (form == SolveForm::automatic) form = p <= 4 * n ? SolveForm::primal : SolveForm::dual;

  std::vector<Functionals> out;
  out.reserve(as.size());

  if (form == SolveForm::primal) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(p, p) * lambda;
    h.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(h.selfadjointView<Eigen::Lower>());
    if (llt.info() != Eigen::Success) throw SolverError("empirical_functionals: factorization failed");
    const Eigen::MatrixXd r = llt.solve(Eigen::MatrixXd::Identity(p, p));
    const double phi2 = (static_cast<double>(p) - lambda * r.trace()) / nn;
    for (const TestMatrix& a : as) {
      Functionals f{};
      switch (a.kind()) {
        case TestMatrix::Kind::identity: {
          const double phi1 = xi.dot(r.diagonal());
          const Eigen::MatrixXd m = sd.asDiagonal() * r * sd.asDiagonal();
          const double sq = xi.dot(r.colwise().squaredNorm().transpose());
          f = {phi1, phi2, m.squaredNorm(), (phi1 - lambda * sq) / nn};
          break;
        }
        case TestMatrix::Kind::dense:
          f = dense_from_resolvent(a.matrix(), r, sd, lambda, nn);
          f[1] = phi2;
          break;
        case TestMatrix::Kind::target: {
          const Eigen::VectorXd v = a.beta().cwiseQuotient(sd);
          const Eigen::VectorXd rv = r * v;
          f = {v.dot(rv), phi2, sd.cwiseProduct(rv).squaredNorm(), (x * rv).squaredNorm() / nn};
          break;
        }
      }
      out.push_back(f);
    }
    return out;
  }

  // Dual: G = (X X^T + lambda)^{-1}, R = (I - X^T G X) / lambda, R X^T = X^T G.
  Eigen::MatrixXd k = Eigen::MatrixXd::Identity(n, n) * lambda;
  k.selfadjointView<Eigen::Lower>().rankUpdate(x);
  Eigen::LLT<Eigen::MatrixXd> llt(k.selfadjointView<Eigen::Lower>());
  if (llt.info() != Eigen::Success) throw SolverError("empirical_functionals: factorization failed");
  const Eigen::MatrixXd g = llt.solve(Eigen::MatrixXd::Identity(n, n));
  const double phi2 = (nn - lambda * g.trace()) / nn;
  Eigen::MatrixXd w;  // G X, built on demand
  auto gx = [&]() -> const Eigen::MatrixXd& {
    if (w.size() == 0) w = g * x;
    return w;
  };
  for (const TestMatrix& a : as) {
    Functionals f{};
    switch (a.kind()) {
      case TestMatrix::Kind::identity: {
        const Eigen::VectorXd pdiag = x.cwiseProduct(gx()).colwise().sum().transpose();
        const Eigen::MatrixXd xs = x * sd.asDiagonal();
        const Eigen::MatrixXd c = xs * xs.transpose();
        const Eigen::MatrixXd gc = g * c;
        const double phi1 = (xi.sum() - xi.dot(pdiag)) / lambda;
        const double phi3 = (xi.squaredNorm() - 2.0 * xi.cwiseAbs2().dot(pdiag) +
                             gc.cwiseProduct(gc.transpose()).sum()) /
                            (lambda * lambda);
        f = {phi1, phi2, phi3, gc.cwiseProduct(g).sum() / nn};
        break;
      }
      case TestMatrix::Kind::dense: {
        Eigen::MatrixXd r = -x.transpose() * gx();
        r.diagonal().array() += 1.0;
        r /= lambda;
        f = dense_from_resolvent(a.matrix(), r, sd, lambda, nn);
        f[1] = phi2;
        break;
      }
      case TestMatrix::Kind::target: {
        const Eigen::VectorXd v = a.beta().cwiseQuotient(sd);
        const Eigen::VectorXd u = x * v;
        const Eigen::VectorXd gu = g * u;
        const Eigen::VectorXd rv = (v - x.transpose() * gu) / lambda;
        f = {(v.squaredNorm() - u.dot(gu)) / lambda, phi2, sd.cwiseProduct(rv).squaredNorm(),
             gu.squaredNorm() / nn};
        break;
      }
    }
    out.push_back(f);
  }
  return out;
}

Functionals empirical_functionals(const FeatureSample& sample, double lambda, const TestMatrix& a,
                                  SolveForm form) {
  return empirical_functionals(sample, lambda, std::vector<TestMatrix>{a}, form).front();
}

Functionals deterministic_functionals(const Spectrum& spectrum, std::uint64_t n, double lambda,
                                      const TestMatrix& a) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw DomainError("deterministic_functionals: lambda must be positive");
  const EffectiveReg reg = solve_effective_reg(spectrum, n, lambda);
  const double denom = 1.0 - reg.upsilon2;
  if (!(denom > 1e-12)) throw SolverError("degenerate denominator: 1 - upsilon2");
  const double mu = reg.mu_star, ls = reg.lambda_star, nn = static_cast<double>(n);

  double s1 = 0.0, s3 = 0.0, s4 = 0.0;
  auto accumulate = [&](double w, double v) {
    const double r = v / (mu * v + lambda);
    const double q = v / (v + ls);
    s1 += w * r;
    s3 += w * r * r;
    s4 += w * q * q;
  };
  if (a.kind() == TestMatrix::Kind::identity) {
    for (const Block& b : spectrum.blocks())
      accumulate(static_cast<double>(b.multiplicity), b.eigenvalue);
  } else {
    const Eigen::VectorXd xi = expanded_vector(spectrum);
    const Eigen::VectorXd d = a.diagonal(spectrum);
    for (Eigen::Index j = 0; j < xi.size(); ++j) accumulate(d[j], xi[j]);
  }
  return {s1, reg.upsilon1, s3 / denom, s4 / (nn * nn * denom)};
}

FunctionalReport functional_report(const FeatureSample& sample, double lambda,
                                   const TestMatrix& a) {
  FunctionalReport rep;
  rep.phi = empirical_functionals(sample, lambda, a);
  rep.psi = deterministic_functionals(sample.covariance, static_cast<std::uint64_t>(sample.matrix.rows()),
                                      lambda, a);
  for (int j = 0; j < 4; ++j) {
    const double d = std::abs(rep.phi[j] - rep.psi[j]);
    rep.rel_err[j] = rep.psi[j] != 0.0 ? d / rep.psi[j]
                     : d == 0.0        ? 0.0
                                       : std::numeric_limits<double>::infinity();
  }
  return rep;
}

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw DomainError("quantile of empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

std::vector<ProbeRow> convergence_probe(const SpectrumFamily& family,
                                        const std::vector<std::uint64_t>& n_grid, double lambda,
                                        const TestMatrix& a, std::uint64_t reps, std::uint64_t seed,
                                        unsigned threads) {
  if (reps < 5) throw DomainError("convergence_probe: reps must be >= 5");
  if (n_grid.empty()) throw DomainError("convergence_probe: empty n grid");
  for (std::size_t i = 0; i < n_grid.size(); ++i)
    if (n_grid[i] == 0 || (i > 0 && n_grid[i] <= n_grid[i - 1]))
      throw DomainError("convergence_probe: n grid must be positive and increasing");

  const std::size_t cells = n_grid.size() * reps;
  std::vector<Functionals> errs(cells);
  parallel_for(cells, threads, [&](std::size_t c) {
    const std::size_t g = c / reps, r = c % reps;
    const Spectrum spec = family(n_grid[g]);
    const FeatureSample s = sample_gaussian_features(spec, n_grid[g], replication_seed(seed, r), g);
    errs[c] = functional_report(s, lambda, a).rel_err;
  });

  std::vector<ProbeRow> rows;
  for (std::size_t g = 0; g < n_grid.size(); ++g) {
    for (int j = 0; j < 4; ++j) {
      std::vector<double> e(reps);
      for (std::size_t r = 0; r < reps; ++r) e[r] = errs[g * reps + r][j];
      rows.push_back({n_grid[g], j + 1, quantile(e, 0.5), quantile(e, 0.25), quantile(e, 0.75),
                      reps, seed});
    }
  }
  return rows;
}

void write_probe_csv(std::ostream& out, const std::vector<ProbeRow>& rows) {
  out << "n,functional_index,median_rel_err,q25,q75,reps,seed\n";
  for (const ProbeRow& r : rows)
    out << r.n << ',' << r.functional_index << ',' << format_double(r.median_rel_err) << ','
        << format_double(r.q25) << ',' << format_double(r.q75) << ',' << r.reps << ',' << r.seed
        << '\n';
}

}  // namespace krr
