#include "krr/sphere.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "krr/errors.hpp"
#include "krr/rng.hpp"
#include "krr/simd/kernels.hpp"

namespace krr {

namespace {

using u128 = unsigned __int128;

constexpr double kTclamp = 1e-12;

void check_d(unsigned d) {
  if (d < 3) throw DomainError("sphere: dimension d must be >= 3");
}

}  // namespace

std::uint64_t dim_spherical(unsigned d, unsigned k) {
  check_d(d);
  if (k == 0) return 1;
  if (k == 1) return d;
  // C(d + k - 3, k - 1) one exact step at a time.
  const u128 top = static_cast<u128>(d) + k - 3;
  u128 c = 1;
  for (unsigned i = 0; i < k - 1; ++i) {
    if (c > (u128(1) << 100)) throw DomainError("dim_spherical: overflow");
    c = c * (top - i) / (i + 1);
  }
  const u128 num = (static_cast<u128>(d) + 2 * static_cast<u128>(k) - 2) * c;
  const u128 b = num / k;
  if (b > std::numeric_limits<std::uint64_t>::max()) throw DomainError("dim_spherical: overflow");
  return static_cast<std::uint64_t>(b);
}

double sphere_moment(unsigned d, unsigned k) {
  check_d(d);
  double m = 1.0;
  for (unsigned i = 0; i < k; ++i) m *= static_cast<double>(d) / (d + 2.0 * i);
  return m;
}

QuadratureRule gauss_gegenbauer(unsigned d, std::size_t count) {
  check_d(d);
  if (count == 0) throw DomainError("gauss_gegenbauer: need at least one node");
  const double alpha = (d - 2.0) / 2.0;
  QuadratureRule rule;
  if (count == 1) {
    rule.nodes = {0.0};
    rule.weights = {1.0};
    return rule;
  }
  // Golub-Welsch on the symmetric Jacobi matrix of the monic recurrence.
  const auto n = static_cast<Eigen::Index>(count);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(n - 1);
  for (Eigen::Index i = 0; i < n - 1; ++i) {
    const double k = static_cast<double>(i + 1);
    sub[i] = std::sqrt(k * (k + 2.0 * alpha - 1.0) / (4.0 * (k + alpha) * (k + alpha - 1.0)));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success) throw SolverError("gauss_gegenbauer: eigensolver failed");
  rule.nodes.resize(count);
  rule.weights.resize(count);
  for (Eigen::Index i = 0; i < n; ++i) {
    rule.nodes[i] = es.eigenvalues()[i];
    const double v = es.eigenvectors()(0, i);
    rule.weights[i] = v * v;
  }
  const double total = std::accumulate(rule.weights.begin(), rule.weights.end(), 0.0);
  for (double& w : rule.weights) w /= total;
  return rule;
}

GegenbauerBasis::GegenbauerBasis(unsigned d, unsigned kmax) : d_(d), kmax_(kmax) {
  check_d(d);
  const double alpha = (d - 2.0) / 2.0;
  a_.resize(kmax);
  b_.resize(kmax);
  for (unsigned k = 0; k < kmax; ++k) {
    a_[k] = 2.0 * (k + alpha) / (k + 1.0);
    b_[k] = (k + 2.0 * alpha - 1.0) / (k + 1.0);
  }
  const QuadratureRule rule = gauss_gegenbauer(d, 4 * static_cast<std::size_t>(kmax) + 16);
  std::vector<double> norm_sq(kmax + 1, 0.0);
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double t = rule.nodes[i];
    double prev = 0.0, cur = 1.0;
    for (unsigned k = 0; k <= kmax; ++k) {
      norm_sq[k] += rule.weights[i] * cur * cur;
      if (k < kmax) {
        const double next = a_[k] * t * cur - b_[k] * prev;
        prev = cur;
        cur = next;
      }
    }
  }
  inv_norm_.resize(kmax + 1);
  for (unsigned k = 0; k <= kmax; ++k) inv_norm_[k] = 1.0 / std::sqrt(norm_sq[k]);
  inv_norm_[0] = 1.0;  // tau_d is a probability law
}

std::vector<double> GegenbauerBasis::eval_all(double t) const {
  std::vector<double> out(kmax_ + 1);
  double prev = 0.0, cur = 1.0;
  for (unsigned k = 0; k <= kmax_; ++k) {
    out[k] = cur * inv_norm_[k];
    if (k < kmax_) {
      const double next = a_[k] * t * cur - b_[k] * prev;
      prev = cur;
      cur = next;
    }
  }
  return out;
}

double GegenbauerBasis::eval(unsigned k, double t) const {
  if (k > kmax_) throw DomainError("gegenbauer: degree above kmax");
  if (std::abs(t) > 1.0 + kTclamp) throw DomainError("gegenbauer: t outside [-1, 1]");
  t = std::clamp(t, -1.0, 1.0);
  double prev = 0.0, cur = 1.0;
  for (unsigned j = 0; j < k; ++j) {
    const double next = a_[j] * t * cur - b_[j] * prev;
    prev = cur;
    cur = next;
  }
  return cur * inv_norm_[k];
}

void GegenbauerBasis::series(std::span<const double> c, std::span<const double> t,
                             std::span<double> out) const {
  if (c.size() > kmax_ + 1) throw DomainError("gegenbauer series: degree above kmax");
  std::vector<double> scaled(c.size());
  for (std::size_t k = 0; k < c.size(); ++k) scaled[k] = c[k] * inv_norm_[k];
  simd::polynomial_series({a_, b_}, scaled, t, out);
}

double gegenbauer_eval(const GegenbauerBasis& basis, unsigned k, double t) {
  return basis.eval(k, t);
}

SphereKernel::SphereKernel(unsigned d, std::vector<double> coeffs, double tail_trace)
    : d_(d), coeffs_(std::move(coeffs)), tail_trace_(tail_trace) {
  check_d(d);
  if (coeffs_.empty()) throw DomainError("sphere kernel: at least one coefficient required");
  if (!(tail_trace_ >= 0.0)) throw DomainError("sphere kernel: tail trace must be >= 0");
  for (double c : coeffs_)
    if (!(c >= 0.0) || !std::isfinite(c))
      throw DomainError("sphere kernel: coefficients must be finite and >= 0");
  basis_ = std::make_shared<const GegenbauerBasis>(d, degree());
  series_h_.resize(coeffs_.size());
  series_h2_.resize(coeffs_.size());
  for (unsigned k = 0; k < coeffs_.size(); ++k) {
    const double b = static_cast<double>(dim_spherical(d, k));
    series_h_[k] = coeffs_[k] * std::sqrt(b);
    series_h2_[k] = coeffs_[k] * coeffs_[k] * std::sqrt(b);
    h_one_ += coeffs_[k] * b;
  }
}

double SphereKernel::h(double t) const {
  double out = 0.0;
  h(std::span<const double>(&t, 1), std::span<double>(&out, 1));
  return out;
}

void SphereKernel::h(std::span<const double> t, std::span<double> out) const {
  basis_->series(series_h_, t, out);
}

void SphereKernel::h2(std::span<const double> t, std::span<double> out) const {
  basis_->series(series_h2_, t, out);
}

Eigen::MatrixXd SphereKernel::build(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                    const std::vector<double>& series_coeffs,
                                    bool symmetric) const {
  if (a.cols() != d_ || b.cols() != d_) throw DomainError("sphere kernel: points must have d columns");
  constexpr Eigen::Index kBlock = 256;
  Eigen::MatrixXd out(a.rows(), b.rows());
  const double inv_d = 1.0 / d_;
  for (Eigen::Index r0 = 0; r0 < a.rows(); r0 += kBlock) {
    const Eigen::Index rows = std::min(kBlock, a.rows() - r0);
    Eigen::MatrixXd t = (a.middleRows(r0, rows) * b.transpose()) * inv_d;
    t = t.cwiseMax(-1.0).cwiseMin(1.0);
    Eigen::MatrixXd v(rows, b.rows());
    const auto size = static_cast<std::size_t>(t.size());
    basis_->series(series_coeffs, {t.data(), size}, {v.data(), size});
    out.middleRows(r0, rows) = v;
  }
  if (symmetric) out.triangularView<Eigen::StrictlyLower>() = out.transpose().eval();
  return out;
}

Eigen::MatrixXd SphereKernel::gram(const Eigen::MatrixXd& points) const {
  return build(points, points, series_h_, true);
}

Eigen::MatrixXd SphereKernel::gram_h2(const Eigen::MatrixXd& points) const {
  return build(points, points, series_h2_, true);
}

Eigen::MatrixXd SphereKernel::cross(const Eigen::MatrixXd& test, const Eigen::MatrixXd& train) const {
  return build(test, train, series_h_, false);
}

SphereKernel kernel_from_gaps(unsigned d, unsigned levels, double gap) {
  if (levels < 1) throw DomainError("kernel_from_gaps: need at least one level");
  if (!(gap > 0.0) || !std::isfinite(gap)) throw DomainError("kernel_from_gaps: gap must be positive");
  std::vector<double> c(levels + 1, 0.0);
  for (unsigned k = 1; k <= levels; ++k) c[k] = std::pow(gap, -(static_cast<double>(k) - 1.0));
  return SphereKernel(d, std::move(c));
}

std::vector<double> kernel_eigencoeffs(const std::function<double(double)>& h, unsigned d,
                                       unsigned kmax) {
  const GegenbauerBasis basis(d, kmax);
  auto project = [&](std::size_t count) {
    const QuadratureRule rule = gauss_gegenbauer(d, count);
    std::vector<double> m(kmax + 1, 0.0);
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double hv = h(rule.nodes[i]);
      const std::vector<double> q = basis.eval_all(rule.nodes[i]);
      for (unsigned k = 0; k <= kmax; ++k) m[k] += rule.weights[i] * hv * q[k];
    }
    return m;
  };
  constexpr std::size_t kMaxNodes = 1024;
  std::size_t count = 4 * static_cast<std::size_t>(kmax) + 16;
  std::vector<double> prev = project(count);
  double diff = std::numeric_limits<double>::infinity();
  while (count < kMaxNodes) {
    count = std::min(2 * count, kMaxNodes);
    std::vector<double> cur = project(count);
    double scale = 1.0;
    for (double v : cur) scale = std::max(scale, std::abs(v));
    diff = 0.0;
    for (unsigned k = 0; k <= kmax; ++k) diff = std::max(diff, std::abs(cur[k] - prev[k]) / scale);
    prev = std::move(cur);
    if (diff <= 1e-10) break;
  }
  if (diff > 1e-6) throw SolverError("kernel_eigencoeffs: quadrature did not converge");

  const double h1 = std::abs(h(1.0));
  std::vector<double> xi(kmax + 1);
  for (unsigned k = 0; k <= kmax; ++k) {
    double v = prev[k] / std::sqrt(static_cast<double>(dim_spherical(d, k)));
    if (v < 0.0) {
      if (-v > 1e-10 * h1)
        throw DomainError("kernel_eigencoeffs: negative eigenvalue, h is not positive definite at this d");
      v = 0.0;
    }
    xi[k] = v;
  }
  return xi;
}

Eigen::MatrixXd sample_sphere(unsigned d, std::uint64_t n, std::uint64_t seed,
                              std::uint64_t stream) {
  if (d < 1 || n < 1) throw DomainError("sample_sphere: d and n must be positive");
  Eigen::MatrixXd u(static_cast<Eigen::Index>(n), d);
  Stream rng(seed, stream);
  const double radius = std::sqrt(static_cast<double>(d));
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    for (unsigned j = 0; j < d; ++j) u(i, j) = rng.normal();
    u.row(i) *= radius / u.row(i).norm();
  }
  return u;
}

SphereTarget::SphereTarget(unsigned d, std::vector<Level> levels) : d_(d), levels_(std::move(levels)) {
  check_d(d);
  std::sort(levels_.begin(), levels_.end(), [](const Level& a, const Level& b) { return a.k < b.k; });
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (levels_[i].k < 1 || levels_[i].k > d) throw DomainError("sphere target: degrees must lie in [1, d]");
    if (i > 0 && levels_[i].k == levels_[i - 1].k) throw DomainError("sphere target: repeated degree");
    if (!std::isfinite(levels_[i].coefficient)) throw DomainError("sphere target: non-finite coefficient");
  }
}

double SphereTarget::level_energy(unsigned k) const {
  for (const Level& l : levels_) {
    if (l.k != k) continue;
    const double windows = k == d_ ? static_cast<double>(d_) * d_ : static_cast<double>(d_);
    return l.coefficient * l.coefficient * windows * sphere_moment(d_, k);
  }
  return 0.0;
}

double SphereTarget::norm_sq() const {
  double s = 0.0;
  for (const Level& l : levels_) s += level_energy(l.k);
  return s;
}

Eigen::VectorXd SphereTarget::eval_level(const Eigen::MatrixXd& points, unsigned k) const {
  if (points.cols() != d_) throw DomainError("sphere target: points must have d columns");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(points.rows());
  const auto it = std::find_if(levels_.begin(), levels_.end(), [k](const Level& l) { return l.k == k; });
  if (it == levels_.end()) return out;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double s = 0.0;
    for (unsigned j = 0; j < d_; ++j) {
      double prod = 1.0;
      for (unsigned t = 0; t < k; ++t) prod *= points(i, (j + t) % d_);
      s += prod;
    }
    out[i] = it->coefficient * s;
  }
  return out;
}

Eigen::VectorXd SphereTarget::eval(const Eigen::MatrixXd& points) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(points.rows());
  for (const Level& l : levels_) out += eval_level(points, l.k);
  return out;
}

SphereTarget build_cyclic_target(unsigned d, const std::map<unsigned, double>& energies) {
  check_d(d);
  std::vector<SphereTarget::Level> levels;
  for (const auto& [k, e] : energies) {
    if (k < 1 || k > d) throw DomainError("build_cyclic_target: degree must lie in [1, d]");
    if (!(e >= 0.0) || !std::isfinite(e)) throw DomainError("build_cyclic_target: energies must be >= 0");
    const double windows = k == d ? static_cast<double>(d) * d : static_cast<double>(d);
    levels.push_back({k, std::sqrt(e / (windows * sphere_moment(d, k)))});
  }
  return SphereTarget(d, std::move(levels));
}

ModelSpec sphere_spectrum(const SphereKernel& kernel, const SphereTarget& target,
                          const NoiseModel& noise, std::uint64_t n, double lambda,
                          const PseudoTail& tail) {
  if (kernel.d() != target.d()) throw DomainError("sphere_spectrum: kernel and target dimensions differ");
  struct Entry {
    double xi;
    std::uint64_t mult;
    double energy;
  };
  std::vector<Entry> entries;
  double residual = 0.0;
  const auto& c = kernel.coeffs();
  for (unsigned k = 0; k < c.size(); ++k) {
    if (c[k] > 0.0)
      entries.push_back({c[k], dim_spherical(kernel.d(), k), target.level_energy(k)});
    else
      residual += target.level_energy(k);
  }
  for (const auto& l : target.levels())
    if (l.k >= c.size()) residual += target.level_energy(l.k);
  if (tail.enabled && kernel.tail_trace() > 0.0) {
    if (tail.multiplicity == 0) throw DomainError("sphere_spectrum: pseudo tail multiplicity must be positive");
    entries.push_back({kernel.tail_trace() / static_cast<double>(tail.multiplicity), tail.multiplicity, 0.0});
  }
  if (entries.empty()) throw DomainError("sphere_spectrum: kernel has no positive eigenvalue");
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.xi > b.xi; });
  std::vector<Block> blocks;
  Alignment align;
  for (const Entry& e : entries) {
    blocks.push_back({e.xi, e.mult});
    align.energies.push_back(e.energy);
  }
  align.residual_energy = residual;
  ModelSpec spec{n, lambda, Spectrum(std::move(blocks)), std::move(align), noise};
  spec.validate();
  return spec;
}

double exact_sphere_risk(const KrrFit& fit, const SphereKernel& kernel, const SphereTarget& target,
                         double noise_variance, const Eigen::MatrixXd& train_points) {
  if (kernel.d() != target.d()) throw DomainError("exact_sphere_risk: kernel and target dimensions differ");
  if (train_points.rows() != fit.alpha.size() || train_points.cols() != kernel.d())
    throw DomainError("exact_sphere_risk: train points do not match the fit");
  if (!(noise_variance >= 0.0)) throw DomainError("exact_sphere_risk: negative noise variance");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(train_points.rows());
  const auto& c = kernel.coeffs();
  for (const auto& l : target.levels())
    if (l.k < c.size() && c[l.k] > 0.0) v += c[l.k] * target.eval_level(train_points, l.k);
  const Eigen::MatrixXd h2 = kernel.gram_h2(train_points);
  const double excess =
      target.norm_sq() - 2.0 * fit.alpha.dot(v) + fit.alpha.dot(h2 * fit.alpha);
  return std::max(excess, 0.0) + noise_variance;
}

nlohmann::json to_json(const SphereKernel& kernel) {
  return {{"d", kernel.d()}, {"coeffs", kernel.coeffs()}, {"tail_trace", kernel.tail_trace()}};
}

SphereKernel sphere_kernel_from_json(const nlohmann::json& j) {
  return SphereKernel(j.at("d").get<unsigned>(), j.at("coeffs").get<std::vector<double>>(),
                      j.value("tail_trace", 0.0));
}

nlohmann::json to_json(const SphereTarget& target) {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& l : target.levels())
    levels.push_back({{"k", l.k}, {"coefficient", l.coefficient}, {"energy", target.level_energy(l.k)}});
  return {{"d", target.d()}, {"levels", levels}};
}

SphereTarget sphere_target_from_json(const nlohmann::json& j) {
  std::vector<SphereTarget::Level> levels;
  for (const auto& l : j.at("levels")) levels.push_back({l.at("k").get<unsigned>(), l.at("coefficient").get<double>()});
  return SphereTarget(j.at("d").get<unsigned>(), std::move(levels));
}

}  // namespace krr
