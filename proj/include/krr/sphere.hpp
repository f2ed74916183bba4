#pragma once

// Inner-product kernels on the sphere of radius sqrt(d) in R^d.
//
// Q_k are the Gegenbauer polynomials orthonormal for the law tau_d of
// <u, e_1>/sqrt(d), whose density on [-1, 1] is proportional to
// (1 - t^2)^{(d-3)/2}. A kernel h(t) = sum_k xi_k sqrt(B_{d,k}) Q_k(t) has
// eigenvalue xi_k with multiplicity B_{d,k} (the degree-k harmonics).

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "krr/krr_engine.hpp"
#include "krr/spectrum.hpp"

namespace krr {

/// B_{d,k}, exact. Throws DomainError for d < 3 or if the result overflows 64 bits.
std::uint64_t dim_spherical(unsigned d, unsigned k);

/// E[u_1^2 ... u_k^2] on the radius-sqrt(d) sphere: d^k / prod_{i<k} (d + 2i).
double sphere_moment(unsigned d, unsigned k);

/// Gauss rule for tau_d with probability weights (sum to 1).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

QuadratureRule gauss_gegenbauer(unsigned d, std::size_t count);

class GegenbauerBasis {
 public:
  explicit GegenbauerBasis(unsigned d, unsigned kmax = 12);

  unsigned d() const noexcept { return d_; }
  unsigned kmax() const noexcept { return kmax_; }

  /// Q_k(t); |t| may exceed 1 by at most 1e-12 (clamped).
  double eval(unsigned k, double t) const;
  /// Q_0(t) .. Q_kmax(t).
  std::vector<double> eval_all(double t) const;
  /// out[i] = sum_k c[k] Q_k(t[i]), c.size() <= kmax + 1.
  void series(std::span<const double> c, std::span<const double> t, std::span<double> out) const;

 private:
  unsigned d_;
  unsigned kmax_;
  std::vector<double> a_, b_;    // classical recurrence, C_{k+1} = a_k t C_k - b_k C_{k-1}
  std::vector<double> inv_norm_;  // 1 / ||C_k||
};

/// gegenbauer_eval: Q_k(t), DomainError for k > kmax or |t| > 1 + 1e-12.
double gegenbauer_eval(const GegenbauerBasis& basis, unsigned k, double t);

class SphereKernel {
 public:
  /// coeffs[k] = xi_k >= 0 for k = 0..K. tail_trace is the trace beyond K
  /// (zero for a band-limited kernel), kept for reporting.
  SphereKernel(unsigned d, std::vector<double> coeffs, double tail_trace = 0.0);

  unsigned d() const noexcept { return d_; }
  const std::vector<double>& coeffs() const noexcept { return coeffs_; }
  unsigned degree() const noexcept { return static_cast<unsigned>(coeffs_.size() - 1); }
  double tail_trace() const noexcept { return tail_trace_; }
  const GegenbauerBasis& basis() const noexcept { return *basis_; }

  double h(double t) const;
  /// sum_k xi_k B_{d,k}
  double h_at_one() const noexcept { return h_one_; }
  void h(std::span<const double> t, std::span<double> out) const;
  /// h_2(t) = sum_k xi_k^2 sqrt(B_{d,k}) Q_k(t): the kernel of E_u[h(<a,u>/d) h(<u,b>/d)].
  void h2(std::span<const double> t, std::span<double> out) const;

  /// K_ij = h(<u_i, u_j>/d) built in row blocks; points must lie on the sphere.
  Eigen::MatrixXd gram(const Eigen::MatrixXd& points) const;
  Eigen::MatrixXd gram_h2(const Eigen::MatrixXd& points) const;
  /// (test x train) block of h(<a, b>/d).
  Eigen::MatrixXd cross(const Eigen::MatrixXd& test, const Eigen::MatrixXd& train) const;

 private:
  Eigen::MatrixXd build(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                        const std::vector<double>& series_coeffs, bool symmetric) const;

  unsigned d_;
  std::vector<double> coeffs_;
  double tail_trace_;
  double h_one_ = 0.0;
  std::shared_ptr<const GegenbauerBasis> basis_;
  std::vector<double> series_h_, series_h2_;  // coefficients on the Q_k
};

/// xi_k = gap^{-(k-1)} for k = 1..levels, xi_0 = 0.
SphereKernel kernel_from_gaps(unsigned d, unsigned levels, double gap);

/// xi_k = E[h(t) Q_k(t)] / sqrt(B_{d,k}) for k = 0..kmax by Gauss quadrature,
/// doubling the node count until two successive rules agree.
std::vector<double> kernel_eigencoeffs(const std::function<double(double)>& h, unsigned d,
                                       unsigned kmax);

/// Rows uniform on the sphere of radius sqrt(d), from Stream(seed, stream).
Eigen::MatrixXd sample_sphere(unsigned d, std::uint64_t n, std::uint64_t seed,
                              std::uint64_t stream = 0);

/// f(u) = sum_k C_k sum_{j<d} prod_{s=j}^{j+k-1} u_{s mod d}.
class SphereTarget {
 public:
  struct Level {
    unsigned k = 0;
    double coefficient = 0.0;
  };

  SphereTarget(unsigned d, std::vector<Level> levels);

  unsigned d() const noexcept { return d_; }
  const std::vector<Level>& levels() const noexcept { return levels_; }

  /// ||P_k f||^2, zero for absent levels.
  double level_energy(unsigned k) const;
  double norm_sq() const;

  Eigen::VectorXd eval(const Eigen::MatrixXd& points) const;
  /// (P_k f)(u) for each row.
  Eigen::VectorXd eval_level(const Eigen::MatrixXd& points, unsigned k) const;

 private:
  unsigned d_;
  std::vector<Level> levels_;  // sorted by k, distinct
};

/// Coefficients so that ||P_k f||^2 = energies[k]; 1 <= k <= d.
SphereTarget build_cyclic_target(unsigned d, const std::map<unsigned, double>& energies);

struct PseudoTail {
  bool enabled = false;
  std::uint64_t multiplicity = 0;
};

/// Blocks (xi_k, B_{d,k}) for xi_k > 0 sorted by eigenvalue, alignment
/// ||P_k f||^2; target energy on levels with xi_k = 0 becomes residual_energy.
ModelSpec sphere_spectrum(const SphereKernel& kernel, const SphereTarget& target,
                          const NoiseModel& noise, std::uint64_t n, double lambda,
                          const PseudoTail& tail = {});

/// E_u[(f(u) - sum_i alpha_i h(<u_i, u>/d))^2] + noise_variance in closed form.
double exact_sphere_risk(const KrrFit& fit, const SphereKernel& kernel, const SphereTarget& target,
                         double noise_variance, const Eigen::MatrixXd& train_points);

nlohmann::json to_json(const SphereKernel& kernel);
SphereKernel sphere_kernel_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SphereTarget& target);
SphereTarget sphere_target_from_json(const nlohmann::json& j);

}  // namespace krr
