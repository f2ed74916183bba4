#pragma once

// Plug-in learning curves: estimate the kernel spectrum and the target's
// alignment from a holdout sample, then feed them to the deterministic
// equivalents.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "krr/krr_engine.hpp"

namespace krr {

/// From the eigendecomposition K/m = sum mu_j v_j v_j^T: eigenvalues mu_j
/// (nonincreasing, numerically negative ones set to 0) and alignments
/// (v_j^T y)^2 / m over the full eigenbasis.
struct EstimatedDecomposition {
  std::vector<double> eigenvalues;
  std::vector<double> alignments;
  std::uint64_t holdout_size = 0;
  std::optional<double> noise_estimate;
};

/// Throws DomainError if K is not p.s.d. (min eigenvalue below -1e-8 ||K||).
EstimatedDecomposition estimate_spectrum(const GramMatrix& gram, const Eigen::VectorXd& y);

struct PluginOptions {
  /// Leading eigenpairs kept; 0 means m / 2.
  std::uint64_t j_max = 0;
  /// Subtract noise_variance / m from each listed alignment (clamped at 0)
  /// and (m' noise_variance / m) from the m' folded into the residual.
  bool subtract_noise = true;
  /// Eigenvalues below floor * largest are folded into the residual.
  double floor = 1e-12;
};

struct PluginPoint {
  std::uint64_t n = 0;
  double risk = 0.0;    // NaN when failed
  std::string error;    // empty on success
  std::string warning;  // set when n >= holdout size
};

/// The model fed to deterministic_equivalents for a given n.
ModelSpec plugin_model(const EstimatedDecomposition& est, std::uint64_t n, double lambda,
                       double noise_variance, const PluginOptions& options = {});

std::vector<PluginPoint> plugin_risk_curve(const EstimatedDecomposition& est,
                                           const std::vector<std::uint64_t>& n_grid,
                                           double lambda, double noise_variance,
                                           const PluginOptions& options = {});

nlohmann::json to_json(const EstimatedDecomposition& est);
EstimatedDecomposition estimated_decomposition_from_json(const nlohmann::json& j);

}  // namespace krr
