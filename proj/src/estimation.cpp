#include "krr/estimation.hpp"

#include <cmath>
#include <limits>

#include "krr/errors.hpp"
#include "krr/fixed_point.hpp"
#include "krr/linalg.hpp"

namespace krr {

EstimatedDecomposition estimate_spectrum(const GramMatrix& gram, const Eigen::VectorXd& y) {
  if (y.size() != gram.size()) throw DomainError("estimate_spectrum: label length != Gram size");
  const auto m = static_cast<double>(gram.size());
  const SpectralProjection sp = spectral_projection(gram.entries(), y);
  const double top = sp.eigenvalues.cwiseAbs().maxCoeff();
  const double lowest = sp.eigenvalues[sp.eigenvalues.size() - 1];
  if (lowest < -1e-8 * top)
    throw DomainError("estimate_spectrum: Gram matrix is not positive semidefinite");
  EstimatedDecomposition est;
  est.holdout_size = static_cast<std::uint64_t>(gram.size());
  est.eigenvalues.resize(sp.eigenvalues.size());
  est.alignments.resize(sp.coords.size());
  for (Eigen::Index j = 0; j < sp.eigenvalues.size(); ++j) {
    est.eigenvalues[j] = std::max(sp.eigenvalues[j], 0.0) / m;
    est.alignments[j] = sp.coords[j] * sp.coords[j] / m;
  }
  return est;
}

ModelSpec plugin_model(const EstimatedDecomposition& est, std::uint64_t n, double lambda,
                       double noise_variance, const PluginOptions& options) {
  const std::size_t m = est.eigenvalues.size();
  if (m == 0 || est.alignments.size() != m)
    throw DomainError("plugin_model: malformed decomposition");
  if (!(noise_variance >= 0.0)) throw DomainError("plugin_model: negative noise variance");
  const std::uint64_t j_max = options.j_max == 0 ? std::max<std::uint64_t>(m / 2, 1) : options.j_max;
  if (j_max > m) throw DomainError("plugin_model: j_max exceeds holdout size");
  const double per = options.subtract_noise ? noise_variance / static_cast<double>(est.holdout_size) : 0.0;
  const double cutoff = options.floor * est.eigenvalues.front();

  std::vector<Block> blocks;
  Alignment align;
  double tail = 0.0;
  std::size_t tail_count = 0;
  for (std::size_t j = 0; j < m; ++j) {
    if (j < j_max && est.eigenvalues[j] > 0.0 && est.eigenvalues[j] >= cutoff) {
      blocks.push_back({est.eigenvalues[j], 1});
      align.energies.push_back(std::max(est.alignments[j] - per, 0.0));
    } else {
      tail += est.alignments[j];
      ++tail_count;
    }
  }
  if (blocks.empty()) throw DomainError("plugin_model: no eigenvalue above the floor");
  align.residual_energy = std::max(tail - static_cast<double>(tail_count) * per, 0.0);
  ModelSpec spec{n, lambda, Spectrum(std::move(blocks)), std::move(align), NoiseModel::gaussian(noise_variance)};
  spec.validate();
  return spec;
}

std::vector<PluginPoint> plugin_risk_curve(const EstimatedDecomposition& est,
                                           const std::vector<std::uint64_t>& n_grid,
                                           double lambda, double noise_variance,
                                           const PluginOptions& options) {
  std::vector<PluginPoint> out;
  out.reserve(n_grid.size());
  for (std::uint64_t n : n_grid) {
    PluginPoint pt{n, std::numeric_limits<double>::quiet_NaN(), {}, {}};
    if (n >= est.holdout_size) pt.warning = "n is not below the holdout size; estimate may be unreliable";
    try {
      pt.risk = deterministic_equivalents(plugin_model(est, n, lambda, noise_variance, options)).risk;
    } catch (const std::exception& e) {
      pt.error = e.what();
    }
    out.push_back(std::move(pt));
  }
  return out;
}

nlohmann::json to_json(const EstimatedDecomposition& est) {
  nlohmann::json j{{"eigenvalues", est.eigenvalues},
                   {"alignments", est.alignments},
                   {"holdout_size", est.holdout_size}};
  j["noise_estimate"] = est.noise_estimate ? nlohmann::json(*est.noise_estimate) : nlohmann::json(nullptr);
  return j;
}

EstimatedDecomposition estimated_decomposition_from_json(const nlohmann::json& j) {
  EstimatedDecomposition est;
  est.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
  est.alignments = j.at("alignments").get<std::vector<double>>();
  est.holdout_size = j.at("holdout_size").get<std::uint64_t>();
  if (j.contains("noise_estimate") && !j.at("noise_estimate").is_null())
    est.noise_estimate = j.at("noise_estimate").get<double>();
  if (est.eigenvalues.size() != est.alignments.size())
    throw DomainError("estimated decomposition: eigenvalue and alignment lengths differ");
  for (std::size_t i = 1; i < est.eigenvalues.size(); ++i)
    if (est.eigenvalues[i] > est.eigenvalues[i - 1])
      throw DomainError("estimated decomposition: eigenvalues must be nonincreasing");
  return est;
}

}  // namespace krr
