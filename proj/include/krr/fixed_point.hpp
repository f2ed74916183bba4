#pragma once

// Effective regularization and the closed-form deterministic equivalents of
// KRR test error, bias, variance, training error and Stieltjes transform.
//
// The equivalents assume mean-zero features outside the listed spectrum: a
// constant eigenfunction, if the kernel has one, must appear as a block of
// the spectrum. This is a modelling convention and is not checked.

#include <cstdint>

#include "json.hpp"
#include "krr/spectrum.hpp"

namespace krr {

struct EffectiveReg {
  double lambda_star = 0.0;  ///< root of n - lambda/s = Tr(Sigma (Sigma + s)^{-1})
  double mu_star = 0.0;      ///< lambda / lambda_star
  double upsilon1 = 0.0;     ///< Tr(Sigma (Sigma + lambda_star)^{-1}) / n
  double upsilon2 = 0.0;     ///< Tr(Sigma^2 (Sigma + lambda_star)^{-2}) / n
  double residual = 0.0;     ///< fixed-point defect at lambda_star
};

struct DetEquivalents {
  double stieltjes = 0.0;  ///< s_n = 1 / (n lambda_star)
  double bias = 0.0;
  double variance = 0.0;
  double risk = 0.0;   ///< bias + variance + noise variance
  double train = 0.0;  ///< (lambda s_n)^2 * risk
  double lambda_star = 0.0;
  double upsilon2 = 0.0;
};

struct SolverOptions {
  double residual_tol = 1e-12;  ///< relative to n
  int max_bisection = 200;
  int max_newton = 50;
};

/// Throws SolverError("no positive fixed point") when lambda = 0 and the
/// total rank does not exceed n.
EffectiveReg solve_effective_reg(const Spectrum& spectrum, std::uint64_t n, double lambda,
                                 const SolverOptions& options = {});

/// Throws SolverError("degenerate denominator") when 1 - upsilon2 <= 1e-12.
DetEquivalents deterministic_equivalents(const ModelSpec& spec);
/// Same, from an already-solved fixed point for (spec.n, spec.spectrum, spec.lambda).
DetEquivalents deterministic_equivalents(const ModelSpec& spec, const EffectiveReg& reg);

/// Fixed point of the truncated model (n, Sigma_{<=m}, lambda + Tr Sigma_{>m}).
/// m = 0 puts everything in the tail: lambda_star = (lambda + Tr Sigma) / n.
EffectiveReg truncated_effective_reg(const Spectrum& spectrum, std::uint64_t m, std::uint64_t n,
                                     double lambda);

/// Reduced risk equivalent of the truncated model: the tail's target energy
/// (and residual_energy) enter unshrunk next to the label noise.
double truncated_risk_deteq(const ModelSpec& spec, std::uint64_t m);

nlohmann::json to_json(const DetEquivalents& eq);

}  // namespace krr
