#include "krr/fixed_point.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "krr/errors.hpp"
#include "krr/simd/kernels.hpp"

namespace krr {

namespace {

constexpr double kDenominatorGuard = 1e-12;

struct Eval {
  double g = 0.0;      // n - lambda/s - T1(s)
  double slope = 0.0;  // dg/ds
  double t1 = 0.0;
  double t2 = 0.0;
};

Eval evaluate(const Spectrum& spectrum, double n, double lambda, double s) {
  const simd::ResolventSums r =
      simd::resolvent_sums(spectrum.values(), spectrum.multiplicities(), {}, s);
  return {n - lambda / s - r.t1, lambda / (s * s) + (r.t1 - r.t2) / s, r.t1, r.t2};
}

EffectiveReg finish(const Eval& e, double n, double lambda, double s) {
  return {s, lambda / s, e.t1 / n, e.t2 / n, e.g};
}

}  // namespace

EffectiveReg solve_effective_reg(const Spectrum& spectrum, std::uint64_t n, double lambda,
                                 const SolverOptions& options) {
  if (n == 0) throw DomainError("solve_effective_reg: n must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw DomainError("solve_effective_reg: lambda must be finite and >= 0");
  if (lambda == 0.0 && spectrum.total_rank() <= n)
    throw SolverError("no positive fixed point: lambda = 0 requires rank > n");

  const double nn = static_cast<double>(n);
  const double tol = options.residual_tol * nn;
  const double floor = 1e-300 * spectrum.trace() / nn;
  double lo = std::max(lambda / nn, floor);
  double hi = (lambda + spectrum.trace()) / nn;

  Eval at_hi = evaluate(spectrum, nn, lambda, hi);
  if (std::abs(at_hi.g) <= tol && at_hi.g >= 0.0 && lo == hi) return finish(at_hi, nn, lambda, hi);

  // g is strictly increasing with g(lo) < 0 <= g(hi). Bisect (geometrically
  // while the bracket spans many decades) until Newton can take over.
  double s = hi;
  Eval e = at_hi;
  for (int it = 0; it < options.max_bisection; ++it) {
    s = (hi > 4.0 * lo) ? std::sqrt(lo) * std::sqrt(hi) : 0.5 * (lo + hi);
    e = evaluate(spectrum, nn, lambda, s);
    if (e.g < 0.0) lo = s; else hi = s;
    if (std::abs(e.g) <= tol || hi - lo <= 1e-3 * hi) break;
  }

  // Keep polishing past the tolerance until the step stalls or the residual
  // stops shrinking: quantities like 1 - lambda/(n s) can cancel heavily.
  int extra = 0;
  for (int it = 0; it < options.max_newton; ++it) {
    if (e.g == 0.0) break;
    if (std::abs(e.g) <= tol && it > 0 && ++extra > 3) break;
    double next = s - e.g / e.slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const Eval en = evaluate(spectrum, nn, lambda, next);
    if (en.g < 0.0) lo = next; else hi = next;
    const bool stalled = std::abs(next - s) <= 4.0 * std::numeric_limits<double>::epsilon() * s;
    if (std::abs(e.g) <= tol && std::abs(en.g) >= std::abs(e.g)) break;
    s = next;
    e = en;
    if (stalled) break;
  }

  if (!(std::abs(e.g) <= tol))
    throw SolverError("solve_effective_reg: residual " + std::to_string(e.g) +
                      " above tolerance after polishing");
  return finish(e, nn, lambda, s);
}

DetEquivalents deterministic_equivalents(const ModelSpec& spec, const EffectiveReg& reg) {
  spec.validate();
  const double s = reg.lambda_star;
  const double nn = static_cast<double>(spec.n);
  const simd::ResolventSums r = simd::resolvent_sums(
      spec.spectrum.values(), spec.spectrum.multiplicities(), spec.alignment.energies, s);
  const double denom = 1.0 - reg.upsilon2;
  if (!(denom > kDenominatorGuard))
    throw SolverError("degenerate denominator: 1 - upsilon2 = " + std::to_string(denom));
  const double sigma2 = spec.noise.variance;
  DetEquivalents out;
  out.lambda_star = s;
  out.upsilon2 = reg.upsilon2;
  out.stieltjes = 1.0 / (nn * s);
  out.bias = (s * s * r.wsq + spec.alignment.residual_energy) / denom;
  out.variance = sigma2 * reg.upsilon2 / denom;
  out.risk = out.bias + out.variance + sigma2;
  const double shrink = spec.lambda * out.stieltjes;
  out.train = shrink * shrink * out.risk;
  return out;
}

DetEquivalents deterministic_equivalents(const ModelSpec& spec) {
  spec.validate();
  return deterministic_equivalents(spec, solve_effective_reg(spec.spectrum, spec.n, spec.lambda));
}

EffectiveReg truncated_effective_reg(const Spectrum& spectrum, std::uint64_t m, std::uint64_t n,
                                     double lambda) {
  if (m > spectrum.total_rank()) throw DomainError("truncated_effective_reg: m exceeds rank");
  if (n == 0) throw DomainError("truncated_effective_reg: n must be positive");
  if (!(lambda >= 0.0)) throw DomainError("truncated_effective_reg: lambda must be >= 0");
  const double lambda_plus = lambda + spectrum.tail_trace(m);
  if (m == 0) {
    const double s = lambda_plus / static_cast<double>(n);
    return {s, static_cast<double>(n), 0.0, 0.0, 0.0};
  }
  return solve_effective_reg(spectrum.head(m), n, lambda_plus);
}

double truncated_risk_deteq(const ModelSpec& spec, std::uint64_t m) {
  spec.validate();
  const EffectiveReg reg = truncated_effective_reg(spec.spectrum, m, spec.n, spec.lambda);
  const double sigma2 = spec.noise.variance;
  if (m == 0) return spec.alignment.total() + sigma2;

  // Split the alignment at the cutoff; a straddling block shares its energy
  // in proportion to the copies on each side.
  const Spectrum head = spec.spectrum.head(m);
  std::vector<double> head_energy(head.block_count());
  double tail_energy = spec.alignment.residual_energy;
  for (std::size_t k = 0; k < spec.spectrum.block_count(); ++k) {
    const double e = spec.alignment.energies[k];
    if (k + 1 < head.block_count()) {
      head_energy[k] = e;
    } else if (k + 1 == head.block_count()) {
      const double frac = static_cast<double>(head.blocks()[k].multiplicity) /
                          static_cast<double>(spec.spectrum.blocks()[k].multiplicity);
      head_energy[k] = e * frac;
      tail_energy += e - head_energy[k];
    } else {
      tail_energy += e;
    }
  }
  const double s = reg.lambda_star;
  const simd::ResolventSums r =
      simd::resolvent_sums(head.values(), head.multiplicities(), head_energy, s);
  const double denom = 1.0 - reg.upsilon2;
  if (!(denom > kDenominatorGuard))
    throw SolverError("degenerate denominator: 1 - upsilon2 = " + std::to_string(denom));
  return (s * s * r.wsq + tail_energy + sigma2) / denom;
}

nlohmann::json to_json(const DetEquivalents& eq) {
  return {{"s_n", eq.stieltjes}, {"B_n", eq.bias},  {"V_n", eq.variance},
          {"R_n", eq.risk},      {"L_n", eq.train}, {"lambda_star", eq.lambda_star}};
}

}  // namespace krr
