#include "krr/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "krr/errors.hpp"
#include "krr/simd/kernels.hpp"

namespace krr {

Spectrum::Spectrum(std::vector<Block> blocks) : blocks_(std::move(blocks)) {
  if (blocks_.empty()) throw DomainError("spectrum: at least one block required");
  values_.reserve(blocks_.size());
  mult_.reserve(blocks_.size());
  cum_rank_.reserve(blocks_.size());
  double prev = std::numeric_limits<double>::infinity();
  for (const Block& b : blocks_) {
    if (!(b.eigenvalue > 0.0) || !std::isfinite(b.eigenvalue))
      throw DomainError("spectrum: eigenvalues must be finite and positive");
    if (b.eigenvalue > prev) throw DomainError("spectrum: eigenvalues must be nonincreasing");
    if (b.multiplicity == 0) throw DomainError("spectrum: multiplicities must be positive");
    prev = b.eigenvalue;
    rank_ += b.multiplicity;
    values_.push_back(b.eigenvalue);
    mult_.push_back(static_cast<double>(b.multiplicity));
    cum_rank_.push_back(rank_);
  }
  suffix_trace_.assign(blocks_.size() + 1, 0.0);
  for (std::size_t k = blocks_.size(); k-- > 0;)
    suffix_trace_[k] = suffix_trace_[k + 1] + mult_[k] * values_[k];
  trace_ = suffix_trace_[0];
  if (!std::isfinite(trace_)) throw DomainError("spectrum: trace is not finite");
}

Spectrum Spectrum::from_eigenvalues(std::span<const double> values) {
  std::vector<Block> blocks;
  blocks.reserve(values.size());
  for (double v : values) blocks.push_back({v, 1});
  return Spectrum(std::move(blocks));
}

Spectrum Spectrum::power_law(std::uint64_t p, double exponent, double scale) {
  std::vector<Block> blocks;
  blocks.reserve(p);
  for (std::uint64_t j = 1; j <= p; ++j)
    blocks.push_back({scale * std::pow(static_cast<double>(j), -exponent), 1});
  return Spectrum(std::move(blocks));
}

std::pair<std::size_t, std::uint64_t> Spectrum::locate(std::uint64_t j) const {
  if (j == 0 || j > rank_) throw DomainError("spectrum: expanded index out of range");
  const auto it = std::lower_bound(cum_rank_.begin(), cum_rank_.end(), j);
  const auto k = static_cast<std::size_t>(it - cum_rank_.begin());
  const std::uint64_t before = k == 0 ? 0 : cum_rank_[k - 1];
  return {k, j - before};
}

double Spectrum::eigenvalue_at(std::uint64_t j) const { return values_[locate(j).first]; }

double Spectrum::tail_trace(std::uint64_t m) const {
  if (m > rank_) throw DomainError("spectrum: index exceeds total rank");
  if (m == 0) return trace_;
  if (m == rank_) return 0.0;
  const auto [k, used] = locate(m);
  const double remaining = static_cast<double>(blocks_[k].multiplicity - used);
  return remaining * values_[k] + suffix_trace_[k + 1];
}

Spectrum Spectrum::head(std::uint64_t m) const {
  if (m == 0 || m > rank_) throw DomainError("spectrum: head size must be in [1, rank]");
  const auto [k, used] = locate(m);
  std::vector<Block> out(blocks_.begin(), blocks_.begin() + static_cast<std::ptrdiff_t>(k));
  out.push_back({values_[k], used});
  return Spectrum(std::move(out));
}

std::vector<double> Spectrum::expanded() const {
  std::vector<double> out;
  out.reserve(rank_);
  for (const Block& b : blocks_) out.insert(out.end(), b.multiplicity, b.eigenvalue);
  return out;
}

Spectrum Spectrum::scaled(double c) const {
  if (!(c > 0.0)) throw DomainError("spectrum: scale must be positive");
  std::vector<Block> out = blocks_;
  for (Block& b : out) b.eigenvalue *= c;
  return Spectrum(std::move(out));
}

double Alignment::total() const noexcept {
  double s = residual_energy;
  for (double e : energies) s += e;
  return s;
}

void Alignment::validate(const Spectrum& spectrum) const {
  if (energies.size() != spectrum.block_count())
    throw DomainError("alignment: one energy per spectrum block required");
  for (double e : energies)
    if (!(e >= 0.0) || !std::isfinite(e)) throw DomainError("alignment: energies must be >= 0");
  if (!(residual_energy >= 0.0) || !std::isfinite(residual_energy))
    throw DomainError("alignment: residual energy must be >= 0");
}

Alignment Alignment::scaled(double c) const {
  Alignment out = *this;
  for (double& e : out.energies) e *= c;
  out.residual_energy *= c;
  return out;
}

NoiseModel NoiseModel::gaussian(double variance) { return {variance, variance}; }

void NoiseModel::validate() const {
  if (!(variance >= 0.0) || !std::isfinite(variance))
    throw DomainError("noise: variance must be >= 0");
  if (sub_gaussian_proxy < variance) throw DomainError("noise: proxy must dominate variance");
}

void ModelSpec::validate() const {
  if (n == 0) throw DomainError("model: n must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("model: lambda must be >= 0");
  alignment.validate(spectrum);
  noise.validate();
}

ResolventTraces trace_resolvents(const Spectrum& spectrum, double s) {
  if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("trace_resolvents: s must be positive");
  const simd::ResolventSums r =
      simd::resolvent_sums(spectrum.values(), spectrum.multiplicities(), {}, s);
  return {r.t1, r.t2};
}

double tail_rank(const Spectrum& spectrum, std::uint64_t m, double lambda) {
  if (m > spectrum.total_rank()) throw DomainError("tail_rank: m exceeds total rank");
  if (!(lambda >= 0.0)) throw DomainError("tail_rank: lambda must be >= 0");
  if (m == spectrum.total_rank()) return std::numeric_limits<double>::infinity();
  return (lambda + spectrum.tail_trace(m)) / spectrum.eigenvalue_at(m + 1);
}

double effective_rank(const Spectrum& spectrum, std::uint64_t m, std::uint64_t n) {
  if (m == 0 || m > spectrum.total_rank()) throw DomainError("effective_rank: m out of range");
  if (n == 0) throw DomainError("effective_rank: n must be positive");
  const std::uint64_t kmax = std::min(n, m);  // k ranges over [0, kmax)
  // Within a block the ratio (sum_{j=k+1..m} xi_j)/xi_{k+1} only shrinks as
  // k advances, so each block's first index dominates it.
  const double head_trace = spectrum.trace() - spectrum.tail_trace(m);
  double best = static_cast<double>(n);
  std::uint64_t start = 0;  // expanded index of the block's first element, minus one
  for (std::size_t b = 0; b < spectrum.block_count() && start < kmax; ++b) {
    const double rest = head_trace - (spectrum.trace() - spectrum.tail_trace(start));
    best = std::max(best, rest / spectrum.values()[b]);
    start += spectrum.blocks()[b].multiplicity;
  }
  return best;
}

double nu_diagnostic(const Spectrum& spectrum, std::uint64_t m, std::uint64_t n, double lambda,
                     double eta) {
  if (!(eta > 0.0 && eta < 0.5)) throw DomainError("nu_diagnostic: eta must lie in (0, 1/2)");
  if (m == 0 || m > spectrum.total_rank()) throw DomainError("nu_diagnostic: m out of range");
  const double lambda_tail = lambda + spectrum.tail_trace(m);
  if (!(lambda_tail > 0.0)) throw DomainError("nu_diagnostic: lambda + tail trace must be > 0");
  const auto idx =
      std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::floor(eta * static_cast<double>(n))));
  if (idx > m) return 1.0;
  const double r_eff = effective_rank(spectrum, m, n);
  return 1.0 + spectrum.eigenvalue_at(idx) * r_eff * std::sqrt(std::log(r_eff)) / lambda_tail;
}

nlohmann::json to_json(const SpectrumDocument& doc) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const Block& b : doc.spectrum.blocks()) blocks.push_back({b.eigenvalue, b.multiplicity});
  return {{"blocks", blocks},
          {"alignment", doc.alignment.energies},
          {"residual_energy", doc.alignment.residual_energy},
          {"noise_variance", doc.noise_variance}};
}

SpectrumDocument spectrum_document_from_json(const nlohmann::json& j) {
  try {
    std::vector<Block> blocks;
    for (const auto& b : j.at("blocks")) {
      if (!b.is_array() || b.size() != 2) throw DomainError("spectrum json: block must be [xi, m]");
      const double m = b[1].get<double>();
      if (m < 1 || m != std::floor(m)) throw DomainError("spectrum json: multiplicity must be a positive integer");
      blocks.push_back({b[0].get<double>(), static_cast<std::uint64_t>(m)});
    }
    Spectrum spectrum(std::move(blocks));
    Alignment alignment;
    if (j.contains("alignment")) {
      alignment.energies = j.at("alignment").get<std::vector<double>>();
    } else {
      alignment.energies.assign(spectrum.block_count(), 0.0);
    }
    alignment.residual_energy = j.value("residual_energy", 0.0);
    alignment.validate(spectrum);
    SpectrumDocument doc{std::move(spectrum), std::move(alignment), j.value("noise_variance", 0.0)};
    if (!(doc.noise_variance >= 0.0)) throw DomainError("spectrum json: noise variance must be >= 0");
    return doc;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("spectrum json: ") + e.what());
  }
}

}  // namespace krr
