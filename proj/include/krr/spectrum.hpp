#pragma once

// Spectral data model: eigenvalue blocks of a kernel operator, the target's
// energy in each block, label noise, and the scalar spectral sums the
// deterministic equivalents are built from.
//
// Eigenvalues are kept as (value, multiplicity) blocks. Inner-product kernels
// on the sphere have eigenvalues repeated B_{d,k} times (millions at degree
// 7), so nothing here expands a block unless asked to.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace krr {

struct Block {
  double eigenvalue = 0.0;
  std::uint64_t multiplicity = 0;

  friend bool operator==(const Block&, const Block&) = default;
};

/// Nonincreasing positive eigenvalue blocks with total rank >= 1.
class Spectrum {
 public:
  explicit Spectrum(std::vector<Block> blocks);

  /// One block of multiplicity 1 per value; values must already be sorted.
  static Spectrum from_eigenvalues(std::span<const double> values);
  /// Power law xi_j = scale * j^{-exponent}, j = 1..p.
  static Spectrum power_law(std::uint64_t p, double exponent, double scale = 1.0);

  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  std::size_t block_count() const noexcept { return blocks_.size(); }
  std::uint64_t total_rank() const noexcept { return rank_; }
  double trace() const noexcept { return trace_; }

  // Structure-of-arrays views for the SIMD kernels.
  std::span<const double> values() const noexcept { return values_; }
  std::span<const double> multiplicities() const noexcept { return mult_; }

  /// j-th eigenvalue counted with multiplicity, 1-based.
  double eigenvalue_at(std::uint64_t j) const;
  /// sum_{j > m} xi_j (expanded index), m <= total_rank.
  double tail_trace(std::uint64_t m) const;
  /// The leading m expanded eigenvalues; a block straddling m is split.
  /// m must be in [1, total_rank].
  Spectrum head(std::uint64_t m) const;
  /// Index of the block holding expanded index j (1-based) and how many of
  /// that block's copies lie at or before j.
  std::pair<std::size_t, std::uint64_t> locate(std::uint64_t j) const;

  std::vector<double> expanded() const;
  Spectrum scaled(double c) const;

  friend bool operator==(const Spectrum& a, const Spectrum& b) { return a.blocks_ == b.blocks_; }

 private:
  std::vector<Block> blocks_;
  std::vector<double> values_;
  std::vector<double> mult_;
  std::vector<std::uint64_t> cum_rank_;  // ranks through block k inclusive
  std::vector<double> suffix_trace_;     // trace of blocks k..end
  std::uint64_t rank_ = 0;
  double trace_ = 0.0;
};

/// Target energy per spectrum block, plus energy orthogonal to every listed
/// block (which behaves as extra label noise).
struct Alignment {
  std::vector<double> energies;
  double residual_energy = 0.0;

  double total() const noexcept;
  void validate(const Spectrum& spectrum) const;
  Alignment scaled(double c) const;

  friend bool operator==(const Alignment&, const Alignment&) = default;
};

struct NoiseModel {
  double variance = 0.0;
  /// Sub-Gaussian proxy for sampling; defaults to the variance (Gaussian noise).
  double sub_gaussian_proxy = 0.0;

  static NoiseModel gaussian(double variance);
  void validate() const;
};

struct ModelSpec {
  std::uint64_t n = 0;
  double lambda = 0.0;
  Spectrum spectrum;
  Alignment alignment;
  NoiseModel noise;

  void validate() const;
};

struct ResolventTraces {
  double t1 = 0.0;  ///< Tr(Sigma (Sigma + s)^{-1})
  double t2 = 0.0;  ///< Tr(Sigma^2 (Sigma + s)^{-2})
};

ResolventTraces trace_resolvents(const Spectrum& spectrum, double s);

/// (lambda + sum_{j>m} xi_j) / xi_{m+1}; +inf when m equals the total rank.
double tail_rank(const Spectrum& spectrum, std::uint64_t m, double lambda);

/// Smallest r >= n dominating every intrinsic dimension
/// (sum_{j=k+1..m} xi_j) / xi_{k+1}, 0 <= k < min(n, m).
double effective_rank(const Spectrum& spectrum, std::uint64_t m, std::uint64_t n);

/// 1 + xi_{floor(eta n), m} * r_eff * sqrt(log r_eff) / lambda_{>m}. Reporting only.
double nu_diagnostic(const Spectrum& spectrum, std::uint64_t m, std::uint64_t n, double lambda,
                     double eta = 0.25);

// JSON document {"blocks": [[xi, m], ...], "alignment": [...],
//                "residual_energy": r, "noise_variance": s2}.
struct SpectrumDocument {
  Spectrum spectrum;
  Alignment alignment;
  double noise_variance = 0.0;
};

nlohmann::json to_json(const SpectrumDocument& doc);
SpectrumDocument spectrum_document_from_json(const nlohmann::json& j);

}  // namespace krr
