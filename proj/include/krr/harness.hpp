#pragma once

// Declarative experiments: a JSON config names the setup, the n and lambda
// grids and the replication count; run_experiment produces one row per
// grid point with the deterministic prediction beside replication
// statistics.
//
// Replication r draws from key replication_seed(seed, r); within it, grid
// point g (an index into n_grid) uses stream ids 256 g + purpose. Every
// replication sees the same draws for every lambda at a given n.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "krr/spectrum.hpp"

namespace krr {

enum class ExperimentKind { gaussian_curve, sphere_curve, gcv_sweep, functional_probe, estimate_and_predict };

ExperimentKind experiment_kind_from_string(const std::string& s);
std::string to_string(ExperimentKind kind);

/// Target direction for the linear-feature setups; beta is scaled to `norm`.
struct TargetSpec {
  enum class Kind { random_direction, coordinate, explicit_beta };
  Kind kind = Kind::random_direction;
  std::uint64_t index = 1;  // 1-based, coordinate only
  std::vector<double> beta;
  double norm = 1.0;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::gaussian_curve;
  std::vector<std::uint64_t> n_grid;
  std::vector<double> lambdas;
  double noise_variance = 0.0;
  std::uint64_t reps = 1;
  std::uint64_t seed = 0;
  std::string output_path;

  std::optional<Spectrum> spectrum;
  TargetSpec target;

  // sphere_curve
  unsigned d = 24;
  double gap = 8.0;
  unsigned levels = 7;
  std::map<unsigned, double> energies;  // default k^-2, k = 1..levels

  // functional_probe
  bool probe_target = false;  // test matrix Sigma^-1 beta beta^T Sigma^-1 instead of I

  // estimate_and_predict
  std::uint64_t holdout = 4000;
  std::uint64_t j_max = 0;
  bool subtract_noise = true;

  nlohmann::json source;  // the document as parsed, for hashing

  void validate() const;
};

/// DomainError with the offending field on malformed documents.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

struct CurvePoint {
  std::string kind;
  std::uint64_t n = 0;
  double lambda = 0.0;
  double prediction = 0.0;
  double empirical_mean = 0.0;
  double empirical_std = 0.0;
  std::uint64_t reps = 0;
  std::uint64_t seed = 0;
  double lambda_star = 0.0;
  double upsilon2 = 0.0;
  double nu = 0.0;  // evaluated at m = min(n, rank), eta = 0.25; NaN when undefined
  std::string status = "ok";
  std::map<std::string, double> extras;  // JSON only
};

struct ResultTable {
  std::vector<CurvePoint> rows;
  std::string config_hash;
  std::string timestamp;  // JSON only, so CSV output stays byte-stable

  bool any_failed() const;
};

/// FNV-1a 64 of the compact dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);

/// Deterministic in (config, seed) for any thread count. Failures are
/// recorded per row and the remaining rows still run.
ResultTable run_experiment(const ExperimentConfig& config, unsigned threads = 1);

enum class OutputFormat { csv, json };

OutputFormat output_format_from_string(const std::string& s);

inline constexpr const char* kResultColumns =
    "kind,n,lambda,prediction,empirical_mean,empirical_std,reps,seed,lambda_star,upsilon2,status";

void emit_results(const ResultTable& table, OutputFormat format, std::ostream& out);
/// path "-" writes to stdout; an unwritable path throws std::runtime_error.
void emit_results(const ResultTable& table, OutputFormat format, const std::string& path);

nlohmann::json to_json(const ResultTable& table);

/// Sample mean and standard deviation (n - 1 denominator, 0 for one value).
std::pair<double, double> mean_std(const std::vector<double>& xs);

/// Unit-norm-scaled beta for a spectrum of rank p, drawn from `seed` when random.
std::vector<double> make_beta(const TargetSpec& spec, std::uint64_t p, std::uint64_t seed);

/// Per-block energies of beta (sum of beta_j^2 over each block's coordinates).
Alignment alignment_from_beta(const Spectrum& spectrum, const std::vector<double>& beta);

}  // namespace krr
