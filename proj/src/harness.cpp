#include "krr/harness.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "krr/errors.hpp"
#include "krr/estimation.hpp"
#include "krr/fixed_point.hpp"
#include "krr/functionals.hpp"
#include "krr/io.hpp"
#include "krr/krr_engine.hpp"
#include "krr/parallel.hpp"
#include "krr/rng.hpp"
#include "krr/sphere.hpp"

namespace krr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum Purpose : std::uint64_t { kFeatures = 0, kNoise = 1 };

std::uint64_t stream_id(std::size_t grid_index, Purpose p) {
  return 256 * static_cast<std::uint64_t>(grid_index) + p;
}

using json = nlohmann::json;

Spectrum parse_spectrum(const json& j) {
  if (j.contains("blocks")) return spectrum_document_from_json(j).spectrum;
  const std::string family = j.value("family", "power_law");
  if (family != "power_law") throw DomainError("config: unknown spectrum family '" + family + "'");
  return Spectrum::power_law(j.at("p").get<std::uint64_t>(), j.value("exponent", 2.0), j.value("scale", 1.0));
}

TargetSpec parse_target(const json& j) {
  TargetSpec t;
  const std::string kind = j.value("kind", "random_direction");
  if (kind == "random_direction") {
    t.kind = TargetSpec::Kind::random_direction;
  } else if (kind == "coordinate") {
    t.kind = TargetSpec::Kind::coordinate;
    t.index = j.value("index", std::uint64_t{1});
  } else if (kind == "explicit") {
    t.kind = TargetSpec::Kind::explicit_beta;
    t.beta = j.at("beta").get<std::vector<double>>();
  } else {
    throw DomainError("config: unknown target kind '" + kind + "'");
  }
  t.norm = j.value("norm", 1.0);
  return t;
}

std::vector<double> parse_lambdas(const json& j) {
  if (j.contains("lambda_grid")) {
    const json& g = j.at("lambda_grid");
    if (g.is_array()) return g.get<std::vector<double>>();
    const double lo = g.at("min").get<double>(), hi = g.at("max").get<double>();
    const int points = g.at("points").get<int>();
    if (points < 1 || !(lo > 0.0) || !(hi >= lo)) throw DomainError("config: bad lambda_grid range");
    std::vector<double> out(points);
    for (int i = 0; i < points; ++i)
      out[i] = points == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / (points - 1));
    return out;
  }
  if (j.contains("lambda")) return {j.at("lambda").get<double>()};
  throw DomainError("config: lambda or lambda_grid required");
}

std::string iso_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct LinearSetup {
  Spectrum spectrum;
  Alignment alignment;
  Eigen::VectorXd theta;
  std::vector<double> beta;
};

LinearSetup linear_setup(const ExperimentConfig& c) {
  const Spectrum& s = *c.spectrum;
  std::vector<double> beta = make_beta(c.target, s.total_rank(), c.seed);
  const std::vector<double> xi = s.expanded();
  Eigen::VectorXd theta(static_cast<Eigen::Index>(xi.size()));
  for (std::size_t j = 0; j < xi.size(); ++j) theta[j] = beta[j] / std::sqrt(xi[j]);
  return {s, alignment_from_beta(s, beta), std::move(theta), std::move(beta)};
}

struct Cell {
  std::vector<double> values;  // one per lambda (or per functional)
  std::string error;
};

// Prediction columns of a row; errors land in status.
void predict(CurvePoint& row, const ModelSpec& spec) {
  try {
    const EffectiveReg reg = solve_effective_reg(spec.spectrum, spec.n, spec.lambda);
    const DetEquivalents eq = deterministic_equivalents(spec, reg);
    row.prediction = eq.risk;
    row.lambda_star = reg.lambda_star;
    row.upsilon2 = reg.upsilon2;
    row.extras["bias"] = eq.bias;
    row.extras["variance"] = eq.variance;
  } catch (const std::exception& e) {
    row.prediction = row.lambda_star = row.upsilon2 = kNaN;
    row.status = std::string("error: ") + e.what();
  }
  try {
    const std::uint64_t m = std::min(spec.n, spec.spectrum.total_rank());
    row.nu = nu_diagnostic(spec.spectrum, m, spec.n, spec.lambda);
  } catch (const std::exception&) {
    row.nu = kNaN;
  }
}

// Replication statistics of column `col` over the cells of grid point g.
void summarize(CurvePoint& row, const std::vector<Cell>& cells, std::size_t g, std::uint64_t reps,
               std::size_t col) {
  std::vector<double> xs;
  xs.reserve(reps);
  for (std::uint64_t r = 0; r < reps; ++r) {
    const Cell& c = cells[g * reps + r];
    if (!c.error.empty()) {
      row.empirical_mean = row.empirical_std = kNaN;
      if (row.status == "ok") row.status = "error: replication " + std::to_string(r) + ": " + c.error;
      return;
    }
    xs.push_back(c.values[col]);
  }
  std::tie(row.empirical_mean, row.empirical_std) = mean_std(xs);
}

template <class Body>
std::vector<Cell> run_cells(const ExperimentConfig& c, unsigned threads, Body&& body) {
  std::vector<Cell> cells(c.n_grid.size() * c.reps);
  parallel_for(cells.size(), threads, [&](std::size_t i) {
    const std::size_t g = i / c.reps;
    const std::uint64_t r = i % c.reps;
    try {
      cells[i].values = body(g, replication_seed(c.seed, r));
    } catch (const std::exception& e) {
      cells[i].error = e.what();
    }
  });
  return cells;
}

CurvePoint base_row(const ExperimentConfig& c, std::uint64_t n, double lambda) {
  CurvePoint row;
  row.kind = to_string(c.kind);
  row.n = n;
  row.lambda = lambda;
  row.reps = c.reps;
  row.seed = c.seed;
  return row;
}

Eigen::VectorXd linear_labels(const FeatureSample& x, const Eigen::VectorXd& theta, double sigma2,
                              std::uint64_t key, std::size_t g) {
  Eigen::VectorXd y = x.matrix * theta;
  Stream noise(key, stream_id(g, kNoise));
  const double sigma = std::sqrt(sigma2);
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += sigma * noise.normal();
  return y;
}

std::vector<CurvePoint> run_gaussian(const ExperimentConfig& c, unsigned threads) {
  const LinearSetup setup = linear_setup(c);
  const auto cells = run_cells(c, threads, [&](std::size_t g, std::uint64_t key) {
    const FeatureSample x = sample_gaussian_features(setup.spectrum, c.n_grid[g], key, stream_id(g, kFeatures));
    const Eigen::VectorXd y = linear_labels(x, setup.theta, c.noise_variance, key, g);
    return test_error_linear_curve(x, setup.theta, c.noise_variance, y, c.lambdas);
  });
  std::vector<CurvePoint> rows;
  for (std::size_t g = 0; g < c.n_grid.size(); ++g) {
    for (std::size_t l = 0; l < c.lambdas.size(); ++l) {
      CurvePoint row = base_row(c, c.n_grid[g], c.lambdas[l]);
      predict(row, {c.n_grid[g], c.lambdas[l], setup.spectrum, setup.alignment,
                    NoiseModel::gaussian(c.noise_variance)});
      summarize(row, cells, g, c.reps, l);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<CurvePoint> run_sphere(const ExperimentConfig& c, unsigned threads) {
  const SphereKernel kernel = kernel_from_gaps(c.d, c.levels, c.gap);
  std::map<unsigned, double> energies = c.energies;
  if (energies.empty())
    for (unsigned k = 1; k <= c.levels; ++k) energies[k] = 1.0 / (static_cast<double>(k) * k);
  const SphereTarget target = build_cyclic_target(c.d, energies);
  const auto cells = run_cells(c, threads, [&](std::size_t g, std::uint64_t key) {
    const Eigen::MatrixXd u = sample_sphere(c.d, c.n_grid[g], key, stream_id(g, kFeatures));
    auto gram = std::make_shared<const GramMatrix>(kernel.gram(u));
    Eigen::VectorXd y = target.eval(u);
    Stream noise(key, stream_id(g, kNoise));
    const double sigma = std::sqrt(c.noise_variance);
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += sigma * noise.normal();
    std::vector<double> out;
    for (double lambda : c.lambdas)
      out.push_back(exact_sphere_risk(fit_krr(gram, y, lambda), kernel, target, c.noise_variance, u));
    return out;
  });
  std::vector<CurvePoint> rows;
  for (std::size_t g = 0; g < c.n_grid.size(); ++g) {
    for (std::size_t l = 0; l < c.lambdas.size(); ++l) {
      CurvePoint row = base_row(c, c.n_grid[g], c.lambdas[l]);
      try {
        predict(row, sphere_spectrum(kernel, target, NoiseModel::gaussian(c.noise_variance), c.n_grid[g],
                                     c.lambdas[l]));
      } catch (const std::exception& e) {
        row.prediction = kNaN;
        row.status = std::string("error: ") + e.what();
      }
      summarize(row, cells, g, c.reps, l);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<CurvePoint> run_gcv(const ExperimentConfig& c, unsigned threads) {
  const LinearSetup setup = linear_setup(c);
  const std::size_t nl = c.lambdas.size();
  // values: [gcv per lambda..., test error per lambda..., test error at lambda_hat]
  const auto cells = run_cells(c, threads, [&](std::size_t g, std::uint64_t key) {
    const FeatureSample x = sample_gaussian_features(setup.spectrum, c.n_grid[g], key, stream_id(g, kFeatures));
    const Eigen::VectorXd y = linear_labels(x, setup.theta, c.noise_variance, key, g);
    const GramMatrix gram(x.matrix * x.matrix.transpose());
    const SpectralSweep sweep(gram, y);
    std::vector<double> out(2 * nl + 1);
    std::size_t best = nl;
    for (std::size_t l = 0; l < nl; ++l) {
      try {
        out[l] = sweep.at(c.lambdas[l]).gcv;
        if (best == nl || out[l] < out[best]) best = l;
      } catch (const SolverError&) {
        out[l] = kNaN;
      }
    }
    const std::vector<double> test = test_error_linear_curve(x, setup.theta, c.noise_variance, y, c.lambdas);
    std::copy(test.begin(), test.end(), out.begin() + static_cast<std::ptrdiff_t>(nl));
    out[2 * nl] = best < nl ? test[best] : kNaN;
    return out;
  });
  std::vector<CurvePoint> rows;
  for (std::size_t g = 0; g < c.n_grid.size(); ++g) {
    for (std::size_t l = 0; l < nl; ++l) {
      CurvePoint row = base_row(c, c.n_grid[g], c.lambdas[l]);
      predict(row, {c.n_grid[g], c.lambdas[l], setup.spectrum, setup.alignment,
                    NoiseModel::gaussian(c.noise_variance)});
      summarize(row, cells, g, c.reps, l);
      CurvePoint test = row;
      summarize(test, cells, g, c.reps, nl + l);
      row.extras["test_error_mean"] = test.empirical_mean;
      row.extras["test_error_std"] = test.empirical_std;
      CurvePoint chosen = row;
      summarize(chosen, cells, g, c.reps, 2 * nl);
      row.extras["test_error_at_gcv_choice_mean"] = chosen.empirical_mean;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<CurvePoint> run_probe(const ExperimentConfig& c, unsigned threads) {
  const Spectrum& spectrum = *c.spectrum;
  TestMatrix a = TestMatrix::identity();
  if (c.probe_target) {
    const std::vector<double> beta = make_beta(c.target, spectrum.total_rank(), c.seed);
    a = TestMatrix::target(Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size())));
  }
  const std::size_t nl = c.lambdas.size();
  // values: phi_j and rel_err_j for each lambda, 8 per lambda
  const auto cells = run_cells(c, threads, [&](std::size_t g, std::uint64_t key) {
    const FeatureSample x = sample_gaussian_features(spectrum, c.n_grid[g], key, stream_id(g, kFeatures));
    std::vector<double> out;
    for (double lambda : c.lambdas) {
      const FunctionalReport rep = functional_report(x, lambda, a);
      out.insert(out.end(), rep.phi.begin(), rep.phi.end());
      out.insert(out.end(), rep.rel_err.begin(), rep.rel_err.end());
    }
    return out;
  });
  std::vector<CurvePoint> rows;
  for (std::size_t g = 0; g < c.n_grid.size(); ++g) {
    for (std::size_t l = 0; l < nl; ++l) {
      Functionals psi{};
      std::string psi_error;
      try {
        psi = deterministic_functionals(spectrum, c.n_grid[g], c.lambdas[l], a);
      } catch (const std::exception& e) {
        psi_error = e.what();
      }
      EffectiveReg reg{};
      try {
        reg = solve_effective_reg(spectrum, c.n_grid[g], c.lambdas[l]);
      } catch (const std::exception&) {
        reg.lambda_star = reg.upsilon2 = kNaN;
      }
      for (int j = 0; j < 4; ++j) {
        CurvePoint row = base_row(c, c.n_grid[g], c.lambdas[l]);
        row.kind += ":phi" + std::to_string(j + 1);
        row.prediction = psi_error.empty() ? psi[j] : kNaN;
        if (!psi_error.empty()) row.status = "error: " + psi_error;
        row.lambda_star = reg.lambda_star;
        row.upsilon2 = reg.upsilon2;
        row.nu = kNaN;
        summarize(row, cells, g, c.reps, 8 * l + j);
        std::vector<double> errs;
        bool ok = true;
        for (std::uint64_t r = 0; r < c.reps; ++r) {
          const Cell& cell = cells[g * c.reps + r];
          if (!cell.error.empty()) {
            ok = false;
            break;
          }
          errs.push_back(cell.values[8 * l + 4 + j]);
        }
        if (ok) {
          row.extras["median_rel_err"] = quantile(errs, 0.5);
          row.extras["q25"] = quantile(errs, 0.25);
          row.extras["q75"] = quantile(errs, 0.75);
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

std::vector<CurvePoint> run_estimate(const ExperimentConfig& c, unsigned threads) {
  const LinearSetup setup = linear_setup(c);
  const std::uint64_t holdout_key = splitmix64(c.seed ^ 0x686f6c646f7574ULL);
  const FeatureSample hx = sample_gaussian_features(setup.spectrum, c.holdout, holdout_key, 0);
  const Eigen::VectorXd hy = linear_labels(hx, setup.theta, c.noise_variance, holdout_key, 0);
  const EstimatedDecomposition est = estimate_spectrum(GramMatrix(hx.matrix * hx.matrix.transpose()), hy);
  PluginOptions opts;
  opts.j_max = c.j_max;
  opts.subtract_noise = c.subtract_noise;

  const auto cells = run_cells(c, threads, [&](std::size_t g, std::uint64_t key) {
    const FeatureSample x = sample_gaussian_features(setup.spectrum, c.n_grid[g], key, stream_id(g, kFeatures));
    const Eigen::VectorXd y = linear_labels(x, setup.theta, c.noise_variance, key, g);
    return test_error_linear_curve(x, setup.theta, c.noise_variance, y, c.lambdas);
  });
  std::vector<CurvePoint> rows;
  for (std::size_t g = 0; g < c.n_grid.size(); ++g) {
    for (std::size_t l = 0; l < c.lambdas.size(); ++l) {
      CurvePoint row = base_row(c, c.n_grid[g], c.lambdas[l]);
      try {
        predict(row, plugin_model(est, c.n_grid[g], c.lambdas[l], c.noise_variance, opts));
      } catch (const std::exception& e) {
        row.prediction = kNaN;
        row.status = std::string("error: ") + e.what();
      }
      if (c.n_grid[g] >= c.holdout) row.extras["n_not_below_holdout"] = 1.0;
      CurvePoint truth = row;
      truth.status = "ok";
      predict(truth, {c.n_grid[g], c.lambdas[l], setup.spectrum, setup.alignment,
                      NoiseModel::gaussian(c.noise_variance)});
      row.extras["true_prediction"] = truth.prediction;
      summarize(row, cells, g, c.reps, l);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + '"';
}

json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

}  // namespace

ExperimentKind experiment_kind_from_string(const std::string& s) {
  if (s == "gaussian_curve") return ExperimentKind::gaussian_curve;
  if (s == "sphere_curve") return ExperimentKind::sphere_curve;
  if (s == "gcv_sweep") return ExperimentKind::gcv_sweep;
  if (s == "functional_probe") return ExperimentKind::functional_probe;
  if (s == "estimate_and_predict") return ExperimentKind::estimate_and_predict;
  throw DomainError("config: unknown experiment kind '" + s + "'");
}

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::gaussian_curve: return "gaussian_curve";
    case ExperimentKind::sphere_curve: return "sphere_curve";
    case ExperimentKind::gcv_sweep: return "gcv_sweep";
    case ExperimentKind::functional_probe: return "functional_probe";
    case ExperimentKind::estimate_and_predict: return "estimate_and_predict";
  }
  return "unknown";
}

void ExperimentConfig::validate() const {
  if (n_grid.empty()) throw DomainError("config: n_grid must be nonempty");
  for (std::size_t i = 0; i < n_grid.size(); ++i)
    if (n_grid[i] == 0 || (i > 0 && n_grid[i] <= n_grid[i - 1]))
      throw DomainError("config: n_grid must be positive and increasing");
  if (reps < 1) throw DomainError("config: reps must be >= 1");
  if (lambdas.empty()) throw DomainError("config: lambda grid must be nonempty");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] >= 0.0) || !std::isfinite(lambdas[i])) throw DomainError("config: lambda must be >= 0");
    if (i > 0 && lambdas[i] < lambdas[i - 1]) throw DomainError("config: lambda grid must be sorted");
  }
  if (!(noise_variance >= 0.0)) throw DomainError("config: noise_variance must be >= 0");
  if (kind != ExperimentKind::sphere_curve && !spectrum) throw DomainError("config: spectrum required");
  if (kind == ExperimentKind::functional_probe) {
    if (reps < 5) throw DomainError("config: functional_probe needs reps >= 5");
    for (double l : lambdas)
      if (!(l > 0.0)) throw DomainError("config: functional_probe needs lambda > 0");
  }
  if (kind == ExperimentKind::estimate_and_predict && holdout < 2)
    throw DomainError("config: holdout must be >= 2");
  if (kind == ExperimentKind::sphere_curve && (d < 3 || levels < 1 || !(gap > 0.0)))
    throw DomainError("config: sphere needs d >= 3, levels >= 1, gap > 0");
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    c.kind = experiment_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("n_grid"))
      c.n_grid = j.at("n_grid").get<std::vector<std::uint64_t>>();
    else if (j.contains("n"))
      c.n_grid = {j.at("n").get<std::uint64_t>()};
    c.lambdas = parse_lambdas(j);
    c.noise_variance = j.value("noise_variance", 0.0);
    c.reps = j.value("reps", std::uint64_t{1});
    c.seed = j.value("seed", std::uint64_t{0});
    c.output_path = j.value("output_path", std::string());
    if (j.contains("spectrum")) c.spectrum = parse_spectrum(j.at("spectrum"));
    if (j.contains("target")) c.target = parse_target(j.at("target"));
    c.d = j.value("d", 24u);
    c.gap = j.value("gap", 8.0);
    c.levels = j.value("levels", 7u);
    if (j.contains("energies")) {
      const json& e = j.at("energies");
      if (e.is_object()) {
        for (const auto& [k, v] : e.items()) c.energies[static_cast<unsigned>(std::stoul(k))] = v.get<double>();
      } else {
        for (const auto& kv : e) c.energies[kv.at(0).get<unsigned>()] = kv.at(1).get<double>();
      }
    }
    const std::string tm = j.value("test_matrix", std::string("identity"));
    if (tm != "identity" && tm != "target") throw DomainError("config: test_matrix must be identity or target");
    c.probe_target = tm == "target";
    c.holdout = j.value("holdout", std::uint64_t{4000});
    c.j_max = j.value("j_max", std::uint64_t{0});
    c.subtract_noise = j.value("subtract_noise", true);
  } catch (const json::exception& e) {
    throw DomainError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DomainError(std::string("config: ") + e.what());
  }
  c.source = j;
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DomainError("config " + path + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

bool ResultTable::any_failed() const {
  for (const CurvePoint& r : rows)
    if (r.status != "ok") return true;
  return false;
}

std::string config_hash(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ResultTable run_experiment(const ExperimentConfig& config, unsigned threads) {
  config.validate();
  ResultTable table;
  json src = config.source;
  src["seed"] = config.seed;
  table.config_hash = config_hash(src);
  table.timestamp = iso_timestamp();
  switch (config.kind) {
    case ExperimentKind::gaussian_curve: table.rows = run_gaussian(config, threads); break;
    case ExperimentKind::sphere_curve: table.rows = run_sphere(config, threads); break;
    case ExperimentKind::gcv_sweep: table.rows = run_gcv(config, threads); break;
    case ExperimentKind::functional_probe: table.rows = run_probe(config, threads); break;
    case ExperimentKind::estimate_and_predict: table.rows = run_estimate(config, threads); break;
  }
  return table;
}

OutputFormat output_format_from_string(const std::string& s) {
  if (s == "csv") return OutputFormat::csv;
  if (s == "json") return OutputFormat::json;
  throw DomainError("unknown output format '" + s + "'");
}

json to_json(const ResultTable& table) {
  json rows = json::array();
  for (const CurvePoint& r : table.rows) {
    json extras = json::object();
    for (const auto& [k, v] : r.extras) extras[k] = number(v);
    rows.push_back({{"kind", r.kind},
                    {"n", r.n},
                    {"lambda", number(r.lambda)},
                    {"prediction", number(r.prediction)},
                    {"empirical_mean", number(r.empirical_mean)},
                    {"empirical_std", number(r.empirical_std)},
                    {"reps", r.reps},
                    {"seed", r.seed},
                    {"lambda_star", number(r.lambda_star)},
                    {"upsilon2", number(r.upsilon2)},
                    {"status", r.status},
                    {"nu", number(r.nu)},
                    {"diagnostics", extras}});
  }
  return {{"config_hash", table.config_hash}, {"timestamp", table.timestamp}, {"rows", rows}};
}

void emit_results(const ResultTable& table, OutputFormat format, std::ostream& out) {
  if (table.rows.empty()) throw DomainError("emit_results: empty table");
  if (format == OutputFormat::json) {
    out << to_json(table).dump(2) << '\n';
    return;
  }
  out << kResultColumns << '\n';
  for (const CurvePoint& r : table.rows)
    out << csv_field(r.kind) << ',' << r.n << ',' << format_double(r.lambda) << ','
        << format_double(r.prediction) << ',' << format_double(r.empirical_mean) << ','
        << format_double(r.empirical_std) << ',' << r.reps << ',' << r.seed << ','
        << format_double(r.lambda_star) << ',' << format_double(r.upsilon2) << ','
        << csv_field(r.status) << '\n';
}

void emit_results(const ResultTable& table, OutputFormat format, const std::string& path) {
  if (table.rows.empty()) throw DomainError("emit_results: empty table");
  if (path == "-") {
    emit_results(table, format, std::cout);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  emit_results(table, format, out);
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {kNaN, kNaN};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

std::vector<double> make_beta(const TargetSpec& spec, std::uint64_t p, std::uint64_t seed) {
  std::vector<double> beta;
  switch (spec.kind) {
    case TargetSpec::Kind::random_direction: {
      Stream rng(splitmix64(seed ^ 0x62657461ULL), 0);
      beta.resize(p);
      for (double& b : beta) b = rng.normal();
      break;
    }
    case TargetSpec::Kind::coordinate:
      if (spec.index < 1 || spec.index > p) throw DomainError("target: coordinate index out of range");
      beta.assign(p, 0.0);
      beta[spec.index - 1] = 1.0;
      break;
    case TargetSpec::Kind::explicit_beta:
      if (spec.beta.size() != p) throw DomainError("target: beta length must equal the spectrum rank");
      beta = spec.beta;
      break;
  }
  double norm = 0.0;
  for (double b : beta) norm += b * b;
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) {
    if (spec.norm == 0.0) return beta;
    throw DomainError("target: beta must be nonzero");
  }
  for (double& b : beta) b *= spec.norm / norm;
  return beta;
}

Alignment alignment_from_beta(const Spectrum& spectrum, const std::vector<double>& beta) {
  if (beta.size() != spectrum.total_rank()) throw DomainError("alignment: beta length != rank");
  Alignment a;
  std::size_t j = 0;
  for (const Block& b : spectrum.blocks()) {
    double e = 0.0;
    for (std::uint64_t i = 0; i < b.multiplicity; ++i, ++j) e += beta[j] * beta[j];
    a.energies.push_back(e);
  }
  return a;
}

}  // namespace krr
