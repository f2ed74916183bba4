#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "krr/errors.hpp"
#include "krr/estimation.hpp"
#include "krr/fixed_point.hpp"
#include "krr/functionals.hpp"
#include "krr/harness.hpp"
#include "krr/io.hpp"
#include "krr/krr_engine.hpp"
#include "krr/parallel.hpp"

namespace {

using json = nlohmann::json;

struct Common {
  std::string config;
  std::string out = "-";
  std::string format = "csv";
  unsigned threads = krr::default_threads();
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Common& c, bool config_required) {
  auto* opt = sub->add_option("--config", c.config, "Experiment config (JSON)");
  if (config_required) opt->required();
  sub->add_option("--out", c.out, "Output path, - for stdout");
  sub->add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  sub->add_option("--threads", c.threads, "Worker threads (default KRRDETEQ_THREADS)")->check(CLI::PositiveNumber);
  sub->add_option("--seed", c.seed, "Overrides the config seed");
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw krr::DomainError("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw krr::DomainError("config " + path + ": " + e.what());
  }
}

krr::ExperimentConfig load(const Common& c, std::optional<krr::ExperimentKind> expect) {
  json j = read_json(c.config);
  if (c.seed) j["seed"] = *c.seed;
  krr::ExperimentConfig cfg = krr::experiment_config_from_json(j);
  if (expect && cfg.kind != *expect)
    throw krr::DomainError("config kind must be " + krr::to_string(*expect) + " for this subcommand");
  return cfg;
}

std::string out_path(const Common& c, const std::string& config_out) {
  return c.out == "-" && !config_out.empty() ? config_out : c.out;
}

template <class Writer>
void write_to(const std::string& path, Writer&& w) {
  if (path == "-") {
    w(std::cout);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  w(out);
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path);
}

int finish(const krr::ResultTable& table, const Common& c, const std::string& config_out) {
  krr::emit_results(table, krr::output_format_from_string(c.format), out_path(c, config_out));
  return table.any_failed() ? 2 : 0;
}

int run_simulate(const Common& c, std::optional<krr::ExperimentKind> expect) {
  const krr::ExperimentConfig cfg = load(c, expect);
  return finish(krr::run_experiment(cfg, c.threads), c, cfg.output_path);
}

krr::ResultTable deteq_table(const json& j) {
  const krr::SpectrumDocument doc = krr::spectrum_document_from_json(j);
  std::vector<std::uint64_t> ns;
  if (j.contains("n_grid")) ns = j.at("n_grid").get<std::vector<std::uint64_t>>();
  else ns = {j.at("n").get<std::uint64_t>()};
  std::vector<double> lambdas;
  if (j.contains("lambda_grid")) lambdas = j.at("lambda_grid").get<std::vector<double>>();
  else lambdas = {j.at("lambda").get<double>()};
  krr::ResultTable table;
  table.config_hash = krr::config_hash(j);
  for (std::uint64_t n : ns) {
    for (double lambda : lambdas) {
      krr::CurvePoint row;
      row.kind = "deteq";
      row.n = n;
      row.lambda = lambda;
      row.empirical_mean = row.empirical_std = std::numeric_limits<double>::quiet_NaN();
      row.seed = j.value("seed", std::uint64_t{0});
      try {
        const krr::ModelSpec spec{n, lambda, doc.spectrum, doc.alignment,
                                  krr::NoiseModel::gaussian(doc.noise_variance)};
        const krr::EffectiveReg reg = krr::solve_effective_reg(spec.spectrum, n, lambda);
        const krr::DetEquivalents eq = krr::deterministic_equivalents(spec, reg);
        row.prediction = eq.risk;
        row.lambda_star = reg.lambda_star;
        row.upsilon2 = reg.upsilon2;
        const json eqj = krr::to_json(eq);
        for (const auto& [k, v] : eqj.items()) row.extras[k] = v.get<double>();
      } catch (const std::exception& e) {
        row.prediction = row.lambda_star = row.upsilon2 = std::numeric_limits<double>::quiet_NaN();
        row.status = std::string("error: ") + e.what();
      }
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

std::vector<double> lambda_grid_from(const json& j) {
  if (j.contains("lambda_grid") || j.contains("lambda")) {
    json tmp = j;
    tmp["kind"] = "gcv_sweep";
    if (!tmp.contains("n")) tmp["n"] = 1;
    if (!tmp.contains("spectrum")) tmp["spectrum"] = {{"family", "power_law"}, {"p", 1}};
    return krr::experiment_config_from_json(tmp).lambdas;
  }
  std::vector<double> grid(20);
  for (int i = 0; i < 20; ++i) grid[i] = 1e-4 * std::pow(1e6, i / 19.0);
  return grid;
}

int run_gcv_files(const Common& c, const std::string& gram_path, const std::string& labels_path, bool direct) {
  const json j = c.config.empty() ? json::object() : read_json(c.config);
  const std::vector<double> grid = lambda_grid_from(j);
  const krr::GramMatrix gram(krr::read_gram(gram_path));
  gram.validate_psd();
  const Eigen::VectorXd y = krr::read_labels(labels_path);
  std::vector<krr::SweepPoint> points;
  std::vector<std::string> errors;
  std::unique_ptr<krr::SpectralSweep> sweep;
  if (!direct) sweep = std::make_unique<krr::SpectralSweep>(gram, y);
  for (double lambda : grid) {
    try {
      points.push_back(direct ? krr::sweep_point_direct(gram, y, lambda) : sweep->at(lambda));
    } catch (const std::exception& e) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      points.push_back({lambda, nan, nan, nan, nan});
      errors.push_back(e.what());
    }
  }
  write_to(c.out, [&](std::ostream& out) {
    if (c.format == "csv") {
      krr::write_sweep_csv(out, points);
      return;
    }
    json rows = json::array();
    for (const auto& p : points) {
      auto num = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
      rows.push_back({{"lambda", p.lambda}, {"gcv", num(p.gcv)}, {"train_error", num(p.train_error)},
                      {"stieltjes", num(p.stieltjes)}, {"test_error_if_available", num(p.test_error)}});
    }
    out << json{{"rows", rows}, {"errors", errors}}.dump(2) << '\n';
  });
  return errors.empty() ? 0 : 2;
}

int run_probe(const Common& c) {
  const krr::ExperimentConfig cfg = load(c, krr::ExperimentKind::functional_probe);
  const krr::Spectrum spectrum = *cfg.spectrum;
  krr::TestMatrix a = krr::TestMatrix::identity();
  if (cfg.probe_target) {
    const auto beta = krr::make_beta(cfg.target, spectrum.total_rank(), cfg.seed);
    a = krr::TestMatrix::target(Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size())));
  }
  if (cfg.lambdas.size() != 1) throw krr::DomainError("probe-functionals takes a single lambda");
  const auto rows = krr::convergence_probe([&](std::uint64_t) { return spectrum; }, cfg.n_grid,
                                           cfg.lambdas.front(), a, cfg.reps, cfg.seed, c.threads);
  write_to(out_path(c, cfg.output_path), [&](std::ostream& out) {
    if (c.format == "csv") {
      krr::write_probe_csv(out, rows);
      return;
    }
    json arr = json::array();
    for (const auto& r : rows)
      arr.push_back({{"n", r.n}, {"functional_index", r.functional_index}, {"median_rel_err", r.median_rel_err},
                     {"q25", r.q25}, {"q75", r.q75}, {"reps", r.reps}, {"seed", r.seed}});
    out << json{{"rows", arr}}.dump(2) << '\n';
  });
  return 0;
}

int run_estimate_files(const Common& c, const std::string& gram_path, const std::string& labels_path) {
  const json j = c.config.empty() ? json::object() : read_json(c.config);
  const krr::GramMatrix gram(krr::read_gram(gram_path));
  const Eigen::VectorXd y = krr::read_labels(labels_path);
  const krr::EstimatedDecomposition est = krr::estimate_spectrum(gram, y);
  std::vector<std::uint64_t> ns = j.value("n_grid", std::vector<std::uint64_t>{});
  if (ns.empty()) {
    for (std::uint64_t div : {8, 4, 2}) {
      const std::uint64_t n = std::max<std::uint64_t>(1, est.holdout_size / div);
      if (ns.empty() || ns.back() != n) ns.push_back(n);
    }
  }
  const double lambda = j.value("lambda", 0.0);
  const double sigma2 = j.value("noise_variance", 0.0);
  krr::PluginOptions opts;
  opts.j_max = j.value("j_max", std::uint64_t{0});
  opts.subtract_noise = j.value("subtract_noise", true);
  krr::ResultTable table;
  table.config_hash = krr::config_hash(j);
  for (const krr::PluginPoint& p : krr::plugin_risk_curve(est, ns, lambda, sigma2, opts)) {
    krr::CurvePoint row;
    row.kind = "estimate";
    row.n = p.n;
    row.lambda = lambda;
    row.prediction = p.risk;
    row.empirical_mean = row.empirical_std = std::numeric_limits<double>::quiet_NaN();
    row.seed = j.value("seed", std::uint64_t{0});
    if (!p.error.empty()) row.status = "error: " + p.error;
    if (!p.warning.empty()) std::cerr << "warning: n = " << p.n << ": " << p.warning << '\n';
    if (p.error.empty()) {
      const krr::EffectiveReg reg = krr::solve_effective_reg(
          krr::plugin_model(est, p.n, lambda, sigma2, opts).spectrum, p.n, lambda);
      row.lambda_star = reg.lambda_star;
      row.upsilon2 = reg.upsilon2;
    } else {
      row.lambda_star = row.upsilon2 = std::numeric_limits<double>::quiet_NaN();
    }
    table.rows.push_back(std::move(row));
  }
  if (j.contains("decomposition_out")) {
    std::ofstream out(j.at("decomposition_out").get<std::string>());
    out << krr::to_json(est).dump(2) << '\n';
  }
  return finish(table, c, j.value("output_path", std::string()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic equivalents for kernel ridge regression"};
  app.require_subcommand(1);

  Common deteq_c, sim_c, gcv_c, sphere_c, probe_c, est_c;
  std::string gcv_gram, gcv_labels, est_gram, est_labels;
  bool gcv_direct = false;

  auto* deteq = app.add_subcommand("deteq", "Closed-form equivalents for a spectrum document");
  add_common(deteq, deteq_c, true);
  auto* simulate = app.add_subcommand("simulate", "Run any experiment config");
  add_common(simulate, sim_c, true);
  auto* gcv = app.add_subcommand("gcv-sweep", "GCV over a lambda grid (simulated, or from --gram/--labels)");
  add_common(gcv, gcv_c, false);
  gcv->add_option("--gram", gcv_gram, "Gram matrix (KRRG binary or .csv)");
  gcv->add_option("--labels", gcv_labels, "Labels (KRRY binary or .csv)");
  gcv->add_flag("--direct", gcv_direct, "Refactorize per lambda instead of one eigendecomposition");
  auto* sphere = app.add_subcommand("sphere", "Sphere learning curve");
  add_common(sphere, sphere_c, true);
  auto* probe = app.add_subcommand("probe-functionals", "Functional convergence probe");
  add_common(probe, probe_c, true);
  auto* estimate = app.add_subcommand("estimate", "Plug-in curve from an estimated spectrum");
  add_common(estimate, est_c, false);
  estimate->add_option("--gram", est_gram, "Holdout Gram matrix (KRRG binary or .csv)");
  estimate->add_option("--labels", est_labels, "Holdout labels (KRRY binary or .csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*deteq) {
      json j = read_json(deteq_c.config);
      if (deteq_c.seed) j["seed"] = *deteq_c.seed;
      return finish(deteq_table(j), deteq_c, j.value("output_path", std::string()));
    }
    if (*simulate) return run_simulate(sim_c, std::nullopt);
    if (*sphere) return run_simulate(sphere_c, krr::ExperimentKind::sphere_curve);
    if (*probe) return run_probe(probe_c);
    if (*gcv) {
      if (gcv_gram.empty() != gcv_labels.empty()) throw krr::DomainError("--gram and --labels go together");
      if (!gcv_gram.empty()) return run_gcv_files(gcv_c, gcv_gram, gcv_labels, gcv_direct);
      if (gcv_c.config.empty()) throw krr::DomainError("gcv-sweep needs --config or --gram/--labels");
      return run_simulate(gcv_c, krr::ExperimentKind::gcv_sweep);
    }
    if (*estimate) {
      if (est_gram.empty() != est_labels.empty()) throw krr::DomainError("--gram and --labels go together");
      if (!est_gram.empty()) return run_estimate_files(est_c, est_gram, est_labels);
      if (est_c.config.empty()) throw krr::DomainError("estimate needs --config or --gram/--labels");
      return run_simulate(est_c, krr::ExperimentKind::estimate_and_predict);
    }
  } catch (const krr::DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
