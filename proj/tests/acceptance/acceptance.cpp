// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "krr/estimation.hpp"
#include "krr/fixed_point.hpp"
#include "krr/functionals.hpp"
#include "krr/krr_engine.hpp"
#include "krr/parallel.hpp"
#include "krr/rng.hpp"
#include "krr/simd/kernels.hpp"
#include "krr/sphere.hpp"

using namespace krr;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

Eigen::VectorXd unit_direction(std::uint64_t p, std::uint64_t seed) {
  Stream s(seed, 0);
  Eigen::VectorXd b(static_cast<Eigen::Index>(p));
  for (Eigen::Index j = 0; j < b.size(); ++j) b[j] = s.normal();
  return b / b.norm();
}

Alignment alignment_of(const Spectrum& sp, const Eigen::VectorXd& beta) {
  Alignment a;
  Eigen::Index j = 0;
  for (const Block& b : sp.blocks()) {
    double e = 0;
    for (std::uint64_t c = 0; c < b.multiplicity; ++c, ++j) e += beta[j] * beta[j];
    a.energies.push_back(e);
  }
  return a;
}

// theta = Sigma^{-1/2} beta, so that the target's energy on eigenvector j is beta_j^2.
Eigen::VectorXd coefficients(const Spectrum& sp, const Eigen::VectorXd& beta) {
  const std::vector<double> xi = sp.expanded();
  Eigen::VectorXd t(beta.size());
  for (Eigen::Index j = 0; j < t.size(); ++j) t[j] = beta[j] / std::sqrt(xi[j]);
  return t;
}

// Labels y = X theta + noise.
Eigen::VectorXd labels(const FeatureSample& s, const Eigen::VectorXd& theta, double sigma2, std::uint64_t key,
                       std::uint64_t stream) {
  Stream noise(key, stream);
  Eigen::VectorXd y = s.matrix * theta;
  const double sd = std::sqrt(sigma2);
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += sd * noise.normal();
  return y;
}

template <class... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

Outcome a1_fixed_point() {
  Outcome o;
  Stream rng(0xA1);
  double worst_cert = 0, worst_iso = 0;
  for (int it = 0; it < 100; ++it) {
    const int nb = 1 + static_cast<int>(rng.uniform() * 50);
    std::vector<double> xs(nb);
    for (double& x : xs) x = std::pow(10.0, -6.0 * rng.uniform());
    std::sort(xs.begin(), xs.end(), std::greater<>());
    std::vector<Block> blocks;
    for (double x : xs) blocks.push_back({x, 1 + static_cast<std::uint64_t>(rng.uniform() * 100)});
    const Spectrum s(blocks);
    double lambda = it % 5 == 0 ? 0.0 : 10.0 * rng.uniform();
    auto n = 1 + static_cast<std::uint64_t>(rng.uniform() * 2000);
    if (lambda == 0.0 && s.total_rank() <= n) {
      if (s.total_rank() > 1)
        n = 1 + static_cast<std::uint64_t>(rng.uniform() * static_cast<double>(s.total_rank() - 1));
      else
        lambda = 10.0 * rng.uniform();
    }
    const EffectiveReg r = solve_effective_reg(s, n, lambda);
    const double nn = static_cast<double>(n);
    const double cert = std::abs(nn - lambda / r.lambda_star - trace_resolvents(s, r.lambda_star).t1) / nn;
    worst_cert = std::max(worst_cert, cert);

    const double xi = std::pow(10.0, -6.0 * rng.uniform());
    const auto p = 1 + static_cast<std::uint64_t>(rng.uniform() * 5000);
    auto ni = 1 + static_cast<std::uint64_t>(rng.uniform() * 5000);
    double li = it % 5 == 1 ? 0.0 : 10.0 * rng.uniform();
    if (li == 0.0 && p <= ni) ni = std::max<std::uint64_t>(1, p / 2);
    if (li == 0.0 && p <= ni) li = 1.0;
    const double b = static_cast<double>(ni) * xi - li - static_cast<double>(p) * xi;
    const double disc = std::sqrt(b * b + 4.0 * static_cast<double>(ni) * li * xi);
    const double root = b < 0 ? (-b + disc) / (2.0 * static_cast<double>(ni)) : 2.0 * li * xi / (b + disc);
    worst_iso = std::max(worst_iso, rel(solve_effective_reg(Spectrum({{xi, p}}), ni, li).lambda_star, root));
  }
  o.pass = worst_cert <= 1e-12 && worst_iso <= 1e-10;
  o.detail = fmt("max certificate %.2e (<= 1e-12 n), max isotropic rel err %.2e (<= 1e-10)", worst_cert, worst_iso);
  return o;
}

Outcome a2_identities() {
  Outcome o;
  Stream rng(0xA2);
  double worst = 0;
  for (int it = 0; it < 200; ++it) {
    const int nb = 1 + static_cast<int>(rng.uniform() * 30);
    std::vector<double> xs(nb);
    for (double& x : xs) x = std::pow(10.0, -4.0 * rng.uniform());
    std::sort(xs.begin(), xs.end(), std::greater<>());
    std::vector<Block> blocks;
    Alignment al;
    for (double x : xs) {
      blocks.push_back({x, 1 + static_cast<std::uint64_t>(rng.uniform() * 50)});
      al.energies.push_back(rng.uniform());
    }
    al.residual_energy = 0.1 * rng.uniform();
    const Spectrum s(blocks);
    const auto n = 1 + static_cast<std::uint64_t>(rng.uniform() * 500);
    const double lambda = std::pow(10.0, -3.0 + 4.0 * rng.uniform());
    const ModelSpec spec{n, lambda, s, al, NoiseModel::gaussian(rng.uniform())};
    const DetEquivalents eq = deterministic_equivalents(spec);
    const EffectiveReg reg = solve_effective_reg(s, n, lambda);
    const double nn = static_cast<double>(n);
    worst = std::max(worst, rel(eq.bias + eq.variance + spec.noise.variance, eq.risk));
    worst = std::max(worst, rel(lambda * lambda * eq.stieltjes * eq.stieltjes * eq.risk, eq.train));
    worst = std::max(worst, rel(1.0 - lambda / (nn * reg.lambda_star), reg.upsilon1));
    const Functionals psi = deterministic_functionals(s, n, lambda, TestMatrix::identity());
    worst = std::max(worst, rel(1.0 - lambda / (nn * reg.lambda_star), psi[1]));
    worst = std::max(worst, rel(reg.mu_star * reg.mu_star / (nn * nn) * psi[2], psi[3]));
    const double c = std::pow(10.0, 6.0 * rng.uniform() - 3.0);
    ModelSpec scaled = spec;
    scaled.spectrum = s.scaled(c);
    scaled.lambda = c * lambda;
    worst = std::max(worst, rel(deterministic_equivalents(scaled).risk, eq.risk));
  }
  o.pass = worst <= 1e-10;
  o.detail = fmt("max relative defect %.2e over 200 instances (<= 1e-10)", worst);
  return o;
}

struct GaussianSetup {
  std::uint64_t p = 2000;
  double lambda = 0.01, sigma2 = 0.25;
  Spectrum cov = Spectrum::power_law(2000, 2.0);
  Eigen::VectorXd beta = unit_direction(2000, 0xBE7A);
  Eigen::VectorXd theta = coefficients(cov, beta);
  ModelSpec spec(std::uint64_t n) const {
    return {n, lambda, cov, alignment_of(cov, beta), NoiseModel::gaussian(sigma2)};
  }
};

Outcome a3_concentrated(unsigned threads) {
  Outcome o;
  const GaussianSetup g;
  const int reps = 20;
  std::map<std::uint64_t, double> med;
  for (std::uint64_t n : {100u, 400u}) {
    const double rn = deterministic_equivalents(g.spec(n)).risk;
    std::vector<double> errs(reps);
    parallel_for(reps, threads, [&](std::size_t r) {
      const std::uint64_t key = replication_seed(0xA3, r);
      const FeatureSample s = sample_gaussian_features(g.cov, n, key, 256 * n);
      const Eigen::VectorXd y = labels(s, g.theta, g.sigma2, key, 256 * n + 1);
      errs[r] = rel(test_error_linear_exact(s, g.theta, g.sigma2, g.lambda, y), rn);
    });
    med[n] = median(errs);
  }
  const double ratio = med[400] / med[100];
  o.pass = med[400] <= 0.15 && ratio >= 0.3 && ratio <= 0.9;
  o.detail = fmt("median rel err n=100 %.4f, n=400 %.4f (<= 0.15), ratio %.3f (in [0.3, 0.9])", med[100], med[400],
                 ratio);
  return o;
}

Outcome a4_gcv(unsigned threads) {
  Outcome o;
  const GaussianSetup g;
  const std::uint64_t n = 400;
  const int reps = 20;
  std::vector<double> grid(20);
  for (int i = 0; i < 20; ++i) grid[i] = std::pow(10.0, -4.0 + 6.0 * i / 19.0);
  std::vector<double> max_dev(reps), regret(reps);
  parallel_for(reps, threads, [&](std::size_t r) {
    const std::uint64_t key = replication_seed(0xA4, r);
    const FeatureSample s = sample_gaussian_features(g.cov, n, key, 0);
    const Eigen::VectorXd y = labels(s, g.theta, g.sigma2, key, 1);
    const GramMatrix k(s.matrix * s.matrix.transpose());
    const SpectralSweep sweep(k, y);
    const std::vector<double> test = test_error_linear_curve(s, g.theta, g.sigma2, y, grid);
    double dev = 0, best_gcv = INFINITY, best_test = INFINITY;
    std::size_t pick = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double v = sweep.at(grid[i]).gcv;
      dev = std::max(dev, std::abs(v / test[i] - 1.0));
      if (v < best_gcv) {
        best_gcv = v;
        pick = i;
      }
      best_test = std::min(best_test, test[i]);
    }
    max_dev[r] = dev;
    regret[r] = test[pick] / best_test;
  });
  const auto good = std::count_if(max_dev.begin(), max_dev.end(), [](double d) { return d <= 0.25; });
  const double med_regret = median(regret);
  o.pass = good >= 18 && med_regret <= 1.1;
  o.detail = fmt("%d/20 reps with max |GCV/R - 1| <= 0.25 (worst %.3f), median R(lambda_gcv)/min R = %.4f (<= 1.1)",
                 static_cast<int>(good), *std::max_element(max_dev.begin(), max_dev.end()), med_regret);
  return o;
}

Outcome a5_sphere(unsigned threads) {
  Outcome o;
  const unsigned d = 24;
  const SphereKernel ker = kernel_from_gaps(d, 7, 8.0);
  std::map<unsigned, double> e;
  for (unsigned k = 1; k <= 7; ++k) e[k] = 1.0 / (k * k);
  const SphereTarget f = build_cyclic_target(d, e);
  const double sigma2 = 0.1;
  const int reps = 20;
  std::string worst;
  double worst_mean = 0, worst_std = 0;
  for (std::uint64_t n : {8u, 16u, 32u, 64u, 128u, 256u, 512u, 1024u}) {
    const double rn = deterministic_equivalents(sphere_spectrum(ker, f, NoiseModel::gaussian(sigma2), n, 0.0)).risk;
    std::vector<double> risk(reps);
    parallel_for(reps, threads, [&](std::size_t r) {
      const std::uint64_t key = replication_seed(0xA5, r);
      const Eigen::MatrixXd u = sample_sphere(d, n, key, 256 * n);
      Stream noise(key, 256 * n + 1);
      Eigen::VectorXd y = f.eval(u);
      for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += std::sqrt(sigma2) * noise.normal();
      const KrrFit fit = fit_krr(std::make_shared<const GramMatrix>(ker.gram(u)), y, 0.0);
      risk[r] = exact_sphere_risk(fit, ker, f, sigma2, u);
    });
    double mean = 0;
    for (double v : risk) mean += v;
    mean /= reps;
    double var = 0;
    for (double v : risk) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / (reps - 1));
    if (n >= 64) {
      worst_mean = std::max(worst_mean, rel(mean, rn));
      worst_std = std::max(worst_std, sd / mean);
    }
  }
  o.pass = worst_mean <= 0.2 && worst_std <= 0.25;
  o.detail = fmt("n >= 64: max |mean - R_n|/R_n %.4f (<= 0.2), max std/mean %.4f (<= 0.25)", worst_mean, worst_std);
  return o;
}

Outcome a6_functionals(unsigned threads) {
  Outcome o;
  const Spectrum cov = Spectrum::power_law(2000, 2.0);
  const double lambda = 0.1;
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(2000);
  e1[0] = 1.0;
  const std::vector<TestMatrix> as{TestMatrix::identity(), TestMatrix::target(e1)};
  const int reps = 20;
  std::map<std::uint64_t, std::vector<Functionals>> psi;
  std::map<std::uint64_t, std::vector<std::vector<Functionals>>> errs;
  for (std::uint64_t n : {200u, 800u}) {
    std::vector<Functionals> ps;
    for (const TestMatrix& a : as) ps.push_back(deterministic_functionals(cov, n, lambda, a));
    std::vector<std::vector<Functionals>> e(reps);
    parallel_for(reps, threads, [&](std::size_t r) {
      const FeatureSample s = sample_gaussian_features(cov, n, replication_seed(0xA6, r), n);
      const std::vector<Functionals> phi = empirical_functionals(s, lambda, as);
      e[r].resize(as.size());
      for (std::size_t k = 0; k < as.size(); ++k)
        for (int j = 0; j < 4; ++j) e[r][k][j] = rel(phi[k][j], ps[k][j]);
    });
    errs[n] = e;
  }
  std::string ratios;
  for (std::size_t k = 0; k < as.size(); ++k) {
    for (int j = 0; j < 4; ++j) {
      std::vector<double> lo(reps), hi(reps);
      for (int r = 0; r < reps; ++r) {
        lo[r] = errs[200][r][k][j];
        hi[r] = errs[800][r][k][j];
      }
      const double m200 = median(lo), m800 = median(hi), ratio = m800 / m200;
      if (!(m800 < m200 && ratio >= 0.25 && ratio <= 0.9)) o.pass = false;
      ratios += fmt("%s%s%d=%.3f", ratios.empty() ? "" : " ", k == 0 ? "I:phi" : "T:phi", j + 1, ratio);
    }
  }
  o.detail = "ratios median(800)/median(200) in [0.25, 0.9]: " + ratios;
  return o;
}

Outcome a7_sphere_machinery() {
  Outcome o;
  double ortho = 0, at_one = 0;
  for (unsigned d : {10u, 24u}) {
    const GegenbauerBasis b(d, 10);
    const QuadratureRule rule = gauss_gegenbauer(d, 64);
    for (unsigned j = 0; j <= 10; ++j)
      for (unsigned k = 0; k <= 10; ++k) {
        double v = 0;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i)
          v += rule.weights[i] * b.eval(j, rule.nodes[i]) * b.eval(k, rule.nodes[i]);
        ortho = std::max(ortho, std::abs(v - (j == k ? 1.0 : 0.0)));
      }
    for (unsigned k = 0; k <= 10; ++k) {
      const double q = b.eval(k, 1.0);
      at_one = std::max(at_one, rel(q * q, static_cast<double>(dim_spherical(d, k))));
    }
  }

  // Addition formula: E_u[Q_j(<a,u>/d) Q_k(<u,b>/d)] = delta_jk Q_k(<a,b>/d) / sqrt(B).
  const unsigned d = 24;
  const GegenbauerBasis b(d, 4);
  const Eigen::MatrixXd ab = sample_sphere(d, 2, 0xA7, 0);
  const Eigen::MatrixXd u = sample_sphere(d, 100000, 0xA7, 1);
  const Eigen::VectorXd ta = u * ab.row(0).transpose() / d, tb = u * ab.row(1).transpose() / d;
  const double tab = ab.row(0).dot(ab.row(1)) / d;
  double worst_z = 0;
  for (unsigned j = 0; j <= 3; ++j)
    for (unsigned k = 0; k <= 3; ++k) {
      Eigen::ArrayXd v(u.rows());
      for (Eigen::Index i = 0; i < u.rows(); ++i) v[i] = b.eval(j, ta[i]) * b.eval(k, tb[i]);
      const double mean = v.mean();
      const double se = std::sqrt((v - mean).square().sum() / (v.size() - 1) / v.size());
      const double want = j == k ? b.eval(k, tab) / std::sqrt(static_cast<double>(dim_spherical(d, k))) : 0.0;
      worst_z = std::max(worst_z, se > 0 ? std::abs(mean - want) / se : (mean == want ? 0.0 : INFINITY));
    }

  const SphereKernel ker = kernel_from_gaps(d, 7, 8.0);
  std::map<unsigned, double> e;
  for (unsigned k = 1; k <= 7; ++k) e[k] = 1.0 / (k * k);
  const SphereTarget f = build_cyclic_target(d, e);
  double fit_z = 0;
  const double lambdas[5] = {0.0, 0.0, 0.01, 0.1, 1.0};
  for (int fi = 0; fi < 5; ++fi) {
    const std::uint64_t key = replication_seed(0xA77, fi);
    const Eigen::MatrixXd x = sample_sphere(d, 128, key, 0);
    Stream noise(key, 1);
    Eigen::VectorXd y = f.eval(x);
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += std::sqrt(0.1) * noise.normal();
    const KrrFit fit = fit_krr(std::make_shared<const GramMatrix>(ker.gram(x)), y, lambdas[fi]);
    const double exact = exact_sphere_risk(fit, ker, f, 0.1, x);
    const Eigen::MatrixXd test = sample_sphere(d, 20000, key, 2);
    const MonteCarloEstimate mc = test_error_monte_carlo(
        fit, [&](const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) { return ker.cross(p, q); },
        [&](const Eigen::MatrixXd& p) { return f.eval(p); }, 0.1, x, test);
    fit_z = std::max(fit_z, std::abs(mc.estimate - exact) / mc.std_error);
  }
  o.pass = ortho <= 1e-8 && at_one <= 1e-8 && worst_z <= 3.0 && fit_z <= 3.0;
  o.detail = fmt("orthonormality %.1e, Q(1)^2 vs B %.1e, addition formula max z %.2f, exact vs MC risk max z %.2f",
                 ortho, at_one, worst_z, fit_z);
  return o;
}

Outcome a8_estimation() {
  Outcome o;
  const std::uint64_t p = 200, m = 4000;
  const double lambda = 0.01, sigma2 = 0.25;
  const Spectrum cov = Spectrum::power_law(p, 2.0);
  const Eigen::VectorXd beta = unit_direction(p, 0xA8);
  const FeatureSample s = sample_gaussian_features(cov, m, 0xA8, 0);
  const Eigen::VectorXd y = labels(s, coefficients(cov, beta), sigma2, 0xA8, 1);
  const EstimatedDecomposition est = estimate_spectrum(GramMatrix(s.matrix * s.matrix.transpose()), y);
  double eig_err = 0;
  for (std::uint64_t j = 1; j <= 10; ++j) eig_err = std::max(eig_err, rel(est.eigenvalues[j - 1], cov.eigenvalue_at(j)));
  const std::vector<std::uint64_t> grid{50, 100, 200, 400};
  const std::vector<PluginPoint> curve = plugin_risk_curve(est, grid, lambda, sigma2);
  double risk_err = 0;
  for (const PluginPoint& pt : curve) {
    const ModelSpec truth{pt.n, lambda, cov, alignment_of(cov, beta), NoiseModel::gaussian(sigma2)};
    risk_err = std::max(risk_err, pt.error.empty() ? rel(pt.risk, deterministic_equivalents(truth).risk) : INFINITY);
  }
  o.pass = eig_err <= 0.1 && risk_err <= 0.2;
  o.detail = fmt("top-10 eigenvalue max rel err %.4f (<= 0.1), plugin risk max rel err %.4f (<= 0.2)", eig_err,
                 risk_err);
  return o;
}

}  // namespace

int main() {
  const unsigned threads = default_threads();
  std::printf("isa=%s threads=%u\n", std::string(simd::isa_name(simd::active_isa())).c_str(), threads);
  struct Criterion {
    const char* id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"A1", "fixed-point correctness", 1.0, a1_fixed_point},
      {"A2", "algebraic identities", 1.0, a2_identities},
      {"A3", "concentrated-features agreement", 120.0, [&] { return a3_concentrated(threads); }},
      {"A4", "GCV uniform consistency", 120.0, [&] { return a4_gcv(threads); }},
      {"A5", "sphere learning curve", 300.0, [&] { return a5_sphere(threads); }},
      {"A6", "functional convergence", 180.0, [&] { return a6_functionals(threads); }},
      {"A7", "sphere machinery", 120.0, a7_sphere_machinery},
      {"A8", "estimation pipeline", 120.0, a8_estimation},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("%s %s %s (%.2f s of %.0f s): %s\n", pass ? "PASS" : "FAIL", c.id, c.name, secs, c.budget_s,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
