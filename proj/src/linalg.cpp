#include "krr/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Eigenvalues>

#include "krr/errors.hpp"

namespace krr {

namespace {

// Numerical Recipes tqli with eigenvector accumulation replaced by the
// update of u = Z^T w. e[i] = T(i+1, i), e[n-1] = 0.
void implicit_ql(std::vector<double>& d, std::vector<double>& e, std::vector<double>& u) {
  const int n = static_cast<int>(d.size());
  constexpr double eps = std::numeric_limits<double>::epsilon();
  double norm = 0.0;
  for (int i = 0; i < n; ++i) norm = std::max(norm, std::abs(d[i]) + std::abs(e[i]));
  const double floor = eps * norm;
  for (int l = 0; l < n; ++l) {
    int iter = 0;
    int m;
    do {
      for (m = l; m < n - 1; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= eps * dd || std::abs(e[m]) <= floor) break;
      }
      if (m != l) {
        if (iter++ == 60) throw SolverError("spectral_projection: QL iteration did not converge");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
        double s = 1.0, c = 1.0, p = 0.0;
        int i;
        for (i = m - 1; i >= l; --i) {
          double f = s * e[i];
          const double b = c * e[i];
          e[i + 1] = (r = std::hypot(f, g));
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          d[i + 1] = g + (p = s * r);
          g = c * r - b;
          f = u[i + 1];
          u[i + 1] = s * u[i] + c * f;
          u[i] = c * u[i] - s * f;
        }
        if (r == 0.0 && i >= l) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
}

}  // namespace

SpectralProjection spectral_projection(const Eigen::MatrixXd& k, const Eigen::VectorXd& y) {
  if (k.rows() != k.cols() || k.rows() != y.size())
    throw DomainError("spectral_projection: dimension mismatch");
  const Eigen::Index n = k.rows();
  if (n == 0) return {};
  Eigen::Tridiagonalization<Eigen::MatrixXd> tri(k);
  const Eigen::VectorXd w = tri.matrixQ().transpose() * y;
  const Eigen::VectorXd diag = tri.diagonal();
  const Eigen::VectorXd sub = tri.subDiagonal();
  std::vector<double> d(diag.data(), diag.data() + n);
  std::vector<double> e(n, 0.0);
  for (Eigen::Index i = 0; i + 1 < n; ++i) e[i] = sub[i];
  std::vector<double> u(w.data(), w.data() + n);
  implicit_ql(d, e, u);

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return d[a] > d[b]; });
  SpectralProjection out{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    out.eigenvalues[i] = d[order[i]];
    out.coords[i] = u[order[i]];
  }
  return out;
}

}  // namespace krr
