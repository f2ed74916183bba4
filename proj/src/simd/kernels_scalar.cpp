#include "krr/simd/kernels.hpp"

namespace krr::simd::detail {

ResolventSums resolvent_sums_scalar(const double* v, const double* m, const double* w,
                                    std::size_t n, double s) {
  ResolventSums r;
  for (std::size_t i = 0; i < n; ++i) {
    const double inv = 1.0 / (v[i] + s);
    const double q = v[i] * inv;
    r.inv += m[i] * inv;
    r.t1 += m[i] * q;
    r.t2 += m[i] * q * q;
    if (w != nullptr) r.wsq += w[i] * inv * inv;
  }
  return r;
}

void polynomial_series_scalar(const double* a, const double* b, const double* c, std::size_t nc,
                              const double* t, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    double prev = 0.0;
    double cur = 1.0;
    double acc = nc > 0 ? c[0] : 0.0;
    for (std::size_t k = 1; k < nc; ++k) {
      const double next = a[k - 1] * t[i] * cur - b[k - 1] * prev;
      prev = cur;
      cur = next;
      acc += c[k] * cur;
    }
    out[i] = acc;
  }
}

}  // namespace krr::simd::detail
