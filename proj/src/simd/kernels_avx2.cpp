// Compiled with -mavx2 -mfma; only reached when the CPU reports both.
#include <immintrin.h>

#include "krr/simd/kernels.hpp"

namespace krr::simd::detail {

namespace {
inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}
}  // namespace

ResolventSums resolvent_sums_avx2(const double* v, const double* m, const double* w,
                                  std::size_t n, double s) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d shift = _mm256_set1_pd(s);
  __m256d acc_inv = _mm256_setzero_pd();
  __m256d acc_t1 = _mm256_setzero_pd();
  __m256d acc_t2 = _mm256_setzero_pd();
  __m256d acc_w = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vv = _mm256_loadu_pd(v + i);
    const __m256d mm = _mm256_loadu_pd(m + i);
    const __m256d inv = _mm256_div_pd(one, _mm256_add_pd(vv, shift));
    const __m256d q = _mm256_mul_pd(vv, inv);
    acc_inv = _mm256_fmadd_pd(mm, inv, acc_inv);
    acc_t1 = _mm256_fmadd_pd(mm, q, acc_t1);
    acc_t2 = _mm256_fmadd_pd(_mm256_mul_pd(mm, q), q, acc_t2);
    if (w != nullptr) {
      const __m256d ww = _mm256_loadu_pd(w + i);
      acc_w = _mm256_fmadd_pd(_mm256_mul_pd(ww, inv), inv, acc_w);
    }
  }
  ResolventSums r{hsum(acc_inv), hsum(acc_t1), hsum(acc_t2), hsum(acc_w)};
  const ResolventSums tail =
      resolvent_sums_scalar(v + i, m + i, w != nullptr ? w + i : nullptr, n - i, s);
  r.inv += tail.inv;
  r.t1 += tail.t1;
  r.t2 += tail.t2;
  r.wsq += tail.wsq;
  return r;
}

void polynomial_series_avx2(const double* a, const double* b, const double* c, std::size_t nc,
                            const double* t, double* out, std::size_t n) {
  std::size_t i = 0;
  if (nc > 0) {
    const __m256d c0 = _mm256_set1_pd(c[0]);
    for (; i + 4 <= n; i += 4) {
      const __m256d tt = _mm256_loadu_pd(t + i);
      __m256d prev = _mm256_setzero_pd();
      __m256d cur = _mm256_set1_pd(1.0);
      __m256d acc = c0;
      for (std::size_t k = 1; k < nc; ++k) {
        const __m256d at = _mm256_mul_pd(_mm256_set1_pd(a[k - 1]), tt);
        const __m256d next =
            _mm256_fmsub_pd(at, cur, _mm256_mul_pd(_mm256_set1_pd(b[k - 1]), prev));
        prev = cur;
        cur = next;
        acc = _mm256_fmadd_pd(_mm256_set1_pd(c[k]), cur, acc);
      }
      _mm256_storeu_pd(out + i, acc);
    }
  }
  polynomial_series_scalar(a, b, c, nc, t + i, out + i, n - i);
}

}  // namespace krr::simd::detail
