#pragma once

// Data-parallel inner loops with a scalar reference and an AVX2/FMA variant.
// The variant is picked once at startup from CPU feature detection; setting
// KRR_ISA=scalar in the environment forces the reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace krr::simd {

enum class Isa { scalar, avx2 };

/// Spectral sums at shift s over (value, multiplicity, weight) triples:
///   inv  = sum m/(v+s)
///   t1   = sum m v/(v+s)
///   t2   = sum m v^2/(v+s)^2
///   wsq  = sum w/(v+s)^2
struct ResolventSums {
  double inv = 0.0;
  double t1 = 0.0;
  double t2 = 0.0;
  double wsq = 0.0;
};

/// Three-term recurrence C_{k+1} = a_k t C_k - b_k C_{k-1}, C_0 = 1, C_{-1} = 0.
/// Evaluates out[i] = sum_k coeff[k] C_k(t[i]) for k < coeff.size().
/// rec_a and rec_b need at least coeff.size() - 1 entries.
struct Recurrence {
  std::span<const double> a;
  std::span<const double> b;
};

Isa active_isa() noexcept;
std::string_view isa_name(Isa isa) noexcept;
bool isa_available(Isa isa) noexcept;

ResolventSums resolvent_sums(std::span<const double> values, std::span<const double> mult,
                             std::span<const double> weight, double s);
ResolventSums resolvent_sums(Isa isa, std::span<const double> values,
                             std::span<const double> mult, std::span<const double> weight,
                             double s);

void polynomial_series(Recurrence rec, std::span<const double> coeff, std::span<const double> t,
                       std::span<double> out);
void polynomial_series(Isa isa, Recurrence rec, std::span<const double> coeff,
                       std::span<const double> t, std::span<double> out);

namespace detail {
ResolventSums resolvent_sums_scalar(const double* v, const double* m, const double* w,
                                    std::size_t n, double s);
void polynomial_series_scalar(const double* a, const double* b, const double* c, std::size_t nc,
                              const double* t, double* out, std::size_t n);
#if defined(KRR_HAVE_AVX2_TU)
ResolventSums resolvent_sums_avx2(const double* v, const double* m, const double* w,
                                  std::size_t n, double s);
void polynomial_series_avx2(const double* a, const double* b, const double* c, std::size_t nc,
                            const double* t, double* out, std::size_t n);
#endif
}  // namespace detail

}  // namespace krr::simd
