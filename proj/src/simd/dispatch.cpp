#include <cstdlib>
#include <stdexcept>
#include <string>

#include "krr/simd/kernels.hpp"

namespace krr::simd {

namespace {

bool cpu_has_avx2() noexcept {
#if defined(KRR_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect() noexcept {
  if (const char* forced = std::getenv("KRR_ISA"); forced != nullptr) {
    if (std::string(forced) == "scalar") return Isa::scalar;
  }
  return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

void check_lengths(std::span<const double> values, std::span<const double> mult,
                   std::span<const double> weight) {
  if (mult.size() != values.size() || (!weight.empty() && weight.size() != values.size()))
    throw std::invalid_argument("resolvent_sums: length mismatch");
}

void check_series(Recurrence rec, std::span<const double> coeff, std::span<const double> t,
                  std::span<double> out) {
  if (out.size() != t.size()) throw std::invalid_argument("polynomial_series: length mismatch");
  if (coeff.size() > 1 && (rec.a.size() + 1 < coeff.size() || rec.b.size() + 1 < coeff.size()))
    throw std::invalid_argument("polynomial_series: recurrence shorter than series");
}

}  // namespace

Isa active_isa() noexcept {
  static const Isa isa = detect();
  return isa;
}

std::string_view isa_name(Isa isa) noexcept { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool isa_available(Isa isa) noexcept { return isa == Isa::scalar || cpu_has_avx2(); }

ResolventSums resolvent_sums(Isa isa, std::span<const double> values,
                             std::span<const double> mult, std::span<const double> weight,
                             double s) {
  check_lengths(values, mult, weight);
  const double* w = weight.empty() ? nullptr : weight.data();
#if defined(KRR_HAVE_AVX2_TU)
  if (isa == Isa::avx2 && isa_available(Isa::avx2))
    return detail::resolvent_sums_avx2(values.data(), mult.data(), w, values.size(), s);
#endif
  (void)isa;
  return detail::resolvent_sums_scalar(values.data(), mult.data(), w, values.size(), s);
}

ResolventSums resolvent_sums(std::span<const double> values, std::span<const double> mult,
                             std::span<const double> weight, double s) {
  return resolvent_sums(active_isa(), values, mult, weight, s);
}

void polynomial_series(Isa isa, Recurrence rec, std::span<const double> coeff,
                       std::span<const double> t, std::span<double> out) {
  check_series(rec, coeff, t, out);
#if defined(KRR_HAVE_AVX2_TU)
  if (isa == Isa::avx2 && isa_available(Isa::avx2)) {
    detail::polynomial_series_avx2(rec.a.data(), rec.b.data(), coeff.data(), coeff.size(),
                                   t.data(), out.data(), t.size());
    return;
  }
#endif
  (void)isa;
  detail::polynomial_series_scalar(rec.a.data(), rec.b.data(), coeff.data(), coeff.size(),
                                   t.data(), out.data(), t.size());
}

void polynomial_series(Recurrence rec, std::span<const double> coeff, std::span<const double> t,
                       std::span<double> out) {
  polynomial_series(active_isa(), rec, coeff, t, out);
}

}  // namespace krr::simd
