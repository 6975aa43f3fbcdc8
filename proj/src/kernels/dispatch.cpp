#include "chimera/kernels.hpp"

#include <cstdlib>
#include <string>

namespace chimera::kernels {

namespace {

Backend detect() {
  if (const char* forced = std::getenv("CHIMERA_SIMD"); forced != nullptr && std::string(forced) == "scalar") {
    return Backend::Scalar;
  }
  return backend_available(Backend::Avx2) ? Backend::Avx2 : Backend::Scalar;
}

}  // namespace

bool backend_available(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
#if defined(CHIMERA_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
      return __builtin_cpu_supports("avx2") != 0;
#else
      return false;
#endif
  }
  return false;
}

Backend active_backend() {
  static const Backend backend = detect();
  return backend;
}

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return "scalar";
    case Backend::Avx2:
      return "avx2";
  }
  return "unknown";
}

#if defined(CHIMERA_HAVE_AVX2)
#define CHIMERA_DISPATCH(fn, ...)                                             \
  (active_backend() == Backend::Avx2 ? avx2::fn(__VA_ARGS__) : scalar::fn(__VA_ARGS__))
#else
#define CHIMERA_DISPATCH(fn, ...) scalar::fn(__VA_ARGS__)
#endif

void repair_prices(std::span<const double> prices, double change_pct, const PriceRepairBounds& bounds,
                   std::span<double> out) {
  CHIMERA_DISPATCH(repair_prices, prices, change_pct, bounds, out);
}

void repair_ads(std::span<const double> prev_ads, double proposed, const AdRepairBounds& bounds,
                std::span<double> out) {
  CHIMERA_DISPATCH(repair_ads, prev_ads, proposed, bounds, out);
}

void invariant_mask(std::span<const double> prices, std::span<const double> ads,
                    std::span<const double> prev_ads, const InvariantBounds& bounds,
                    std::span<std::uint8_t> out) {
  CHIMERA_DISPATCH(invariant_mask, prices, ads, prev_ads, bounds, out);
}

Moments moments(std::span<const double> values) { return CHIMERA_DISPATCH(moments, values); }

double dot(std::span<const double> a, std::span<const double> b) { return CHIMERA_DISPATCH(dot, a, b); }

#undef CHIMERA_DISPATCH

}  // namespace chimera::kernels
