#pragma once

// Data-parallel inner loops shared by the model checker, the forests and the
// metrics code. Every kernel has a scalar reference implementation; an AVX2
// variant is selected at runtime when the CPU supports it. Setting the
// environment variable CHIMERA_SIMD=scalar forces the reference path.
//
// The repair and invariant kernels are bit-identical across backends. The
// reductions (moments, dot) differ only in summation order.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace chimera::kernels {

enum class Backend { Scalar, Avx2 };

/// Backend used by the dispatching entry points. Resolved once per process.
Backend active_backend();
std::string_view backend_name(Backend b);
bool backend_available(Backend b);

/// Bounds for the price half of the repair pipeline. A disabled rule is
/// expressed with an infinite bound so the kernel stays branch-free.
struct PriceRepairBounds {
  double min_change_pct;
  double max_change_pct;
  double max_price;
  double min_price;
};

struct AdRepairBounds {
  double ad_cap;
  double increase_cap;
};

struct InvariantBounds {
  double min_price;
  double max_price;
  double ad_cap;
  double increase_cap;
};

// Bits written by invariant_mask.
inline constexpr std::uint8_t kBufferedMarginBit = 1u << 0;
inline constexpr std::uint8_t kPriceCapBit = 1u << 1;
inline constexpr std::uint8_t kAdAbsoluteBit = 1u << 2;
inline constexpr std::uint8_t kAdRelativeBit = 1u << 3;

struct Moments {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;

  double mean() const { return n == 0 ? 0.0 : sum / static_cast<double>(n); }
};

/// out[i] = floor(cap(p[i] + p[i] * clip(change_pct) / 100)), in that order.
void repair_prices(std::span<const double> prices, double change_pct, const PriceRepairBounds& bounds,
                   std::span<double> out);

/// out[i] = min(clamp(proposed, 0, ad_cap), prev_ads[i] + increase_cap).
void repair_ads(std::span<const double> prev_ads, double proposed, const AdRepairBounds& bounds,
                std::span<double> out);

/// Per-element bitmask of violated invariants (see the k*Bit constants).
void invariant_mask(std::span<const double> prices, std::span<const double> ads,
                    std::span<const double> prev_ads, const InvariantBounds& bounds,
                    std::span<std::uint8_t> out);

Moments moments(std::span<const double> values);
double dot(std::span<const double> a, std::span<const double> b);

// Backend-pinned entry points, used by equivalence tests and benchmarks.
namespace scalar {
void repair_prices(std::span<const double> prices, double change_pct, const PriceRepairBounds& bounds,
                   std::span<double> out);
void repair_ads(std::span<const double> prev_ads, double proposed, const AdRepairBounds& bounds,
                std::span<double> out);
void invariant_mask(std::span<const double> prices, std::span<const double> ads,
                    std::span<const double> prev_ads, const InvariantBounds& bounds,
                    std::span<std::uint8_t> out);
Moments moments(std::span<const double> values);
double dot(std::span<const double> a, std::span<const double> b);
}  // namespace scalar

#if defined(CHIMERA_HAVE_AVX2)
namespace avx2 {
void repair_prices(std::span<const double> prices, double change_pct, const PriceRepairBounds& bounds,
                   std::span<double> out);
void repair_ads(std::span<const double> prev_ads, double proposed, const AdRepairBounds& bounds,
                std::span<double> out);
void invariant_mask(std::span<const double> prices, std::span<const double> ads,
                    std::span<const double> prev_ads, const InvariantBounds& bounds,
                    std::span<std::uint8_t> out);
Moments moments(std::span<const double> values);
double dot(std::span<const double> a, std::span<const double> b);
}  // namespace avx2
#endif

}  // namespace chimera::kernels
