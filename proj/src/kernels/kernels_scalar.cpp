#include "chimera/kernels.hpp"

#include <algorithm>
#include <cassert>

namespace chimera::kernels::scalar {

void repair_prices(std::span<const double> prices, double change_pct, const PriceRepairBounds& bounds,
                   std::span<double> out) {
  assert(out.size() >= prices.size());
  const double clipped = std::min(std::max(change_pct, bounds.min_change_pct), bounds.max_change_pct);
  for (std::size_t i = 0; i < prices.size(); ++i) {
    const double p = prices[i];
    const double adjusted = p + p * clipped / 100.0;
    const double capped = adjusted > bounds.max_price ? bounds.max_price : adjusted;
    out[i] = capped < bounds.min_price ? bounds.min_price : capped;
  }
}

void repair_ads(std::span<const double> prev_ads, double proposed, const AdRepairBounds& bounds,
                std::span<double> out) {
  assert(out.size() >= prev_ads.size());
  const double clamped = std::min(std::max(proposed, 0.0), bounds.ad_cap);
  for (std::size_t i = 0; i < prev_ads.size(); ++i) {
    const double limit = prev_ads[i] + bounds.increase_cap;
    out[i] = clamped > limit ? limit : clamped;
  }
}

void invariant_mask(std::span<const double> prices, std::span<const double> ads,
                    std::span<const double> prev_ads, const InvariantBounds& bounds,
                    std::span<std::uint8_t> out) {
  assert(ads.size() == prices.size() && prev_ads.size() == prices.size());
  for (std::size_t i = 0; i < prices.size(); ++i) {
    std::uint8_t m = 0;
    if (prices[i] < bounds.min_price) m |= kBufferedMarginBit;
    if (prices[i] > bounds.max_price) m |= kPriceCapBit;
    if (ads[i] > bounds.ad_cap) m |= kAdAbsoluteBit;
    if (ads[i] > prev_ads[i] + bounds.increase_cap) m |= kAdRelativeBit;
    out[i] = m;
  }
}

Moments moments(std::span<const double> values) {
  Moments m;
  for (double v : values) {
    m.sum += v;
    m.sum_sq += v * v;
  }
  m.n = values.size();
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace chimera::kernels::scalar
