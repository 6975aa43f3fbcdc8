// Compiled with -mavx2 only; callers reach it through the runtime dispatcher.
#include "chimera/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cassert>

namespace chimera::kernels::avx2 {

namespace {

double horizontal_sum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  const __m128d swapped = _mm_unpackhi_pd(pair, pair);
  return _mm_cvtsd_f64(_mm_add_sd(pair, swapped));
}

}  // namespace

void repair_prices(std::span<const double> prices, double change_pct, const PriceRepairBounds& bounds,
                   std::span<double> out) {
  assert(out.size() >= prices.size());
  const double clipped = std::min(std::max(change_pct, bounds.min_change_pct), bounds.max_change_pct);
  const __m256d vclip = _mm256_set1_pd(clipped);
  const __m256d vhundred = _mm256_set1_pd(100.0);
  const __m256d vmax = _mm256_set1_pd(bounds.max_price);
  const __m256d vmin = _mm256_set1_pd(bounds.min_price);
  const std::size_t n = prices.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d p = _mm256_loadu_pd(prices.data() + i);
    const __m256d adjusted = _mm256_add_pd(p, _mm256_div_pd(_mm256_mul_pd(p, vclip), vhundred));
    const __m256d over = _mm256_cmp_pd(adjusted, vmax, _CMP_GT_OQ);
    const __m256d capped = _mm256_blendv_pd(adjusted, vmax, over);
    const __m256d under = _mm256_cmp_pd(capped, vmin, _CMP_LT_OQ);
    _mm256_storeu_pd(out.data() + i, _mm256_blendv_pd(capped, vmin, under));
  }
  for (; i < n; ++i) {
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
  const __m256d vclamped = _mm256_set1_pd(clamped);
  const __m256d vinc = _mm256_set1_pd(bounds.increase_cap);
  const std::size_t n = prev_ads.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d limit = _mm256_add_pd(_mm256_loadu_pd(prev_ads.data() + i), vinc);
    const __m256d over = _mm256_cmp_pd(vclamped, limit, _CMP_GT_OQ);
    _mm256_storeu_pd(out.data() + i, _mm256_blendv_pd(vclamped, limit, over));
  }
  for (; i < n; ++i) {
    const double limit = prev_ads[i] + bounds.increase_cap;
    out[i] = clamped > limit ? limit : clamped;
  }
}

void invariant_mask(std::span<const double> prices, std::span<const double> ads,
                    std::span<const double> prev_ads, const InvariantBounds& bounds,
                    std::span<std::uint8_t> out) {
  assert(ads.size() == prices.size() && prev_ads.size() == prices.size());
  const __m256d vmin = _mm256_set1_pd(bounds.min_price);
  const __m256d vmax = _mm256_set1_pd(bounds.max_price);
  const __m256d vcap = _mm256_set1_pd(bounds.ad_cap);
  const __m256d vinc = _mm256_set1_pd(bounds.increase_cap);
  const std::size_t n = prices.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d p = _mm256_loadu_pd(prices.data() + i);
    const __m256d a = _mm256_loadu_pd(ads.data() + i);
    const __m256d pa = _mm256_loadu_pd(prev_ads.data() + i);
    const int margin = _mm256_movemask_pd(_mm256_cmp_pd(p, vmin, _CMP_LT_OQ));
    const int cap = _mm256_movemask_pd(_mm256_cmp_pd(p, vmax, _CMP_GT_OQ));
    const int absolute = _mm256_movemask_pd(_mm256_cmp_pd(a, vcap, _CMP_GT_OQ));
    const int relative = _mm256_movemask_pd(_mm256_cmp_pd(a, _mm256_add_pd(pa, vinc), _CMP_GT_OQ));
    for (int lane = 0; lane < 4; ++lane) {
      std::uint8_t m = 0;
      if (margin >> lane & 1) m |= kBufferedMarginBit;
      if (cap >> lane & 1) m |= kPriceCapBit;
      if (absolute >> lane & 1) m |= kAdAbsoluteBit;
      if (relative >> lane & 1) m |= kAdRelativeBit;
      out[i + static_cast<std::size_t>(lane)] = m;
    }
  }
  if (i < n) {
    scalar::invariant_mask(prices.subspan(i), ads.subspan(i), prev_ads.subspan(i), bounds, out.subspan(i));
  }
}

Moments moments(std::span<const double> values) {
  __m256d sum = _mm256_setzero_pd();
  __m256d sum_sq = _mm256_setzero_pd();
  const std::size_t n = values.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(values.data() + i);
    sum = _mm256_add_pd(sum, v);
    sum_sq = _mm256_add_pd(sum_sq, _mm256_mul_pd(v, v));
  }
  Moments m;
  m.sum = horizontal_sum(sum);
  m.sum_sq = horizontal_sum(sum_sq);
  for (; i < n; ++i) {
    m.sum += values[i];
    m.sum_sq += values[i] * values[i];
  }
  m.n = n;
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  __m256d acc = _mm256_setzero_pd();
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i)));
  }
  double total = horizontal_sum(acc);
  for (; i < n; ++i) total += a[i] * b[i];
  return total;
}

}  // namespace chimera::kernels::avx2
