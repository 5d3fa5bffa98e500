#include "segloop/kernels.hpp"

#include <algorithm>

namespace segloop::kernels {

namespace {

void check_same_dims(const BitMask& a, const BitMask& b) {
    if (!a.same_dims(b))
        throw DimensionError("mask dimensions differ");
}

} // namespace

// ============================================================================
// Serial reference
// ============================================================================

namespace serial {

std::int64_t count(const BitMask& m) {
    const std::uint8_t* p = m.data();
    std::int64_t n = 0;
    for (std::int64_t i = 0; i < m.pixel_count(); ++i) n += p[i];
    return n;
}

OverlapCounts overlap(const BitMask& a, const BitMask& b) {
    check_same_dims(a, b);
    const std::uint8_t* pa = a.data();
    const std::uint8_t* pb = b.data();
    OverlapCounts c;
    for (std::int64_t i = 0; i < a.pixel_count(); ++i) {
        c.intersection += pa[i] & pb[i];
        c.uni += pa[i] | pb[i];
    }
    return c;
}

void or_into(BitMask& dst, const BitMask& src) {
    check_same_dims(dst, src);
    std::uint8_t* pd = dst.data();
    const std::uint8_t* ps = src.data();
    for (std::int64_t i = 0; i < dst.pixel_count(); ++i) pd[i] |= ps[i];
}

BitMask dilate_l1(const BitMask& m, int radius) {
    BitMask cur = m;
    for (int r = 0; r < radius; ++r) {
        BitMask next = cur;
        for (int y = 0; y < m.height(); ++y) {
            for (int x = 0; x < m.width(); ++x) {
                if (cur.get(x, y)) continue;
                bool hit = (x > 0 && cur.get(x - 1, y)) ||
                           (x + 1 < m.width() && cur.get(x + 1, y)) ||
                           (y > 0 && cur.get(x, y - 1)) ||
                           (y + 1 < m.height() && cur.get(x, y + 1));
                if (hit) next.set(x, y);
            }
        }
        cur = std::move(next);
    }
    return cur;
}

std::vector<OverlapCounts> batch_overlap(std::span<const std::pair<BitMask, BitMask>> pairs) {
    std::vector<OverlapCounts> out(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i)
        out[i] = overlap(pairs[i].first, pairs[i].second);
    return out;
}

} // namespace serial

// ============================================================================
// OpenMP
// ============================================================================

namespace par {

std::int64_t count(const BitMask& m) {
    const std::uint8_t* p = m.data();
    const std::int64_t n = m.pixel_count();
    std::int64_t total = 0;
#pragma omp parallel for reduction(+ : total) schedule(static)
    for (std::int64_t i = 0; i < n; ++i) total += p[i];
    return total;
}

OverlapCounts overlap(const BitMask& a, const BitMask& b) {
    check_same_dims(a, b);
    const std::uint8_t* pa = a.data();
    const std::uint8_t* pb = b.data();
    const std::int64_t n = a.pixel_count();
    std::int64_t inter = 0;
    std::int64_t uni = 0;
#pragma omp parallel for reduction(+ : inter, uni) schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        inter += pa[i] & pb[i];
        uni += pa[i] | pb[i];
    }
    return OverlapCounts{inter, uni};
}

void or_into(BitMask& dst, const BitMask& src) {
    check_same_dims(dst, src);
    std::uint8_t* pd = dst.data();
    const std::uint8_t* ps = src.data();
    const std::int64_t n = dst.pixel_count();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) pd[i] |= ps[i];
}

BitMask dilate_l1(const BitMask& m, int radius) {
    BitMask cur = m;
    const int w = m.width();
    const int h = m.height();
    for (int r = 0; r < radius; ++r) {
        BitMask next = cur;
#pragma omp parallel for schedule(static)
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (cur.get(x, y)) continue;
                bool hit = (x > 0 && cur.get(x - 1, y)) ||
                           (x + 1 < w && cur.get(x + 1, y)) ||
                           (y > 0 && cur.get(x, y - 1)) ||
                           (y + 1 < h && cur.get(x, y + 1));
                if (hit) next.set(x, y);
            }
        }
        cur = std::move(next);
    }
    return cur;
}

std::vector<OverlapCounts> batch_overlap(std::span<const std::pair<BitMask, BitMask>> pairs) {
    std::vector<OverlapCounts> out(pairs.size());
    const std::int64_t n = static_cast<std::int64_t>(pairs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i)
        out[i] = serial::overlap(pairs[i].first, pairs[i].second);
    return out;
}

} // namespace par

// ============================================================================
// Dispatch
// ============================================================================

std::int64_t count(const BitMask& m) {
    return m.pixel_count() >= kParallelThreshold ? par::count(m) : serial::count(m);
}

OverlapCounts overlap(const BitMask& a, const BitMask& b) {
    return a.pixel_count() >= kParallelThreshold ? par::overlap(a, b) : serial::overlap(a, b);
}

void or_into(BitMask& dst, const BitMask& src) {
    if (dst.pixel_count() >= kParallelThreshold)
        par::or_into(dst, src);
    else
        serial::or_into(dst, src);
}

BitMask dilate_l1(const BitMask& m, int radius) {
    return m.pixel_count() >= kParallelThreshold ? par::dilate_l1(m, radius)
                                                 : serial::dilate_l1(m, radius);
}

std::vector<OverlapCounts> batch_overlap(std::span<const std::pair<BitMask, BitMask>> pairs) {
    return pairs.size() >= 64 ? par::batch_overlap(pairs) : serial::batch_overlap(pairs);
}

} // namespace segloop::kernels
