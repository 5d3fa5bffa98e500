#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "segloop/bitmask.hpp"

namespace segloop::kernels {

struct OverlapCounts {
    std::int64_t intersection = 0;
    std::int64_t uni = 0;
};

// Serial reference kernels. These are the ground truth the parallel
// versions are tested against; they also serve small inputs where
// spawning threads would cost more than the loop.
namespace serial {

std::int64_t count(const BitMask& m);
OverlapCounts overlap(const BitMask& a, const BitMask& b);
void or_into(BitMask& dst, const BitMask& src);
BitMask dilate_l1(const BitMask& m, int radius);
std::vector<OverlapCounts> batch_overlap(std::span<const std::pair<BitMask, BitMask>> pairs);

} // namespace serial

// OpenMP kernels. Integer reductions and disjoint writes only, so the
// results are bit-identical to the serial reference.
namespace par {

std::int64_t count(const BitMask& m);
OverlapCounts overlap(const BitMask& a, const BitMask& b);
void or_into(BitMask& dst, const BitMask& src);
BitMask dilate_l1(const BitMask& m, int radius);
std::vector<OverlapCounts> batch_overlap(std::span<const std::pair<BitMask, BitMask>> pairs);

} // namespace par

// Dispatching entry points: parallel above this many pixels, serial below.
inline constexpr std::int64_t kParallelThreshold = 1 << 16;

std::int64_t count(const BitMask& m);
OverlapCounts overlap(const BitMask& a, const BitMask& b);
void or_into(BitMask& dst, const BitMask& src);
BitMask dilate_l1(const BitMask& m, int radius);
std::vector<OverlapCounts> batch_overlap(std::span<const std::pair<BitMask, BitMask>> pairs);

} // namespace segloop::kernels
