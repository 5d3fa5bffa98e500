#pragma once

#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "segloop/bitmask.hpp"
#include "segloop/kernels.hpp"

namespace segloop {

enum class Connectivity { four, eight };

using MaskPair = std::pair<BitMask, BitMask>;

/// Intersection-over-union of two same-sized masks.
/// Two empty masks agree perfectly and score 1.
double iou(const BitMask& a, const BitMask& b);

/// Area IoU of two boxes; 0 if either box is empty.
double box_iou(const BBox& a, const BBox& b);

/// Tightest box enclosing all set pixels (empty box if none).
BBox tight_bbox(const BitMask& m);

/// Connected components ordered by their first raster-scan pixel.
/// Each component is returned as a full-size mask.
std::vector<BitMask> connected_components(const BitMask& m,
                                          Connectivity connectivity = Connectivity::four);

/// Pixel-wise OR. An empty list yields an empty mask of the given dims.
BitMask union_masks(std::span<const BitMask> masks, int width, int height);

/// Tightest box enclosing the set pixels of all masks.
BBox union_bbox(std::span<const BitMask> masks);

/// Mean of per-pair IoU across the dataset.
double g_iou(std::span<const MaskPair> pairs);

/// Ratio of summed intersections to summed unions across the dataset.
double c_iou(std::span<const MaskPair> pairs);

/// Run-length encoding: counts alternate 0-runs and 1-runs in
/// column-major order, first count covering leading zeros.
nlohmann::json rle_encode(const BitMask& m);
BitMask rle_decode(const nlohmann::json& rle);

} // namespace segloop
