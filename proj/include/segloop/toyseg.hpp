#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "segloop/bitmask.hpp"
#include "segloop/mask_ops.hpp"

namespace segloop {

struct Pixel {
    int x = 0;
    int y = 0;
    bool operator==(const Pixel& other) const = default;
};

/// Labeled synthetic scene: 0 is background, 1..K are instance regions.
/// Each region is one 4-connected component; regions never overlap.
class Scene {
public:
    Scene() = default;

    /// Validates region invariants and precomputes per-region masks.
    static Scene from_labels(int width, int height, std::uint64_t seed, std::vector<int> labels);

    int width() const { return width_; }
    int height() const { return height_; }
    std::uint64_t seed() const { return seed_; }
    int region_count() const { return static_cast<int>(region_masks_.size()); }

    int label_at(int x, int y) const {
        return labels_[static_cast<std::size_t>(y) * width_ + x];
    }
    bool in_bounds(int x, int y) const {
        return x >= 0 && x < width_ && y >= 0 && y < height_;
    }

    /// Full-size mask of region `id` (1-based).
    const BitMask& region_mask(int id) const;
    const BBox& region_bbox(int id) const;

    /// Deterministic interior pixel: the centroid when it falls inside
    /// the region, otherwise the first raster-scan pixel.
    Pixel region_anchor(int id) const;

    /// Region pixel farthest from the anchor (raster-first tie break).
    Pixel region_far_point(int id) const;

    nlohmann::json to_json() const;
    static Scene from_json(const nlohmann::json& j);

private:
    int width_ = 0;
    int height_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<int> labels_;
    std::vector<BitMask> region_masks_;
    std::vector<BBox> region_bboxes_;
};

struct SceneSpec {
    int region_count = 1;
    int width = 64;
    int height = 64;
};

/// Deterministic for a fixed (spec, seed). Regions are rectangles or
/// ellipses, each covering at least 1% of the scene.
Scene generate_scene(const SceneSpec& spec, std::uint64_t seed);

// ============================================================================
// Views
// ============================================================================

enum class Rotation : int { deg0 = 0, deg90 = 90, deg180 = 180, deg270 = 270 };

Rotation rotation_from_degrees(int degrees);
Rotation compose_rotation(Rotation base, Rotation extra);

/// Crop-then-rotate view over a scene. The crop is stored in scene
/// coordinates; rotation is applied to the cropped window (clockwise).
struct ViewState {
    BBox crop;
    Rotation rotation = Rotation::deg0;

    static ViewState full(const Scene& scene) {
        return ViewState{BBox{0, 0, scene.width(), scene.height()}, Rotation::deg0};
    }

    int view_width() const {
        return (rotation == Rotation::deg90 || rotation == Rotation::deg270) ? crop.height()
                                                                             : crop.width();
    }
    int view_height() const {
        return (rotation == Rotation::deg90 || rotation == Rotation::deg270) ? crop.width()
                                                                             : crop.height();
    }
    bool operator==(const ViewState& other) const = default;
};

/// Exact integer mapping between view pixels and scene pixels.
Pixel map_point_to_scene(const ViewState& view, Pixel p);
Pixel map_point_to_view(const ViewState& view, Pixel scene_p);
BBox map_box_to_scene(const ViewState& view, const BBox& b);

// ============================================================================
// Promptable segmentor
// ============================================================================

struct SegmentorConfig {
    int noise_radius = 0;
    std::uint64_t noise_seed = 0;
};

/// The first positive point selects the region under it (background
/// selects nothing); a negative point inside that region vetoes it.
/// With noise on, a deterministic subset of the dilation band around
/// the region is added, keyed by (noise_seed, prompt digest); the added
/// fraction shrinks as more positive points are supplied.
BitMask segment_points(const Scene& scene, const ViewState& view,
                       std::span<const PointPrompt> points, const SegmentorConfig& cfg);

/// Selects the region whose tight bbox best matches the prompt box
/// (ties to the lowest region id); no overlap selects nothing.
BitMask segment_box(const Scene& scene, const ViewState& view, const BBox& box,
                    const SegmentorConfig& cfg);

/// Digest of a prompt set in scene coordinates; keys the boundary noise
/// so re-issuing identical prompts reproduces the identical mask.
std::uint64_t prompt_digest(std::span<const PointPrompt> scene_points);
std::uint64_t prompt_digest(const BBox& scene_box);

} // namespace segloop
