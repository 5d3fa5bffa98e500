#include "segloop/toyseg.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace segloop {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

double unit_fraction(std::uint64_t h) {
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

} // namespace

// ============================================================================
// Scene
// ============================================================================

Scene Scene::from_labels(int width, int height, std::uint64_t seed, std::vector<int> labels) {
    if (width <= 0 || height <= 0)
        throw SceneGenError("scene dimensions must be positive");
    if (labels.size() != static_cast<std::size_t>(width) * height)
        throw SceneGenError("label grid size mismatch");

    int max_id = 0;
    for (int v : labels) {
        if (v < 0) throw SceneGenError("negative region id");
        max_id = std::max(max_id, v);
    }

    Scene s;
    s.width_ = width;
    s.height_ = height;
    s.seed_ = seed;
    s.labels_ = std::move(labels);
    s.region_masks_.reserve(max_id);
    for (int id = 1; id <= max_id; ++id) {
        BitMask m(width, height);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                if (s.label_at(x, y) == id) m.set(x, y);
        if (m.none())
            throw SceneGenError("region id " + std::to_string(id) + " has no pixels");
        if (connected_components(m, Connectivity::four).size() != 1)
            throw SceneGenError("region id " + std::to_string(id) + " is not connected");
        s.region_bboxes_.push_back(tight_bbox(m));
        s.region_masks_.push_back(std::move(m));
    }
    return s;
}

const BitMask& Scene::region_mask(int id) const {
    if (id < 1 || id > region_count())
        throw SceneGenError("region id out of range");
    return region_masks_[static_cast<std::size_t>(id) - 1];
}

const BBox& Scene::region_bbox(int id) const {
    if (id < 1 || id > region_count())
        throw SceneGenError("region id out of range");
    return region_bboxes_[static_cast<std::size_t>(id) - 1];
}

Pixel Scene::region_anchor(int id) const {
    const BitMask& m = region_mask(id);
    std::int64_t sx = 0, sy = 0, n = 0;
    Pixel first{-1, -1};
    for (int y = 0; y < height_; ++y) {
        for (int x = 0; x < width_; ++x) {
            if (!m.get(x, y)) continue;
            if (first.x < 0) first = Pixel{x, y};
            sx += x;
            sy += y;
            ++n;
        }
    }
    const Pixel c{static_cast<int>(sx / n), static_cast<int>(sy / n)};
    return m.get(c.x, c.y) ? c : first;
}

Pixel Scene::region_far_point(int id) const {
    const BitMask& m = region_mask(id);
    const Pixel a = region_anchor(id);
    Pixel best = a;
    std::int64_t best_d = -1;
    for (int y = 0; y < height_; ++y) {
        for (int x = 0; x < width_; ++x) {
            if (!m.get(x, y)) continue;
            const std::int64_t dx = x - a.x;
            const std::int64_t dy = y - a.y;
            const std::int64_t d = dx * dx + dy * dy;
            if (d > best_d) {
                best_d = d;
                best = Pixel{x, y};
            }
        }
    }
    return best;
}

nlohmann::json Scene::to_json() const {
    nlohmann::json regions = nlohmann::json::array();
    for (int id = 1; id <= region_count(); ++id)
        regions.push_back(rle_encode(region_mask(id)));
    return nlohmann::json{
        {"w", width_}, {"h", height_}, {"seed", seed_}, {"labels_rle", regions}};
}

Scene Scene::from_json(const nlohmann::json& j) {
    const int w = j.at("w").get<int>();
    const int h = j.at("h").get<int>();
    const auto seed = j.at("seed").get<std::uint64_t>();
    std::vector<int> labels(static_cast<std::size_t>(w) * h, 0);
    int id = 0;
    for (const auto& rle : j.at("labels_rle")) {
        ++id;
        const BitMask m = rle_decode(rle);
        if (m.width() != w || m.height() != h)
            throw SceneGenError("region mask dims disagree with scene");
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (!m.get(x, y)) continue;
                auto& cell = labels[static_cast<std::size_t>(y) * w + x];
                if (cell != 0) throw SceneGenError("overlapping regions in scene file");
                cell = id;
            }
        }
    }
    return from_labels(w, h, seed, std::move(labels));
}

// ============================================================================
// Scene generation
// ============================================================================

namespace {

// Paints one rectangle or ellipse into `labels` if the footprint is free
// and large enough. Returns painted pixel count, 0 on rejection.
int try_place_region(std::vector<int>& labels, int w, int h, int id, std::int64_t min_area,
                     std::mt19937_64& rng) {
    std::uniform_real_distribution<double> frac_dist(0.015, 0.08);
    std::uniform_real_distribution<double> aspect_dist(0.5, 2.0);
    const bool ellipse = (rng() & 1) != 0;

    const double area = frac_dist(rng) * static_cast<double>(w) * h;
    const double aspect = aspect_dist(rng);
    int rw = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), 2, w);
    int rh = std::clamp(static_cast<int>(std::lround(std::sqrt(area / aspect))), 2, h);

    std::uniform_int_distribution<int> xd(0, w - rw);
    std::uniform_int_distribution<int> yd(0, h - rh);
    const int x0 = xd(rng);
    const int y0 = yd(rng);

    std::vector<std::size_t> cells;
    const double cx = x0 + (rw - 1) / 2.0;
    const double cy = y0 + (rh - 1) / 2.0;
    const double ax = rw / 2.0;
    const double ay = rh / 2.0;
    for (int y = y0; y < y0 + rh; ++y) {
        for (int x = x0; x < x0 + rw; ++x) {
            if (ellipse) {
                const double dx = (x - cx) / ax;
                const double dy = (y - cy) / ay;
                if (dx * dx + dy * dy > 1.0) continue;
            }
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (labels[i] != 0) return 0;
            cells.push_back(i);
        }
    }
    if (static_cast<std::int64_t>(cells.size()) < min_area) return 0;
    for (std::size_t i : cells) labels[i] = id;
    return static_cast<int>(cells.size());
}

} // namespace

Scene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
    if (spec.region_count < 1)
        throw SceneGenError("region count must be at least 1");
    if (spec.width < 16 || spec.height < 16)
        throw SceneGenError("scene must be at least 16x16");

    const std::int64_t min_area = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(spec.width) * spec.height / 100);

    for (std::uint64_t round = 0; round < 32; ++round) {
        std::mt19937_64 rng(splitmix64(seed ^ (round * 0x51ed2701d5f2e2f5ull)));
        std::vector<int> labels(static_cast<std::size_t>(spec.width) * spec.height, 0);
        bool ok = true;
        for (int id = 1; id <= spec.region_count && ok; ++id) {
            bool placed = false;
            for (int attempt = 0; attempt < 300 && !placed; ++attempt)
                placed = try_place_region(labels, spec.width, spec.height, id, min_area, rng) > 0;
            ok = placed;
        }
        if (!ok) continue;
        try {
            return Scene::from_labels(spec.width, spec.height, seed, std::move(labels));
        } catch (const SceneGenError&) {
            // disconnected paint (should not happen for convex shapes); retry
        }
    }
    throw SceneGenError("could not pack " + std::to_string(spec.region_count) + " regions");
}

// ============================================================================
// Views
// ============================================================================

Rotation rotation_from_degrees(int degrees) {
    switch (((degrees % 360) + 360) % 360) {
    case 0: return Rotation::deg0;
    case 90: return Rotation::deg90;
    case 180: return Rotation::deg180;
    case 270: return Rotation::deg270;
    default: throw ViewError("rotation must be a right angle");
    }
}

Rotation compose_rotation(Rotation base, Rotation extra) {
    return rotation_from_degrees(static_cast<int>(base) + static_cast<int>(extra));
}

Pixel map_point_to_scene(const ViewState& view, Pixel p) {
    if (p.x < 0 || p.x >= view.view_width() || p.y < 0 || p.y >= view.view_height())
        throw ViewError("point outside view");
    const int cw = view.crop.width();
    const int ch = view.crop.height();
    int u, v;
    switch (view.rotation) {
    case Rotation::deg0: u = p.x; v = p.y; break;
    case Rotation::deg90: u = p.y; v = ch - 1 - p.x; break;
    case Rotation::deg180: u = cw - 1 - p.x; v = ch - 1 - p.y; break;
    default: u = cw - 1 - p.y; v = p.x; break;
    }
    return Pixel{view.crop.x0 + u, view.crop.y0 + v};
}

Pixel map_point_to_view(const ViewState& view, Pixel scene_p) {
    if (!view.crop.contains(scene_p.x, scene_p.y))
        throw ViewError("scene point outside view crop");
    const int u = scene_p.x - view.crop.x0;
    const int v = scene_p.y - view.crop.y0;
    const int cw = view.crop.width();
    const int ch = view.crop.height();
    switch (view.rotation) {
    case Rotation::deg0: return Pixel{u, v};
    case Rotation::deg90: return Pixel{ch - 1 - v, u};
    case Rotation::deg180: return Pixel{cw - 1 - u, ch - 1 - v};
    default: return Pixel{v, cw - 1 - u};
    }
}

BBox map_box_to_scene(const ViewState& view, const BBox& b) {
    if (b.is_empty()) throw ViewError("cannot map an empty box");
    const Pixel corners[4] = {
        {b.x0, b.y0}, {b.x1 - 1, b.y0}, {b.x0, b.y1 - 1}, {b.x1 - 1, b.y1 - 1}};
    int minx = 0, miny = 0, maxx = 0, maxy = 0;
    for (int i = 0; i < 4; ++i) {
        const Pixel s = map_point_to_scene(view, corners[i]);
        if (i == 0) {
            minx = maxx = s.x;
            miny = maxy = s.y;
        } else {
            minx = std::min(minx, s.x);
            maxx = std::max(maxx, s.x);
            miny = std::min(miny, s.y);
            maxy = std::max(maxy, s.y);
        }
    }
    return BBox{minx, miny, maxx + 1, maxy + 1};
}

// ============================================================================
// Segmentor
// ============================================================================

std::uint64_t prompt_digest(std::span<const PointPrompt> scene_points) {
    std::uint64_t h = fnv1a64("P", 1);
    for (const auto& p : scene_points) {
        const std::int32_t buf[3] = {p.x, p.y, static_cast<std::int32_t>(p.polarity)};
        h = fnv1a64(buf, sizeof(buf), h);
    }
    return h;
}

std::uint64_t prompt_digest(const BBox& scene_box) {
    std::uint64_t h = fnv1a64("B", 1);
    const std::int32_t buf[4] = {scene_box.x0, scene_box.y0, scene_box.x1, scene_box.y1};
    return fnv1a64(buf, sizeof(buf), h);
}

namespace {

// Adds a deterministic subset of the dilation band around the region.
// More positive prompts shrink the accepted fraction, so refining a
// prompt set tightens the mask.
BitMask apply_boundary_noise(const Scene& scene, const BitMask& base, const SegmentorConfig& cfg,
                             std::uint64_t digest, int positive_count) {
    if (cfg.noise_radius <= 0 || base.none()) return base;
    const BitMask dilated = kernels::dilate_l1(base, cfg.noise_radius);
    const double accept = 0.5 / static_cast<double>(std::max(1, positive_count));
    const std::uint64_t key = splitmix64(cfg.noise_seed ^ splitmix64(digest));

    BitMask out = base;
    for (int y = 0; y < scene.height(); ++y) {
        for (int x = 0; x < scene.width(); ++x) {
            if (!dilated.get(x, y) || base.get(x, y)) continue;
            const std::uint64_t cell =
                (static_cast<std::uint64_t>(static_cast<std::uint32_t>(x)) << 32) |
                static_cast<std::uint32_t>(y);
            if (unit_fraction(splitmix64(key ^ cell)) < accept) out.set(x, y);
        }
    }
    return out;
}

} // namespace

BitMask segment_points(const Scene& scene, const ViewState& view,
                       std::span<const PointPrompt> points, const SegmentorConfig& cfg) {
    std::vector<PointPrompt> mapped;
    mapped.reserve(points.size());
    for (const auto& p : points) {
        if (p.x < 0 || p.x >= view.view_width() || p.y < 0 || p.y >= view.view_height())
            throw PromptError("point prompt outside view");
        const Pixel s = map_point_to_scene(view, Pixel{p.x, p.y});
        mapped.push_back(PointPrompt{s.x, s.y, p.polarity});
    }

    const PointPrompt* first_positive = nullptr;
    int positive_count = 0;
    for (const auto& p : mapped) {
        if (p.polarity == Polarity::positive) {
            if (!first_positive) first_positive = &p;
            ++positive_count;
        }
    }
    if (!first_positive) throw PromptError("at least one positive point required");

    const int id = scene.label_at(first_positive->x, first_positive->y);
    BitMask empty(scene.width(), scene.height());
    if (id == 0) return empty;

    const BitMask& region = scene.region_mask(id);
    for (const auto& p : mapped)
        if (p.polarity == Polarity::negative && region.get(p.x, p.y)) return empty;

    return apply_boundary_noise(scene, region, cfg, prompt_digest(mapped), positive_count);
}

BitMask segment_box(const Scene& scene, const ViewState& view, const BBox& box,
                    const SegmentorConfig& cfg) {
    if (box.is_empty()) throw PromptError("degenerate box prompt");
    if (box.x0 < 0 || box.y0 < 0 || box.x1 > view.view_width() || box.y1 > view.view_height())
        throw PromptError("box prompt outside view");

    const BBox scene_box = map_box_to_scene(view, box);
    int best_id = 0;
    double best_iou = 0.0;
    for (int id = 1; id <= scene.region_count(); ++id) {
        const double v = box_iou(scene.region_bbox(id), scene_box);
        if (v > best_iou) {
            best_iou = v;
            best_id = id;
        }
    }
    BitMask empty(scene.width(), scene.height());
    if (best_id == 0) return empty;
    return apply_boundary_noise(scene, scene.region_mask(best_id), cfg, prompt_digest(scene_box),
                                1);
}

} // namespace segloop
