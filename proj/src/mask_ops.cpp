#include "segloop/mask_ops.hpp"

#include <array>
#include <deque>

namespace segloop {

double iou(const BitMask& a, const BitMask& b) {
    auto c = kernels::overlap(a, b);
    if (c.uni == 0) return 1.0;
    return static_cast<double>(c.intersection) / static_cast<double>(c.uni);
}

double box_iou(const BBox& a, const BBox& b) {
    if (a.is_empty() || b.is_empty()) return 0.0;
    const int ix0 = std::max(a.x0, b.x0);
    const int iy0 = std::max(a.y0, b.y0);
    const int ix1 = std::min(a.x1, b.x1);
    const int iy1 = std::min(a.y1, b.y1);
    const std::int64_t inter = BBox{ix0, iy0, ix1, iy1}.area();
    const std::int64_t uni = a.area() + b.area() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

BBox tight_bbox(const BitMask& m) {
    int minx = m.width(), miny = m.height(), maxx = -1, maxy = -1;
    for (int y = 0; y < m.height(); ++y) {
        const std::uint8_t* row = m.data() + static_cast<std::size_t>(y) * m.width();
        for (int x = 0; x < m.width(); ++x) {
            if (!row[x]) continue;
            minx = std::min(minx, x);
            maxx = std::max(maxx, x);
            miny = std::min(miny, y);
            maxy = std::max(maxy, y);
        }
    }
    if (maxx < 0) return BBox::empty();
    return BBox{minx, miny, maxx + 1, maxy + 1};
}

std::vector<BitMask> connected_components(const BitMask& m, Connectivity connectivity) {
    const int w = m.width();
    const int h = m.height();
    std::vector<int> label(static_cast<std::size_t>(w) * h, 0);
    std::vector<BitMask> comps;

    static constexpr std::array<std::pair<int, int>, 8> offsets = {{
        {-1, 0}, {1, 0}, {0, -1}, {0, 1}, {-1, -1}, {1, -1}, {-1, 1}, {1, 1},
    }};
    const std::size_t n_off = connectivity == Connectivity::four ? 4 : 8;

    std::deque<std::pair<int, int>> queue;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (!m.data()[i] || label[i] != 0) continue;

            const int id = static_cast<int>(comps.size()) + 1;
            BitMask comp(w, h);
            label[i] = id;
            queue.emplace_back(x, y);
            while (!queue.empty()) {
                auto [cx, cy] = queue.front();
                queue.pop_front();
                comp.set(cx, cy);
                for (std::size_t k = 0; k < n_off; ++k) {
                    const int nx = cx + offsets[k].first;
                    const int ny = cy + offsets[k].second;
                    if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                    const std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
                    if (m.data()[ni] && label[ni] == 0) {
                        label[ni] = id;
                        queue.emplace_back(nx, ny);
                    }
                }
            }
            comps.push_back(std::move(comp));
        }
    }
    return comps;
}

BitMask union_masks(std::span<const BitMask> masks, int width, int height) {
    BitMask out(width, height);
    for (const BitMask& m : masks) kernels::or_into(out, m);
    return out;
}

BBox union_bbox(std::span<const BitMask> masks) {
    BBox acc = BBox::empty();
    for (const BitMask& m : masks) {
        const BBox b = tight_bbox(m);
        if (b.is_empty()) continue;
        if (acc.is_empty()) {
            acc = b;
        } else {
            acc.x0 = std::min(acc.x0, b.x0);
            acc.y0 = std::min(acc.y0, b.y0);
            acc.x1 = std::max(acc.x1, b.x1);
            acc.y1 = std::max(acc.y1, b.y1);
        }
    }
    return acc;
}

double g_iou(std::span<const MaskPair> pairs) {
    if (pairs.empty()) throw EmptyDatasetError("g_iou over empty dataset");
    auto counts = kernels::batch_overlap(pairs);
    double sum = 0.0;
    for (const auto& c : counts)
        sum += c.uni == 0 ? 1.0 : static_cast<double>(c.intersection) / static_cast<double>(c.uni);
    return sum / static_cast<double>(counts.size());
}

double c_iou(std::span<const MaskPair> pairs) {
    if (pairs.empty()) throw EmptyDatasetError("c_iou over empty dataset");
    auto counts = kernels::batch_overlap(pairs);
    std::int64_t inter = 0;
    std::int64_t uni = 0;
    for (const auto& c : counts) {
        inter += c.intersection;
        uni += c.uni;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

nlohmann::json rle_encode(const BitMask& m) {
    std::vector<std::int64_t> counts;
    std::uint8_t cur = 0;
    std::int64_t run = 0;
    for (int x = 0; x < m.width(); ++x) {
        for (int y = 0; y < m.height(); ++y) {
            const std::uint8_t v = m.get(x, y) ? 1 : 0;
            if (v == cur) {
                ++run;
            } else {
                counts.push_back(run);
                cur = v;
                run = 1;
            }
        }
    }
    counts.push_back(run);
    return nlohmann::json{{"size", {m.height(), m.width()}}, {"counts", counts}};
}

BitMask rle_decode(const nlohmann::json& rle) {
    if (!rle.is_object() || !rle.contains("size") || !rle.contains("counts"))
        throw DimensionError("malformed rle object");
    const auto& size = rle.at("size");
    if (!size.is_array() || size.size() != 2)
        throw DimensionError("malformed rle size");
    const int h = size.at(0).get<int>();
    const int w = size.at(1).get<int>();
    BitMask m(w, h);

    std::int64_t pos = 0;
    std::uint8_t cur = 0;
    const std::int64_t total = static_cast<std::int64_t>(w) * h;
    for (const auto& c : rle.at("counts")) {
        const std::int64_t run = c.get<std::int64_t>();
        if (run < 0 || pos + run > total)
            throw DimensionError("rle counts exceed mask size");
        if (cur) {
            for (std::int64_t i = pos; i < pos + run; ++i) {
                const int x = static_cast<int>(i / h);
                const int y = static_cast<int>(i % h);
                m.set(x, y);
            }
        }
        pos += run;
        cur ^= 1;
    }
    if (pos != total) throw DimensionError("rle counts do not cover mask");
    return m;
}

} // namespace segloop
