#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "segloop/bitmask.hpp"
#include "segloop/mask_ops.hpp"

// Brute-force oracles kept deliberately independent of the library
// implementations they check.
namespace testutil {

inline segloop::BitMask make_mask(int w, int h,
                                  const std::vector<std::pair<int, int>>& pixels) {
    segloop::BitMask m(w, h);
    for (const auto& [x, y] : pixels) m.set(x, y);
    return m;
}

inline segloop::BitMask block_mask(int w, int h, int x0, int y0, int x1, int y1) {
    segloop::BitMask m(w, h);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) m.set(x, y);
    return m;
}

inline segloop::BitMask random_mask(std::mt19937_64& rng, int w, int h, double density = 0.4) {
    segloop::BitMask m(w, h);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (dist(rng) < density) m.set(x, y);
    return m;
}

inline double oracle_pixel_iou(const segloop::BitMask& a, const segloop::BitMask& b) {
    std::int64_t inter = 0;
    std::int64_t uni = 0;
    for (int y = 0; y < a.height(); ++y) {
        for (int x = 0; x < a.width(); ++x) {
            const bool pa = a.get(x, y);
            const bool pb = b.get(x, y);
            if (pa && pb) ++inter;
            if (pa || pb) ++uni;
        }
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

// Rasterizes both boxes onto a grid large enough to hold them.
inline double oracle_box_iou_rasterized(const segloop::BBox& a, const segloop::BBox& b) {
    if (a.is_empty() || b.is_empty()) return 0.0;
    const int w = std::max(a.x1, b.x1) + 1;
    const int h = std::max(a.y1, b.y1) + 1;
    return oracle_pixel_iou(block_mask(w, h, a.x0, a.y0, a.x1, a.y1),
                            block_mask(w, h, b.x0, b.y0, b.x1, b.y1));
}

// Stack-based flood fill, run in column-major scan order (the library
// uses raster-order BFS); returns one full-size mask per component.
inline std::vector<segloop::BitMask> oracle_components(const segloop::BitMask& m,
                                                       bool eight_way) {
    const int w = m.width();
    const int h = m.height();
    std::vector<char> seen(static_cast<std::size_t>(w) * h, 0);
    std::vector<segloop::BitMask> comps;
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) {
            const std::size_t i0 = static_cast<std::size_t>(y) * w + x;
            if (!m.get(x, y) || seen[i0]) continue;
            segloop::BitMask comp(w, h);
            std::vector<std::pair<int, int>> stack{{x, y}};
            seen[i0] = 1;
            while (!stack.empty()) {
                const auto [cx, cy] = stack.back();
                stack.pop_back();
                comp.set(cx, cy);
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dx == 0 && dy == 0) continue;
                        if (!eight_way && dx != 0 && dy != 0) continue;
                        const int nx = cx + dx;
                        const int ny = cy + dy;
                        if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                        const std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
                        if (m.get(nx, ny) && !seen[ni]) {
                            seen[ni] = 1;
                            stack.emplace_back(nx, ny);
                        }
                    }
                }
            }
            comps.push_back(std::move(comp));
        }
    }
    return comps;
}

// Window scan: a pixel is set when any input pixel lies within L1
// distance radius.
inline segloop::BitMask oracle_dilate_l1(const segloop::BitMask& m, int radius) {
    segloop::BitMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            bool hit = false;
            for (int dy = -radius; dy <= radius && !hit; ++dy) {
                for (int dx = -radius; dx <= radius && !hit; ++dx) {
                    if (std::abs(dx) + std::abs(dy) > radius) continue;
                    const int nx = x + dx;
                    const int ny = y + dy;
                    if (nx >= 0 && nx < m.width() && ny >= 0 && ny < m.height() && m.get(nx, ny))
                        hit = true;
                }
            }
            if (hit) out.set(x, y);
        }
    }
    return out;
}

// Exhaustive minimum-cost injection of the shorter side into the longer.
inline double brute_force_assignment_cost(const std::vector<std::vector<double>>& cost) {
    const int rows = static_cast<int>(cost.size());
    const int cols = rows == 0 ? 0 : static_cast<int>(cost[0].size());
    if (rows == 0 || cols == 0) return 0.0;

    double best = std::numeric_limits<double>::infinity();
    if (rows <= cols) {
        std::vector<int> used;
        auto rec = [&](auto&& self, int row, double acc, std::uint64_t used_mask) -> void {
            if (row == rows) {
                best = std::min(best, acc);
                return;
            }
            for (int c = 0; c < cols; ++c) {
                if (used_mask & (1ull << c)) continue;
                self(self, row + 1, acc + cost[row][c], used_mask | (1ull << c));
            }
        };
        rec(rec, 0, 0.0, 0);
    } else {
        std::vector<std::vector<double>> t(cols, std::vector<double>(rows));
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) t[j][i] = cost[i][j];
        return brute_force_assignment_cost(t);
    }
    return best;
}

inline double assignment_cost(const std::vector<std::vector<double>>& cost,
                              const std::vector<std::pair<int, int>>& pairs) {
    double sum = 0.0;
    for (const auto& [i, j] : pairs) sum += cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return sum;
}

} // namespace testutil
