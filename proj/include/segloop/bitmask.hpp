#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "segloop/errors.hpp"

namespace segloop {

/// Binary pixel mask with fixed dimensions, stored row-major as 0/1 bytes.
/// "Empty" means no set pixels; dimensions are always positive.
class BitMask {
public:
    BitMask() = default;

    BitMask(int width, int height)
        : width_(width), height_(height),
          bits_(static_cast<std::size_t>(check_dims(width, height)), 0) {}

    static BitMask filled(int width, int height) {
        BitMask m(width, height);
        std::fill(m.bits_.begin(), m.bits_.end(), std::uint8_t{1});
        return m;
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::int64_t pixel_count() const { return static_cast<std::int64_t>(bits_.size()); }

    bool in_bounds(int x, int y) const {
        return x >= 0 && x < width_ && y >= 0 && y < height_;
    }

    bool get(int x, int y) const { return bits_[idx(x, y)] != 0; }
    void set(int x, int y, bool v = true) { bits_[idx(x, y)] = v ? 1 : 0; }

    const std::uint8_t* data() const { return bits_.data(); }
    std::uint8_t* data() { return bits_.data(); }

    bool same_dims(const BitMask& other) const {
        return width_ == other.width_ && height_ == other.height_;
    }

    /// Number of set pixels.
    std::int64_t count() const {
        std::int64_t n = 0;
        for (std::uint8_t b : bits_) n += b;
        return n;
    }

    bool none() const { return count() == 0; }

    bool operator==(const BitMask& other) const = default;

private:
    static int check_dims(int w, int h) {
        if (w <= 0 || h <= 0)
            throw DimensionError("mask dimensions must be positive");
        return w * h;
    }
    std::size_t idx(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

/// Axis-aligned pixel box, half-open: [x0, x1) x [y0, y1).
/// Any box with x0 >= x1 or y0 >= y1 is the empty box.
struct BBox {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    static BBox empty() { return BBox{0, 0, 0, 0}; }

    bool is_empty() const { return x0 >= x1 || y0 >= y1; }
    int width() const { return is_empty() ? 0 : x1 - x0; }
    int height() const { return is_empty() ? 0 : y1 - y0; }
    std::int64_t area() const {
        return is_empty() ? 0
                          : static_cast<std::int64_t>(x1 - x0) * static_cast<std::int64_t>(y1 - y0);
    }
    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }

    bool operator==(const BBox& other) const = default;
};

enum class Polarity : int { negative = 0, positive = 1 };

/// Spatial point prompt in pixel coordinates.
struct PointPrompt {
    int x = 0;
    int y = 0;
    Polarity polarity = Polarity::positive;

    bool operator==(const PointPrompt& other) const = default;
};

} // namespace segloop
