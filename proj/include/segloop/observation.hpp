#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "segloop/toyseg.hpp"

namespace segloop {

/// Downscaled overlay render: 0 background, 1..5 region palette,
/// 6 candidate-mask highlight.
struct Thumbnail {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> cells;

    std::uint8_t at(int x, int y) const {
        return cells[static_cast<std::size_t>(y) * width + x];
    }
    bool operator==(const Thumbnail& other) const = default;
};

struct PoolEntry {
    int candidate_index = 0;
    Thumbnail thumb;
    bool operator==(const PoolEntry& other) const = default;
};

/// What the policy sees before its next turn.
struct Observation {
    std::string question;
    int scene_width = 0;
    int scene_height = 0;
    ViewState view;
    std::vector<PoolEntry> history_pool;
    int turn_index = 0;
    int budget_remaining = 0;
    std::string context_digest;
};

} // namespace segloop
