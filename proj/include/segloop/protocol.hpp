#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "segloop/bitmask.hpp"
#include "segloop/observation.hpp"
#include "segloop/toyseg.hpp"

namespace segloop {

enum class ToolName { zoom_in, rotate, segment_points, segment_box };

std::string_view tool_name_str(ToolName name);

struct ZoomArgs {
    BBox box; // in current-view coordinates
    bool operator==(const ZoomArgs&) const = default;
};
struct RotateArgs {
    int angle = 0; // degrees
    bool operator==(const RotateArgs&) const = default;
};
struct SegmentPointsArgs {
    std::vector<PointPrompt> points; // in current-view coordinates
    bool operator==(const SegmentPointsArgs&) const = default;
};
struct SegmentBoxArgs {
    BBox box; // in current-view coordinates
    bool operator==(const SegmentBoxArgs&) const = default;
};

struct ToolCall {
    ToolName name;
    std::variant<ZoomArgs, RotateArgs, SegmentPointsArgs, SegmentBoxArgs> args;
    bool operator==(const ToolCall&) const = default;
};

/// One answer item: fresh spatial prompts in scene coordinates.
struct AnswerItem {
    std::vector<PointPrompt> points; // used when box is absent
    std::optional<BBox> box;
    bool operator==(const AnswerItem&) const = default;
};

struct AnswerPayload {
    std::vector<AnswerItem> items;
    std::string note;
    bool operator==(const AnswerPayload&) const = default;
};

/// Parsed policy turn: think text plus either tool calls or an answer.
struct AgentTurn {
    std::string think;
    std::vector<ToolCall> tool_calls;
    std::optional<AnswerPayload> answer;

    bool is_answer() const { return answer.has_value(); }
    bool operator==(const AgentTurn&) const = default;
};

enum class ViolationKind { unparsable, missing_block, unknown_tool, bad_args, multiple_answers };

std::string_view violation_kind_str(ViolationKind kind);

struct FormatVerdict {
    bool ok = true;
    std::optional<ViolationKind> kind;
    std::string detail;

    static FormatVerdict accept() { return FormatVerdict{}; }
    static FormatVerdict reject(ViolationKind k, std::string d) {
        return FormatVerdict{false, k, std::move(d)};
    }
};

/// Total parse: a turn is produced iff the verdict is ok; violations are
/// data, never exceptions.
std::pair<std::optional<AgentTurn>, FormatVerdict> parse_turn(std::string_view raw);

/// Inverse of parse_turn for valid turns.
std::string serialize_turn(const AgentTurn& turn);

/// Bounds-checks a parsed call against the current view; rotation is
/// restricted to right angles.
FormatVerdict validate_args(const ToolCall& call, int scene_width, int scene_height,
                            const ViewState& view);

nlohmann::json observation_to_json(const Observation& obs);
std::string serialize_observation(const Observation& obs);

nlohmann::json answer_to_json(const AnswerPayload& answer);

} // namespace segloop
