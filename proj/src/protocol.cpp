#include "segloop/protocol.hpp"

#include <array>
#include <cctype>

namespace segloop {

namespace {

constexpr std::array<std::pair<std::string_view, ToolName>, 4> kToolNames = {{
    {"zoom_in", ToolName::zoom_in},
    {"rotate", ToolName::rotate},
    {"segment_points", ToolName::segment_points},
    {"segment_box", ToolName::segment_box},
}};

struct Block {
    std::string_view tag;
    std::string_view body;
};

// Splits the raw turn into tagged blocks. Returns false (with a reason)
// on any structural defect: stray text, unknown tags, unclosed tags.
bool scan_blocks(std::string_view raw, std::vector<Block>& out, std::string& reason) {
    std::size_t pos = 0;
    while (pos < raw.size()) {
        if (std::isspace(static_cast<unsigned char>(raw[pos]))) {
            ++pos;
            continue;
        }
        if (raw[pos] != '<') {
            reason = "text outside of tagged blocks";
            return false;
        }
        const std::size_t tag_end = raw.find('>', pos);
        if (tag_end == std::string_view::npos) {
            reason = "unterminated tag";
            return false;
        }
        const std::string_view tag = raw.substr(pos + 1, tag_end - pos - 1);
        if (tag != "think" && tag != "tool_call" && tag != "answer") {
            reason = "unknown tag <" + std::string(tag) + ">";
            return false;
        }
        const std::string close = "</" + std::string(tag) + ">";
        const std::size_t body_start = tag_end + 1;
        const std::size_t close_pos = raw.find(close, body_start);
        if (close_pos == std::string_view::npos) {
            reason = "missing " + close;
            return false;
        }
        out.push_back(Block{tag, raw.substr(body_start, close_pos - body_start)});
        pos = close_pos + close.size();
    }
    return true;
}

bool parse_json_body(std::string_view body, nlohmann::json& out) {
    out = nlohmann::json::parse(body, nullptr, false);
    return !out.is_discarded();
}

bool json_to_int(const nlohmann::json& j, int& out) {
    if (!j.is_number_integer()) return false;
    out = j.get<int>();
    return true;
}

bool json_to_box(const nlohmann::json& j, BBox& out) {
    if (!j.is_array() || j.size() != 4) return false;
    int v[4];
    for (int i = 0; i < 4; ++i)
        if (!json_to_int(j[i], v[i])) return false;
    out = BBox{v[0], v[1], v[2], v[3]};
    return true;
}

bool json_to_points(const nlohmann::json& j, std::vector<PointPrompt>& out) {
    if (!j.is_array() || j.empty()) return false;
    for (const auto& e : j) {
        if (!e.is_array() || e.size() != 3) return false;
        int x, y, pol;
        if (!json_to_int(e[0], x) || !json_to_int(e[1], y) || !json_to_int(e[2], pol))
            return false;
        if (pol != 0 && pol != 1) return false;
        out.push_back(PointPrompt{x, y, pol == 1 ? Polarity::positive : Polarity::negative});
    }
    return true;
}

bool keys_subset(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed) {
    for (const auto& [key, _] : obj.items()) {
        bool found = false;
        for (auto a : allowed) found = found || key == a;
        if (!found) return false;
    }
    return true;
}

// Returns the violation detail, or empty string on success.
std::string parse_tool_call(const nlohmann::json& j, ToolCall& call, bool& unknown) {
    unknown = false;
    if (!j.is_object() || !j.contains("name") || !j["name"].is_string())
        return "tool call must be an object with a name";
    if (!keys_subset(j, {"name", "args"})) return "unexpected keys in tool call";

    const std::string name = j["name"].get<std::string>();
    const nlohmann::json args = j.contains("args") ? j["args"] : nlohmann::json::object();
    if (!args.is_object()) return "args must be an object";

    ToolName tool;
    bool found = false;
    for (const auto& [n, t] : kToolNames) {
        if (n == name) {
            tool = t;
            found = true;
        }
    }
    if (!found) {
        unknown = true;
        return "unknown tool '" + name + "'";
    }

    switch (tool) {
    case ToolName::zoom_in: {
        BBox box;
        if (!keys_subset(args, {"box"}) || !args.contains("box") || !json_to_box(args["box"], box))
            return "zoom_in expects args.box = [x0,y0,x1,y1]";
        call = ToolCall{tool, ZoomArgs{box}};
        return "";
    }
    case ToolName::rotate: {
        int angle;
        if (!keys_subset(args, {"angle"}) || !args.contains("angle") ||
            !json_to_int(args["angle"], angle))
            return "rotate expects args.angle integer";
        call = ToolCall{tool, RotateArgs{angle}};
        return "";
    }
    case ToolName::segment_points: {
        std::vector<PointPrompt> pts;
        if (!keys_subset(args, {"points"}) || !args.contains("points") ||
            !json_to_points(args["points"], pts))
            return "segment_points expects args.points = [[x,y,pol],...]";
        call = ToolCall{tool, SegmentPointsArgs{std::move(pts)}};
        return "";
    }
    case ToolName::segment_box: {
        BBox box;
        if (!keys_subset(args, {"box"}) || !args.contains("box") || !json_to_box(args["box"], box))
            return "segment_box expects args.box = [x0,y0,x1,y1]";
        call = ToolCall{tool, SegmentBoxArgs{box}};
        return "";
    }
    }
    return "unreachable";
}

std::string parse_answer(const nlohmann::json& j, AnswerPayload& answer) {
    if (!j.is_object()) return "answer must be an object";
    if (!keys_subset(j, {"items", "note"})) return "unexpected keys in answer";
    if (!j.contains("items") || !j["items"].is_array() || j["items"].empty())
        return "answer expects a non-empty items array";
    for (const auto& item : j["items"]) {
        if (!item.is_object() || !keys_subset(item, {"points", "box"}))
            return "answer item must carry points or box";
        const bool has_points = item.contains("points");
        const bool has_box = item.contains("box");
        if (has_points == has_box) return "answer item must carry exactly one of points/box";
        AnswerItem out;
        if (has_points) {
            if (!json_to_points(item["points"], out.points))
                return "answer item points must be [[x,y,pol],...]";
        } else {
            BBox box;
            if (!json_to_box(item["box"], box)) return "answer item box must be [x0,y0,x1,y1]";
            out.box = box;
        }
        answer.items.push_back(std::move(out));
    }
    if (j.contains("note")) {
        if (!j["note"].is_string()) return "answer note must be a string";
        answer.note = j["note"].get<std::string>();
    }
    return "";
}

} // namespace

std::string_view tool_name_str(ToolName name) {
    for (const auto& [n, t] : kToolNames)
        if (t == name) return n;
    return "?";
}

std::string_view violation_kind_str(ViolationKind kind) {
    switch (kind) {
    case ViolationKind::unparsable: return "unparsable";
    case ViolationKind::missing_block: return "missing_block";
    case ViolationKind::unknown_tool: return "unknown_tool";
    case ViolationKind::bad_args: return "bad_args";
    case ViolationKind::multiple_answers: return "multiple_answers";
    }
    return "?";
}

std::pair<std::optional<AgentTurn>, FormatVerdict> parse_turn(std::string_view raw) {
    std::vector<Block> blocks;
    std::string reason;
    if (!scan_blocks(raw, blocks, reason))
        return {std::nullopt, FormatVerdict::reject(ViolationKind::unparsable, reason)};

    AgentTurn turn;
    int think_count = 0;
    int answer_count = 0;
    std::vector<std::string_view> call_bodies;
    std::string_view answer_body;
    for (const auto& b : blocks) {
        if (b.tag == "think") {
            if (++think_count > 1)
                return {std::nullopt,
                        FormatVerdict::reject(ViolationKind::unparsable, "repeated think block")};
            turn.think = std::string(b.body);
        } else if (b.tag == "tool_call") {
            call_bodies.push_back(b.body);
        } else {
            ++answer_count;
            answer_body = b.body;
        }
    }

    if (answer_count > 1 || (answer_count == 1 && !call_bodies.empty()))
        return {std::nullopt, FormatVerdict::reject(ViolationKind::multiple_answers,
                                                    "turn mixes answers and tool calls")};
    if (answer_count == 0 && call_bodies.empty())
        return {std::nullopt, FormatVerdict::reject(ViolationKind::missing_block,
                                                    "no tool_call or answer block")};

    for (auto body : call_bodies) {
        nlohmann::json j;
        if (!parse_json_body(body, j))
            return {std::nullopt, FormatVerdict::reject(ViolationKind::unparsable,
                                                        "tool_call body is not valid JSON")};
        ToolCall call;
        bool unknown = false;
        const std::string err = parse_tool_call(j, call, unknown);
        if (!err.empty())
            return {std::nullopt,
                    FormatVerdict::reject(
                        unknown ? ViolationKind::unknown_tool : ViolationKind::bad_args, err)};
        turn.tool_calls.push_back(std::move(call));
    }

    if (answer_count == 1) {
        nlohmann::json j;
        if (!parse_json_body(answer_body, j))
            return {std::nullopt, FormatVerdict::reject(ViolationKind::unparsable,
                                                        "answer body is not valid JSON")};
        AnswerPayload answer;
        const std::string err = parse_answer(j, answer);
        if (!err.empty())
            return {std::nullopt, FormatVerdict::reject(ViolationKind::bad_args, err)};
        turn.answer = std::move(answer);
    }

    return {std::move(turn), FormatVerdict::accept()};
}

namespace {

nlohmann::json box_to_json(const BBox& b) {
    return nlohmann::json::array({b.x0, b.y0, b.x1, b.y1});
}

nlohmann::json points_to_json(const std::vector<PointPrompt>& pts) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : pts)
        arr.push_back({p.x, p.y, p.polarity == Polarity::positive ? 1 : 0});
    return arr;
}

} // namespace

nlohmann::json answer_to_json(const AnswerPayload& answer) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& item : answer.items) {
        if (item.box)
            items.push_back({{"box", box_to_json(*item.box)}});
        else
            items.push_back({{"points", points_to_json(item.points)}});
    }
    nlohmann::json j{{"items", items}};
    if (!answer.note.empty()) j["note"] = answer.note;
    return j;
}

std::string serialize_turn(const AgentTurn& turn) {
    std::string out;
    if (!turn.think.empty()) out += "<think>" + turn.think + "</think>";
    for (const auto& call : turn.tool_calls) {
        nlohmann::json args;
        switch (call.name) {
        case ToolName::zoom_in:
            args = {{"box", box_to_json(std::get<ZoomArgs>(call.args).box)}};
            break;
        case ToolName::rotate:
            args = {{"angle", std::get<RotateArgs>(call.args).angle}};
            break;
        case ToolName::segment_points:
            args = {{"points", points_to_json(std::get<SegmentPointsArgs>(call.args).points)}};
            break;
        case ToolName::segment_box:
            args = {{"box", box_to_json(std::get<SegmentBoxArgs>(call.args).box)}};
            break;
        }
        nlohmann::json j{{"name", std::string(tool_name_str(call.name))}, {"args", args}};
        out += "<tool_call>" + j.dump() + "</tool_call>";
    }
    if (turn.answer) out += "<answer>" + answer_to_json(*turn.answer).dump() + "</answer>";
    return out;
}

FormatVerdict validate_args(const ToolCall& call, int /*scene_width*/, int /*scene_height*/,
                            const ViewState& view) {
    const int vw = view.view_width();
    const int vh = view.view_height();
    auto box_in_view = [&](const BBox& b) {
        return !b.is_empty() && b.x0 >= 0 && b.y0 >= 0 && b.x1 <= vw && b.y1 <= vh;
    };

    switch (call.name) {
    case ToolName::zoom_in: {
        const BBox& b = std::get<ZoomArgs>(call.args).box;
        if (!box_in_view(b))
            return FormatVerdict::reject(ViolationKind::bad_args, "zoom box outside view");
        return FormatVerdict::accept();
    }
    case ToolName::rotate: {
        const int angle = std::get<RotateArgs>(call.args).angle;
        if (angle % 90 != 0)
            return FormatVerdict::reject(ViolationKind::bad_args, "rotation must be a right angle");
        return FormatVerdict::accept();
    }
    case ToolName::segment_points: {
        for (const auto& p : std::get<SegmentPointsArgs>(call.args).points)
            if (p.x < 0 || p.x >= vw || p.y < 0 || p.y >= vh)
                return FormatVerdict::reject(ViolationKind::bad_args, "point outside view");
        return FormatVerdict::accept();
    }
    case ToolName::segment_box: {
        if (!box_in_view(std::get<SegmentBoxArgs>(call.args).box))
            return FormatVerdict::reject(ViolationKind::bad_args, "segment box outside view");
        return FormatVerdict::accept();
    }
    }
    return FormatVerdict::accept();
}

nlohmann::json observation_to_json(const Observation& obs) {
    nlohmann::json pool = nlohmann::json::array();
    for (const auto& entry : obs.history_pool) {
        pool.push_back({{"cand", entry.candidate_index},
                        {"thumb",
                         {{"w", entry.thumb.width},
                          {"h", entry.thumb.height},
                          {"cells", entry.thumb.cells}}}});
    }
    return nlohmann::json{
        {"budget", obs.budget_remaining},
        {"digest", obs.context_digest},
        {"pool", pool},
        {"question", obs.question},
        {"scene", {{"w", obs.scene_width}, {"h", obs.scene_height}}},
        {"turn", obs.turn_index},
        {"view",
         {{"crop", box_to_json(obs.view.crop)}, {"rot", static_cast<int>(obs.view.rotation)}}},
    };
}

std::string serialize_observation(const Observation& obs) {
    return observation_to_json(obs).dump();
}

} // namespace segloop
