#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "segloop/observation.hpp"
#include "segloop/protocol.hpp"
#include "segloop/toyseg.hpp"

namespace segloop {

/// One segmentation problem: a scene plus the region the question asks for.
struct Task {
    Scene scene;
    int target_region = 1;
    std::string question;
    BitMask gt_mask;

    static Task for_region(Scene scene, int region_id, std::string question);
};

struct EnvConfig {
    int max_turns = 8;   // tool-call turns; the forced answer turn is extra
    int pool_cap = 6;    // history pool capacity, FIFO eviction
    int thumb_size = 96; // overlay thumbnail edge length
    SegmentorConfig segmentor;

    void validate() const;
};

struct ToolEvent {
    enum class Kind { zoom, rotate, segment, invalid, budget_exhausted, answer_item };
    Kind kind;
    std::string detail;
    int candidate_index = -1;
};

std::string_view tool_event_kind_str(ToolEvent::Kind kind);

/// A candidate mask plus the scene-space prompts that reproduce it.
struct Candidate {
    BitMask mask;
    AnswerItem prompts;
};

struct FinalPrediction {
    std::vector<BitMask> masks;
    BitMask union_mask;
    BBox union_box;
};

struct StepRecord {
    int t = 0; // 1-based turn index
    std::string obs_digest;
    std::string raw;
    std::optional<AgentTurn> turn;
    FormatVerdict verdict;
    std::vector<ToolEvent> events;
    std::vector<int> candidates_added;
};

struct Trajectory {
    std::vector<StepRecord> steps;
    std::vector<Candidate> candidates;
    std::optional<FinalPrediction> final_prediction;
};

/// Segments every answer item against the full scene. Items whose
/// segmentation raises a prompt error contribute an empty mask.
FinalPrediction finalize_answer(const Scene& scene, const AnswerPayload& answer,
                                const SegmentorConfig& cfg,
                                std::vector<ToolEvent>* events = nullptr);

/// Overlay render: 0 background, 1..5 region palette, 6 mask highlight;
/// nearest-neighbor resample to thumb_size x thumb_size.
Thumbnail render_overlay(const Scene& scene, const BitMask& mask, int thumb_size);

/// Finite-horizon episode over one task. Single writer per episode;
/// distinct episodes are independent.
class Episode {
public:
    Episode(Task task, EnvConfig config);

    bool terminal() const { return terminal_; }
    const Observation& observation() const;
    const FinalPrediction& final_prediction() const;
    const Trajectory& trajectory() const { return traj_; }
    const Task& task() const { return task_; }
    const EnvConfig& config() const { return config_; }
    const ViewState& view() const { return view_; }

    /// Parses and applies one policy turn. Format violations consume a
    /// turn and are recorded; they never raise.
    const StepRecord& step_raw(std::string_view raw);

    /// Applies an already-parsed turn (serialized form is recorded).
    const StepRecord& step(const AgentTurn& turn);

private:
    const StepRecord& apply(std::string raw, std::optional<AgentTurn> turn, FormatVerdict verdict);
    void execute_calls(const AgentTurn& turn, StepRecord& rec);
    void terminate_with(FinalPrediction prediction);
    void refresh_observation();

    Task task_;
    EnvConfig config_;
    ViewState view_;
    int budget_remaining_ = 0;
    bool terminal_ = false;
    std::uint64_t digest_state_;
    Observation obs_;
    Trajectory traj_;
    std::vector<PoolEntry> pool_;
};

/// Drives a fresh episode through a recorded sequence of raw turns.
Trajectory replay_episode(const Task& task, const EnvConfig& config,
                          std::span<const std::string> raw_turns);

/// JSON-lines trajectory log: one step per line, final line with the
/// prediction masks and their IoU against the ground truth.
std::vector<std::string> trajectory_log_lines(const Trajectory& traj, const BitMask& gt);

} // namespace segloop
