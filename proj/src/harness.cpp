#include "segloop/harness.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "segloop/policies.hpp"
#include "segloop/reward.hpp"
#include "segloop/wire.hpp"

namespace segloop {

namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    write_text(path, j.dump(2) + "\n");
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path.string() + " is not valid JSON");
    return j;
}

std::string pad4(std::size_t n) {
    std::string s = std::to_string(n);
    return std::string(s.size() >= 4 ? 0 : 4 - s.size(), '0') + s;
}

Scene load_scene(const fs::path& file) {
    return Scene::from_json(read_json(file));
}

} // namespace

PolicyBinding PolicyBinding::parse(const std::string& s) {
    PolicyBinding b;
    b.spec = s;
    if (s.rfind("external:cmd:", 0) == 0) {
        b.kind = Kind::external_cmd;
        b.endpoint = s.substr(13);
        if (b.endpoint.empty()) throw ConfigError("empty external command");
        return b;
    }
    if (s.rfind("external:tcp:", 0) == 0) {
        b.kind = Kind::external_tcp;
        b.endpoint = s.substr(13);
        if (b.endpoint.find(':') == std::string::npos)
            throw ConfigError("external tcp endpoint must be host:port");
        return b;
    }
    // scripted, optionally "name:param"
    const auto colon = s.find(':');
    b.kind = Kind::scripted;
    b.name = colon == std::string::npos ? s : s.substr(0, colon);
    if (colon != std::string::npos) {
        try {
            b.param = std::stod(s.substr(colon + 1));
        } catch (const std::exception&) {
            throw ConfigError("bad policy parameter in '" + s + "'");
        }
    }
    if (!is_scripted_policy(b.name)) throw ConfigError("unknown policy '" + b.name + "'");
    return b;
}

std::uint64_t episode_seed(std::uint64_t run_seed, std::uint64_t index) {
    return splitmix64(run_seed ^ splitmix64(index + 0x6a09e667f3bcc909ull));
}

Task task_from_scene(Scene scene, std::uint64_t run_seed, std::uint64_t index) {
    const int k = scene.region_count();
    const int target = 1 + static_cast<int>(episode_seed(run_seed, index) % static_cast<std::uint64_t>(k));
    std::string question = "task" + std::to_string(index) + ":region" + std::to_string(target);
    return Task::for_region(std::move(scene), target, std::move(question));
}

nlohmann::json cmd_gen_scenes(int n, const SceneSpec& spec, std::uint64_t seed,
                              const fs::path& out_dir) {
    if (n < 0) throw ConfigError("scene count must be non-negative");
    fs::create_directories(out_dir);
    nlohmann::json files = nlohmann::json::array();
    for (int i = 0; i < n; ++i) {
        const Scene scene = generate_scene(spec, splitmix64(seed ^ static_cast<std::uint64_t>(i)));
        const std::string name = "scene_" + pad4(static_cast<std::size_t>(i)) + ".json";
        write_json(out_dir / name, scene.to_json());
        files.push_back(name);
    }
    nlohmann::json manifest{{"n", n},
                            {"seed", seed},
                            {"regions", spec.region_count},
                            {"width", spec.width},
                            {"height", spec.height},
                            {"files", files}};
    write_json(out_dir / "scenes_manifest.json", manifest);
    return manifest;
}

namespace {

struct EpisodeOutput {
    Trajectory traj;
    Task task;
};

EpisodeOutput run_one(const fs::path& scene_file, std::uint64_t index,
                      const PolicyBinding& binding, const HarnessConfig& cfg,
                      ExternalPolicyBridge* bridge) {
    EpisodeOutput out{Trajectory{}, task_from_scene(load_scene(scene_file), cfg.seed, index)};
    if (binding.kind == PolicyBinding::Kind::scripted) {
        auto policy = make_scripted_policy(binding.name, binding.param);
        out.traj = run_episode(out.task, cfg.env, *policy, cfg.seed, index);
    } else {
        Episode ep(out.task, cfg.env);
        while (!ep.terminal()) ep.step_raw(bridge->request_turn(ep.observation()));
        out.traj = ep.trajectory();
    }
    return out;
}

} // namespace

nlohmann::json cmd_run(const PolicyBinding& binding, const std::vector<fs::path>& scene_files,
                       const HarnessConfig& cfg, const fs::path& out_dir) {
    cfg.validate();
    fs::create_directories(out_dir);

    const std::size_t n = scene_files.size();
    std::vector<nlohmann::json> entries(n);

    auto emit = [&](std::size_t i, const EpisodeOutput& ep) {
        const std::string id = "ep_" + pad4(i);
        const std::string log_name = id + ".log.jsonl";
        const std::string reward_name = id + ".reward.json";

        std::string log_text;
        for (const auto& line : trajectory_log_lines(ep.traj, ep.task.gt_mask))
            log_text += line + "\n";
        write_text(out_dir / log_name, log_text);

        const RewardBreakdown b = score_trajectory(ep.traj, ep.task.gt_mask, cfg.weights);
        write_json(out_dir / reward_name, breakdown_to_json(b, cfg.weights));

        entries[i] = nlohmann::json{{"id", id},
                                    {"scene", scene_files[i].string()},
                                    {"target", ep.task.target_region},
                                    {"log", log_name},
                                    {"reward", reward_name},
                                    {"seed", episode_seed(cfg.seed, i)},
                                    {"S", b.total}};
    };

    if (binding.kind == PolicyBinding::Kind::scripted) {
        const std::int64_t count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic) num_threads(cfg.jobs)
        for (std::int64_t i = 0; i < count; ++i) {
            const auto ep = run_one(scene_files[static_cast<std::size_t>(i)],
                                    static_cast<std::uint64_t>(i), binding, cfg, nullptr);
            emit(static_cast<std::size_t>(i), ep);
        }
    } else {
        // One connection, episodes in order: the bridge serializes.
        std::unique_ptr<WireChannel> channel;
        if (binding.kind == PolicyBinding::Kind::external_cmd) {
            channel = open_subprocess_channel(binding.endpoint);
        } else {
            const auto colon = binding.endpoint.rfind(':');
            channel = open_tcp_channel(binding.endpoint.substr(0, colon),
                                       std::stoi(binding.endpoint.substr(colon + 1)));
        }
        ExternalPolicyBridge bridge(*channel);
        for (std::size_t i = 0; i < n; ++i)
            emit(i, run_one(scene_files[i], i, binding, cfg, &bridge));
        bridge.send_end();
    }

    nlohmann::json manifest{{"policy", binding.spec},
                            {"config", cfg.to_json()},
                            {"entries", entries}};
    write_json(out_dir / "run_manifest.json", manifest);
    return manifest;
}

std::vector<std::string> read_log_turns(const fs::path& log_file) {
    std::ifstream in(log_file);
    if (!in) throw ScoreError("cannot open log " + log_file.string());
    std::vector<std::string> turns;
    std::string line;
    bool saw_final = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ScoreError("malformed log line in " + log_file.string());
        if (j.contains("final")) {
            saw_final = true;
            break;
        }
        if (!j.contains("turn") || !j["turn"].is_string())
            throw ScoreError("log step without turn text in " + log_file.string());
        turns.push_back(j["turn"].get<std::string>());
    }
    if (!saw_final) throw ScoreError("log has no final line: " + log_file.string());
    return turns;
}

namespace {

// Replays the logged turns and checks the log's masks against the replay.
Trajectory replay_log(const fs::path& log_file, const Task& task, const EnvConfig& env) {
    const auto turns = read_log_turns(log_file);
    Trajectory traj = replay_episode(task, env, turns);

    // Verify the recorded candidate masks match the replay.
    std::ifstream in(log_file);
    std::string line;
    std::size_t step_idx = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.contains("final")) break;
        if (step_idx >= traj.steps.size())
            throw ScoreError("log has more steps than the replay produced");
        const auto& added = traj.steps[step_idx].candidates_added;
        const auto& cands = j["candidates"];
        if (cands.size() != added.size())
            throw ScoreError("log candidates disagree with replay at step " +
                             std::to_string(step_idx + 1));
        for (std::size_t k = 0; k < added.size(); ++k) {
            const BitMask logged = rle_decode(cands[k]);
            if (!(logged == traj.candidates[static_cast<std::size_t>(added[k])].mask))
                throw ScoreError("log candidate mask disagrees with replay at step " +
                                 std::to_string(step_idx + 1));
        }
        ++step_idx;
    }
    return traj;
}

} // namespace

nlohmann::json cmd_score(const fs::path& log_file, const fs::path& scene_file, int target,
                         const HarnessConfig& cfg) {
    Scene scene = load_scene(scene_file);
    const Task task = Task::for_region(std::move(scene), target, "score");
    const Trajectory traj = replay_log(log_file, task, cfg.env);
    const RewardBreakdown b = score_trajectory(traj, task.gt_mask, cfg.weights);
    return breakdown_to_json(b, cfg.weights);
}

nlohmann::json cmd_filter(const fs::path& run_manifest, const HarnessConfig& cfg,
                          const fs::path& out_dir) {
    const nlohmann::json manifest = read_json(run_manifest);
    const fs::path run_dir = run_manifest.parent_path();
    fs::create_directories(out_dir);

    int kept = 0, rescued = 0, drop_final = 0, drop_turns = 0;
    nlohmann::json decisions = nlohmann::json::array();
    nlohmann::json rescued_ids = nlohmann::json::array();
    std::string sft_text;
    std::size_t examples = 0;

    for (const auto& entry : manifest.at("entries")) {
        const std::string id = entry.at("id").get<std::string>();
        const fs::path scene_file = entry.at("scene").get<std::string>();
        const fs::path log_file = run_dir / entry.at("log").get<std::string>();
        const int target = entry.at("target").get<int>();

        Scene scene = load_scene(scene_file);
        const Task task = Task::for_region(std::move(scene), target, "filter:" + id);
        Trajectory traj = replay_episode(task, cfg.env, read_log_turns(log_file));

        FilterDecision d = filter(traj, task.gt_mask, cfg.filter);
        nlohmann::json dj{{"id", id},
                          {"verdict", std::string(verdict_str(d.verdict))},
                          {"final_iou", d.final_iou},
                          {"turns", d.turns}};
        switch (d.verdict) {
        case FilterDecision::Verdict::keep:
            ++kept;
            break;
        case FilterDecision::Verdict::rescue: {
            ++rescued;
            dj["rescue_step"] = d.rescue_step;
            rescued_ids.push_back(id);
            traj = rescue(traj, d, task, cfg.env);
            break;
        }
        case FilterDecision::Verdict::drop:
            dj["reason"] = d.drop_reason;
            (d.drop_reason == "final_iou" ? drop_final : drop_turns) += 1;
            break;
        }
        decisions.push_back(std::move(dj));
        if (d.verdict == FilterDecision::Verdict::drop) continue;

        const SftExample ex = emit_sft_example(traj, task, cfg.env, id);
        sft_text += sft_to_json(ex).dump() + "\n";
        ++examples;
    }

    write_text(out_dir / "sft.jsonl", sft_text);
    nlohmann::json out{{"counts",
                        {{"keep", kept},
                         {"rescue", rescued},
                         {"drop_final_iou", drop_final},
                         {"drop_turns", drop_turns}}},
                       {"examples", examples},
                       {"rescued_ids", rescued_ids},
                       {"decisions", decisions},
                       {"thresholds",
                        {{"keep_iou", cfg.filter.keep_iou},
                         {"max_turns", cfg.filter.max_turns},
                         {"rescue_iou", cfg.filter.rescue_iou}}}};
    write_json(out_dir / "filter_manifest.json", out);
    return out;
}

nlohmann::json cmd_train_toy(const HarnessConfig& cfg, const fs::path& out_dir) {
    cfg.validate();
    fs::create_directories(out_dir);
    const BanditSpec spec =
        make_prompt_bandit(cfg.scenes.region_count, splitmix64(cfg.seed ^ 0xb7e151628aed2a6bull),
                           cfg.env, cfg.weights);
    ToyTrainConfig train_cfg = cfg.grpo;
    train_cfg.seed = cfg.seed;

    std::ostringstream log;
    const TrainResult result = train_toy(spec, train_cfg, &log);
    write_text(out_dir / "train_log.jsonl", log.str());

    nlohmann::json arms = nlohmann::json::array();
    for (const auto& arm : spec.arms) arms.push_back({{"label", arm.label}, {"S", arm.ret}});
    nlohmann::json summary{
        {"arms", arms},
        {"optimal_S", spec.optimal_return},
        {"iterations", result.curve.size()},
        {"reached_at", result.reached_at},
        {"final_mean_S", result.curve.empty() ? 0.0 : result.curve.back().mean_return},
        {"greedy_S",
         spec.arms[static_cast<std::size_t>(result.policy.greedy(0))].ret}};
    write_json(out_dir / "train_summary.json", summary);
    return summary;
}

nlohmann::json cmd_eval(const fs::path& run_manifest, const HarnessConfig& cfg) {
    const nlohmann::json manifest = read_json(run_manifest);
    const fs::path run_dir = run_manifest.parent_path();

    std::vector<MaskPair> pairs;
    for (const auto& entry : manifest.at("entries")) {
        const fs::path scene_file = entry.at("scene").get<std::string>();
        const fs::path log_file = run_dir / entry.at("log").get<std::string>();
        const int target = entry.at("target").get<int>();
        Scene scene = load_scene(scene_file);
        const BitMask gt = scene.region_mask(target);

        // Union of the final masks from the log.
        std::ifstream in(log_file);
        std::string line;
        BitMask pred(scene.width(), scene.height());
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("final")) continue;
            for (const auto& rle : j["final"]["masks"])
                kernels::or_into(pred, rle_decode(rle));
        }
        pairs.emplace_back(std::move(pred), gt);
    }
    if (pairs.empty()) throw EmptyDatasetError("run has no entries to evaluate");
    (void)cfg;
    return nlohmann::json{
        {"n", pairs.size()}, {"g_iou", g_iou(pairs)}, {"c_iou", c_iou(pairs)}};
}

} // namespace segloop
