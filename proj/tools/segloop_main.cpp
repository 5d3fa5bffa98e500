#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "segloop/harness.hpp"

namespace fs = std::filesystem;

namespace {

// Exit codes: 0 success, 2 validation error, 3 protocol error.
constexpr int kExitValidation = 2;
constexpr int kExitProtocol = 3;

std::vector<fs::path> collect_scene_files(const std::string& scenesLocation) {
    const fs::path p(scenesLocation);
    std::vector<fs::path> files;
    if (fs::is_directory(p)) {
        for (const auto& entry : fs::directory_iterator(p)) {
            const auto name = entry.path().filename().string();
            if (entry.is_regular_file() && name.rfind("scene_", 0) == 0 &&
                entry.path().extension() == ".json")
                files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
    } else if (fs::is_regular_file(p)) {
        files.push_back(p);
    }
    if (files.empty())
        throw segloop::ConfigError("no scene files found at " + scenesLocation);
    return files;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"segloop: multi-turn segmentation environment, rewards, and toy GRPO"};
    app.require_subcommand(1);
    app.fallthrough(); // let global flags appear after the subcommand

    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed_flag;
    std::optional<int> jobs_flag;
    app.add_option("--config", config_path, "JSON config file")->envname("SEGLOOP_CONFIG");
    app.add_option("--seed", seed_flag, "override the config seed");
    app.add_option("--jobs", jobs_flag, "worker threads for episode fan-out");

    auto* gen = app.add_subcommand("gen-scenes", "generate a synthetic scene corpus");
    int gen_n = 10;
    std::optional<int> gen_regions;
    std::optional<int> gen_size;
    std::string gen_out = "scenes";
    gen->add_option("--n", gen_n, "number of scenes");
    gen->add_option("--regions", gen_regions, "instances per scene");
    gen->add_option("--size", gen_size, "square scene edge length");
    gen->add_option("--out", gen_out, "output directory");

    auto* run = app.add_subcommand("run", "run a policy over tasks");
    std::string run_policy = "oracle";
    std::string run_scenes = "scenes";
    std::string run_out = "runs";
    run->add_option("--policy", run_policy,
                    "scripted name[:param], external:cmd:<command>, or external:tcp:host:port");
    run->add_option("--scenes", run_scenes, "scene directory or file");
    run->add_option("--out", run_out, "output directory");

    auto* score = app.add_subcommand("score", "recompute the reward breakdown of a log");
    std::string score_log;
    std::string score_scene;
    int score_target = 1;
    std::optional<std::string> score_out;
    score->add_option("--log", score_log, "trajectory log")->required();
    score->add_option("--scene", score_scene, "scene file")->required();
    score->add_option("--target", score_target, "target region id");
    score->add_option("--out", score_out, "write the report here instead of stdout");

    auto* filter = app.add_subcommand("filter", "filter a run and emit the SFT dataset");
    std::string filter_manifest = "runs/run_manifest.json";
    std::string filter_out = "dataset";
    filter->add_option("--manifest", filter_manifest, "run manifest");
    filter->add_option("--out", filter_out, "output directory");

    auto* train = app.add_subcommand("train-toy", "train the toy policy on the prompt bandit");
    std::string train_out = "train";
    train->add_option("--out", train_out, "output directory");

    auto* eval = app.add_subcommand("eval", "dataset gIoU/cIoU of a finished run");
    std::string eval_manifest = "runs/run_manifest.json";
    std::optional<std::string> eval_out;
    eval->add_option("--manifest", eval_manifest, "run manifest");
    eval->add_option("--out", eval_out, "write the report here instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        segloop::HarnessConfig cfg = segloop::load_config(config_path);
        if (seed_flag) cfg.seed = *seed_flag;
        if (jobs_flag) cfg.jobs = *jobs_flag;
        cfg.validate();

        if (gen->parsed()) {
            segloop::SceneSpec spec = cfg.scenes;
            if (gen_regions) spec.region_count = *gen_regions;
            if (gen_size) {
                spec.width = *gen_size;
                spec.height = *gen_size;
            }
            const auto manifest = segloop::cmd_gen_scenes(gen_n, spec, cfg.seed, gen_out);
            std::cout << "wrote " << manifest["n"] << " scenes to " << gen_out << "\n";
        } else if (run->parsed()) {
            const auto binding = segloop::PolicyBinding::parse(run_policy);
            const auto files = collect_scene_files(run_scenes);
            const auto manifest = segloop::cmd_run(binding, files, cfg, run_out);
            std::cout << "ran " << manifest["entries"].size() << " episodes to " << run_out
                      << "\n";
        } else if (score->parsed()) {
            const auto report = segloop::cmd_score(score_log, score_scene, score_target, cfg);
            if (score_out) {
                std::ofstream out(*score_out);
                out << report.dump(2) << "\n";
            } else {
                std::cout << report.dump(2) << "\n";
            }
        } else if (filter->parsed()) {
            const auto manifest = segloop::cmd_filter(filter_manifest, cfg, filter_out);
            std::cout << manifest["counts"].dump() << " -> " << filter_out << "\n";
        } else if (train->parsed()) {
            const auto summary = segloop::cmd_train_toy(cfg, train_out);
            std::cout << summary.dump(2) << "\n";
        } else if (eval->parsed()) {
            const auto report = segloop::cmd_eval(eval_manifest, cfg);
            if (eval_out) {
                std::ofstream out(*eval_out);
                out << report.dump(2) << "\n";
            } else {
                std::cout << report.dump(2) << "\n";
            }
        }
    } catch (const segloop::ProtocolError& e) {
        std::cerr << "protocol error: " << e.what() << "\n";
        return kExitProtocol;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return 0;
}
