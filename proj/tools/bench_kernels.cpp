// Timing harness for the pixel kernels: serial reference vs OpenMP, plus
// environment step throughput on a 256x256 scene.
#include <chrono>
#include <cstdio>
#include <random>

#include <omp.h>

#include "segloop/environment.hpp"
#include "segloop/kernels.hpp"

using namespace segloop;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

BitMask random_mask(std::mt19937_64& rng, int side, double density) {
    BitMask m(side, side);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            if (dist(rng) < density) m.set(x, y);
    return m;
}

template <typename F>
double time_op(int iters, F&& f) {
    const auto t0 = Clock::now();
    for (int i = 0; i < iters; ++i) f();
    return seconds_since(t0) / iters;
}

} // namespace

int main() {
    std::mt19937_64 rng(1);
    std::printf("threads: %d\n\n", omp_get_max_threads());
    std::printf("%-18s %10s %14s %14s %8s\n", "kernel", "side", "serial (us)", "openmp (us)",
                "speedup");

    for (const int side : {256, 1024, 2048}) {
        const BitMask a = random_mask(rng, side, 0.35);
        const BitMask b = random_mask(rng, side, 0.55);
        const int iters = side >= 2048 ? 20 : 100;

        volatile std::int64_t sink = 0;
        const double ts = time_op(iters, [&] { sink = sink + kernels::serial::overlap(a, b).uni; });
        const double tp = time_op(iters, [&] { sink = sink + kernels::par::overlap(a, b).uni; });
        std::printf("%-18s %10d %14.2f %14.2f %7.2fx\n", "overlap", side, ts * 1e6, tp * 1e6,
                    ts / tp);

        const double ds = time_op(iters / 4 + 1, [&] { sink = sink + kernels::serial::dilate_l1(a, 2).count(); });
        const double dp = time_op(iters / 4 + 1, [&] { sink = sink + kernels::par::dilate_l1(a, 2).count(); });
        std::printf("%-18s %10d %14.2f %14.2f %7.2fx\n", "dilate_l1 r=2", side, ds * 1e6,
                    dp * 1e6, ds / dp);
        (void)sink;
    }

    // environment throughput, single-threaded, noise off
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    {
        Task task = Task::for_region(generate_scene(SceneSpec{3, 256, 256}, 9), 1, "bench");
        const Pixel p = task.scene.region_anchor(1);
        AgentTurn turn;
        turn.tool_calls.push_back(ToolCall{
            ToolName::segment_points, SegmentPointsArgs{{PointPrompt{p.x, p.y, Polarity::positive}}}});
        const std::string raw = serialize_turn(turn);

        EnvConfig cfg;
        cfg.max_turns = 1 << 20;
        Episode ep(task, cfg);
        const int steps = 20000;
        const auto t0 = Clock::now();
        for (int i = 0; i < steps; ++i) ep.step_raw(raw);
        const double dt = seconds_since(t0);
        std::printf("\nenvironment: %d segment steps on 256x256 in %.3f s (%.0f steps/s)\n",
                    steps, dt, steps / dt);
    }
    omp_set_num_threads(saved);
    return 0;
}
