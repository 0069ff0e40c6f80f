#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridrl/agent.hpp"
#include "gridrl/grid_env.hpp"

namespace gridrl::harness {

struct RunConfig {
    env::EnvKind env_kind = env::EnvKind::MultiRoomN3S4;
    agent::AgentKind agent_kind = agent::AgentKind::A2C;
    uint64_t seed = 1;
    uint64_t frame_budget = 0;
    agent::HyperParams hp;
    std::string out_dir = ".";
    uint64_t checkpoint_every = 0;
};

// Per-environment defaults: model width, latent dimension and beta wired per
// (environment, agent), frame budgets per environment.
RunConfig default_config(env::EnvKind env_kind, agent::AgentKind agent_kind);

// Sliding mean of extrinsic returns over the last `w` episodes; leading
// partial windows average over the episodes available so far.
std::vector<double> window_mean(const std::vector<agent::EpisodeRecord>& records, size_t w = 8);

constexpr uint64_t kTimeToSuccessCap = 10'000'000;

// End frame of the first episode whose full 8-episode window mean reaches
// 1.0 (within 1e-9); the cap when it never does. A full window is required:
// leading partial windows do not count toward success.
uint64_t time_to_success(const std::vector<agent::EpisodeRecord>& records, size_t w = 8,
                         uint64_t cap = kTimeToSuccessCap);

struct RunSummary {
    std::string env_name;
    std::string agent_name;
    uint64_t seed = 0;
    uint64_t time_to_success = kTimeToSuccessCap;
    uint64_t frames = 0;
    bool finished = true;
};

// "<env>_<agent>_seed<seed>"
std::string run_stem(const RunConfig& config);

// Runs one training run and writes "<stem>.csv" and "<stem>_summary.txt"
// under config.out_dir.
RunSummary execute_run(const RunConfig& config);

// Runs one seed per worker thread (threads = 0 picks a sensible default),
// writes per-run files plus an aggregate "curve_<env>_<agent>.csv". Failed
// runs are recorded but excluded from the aggregate. Results are keyed by
// seed, so the output is invariant to seed order.
std::vector<RunSummary> run_suite(const RunConfig& base, const std::vector<uint64_t>& seeds,
                                  size_t threads = 0);

// Episode log CSV: episode,end_frame,return,length,window_mean8,intrinsic_mean
// (reals printed with 9 significant digits).
void write_episode_csv(const std::string& path, const std::vector<agent::EpisodeRecord>& records);
std::vector<agent::EpisodeRecord> read_episode_csv(const std::string& path);

// Flat key=value summary file.
void write_summary(const std::string& path, const RunSummary& summary);
RunSummary read_summary(const std::string& path);

struct CurvePoint {
    uint64_t frame = 0;
    double mean = 0.0;
    double sd = 0.0;
};

// Mean +/- sample standard deviation of the per-run windowed reward curves,
// linearly interpolated onto `ticks` evenly spaced frames. Curves anchor at
// (0, 0) and hold their last value.
std::vector<CurvePoint> aggregate_curves(const std::vector<std::vector<agent::EpisodeRecord>>& runs,
                                         uint64_t frame_budget, size_t ticks = 1000);
void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve);

}  // namespace gridrl::harness
