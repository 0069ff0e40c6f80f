#include "gridrl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "gridrl/errors.hpp"

namespace gridrl::harness {

namespace fs = std::filesystem;

RunConfig default_config(env::EnvKind env_kind, agent::AgentKind agent_kind) {
    RunConfig c;
    c.env_kind = env_kind;
    c.agent_kind = agent_kind;

    switch (env_kind) {
        case env::EnvKind::MultiRoomN3S4:
            c.frame_budget = 10'000'000;
            break;
        case env::EnvKind::DoorKey8x8:
            c.frame_budget = 5'000'000;
            break;
        case env::EnvKind::KeyCorridorS3R1:
            c.frame_budget = 1'000'000;
            break;
    }

    // Model width, latent dimension, beta per (agent, environment).
    auto wire = [&](size_t hidden, size_t latent, double beta) {
        c.hp.model_hidden = hidden;
        c.hp.model_latent = latent;
        c.hp.beta = beta;
    };
    switch (agent_kind) {
        case agent::AgentKind::A2C:
            wire(512, 256, 0.0);
            break;
        case agent::AgentKind::Curious:
            switch (env_kind) {
                case env::EnvKind::MultiRoomN3S4:
                    wire(512, 256, 2e-4);
                    break;
                case env::EnvKind::DoorKey8x8:
                    wire(512, 256, 1e-4);
                    break;
                case env::EnvKind::KeyCorridorS3R1:
                    wire(256, 128, 1e-4);
                    break;
            }
            break;
        case agent::AgentKind::Power:
            switch (env_kind) {
                case env::EnvKind::MultiRoomN3S4:
                    wire(512, 256, 1e-4);
                    break;
                case env::EnvKind::DoorKey8x8:
                    wire(32, 16, 1e-4);
                    break;
                case env::EnvKind::KeyCorridorS3R1:
                    wire(256, 128, 0.125e-4);
                    break;
            }
            break;
    }
    return c;
}

std::vector<double> window_mean(const std::vector<agent::EpisodeRecord>& records, size_t w) {
    if (w < 1) throw UsageError("window_mean: w must be >= 1");
    std::vector<double> out(records.size());
    double running = 0.0;
    for (size_t i = 0; i < records.size(); ++i) {
        running += records[i].extrinsic_return;
        if (i >= w) running -= records[i - w].extrinsic_return;
        size_t count = std::min(i + 1, w);
        out[i] = running / static_cast<double>(count);
    }
    return out;
}

uint64_t time_to_success(const std::vector<agent::EpisodeRecord>& records, size_t w,
                         uint64_t cap) {
    if (records.size() < w) return cap;
    double running = 0.0;
    for (size_t i = 0; i < records.size(); ++i) {
        running += records[i].extrinsic_return;
        if (i >= w) running -= records[i - w].extrinsic_return;
        if (i + 1 >= w && running / static_cast<double>(w) >= 1.0 - 1e-9) {
            return records[i].end_frame;
        }
    }
    return cap;
}

std::string run_stem(const RunConfig& config) {
    std::string s(env::env_kind_name(config.env_kind));
    s += "_";
    s += agent::agent_kind_name(config.agent_kind);
    s += "_seed" + std::to_string(config.seed);
    return s;
}

namespace {

struct RunOutput {
    RunSummary summary;
    std::vector<agent::EpisodeRecord> records;
};

RunOutput run_one(const RunConfig& config) {
    RunOutput out;
    out.summary.env_name = std::string(env::env_kind_name(config.env_kind));
    out.summary.agent_name = std::string(agent::agent_kind_name(config.agent_kind));
    out.summary.seed = config.seed;

    agent::RunOptions opts;
    if (config.checkpoint_every > 0) {
        opts.checkpoint_every = config.checkpoint_every;
        opts.checkpoint_dir = (fs::path(config.out_dir) / run_stem(config)).string();
    }
    agent::RunResult r =
        agent::run_training(config.env_kind, config.agent_kind, config.hp, config.seed,
                            config.frame_budget, [&](const agent::EpisodeRecord& rec) {
                                out.records.push_back(rec);
                            },
                            opts);
    out.summary.frames = r.frames;
    out.summary.finished = r.finished;
    out.summary.time_to_success = r.finished ? time_to_success(out.records) : kTimeToSuccessCap;
    if (!r.finished) {
        std::cerr << "warning: run " << run_stem(config) << " failed: " << r.error << "\n";
    }
    return out;
}

void write_run_files(const RunConfig& config, const RunOutput& out) {
    fs::create_directories(config.out_dir);
    std::string stem = (fs::path(config.out_dir) / run_stem(config)).string();
    write_episode_csv(stem + ".csv", out.records);
    write_summary(stem + "_summary.txt", out.summary);
}

}  // namespace

RunSummary execute_run(const RunConfig& config) {
    RunOutput out = run_one(config);
    write_run_files(config, out);
    return out.summary;
}

std::vector<RunSummary> run_suite(const RunConfig& base, const std::vector<uint64_t>& seeds,
                                  size_t threads) {
    if (seeds.empty()) throw UsageError("run_suite: empty seed list");
    if (threads == 0) {
        threads = std::max<size_t>(1, std::min<size_t>(seeds.size(),
                                                       std::thread::hardware_concurrency()));
    }

    std::vector<RunOutput> outputs(seeds.size());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= seeds.size()) return;
            RunConfig c = base;
            c.seed = seeds[i];
            outputs[i] = run_one(c);
            write_run_files(c, outputs[i]);
        }
    };
    std::vector<std::thread> pool;
    for (size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    // Aggregate over finished runs, keyed by seed so the ordering of the
    // seed list does not matter.
    std::vector<size_t> order(seeds.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return seeds[a] < seeds[b]; });

    std::vector<std::vector<agent::EpisodeRecord>> curves;
    std::vector<RunSummary> summaries;
    summaries.reserve(seeds.size());
    for (size_t i : order) {
        summaries.push_back(outputs[i].summary);
        if (outputs[i].summary.finished) {
            curves.push_back(std::move(outputs[i].records));
        } else {
            std::cerr << "warning: excluding failed seed " << seeds[i] << " from aggregation\n";
        }
    }
    if (!curves.empty()) {
        std::vector<CurvePoint> curve = aggregate_curves(curves, base.frame_budget);
        std::string name = "curve_" + std::string(env::env_kind_name(base.env_kind)) + "_" +
                           std::string(agent::agent_kind_name(base.agent_kind)) + ".csv";
        fs::create_directories(base.out_dir);
        write_curve_csv((fs::path(base.out_dir) / name).string(), curve);
    }
    return summaries;
}

// --- file formats ---

void write_episode_csv(const std::string& path, const std::vector<agent::EpisodeRecord>& records) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw ConfigError("cannot open for writing: " + path);
    std::fputs("episode,end_frame,return,length,window_mean8,intrinsic_mean\n", f);
    std::vector<double> wm = window_mean(records);
    for (size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        std::fprintf(f, "%" PRIu64 ",%" PRIu64 ",%.9g,%" PRIu64 ",%.9g,%.9g\n", r.episode,
                     r.end_frame, r.extrinsic_return, r.length, wm[i], r.intrinsic_mean);
    }
    std::fclose(f);
}

std::vector<agent::EpisodeRecord> read_episode_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open for reading: " + path);
    std::vector<agent::EpisodeRecord> records;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        agent::EpisodeRecord r;
        double wm = 0.0;
        if (std::sscanf(line.c_str(), "%" SCNu64 ",%" SCNu64 ",%lf,%" SCNu64 ",%lf,%lf",
                        &r.episode, &r.end_frame, &r.extrinsic_return, &r.length, &wm,
                        &r.intrinsic_mean) != 6) {
            throw ConfigError("malformed episode CSV line: " + line);
        }
        records.push_back(r);
    }
    return records;
}

void write_summary(const std::string& path, const RunSummary& summary) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot open for writing: " + path);
    f << "env=" << summary.env_name << "\n";
    f << "agent=" << summary.agent_name << "\n";
    f << "seed=" << summary.seed << "\n";
    f << "time_to_success=" << summary.time_to_success << "\n";
    f << "frames=" << summary.frames << "\n";
    f << "status=" << (summary.finished ? "finished" : "failed") << "\n";
}

RunSummary read_summary(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open for reading: " + path);
    RunSummary s;
    std::string line;
    while (std::getline(f, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        if (key == "env") {
            s.env_name = val;
        } else if (key == "agent") {
            s.agent_name = val;
        } else if (key == "seed") {
            s.seed = std::stoull(val);
        } else if (key == "time_to_success") {
            s.time_to_success = std::stoull(val);
        } else if (key == "frames") {
            s.frames = std::stoull(val);
        } else if (key == "status") {
            s.finished = (val == "finished");
        }
    }
    return s;
}

std::vector<CurvePoint> aggregate_curves(const std::vector<std::vector<agent::EpisodeRecord>>& runs,
                                         uint64_t frame_budget, size_t ticks) {
    if (ticks == 0) throw UsageError("aggregate_curves: ticks must be >= 1");

    // Per-run piecewise-linear curves through (end_frame, window_mean).
    struct PointCurve {
        std::vector<uint64_t> frames;
        std::vector<double> means;
    };
    std::vector<PointCurve> curves(runs.size());
    for (size_t r = 0; r < runs.size(); ++r) {
        std::vector<double> wm = window_mean(runs[r]);
        curves[r].frames.reserve(runs[r].size() + 1);
        curves[r].means.reserve(runs[r].size() + 1);
        curves[r].frames.push_back(0);
        curves[r].means.push_back(0.0);
        for (size_t i = 0; i < runs[r].size(); ++i) {
            curves[r].frames.push_back(runs[r][i].end_frame);
            curves[r].means.push_back(wm[i]);
        }
    }

    auto sample = [](const PointCurve& c, double frame) {
        if (frame >= static_cast<double>(c.frames.back())) return c.means.back();
        auto it = std::lower_bound(c.frames.begin(), c.frames.end(),
                                   static_cast<uint64_t>(std::ceil(frame)));
        size_t hi = std::max<size_t>(1, static_cast<size_t>(it - c.frames.begin()));
        double f0 = static_cast<double>(c.frames[hi - 1]);
        double f1 = static_cast<double>(c.frames[hi]);
        double w = (f1 > f0) ? (frame - f0) / (f1 - f0) : 1.0;
        return c.means[hi - 1] + w * (c.means[hi] - c.means[hi - 1]);
    };

    std::vector<CurvePoint> out(ticks);
    for (size_t k = 0; k < ticks; ++k) {
        double frame =
            static_cast<double>(frame_budget) * static_cast<double>(k + 1) / static_cast<double>(ticks);
        double mean = 0.0;
        for (const auto& c : curves) mean += sample(c, frame);
        mean /= static_cast<double>(curves.size());
        double sd = 0.0;
        if (curves.size() > 1) {
            for (const auto& c : curves) {
                double d = sample(c, frame) - mean;
                sd += d * d;
            }
            sd = std::sqrt(sd / static_cast<double>(curves.size() - 1));
        }
        out[k] = {static_cast<uint64_t>(std::llround(frame)), mean, sd};
    }
    return out;
}

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw ConfigError("cannot open for writing: " + path);
    std::fputs("frame,mean_reward,sd_reward\n", f);
    for (const auto& p : curve) {
        std::fprintf(f, "%" PRIu64 ",%.9g,%.9g\n", p.frame, p.mean, p.sd);
    }
    std::fclose(f);
}

}  // namespace gridrl::harness
