#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridrl/agent.hpp"
#include "gridrl/grid_env.hpp"
#include "gridrl/harness.hpp"
#include "gridrl/kernels.hpp"
#include "gridrl/stats.hpp"

namespace {

using namespace gridrl;

struct TrainArgs {
    std::string env_name = "multiroom-n3-s4";
    std::string agent_name = "a2c";
    uint64_t seed = 1;
    uint64_t frames = 0;
    double beta = -1.0;
    int64_t hidden = -1;
    int64_t latent = -1;
    uint64_t rollout = 128;
    uint64_t checkpoint_every = 0;
    std::string out = "runs";
    std::string seeds;  // suite only
    size_t threads = 0;
};

harness::RunConfig make_config(const TrainArgs& a) {
    env::EnvKind ek = env::env_kind_from_name(a.env_name);
    agent::AgentKind ak = agent::agent_kind_from_name(a.agent_name);
    harness::RunConfig c = harness::default_config(ek, ak);
    c.seed = a.seed;
    c.out_dir = a.out;
    c.checkpoint_every = a.checkpoint_every;
    c.hp.rollout_length = a.rollout;
    if (a.frames > 0) c.frame_budget = a.frames;
    if (a.beta >= 0.0) c.hp.beta = a.beta;
    if (a.hidden > 0) c.hp.model_hidden = static_cast<size_t>(a.hidden);
    if (a.latent > 0) c.hp.model_latent = static_cast<size_t>(a.latent);
    return c;
}

void add_train_flags(CLI::App* cmd, TrainArgs& a) {
    cmd->add_option("--env", a.env_name,
                    "environment: multiroom-n3-s4 | doorkey-8x8 | keycorridor-s3r1")
        ->capture_default_str();
    cmd->add_option("--agent", a.agent_name, "agent: a2c | curious | power")
        ->capture_default_str();
    cmd->add_option("--frames", a.frames, "frame budget (default per environment)");
    cmd->add_option("--beta", a.beta, "intrinsic reward scale (default per env/agent)");
    cmd->add_option("--hidden", a.hidden, "VAE/predictor hidden units (default per env/agent)");
    cmd->add_option("--latent", a.latent, "latent dimension (default per env/agent)");
    cmd->add_option("--rollout", a.rollout, "rollout length")->capture_default_str();
    cmd->add_option("--checkpoint-every", a.checkpoint_every,
                    "frames between model checkpoints (0 = never)");
    cmd->add_option("--out", a.out, "output directory")->capture_default_str();
}

int cmd_train(const TrainArgs& a) {
    harness::RunConfig c = make_config(a);
    std::cerr << "kernels: " << kern::active().name << "\n";
    harness::RunSummary s = harness::execute_run(c);
    std::cout << "run " << harness::run_stem(c) << ": "
              << (s.finished ? "finished" : "FAILED") << ", frames=" << s.frames
              << ", time_to_success=" << s.time_to_success << "\n";
    return s.finished ? 0 : 1;
}

int cmd_suite(const TrainArgs& a) {
    harness::RunConfig c = make_config(a);
    std::vector<uint64_t> seeds;
    std::string cur;
    for (char ch : a.seeds + ",") {
        if (ch == ',') {
            if (!cur.empty()) seeds.push_back(std::stoull(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    std::cerr << "kernels: " << kern::active().name << "\n";
    auto summaries = harness::run_suite(c, seeds, a.threads);
    bool any_failed = false;
    for (const auto& s : summaries) {
        std::cout << s.env_name << " " << s.agent_name << " seed=" << s.seed
                  << " time_to_success=" << s.time_to_success
                  << (s.finished ? "" : " FAILED") << "\n";
        any_failed |= !s.finished;
    }
    return any_failed ? 1 : 0;
}

int cmd_analyze(const std::string& in_dir, const std::string& drop, const std::string& out_dir,
                bool welch) {
    namespace fs = std::filesystem;
    std::vector<harness::RunSummary> summaries;
    for (const auto& entry : fs::directory_iterator(in_dir)) {
        if (!entry.is_regular_file()) continue;
        std::string name = entry.path().filename().string();
        if (name.size() > 12 && name.substr(name.size() - 12) == "_summary.txt") {
            summaries.push_back(harness::read_summary(entry.path().string()));
        }
    }
    if (summaries.empty()) {
        std::cerr << "no *_summary.txt files under " << in_dir << "\n";
        return 1;
    }
    std::vector<size_t> drop_runs;
    std::string cur;
    for (char ch : drop + ",") {
        if (ch == ',') {
            if (!cur.empty()) drop_runs.push_back(std::stoull(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    stats::AnalysisReport report = stats::analyze(summaries, drop_runs, welch);
    stats::write_report(out_dir, report);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "wrote report to " << out_dir << "\n";
    return 0;
}

int cmd_render(const std::string& env_name, uint64_t seed) {
    env::EnvKind ek = env::env_kind_from_name(env_name);
    env::EnvState s = env::reset(ek, seed);
    std::cout << "# " << env_name << " seed=" << seed << "\n";
    std::cout << env::render_grid(s);
    std::cout << "# agent view\n";
    std::cout << env::render_view(env::egocentric_view(s));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse-reward gridworld training and analysis"};
    app.require_subcommand(1);

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "run one training run");
    add_train_flags(train, train_args);
    train->add_option("--seed", train_args.seed, "run seed")->capture_default_str();

    TrainArgs suite_args;
    CLI::App* suite = app.add_subcommand("suite", "run one config over several seeds");
    add_train_flags(suite, suite_args);
    suite->add_option("--seeds", suite_args.seeds, "comma-separated seed list")->required();
    suite->add_option("--threads", suite_args.threads, "worker threads (0 = auto)");

    std::string in_dir, drop_runs, out_dir = "analysis";
    bool welch = false;
    CLI::App* analyze = app.add_subcommand("analyze", "t-test report over run summaries");
    analyze->add_option("--in", in_dir, "directory containing *_summary.txt files")->required();
    analyze->add_option("--drop-runs", drop_runs,
                        "comma-separated 0-based run indices to drop in the starred reanalysis");
    analyze->add_option("--out", out_dir, "report output directory")->capture_default_str();
    analyze->add_flag("--welch", welch, "Welch degrees of freedom instead of pooled");

    std::string render_env = "multiroom-n3-s4";
    uint64_t render_seed = 1;
    CLI::App* render = app.add_subcommand("render", "print a layout and the initial agent view");
    render->add_option("--env", render_env, "environment name")->capture_default_str();
    render->add_option("--seed", render_seed, "layout seed")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(train_args);
        if (suite->parsed()) return cmd_suite(suite_args);
        if (analyze->parsed()) return cmd_analyze(in_dir, drop_runs, out_dir, welch);
        if (render->parsed()) return cmd_render(render_env, render_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
