#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gridrl/grid_env.hpp"
#include "gridrl/nn.hpp"
#include "gridrl/rng.hpp"
#include "gridrl/tensor.hpp"
#include "gridrl/variational.hpp"

namespace gridrl::agent {

enum class AgentKind : uint8_t { A2C = 0, Curious = 1, Power = 2 };

AgentKind agent_kind_from_name(std::string_view name);
std::string_view agent_kind_name(AgentKind kind);

struct HyperParams {
    double beta = 0.0;  // intrinsic reward scale
    double gamma = 0.99;
    double gae_lambda = 0.95;
    double entropy_coefficient = 0.01;
    double value_coefficient = 0.5;
    double max_gradient_norm = 0.5;
    size_t rollout_length = 128;
    double actor_lr = 1e-3;
    double critic_lr = 1e-3;
    double model_lr = 1e-3;
    size_t model_hidden = 512;  // VAE / predictor hidden width
    size_t model_latent = 256;  // latent dimension

    void validate() const;
};

// Actor: state -> softmax over the 7 actions. Critic: state -> value.
// Both are 2 x 64 ReLU stacks over the flattened binary observation.
struct ActorCritic {
    nn::DenseNetSpec actor_spec, critic_spec;
    nn::ParamSet actor, critic;
    nn::AdamState actor_adam, critic_adam;

    static ActorCritic create(size_t input_dim, SplitMix64& rng, double actor_lr = 1e-3,
                              double critic_lr = 1e-3);
};

std::vector<double> policy(const nn::DenseNetSpec& spec, const nn::ParamSet& params,
                           std::span<const double> state);
std::vector<double> policy_onehot(const nn::DenseNetSpec& spec, const nn::ParamSet& params,
                                  std::span<const uint32_t> state_hot);
double value(const nn::DenseNetSpec& spec, const nn::ParamSet& params,
             std::span<const double> state);
double value_onehot(const nn::DenseNetSpec& spec, const nn::ParamSet& params,
                    std::span<const uint32_t> state_hot);

// Samples an action index from a probability vector; consumes one draw.
int sample_action(std::span<const double> probs, SplitMix64& rng);

// Current VAE loss on s_t (no parameter update). Always >= 0.
double intrinsic_reward_curious(const vae::VariationalModel& model, std::span<const double> s,
                                SplitMix64& rng);

// Loss difference between the plain state predictor and the action
// predictor; either sign. Draws the state predictor's noise first.
double intrinsic_reward_power(const vae::VariationalModel& state_predictor,
                              const vae::VariationalModel& action_predictor,
                              std::span<const double> s, env::Action a,
                              std::span<const double> s_next, SplitMix64& rng);

struct ReturnsAdvantages {
    std::vector<double> returns;
    std::vector<double> advantages;
};

// GAE over one rollout. Per-step reward is r_ex + beta * r_in; episode
// boundaries (done) cut the bootstrap chain.
ReturnsAdvantages compute_returns_and_advantages(std::span<const double> r_ex,
                                                 std::span<const double> r_in,
                                                 std::span<const uint8_t> done,
                                                 std::span<const double> values,
                                                 double bootstrap_value, const HyperParams& hp);

struct UpdateDiagnostics {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double grad_norm = 0.0;
};

// Unclipped gradients of
//   mean_b [ -A_b log pi(a_b|s_b) + c_v (G_b - V(s_b))^2 - c_h H(pi(.|s_b)) ]
// accumulated into actor_grad / critic_grad.
UpdateDiagnostics a2c_gradients(const ActorCritic& ac, const OneHotBatch& states,
                                std::span<const uint8_t> actions, const ReturnsAdvantages& ra,
                                const HyperParams& hp, nn::ParamSet& actor_grad,
                                nn::ParamSet& critic_grad);

// One Adam step on that loss, the actor+critic gradient jointly norm-clipped.
UpdateDiagnostics a2c_update(ActorCritic& ac, const OneHotBatch& states,
                             std::span<const uint8_t> actions, const ReturnsAdvantages& ra,
                             const HyperParams& hp);

struct EpisodeRecord {
    uint64_t episode = 0;
    uint64_t end_frame = 0;  // frames consumed when the episode ended
    double extrinsic_return = 0.0;
    uint64_t length = 0;
    double intrinsic_mean = 0.0;  // raw (pre-beta) per-step intrinsic reward
};

using EpisodeSink = std::function<void(const EpisodeRecord&)>;

struct RunOptions {
    uint64_t checkpoint_every = 0;  // frames between checkpoints; 0 = never
    std::string checkpoint_dir;
};

struct RunResult {
    bool finished = true;
    std::string error;
    uint64_t frames = 0;
    uint64_t episodes = 0;
};

// The full training loop: act / observe / store, and every rollout_length
// frames train the actor and critic on the collected returns, then the
// variational models on the collected batch. Episode records stream to the
// sink in order. The whole trajectory is a pure function of
// (env_kind, agent_kind, hp, seed, frame_budget).
RunResult run_training(env::EnvKind env_kind, AgentKind agent_kind, const HyperParams& hp,
                       uint64_t seed, uint64_t frame_budget, const EpisodeSink& sink,
                       const RunOptions& opts = {});

}  // namespace gridrl::agent
