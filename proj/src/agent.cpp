#include "gridrl/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

#include "gridrl/errors.hpp"
#include "gridrl/kernels.hpp"

namespace gridrl::agent {

namespace {

// Independent stream tags within one run.
constexpr uint64_t kLayoutTag = 1;
constexpr uint64_t kActionTag = 2;
constexpr uint64_t kInitTag = 3;
constexpr uint64_t kNoiseTag = 4;

}  // namespace

AgentKind agent_kind_from_name(std::string_view name) {
    if (name == "a2c") return AgentKind::A2C;
    if (name == "curious") return AgentKind::Curious;
    if (name == "power") return AgentKind::Power;
    throw ConfigError("unknown agent: " + std::string(name));
}

std::string_view agent_kind_name(AgentKind kind) {
    switch (kind) {
        case AgentKind::A2C:
            return "a2c";
        case AgentKind::Curious:
            return "curious";
        case AgentKind::Power:
            return "power";
    }
    return "?";
}

void HyperParams::validate() const {
    if (beta < 0.0) throw ConfigError("beta must be >= 0");
    if (gamma <= 0.0 || gamma > 1.0) throw ConfigError("gamma must be in (0, 1]");
    if (gae_lambda < 0.0 || gae_lambda > 1.0) throw ConfigError("gae_lambda must be in [0, 1]");
    if (entropy_coefficient < 0.0) throw ConfigError("entropy_coefficient must be >= 0");
    if (value_coefficient < 0.0) throw ConfigError("value_coefficient must be >= 0");
    if (max_gradient_norm <= 0.0) throw ConfigError("max_gradient_norm must be > 0");
    if (rollout_length == 0) throw ConfigError("rollout_length must be >= 1");
    if (model_hidden == 0 || model_latent == 0) throw ConfigError("model sizes must be >= 1");
}

ActorCritic ActorCritic::create(size_t input_dim, SplitMix64& rng, double actor_lr,
                                double critic_lr) {
    ActorCritic ac;
    ac.actor_spec = {{input_dim, 64, 64, static_cast<size_t>(env::kNumActions)},
                     nn::OutputActivation::Softmax};
    ac.critic_spec = {{input_dim, 64, 64, 1}, nn::OutputActivation::Linear};
    ac.actor = nn::init_params(ac.actor_spec, rng);
    ac.critic = nn::init_params(ac.critic_spec, rng);
    ac.actor_adam = nn::AdamState::make(ac.actor_spec, actor_lr);
    ac.critic_adam = nn::AdamState::make(ac.critic_spec, critic_lr);
    return ac;
}

std::vector<double> policy(const nn::DenseNetSpec& spec, const nn::ParamSet& params,
                           std::span<const double> state) {
    TensorBuffer out = nn::forward(spec, params, state);
    return std::move(out.values);
}

std::vector<double> policy_onehot(const nn::DenseNetSpec& spec, const nn::ParamSet& params,
                                  std::span<const uint32_t> state_hot) {
    TensorBuffer out = nn::forward_onehot(spec, params, state_hot);
    return std::move(out.values);
}

double value(const nn::DenseNetSpec& spec, const nn::ParamSet& params,
             std::span<const double> state) {
    return nn::forward(spec, params, state).values[0];
}

double value_onehot(const nn::DenseNetSpec& spec, const nn::ParamSet& params,
                    std::span<const uint32_t> state_hot) {
    return nn::forward_onehot(spec, params, state_hot).values[0];
}

int sample_action(std::span<const double> probs, SplitMix64& rng) {
    double u = rng.next_double();
    double cum = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        cum += probs[i];
        if (u < cum) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
}

double intrinsic_reward_curious(const vae::VariationalModel& model, std::span<const double> s,
                                SplitMix64& rng) {
    return vae::vae_loss(model, s, rng, nullptr);
}

double intrinsic_reward_power(const vae::VariationalModel& state_predictor,
                              const vae::VariationalModel& action_predictor,
                              std::span<const double> s, env::Action a,
                              std::span<const double> s_next, SplitMix64& rng) {
    double state_loss = vae::predictor_loss(state_predictor, s, s_next, rng, nullptr);
    std::vector<double> aug(s.begin(), s.end());
    aug.resize(s.size() + env::kNumActions, 0.0);
    aug[s.size() + static_cast<size_t>(a)] = 1.0;
    double action_loss = vae::predictor_loss(action_predictor, aug, s_next, rng, nullptr);
    return state_loss - action_loss;
}

ReturnsAdvantages compute_returns_and_advantages(std::span<const double> r_ex,
                                                 std::span<const double> r_in,
                                                 std::span<const uint8_t> done,
                                                 std::span<const double> values,
                                                 double bootstrap_value, const HyperParams& hp) {
    size_t n = r_ex.size();
    if (n == 0) throw UsageError("compute_returns_and_advantages: empty batch");
    if (r_in.size() != n || done.size() != n || values.size() != n) {
        throw UsageError("compute_returns_and_advantages: length mismatch");
    }
    ReturnsAdvantages ra;
    ra.returns.resize(n);
    ra.advantages.resize(n);
    double gae = 0.0;
    double next_value = bootstrap_value;
    for (size_t t = n; t-- > 0;) {
        double r = r_ex[t] + hp.beta * r_in[t];
        double mask = done[t] ? 0.0 : 1.0;
        double delta = r + hp.gamma * next_value * mask - values[t];
        gae = delta + hp.gamma * hp.gae_lambda * mask * gae;
        ra.advantages[t] = gae;
        ra.returns[t] = gae + values[t];
        next_value = values[t];
    }
    return ra;
}

UpdateDiagnostics a2c_gradients(const ActorCritic& ac, const OneHotBatch& states,
                                std::span<const uint8_t> actions, const ReturnsAdvantages& ra,
                                const HyperParams& hp, nn::ParamSet& actor_grad,
                                nn::ParamSet& critic_grad) {
    size_t n = states.batch();
    if (n == 0) throw UsageError("a2c_update: empty batch");
    if (actions.size() != n || ra.advantages.size() != n || ra.returns.size() != n) {
        throw UsageError("a2c_update: length mismatch");
    }

    nn::BatchTrace atr, ctr;
    nn::forward_batch(ac.actor_spec, ac.actor, states, atr);
    nn::forward_batch(ac.critic_spec, ac.critic, states, ctr);
    const TensorBuffer& P = atr.output();
    const TensorBuffer& V = ctr.output();

    size_t na = ac.actor_spec.output_size();
    double inv = 1.0 / static_cast<double>(n);
    TensorBuffer gp = TensorBuffer::matrix(n, na);
    TensorBuffer gv = TensorBuffer::matrix(n, 1);

    UpdateDiagnostics diag;
    for (size_t b = 0; b < n; ++b) {
        const double* p = P.row(b);
        double* g = gp.row(b);
        int a = actions[b];
        double adv = ra.advantages[b];

        double logpa = std::log(p[a]);
        diag.policy_loss -= adv * logpa;
        double ent = 0.0;
        for (size_t i = 0; i < na; ++i) ent -= p[i] * std::log(p[i]);
        diag.entropy += ent;

        for (size_t i = 0; i < na; ++i) {
            g[i] = hp.entropy_coefficient * (std::log(p[i]) + 1.0) * inv;
        }
        g[a] -= adv / p[a] * inv;

        double v = V.at(b, 0);
        double err = v - ra.returns[b];
        diag.value_loss += err * err;
        gv.at(b, 0) = 2.0 * hp.value_coefficient * err * inv;
    }
    diag.policy_loss *= inv;
    diag.value_loss *= inv;
    diag.entropy *= inv;

    nn::backward_batch(ac.actor_spec, ac.actor, atr, gp, actor_grad);
    nn::backward_batch(ac.critic_spec, ac.critic, ctr, gv, critic_grad);
    return diag;
}

UpdateDiagnostics a2c_update(ActorCritic& ac, const OneHotBatch& states,
                             std::span<const uint8_t> actions, const ReturnsAdvantages& ra,
                             const HyperParams& hp) {
    nn::ParamSet ag = nn::ParamSet::zeros(ac.actor_spec);
    nn::ParamSet cg = nn::ParamSet::zeros(ac.critic_spec);
    UpdateDiagnostics diag = a2c_gradients(ac, states, actions, ra, hp, ag, cg);

    const nn::ParamSet* norm_view[2] = {&ag, &cg};
    diag.grad_norm = nn::global_grad_norm(norm_view);
    nn::ParamSet* clip_view[2] = {&ag, &cg};
    nn::clip_global_norm(clip_view, hp.max_gradient_norm);

    nn::adam_step(ac.actor, ag, ac.actor_adam);
    nn::adam_step(ac.critic, cg, ac.critic_adam);
    return diag;
}

// --- training loop ---

namespace {

struct Rollout {
    size_t cap = 0;
    size_t n = 0;
    std::vector<std::vector<uint32_t>> states_hot;
    std::vector<std::vector<uint32_t>> next_hot;
    TensorBuffer state_dense;  // reconstruction targets (curious)
    TensorBuffer next_dense;   // prediction targets (power)
    std::vector<uint8_t> actions;
    std::vector<uint8_t> done;
    std::vector<double> r_ex, r_in, logp, values;
    std::vector<uint64_t> episode;
    TensorBuffer eps_state, eps_action;

    Rollout(size_t cap_, size_t latent, size_t in_dim, AgentKind kind) : cap(cap_) {
        states_hot.resize(cap);
        next_hot.resize(cap);
        actions.resize(cap);
        done.resize(cap);
        r_ex.resize(cap);
        r_in.resize(cap);
        logp.resize(cap);
        values.resize(cap);
        episode.resize(cap);
        if (kind == AgentKind::Curious) {
            state_dense = TensorBuffer::matrix(cap, in_dim);
            eps_state = TensorBuffer::matrix(cap, latent);
        } else if (kind == AgentKind::Power) {
            next_dense = TensorBuffer::matrix(cap, in_dim);
            eps_state = TensorBuffer::matrix(cap, latent);
            eps_action = TensorBuffer::matrix(cap, latent);
        }
    }
};

void fill_binary_row(TensorBuffer& m, size_t row, const std::vector<uint32_t>& hot) {
    double* r = m.row(row);
    std::memset(r, 0, m.cols() * sizeof(double));
    for (uint32_t i : hot) r[i] = 1.0;
}

OneHotBatch make_batch(size_t dim, const std::vector<std::vector<uint32_t>>& rows, size_t n) {
    OneHotBatch b;
    b.dim = dim;
    b.rows.assign(rows.begin(), rows.begin() + n);
    return b;
}

TensorBuffer slice_rows(const TensorBuffer& m, size_t n) {
    TensorBuffer out = TensorBuffer::matrix(n, m.cols());
    std::memcpy(out.values.data(), m.values.data(), n * m.cols() * sizeof(double));
    return out;
}

struct Models {
    std::optional<vae::VariationalModel> vae_model;     // curious
    std::optional<vae::VariationalModel> state_pred;    // power
    std::optional<vae::VariationalModel> action_pred;   // power
};

void save_checkpoint(const std::string& dir, uint64_t frame, const ActorCritic& ac,
                     const Models& models) {
    namespace fs = std::filesystem;
    fs::path d = fs::path(dir) / ("ckpt_" + std::to_string(frame));
    fs::create_directories(d);
    nn::save_params_file((d / "actor.bin").string(), ac.actor_spec, ac.actor);
    nn::save_params_file((d / "critic.bin").string(), ac.critic_spec, ac.critic);
    auto save_vm = [&](const char* name, const vae::VariationalModel& m) {
        std::ofstream f(d / name, std::ios::binary);
        vae::save_model(f, m);
    };
    if (models.vae_model) save_vm("vae.bin", *models.vae_model);
    if (models.state_pred) save_vm("state_predictor.bin", *models.state_pred);
    if (models.action_pred) save_vm("action_predictor.bin", *models.action_pred);
}

}  // namespace

RunResult run_training(env::EnvKind env_kind, AgentKind agent_kind, const HyperParams& hp,
                       uint64_t seed, uint64_t frame_budget, const EpisodeSink& sink,
                       const RunOptions& opts) {
    RunResult res;
    try {
        hp.validate();

        SplitMix64 action_rng(derive_stream(seed, kActionTag));
        SplitMix64 init_rng(derive_stream(seed, kInitTag));
        SplitMix64 noise_rng(derive_stream(seed, kNoiseTag));
        uint64_t layout_base = derive_stream(seed, kLayoutTag);

        const size_t in_dim = env::kBinaryObsLen;
        ActorCritic ac = ActorCritic::create(in_dim, init_rng, hp.actor_lr, hp.critic_lr);
        Models models;
        if (agent_kind == AgentKind::Curious) {
            models.vae_model =
                vae::VariationalModel::create(vae::PredictorKind::Autoencoder, in_dim,
                                              hp.model_hidden, hp.model_latent, init_rng,
                                              hp.model_lr);
        } else if (agent_kind == AgentKind::Power) {
            models.state_pred =
                vae::VariationalModel::create(vae::PredictorKind::StatePredictor, in_dim,
                                              hp.model_hidden, hp.model_latent, init_rng,
                                              hp.model_lr);
            models.action_pred = vae::VariationalModel::create(
                vae::PredictorKind::ActionPredictor, in_dim, hp.model_hidden, hp.model_latent,
                init_rng, hp.model_lr, env::kNumActions);
        }

        uint64_t episode = 0;
        env::EnvState es = env::reset(env_kind, derive_stream(layout_base, episode));
        std::vector<uint32_t> x_hot = env::encode_binary(env::egocentric_view(es)).hot_indices();

        double ep_return = 0.0;
        uint64_t ep_len = 0;
        std::vector<EpisodeRecord> pending;
        std::map<uint64_t, std::pair<double, uint64_t>> ep_intrinsic;  // episode -> (sum, count)

        Rollout roll(hp.rollout_length, hp.model_latent, in_dim, agent_kind);

        uint64_t frame = 0;
        uint64_t next_ckpt =
            (opts.checkpoint_every > 0) ? opts.checkpoint_every : ~static_cast<uint64_t>(0);

        // Intrinsic rewards and value estimates are evaluated in one batched
        // pass when a window closes. The models only change at window
        // boundaries, so the values equal what per-frame evaluation with the
        // transition-time parameters would produce; the latent noise is
        // drawn at transition time to keep the stream in frame order.
        auto close_window = [&](bool train) {
            size_t n = roll.n;
            if (n == 0) return;

            OneHotBatch sb = make_batch(in_dim, roll.states_hot, n);

            nn::BatchTrace vt;
            nn::forward_batch(ac.critic_spec, ac.critic, sb, vt);
            for (size_t t = 0; t < n; ++t) roll.values[t] = vt.output().at(t, 0);
            double bootstrap = value_onehot(ac.critic_spec, ac.critic, x_hot);

            OneHotBatch ab;  // power: states augmented with the action one-hot
            if (agent_kind == AgentKind::Power) {
                ab.dim = in_dim + env::kNumActions;
                ab.rows.resize(n);
                for (size_t t = 0; t < n; ++t) {
                    ab.rows[t] = roll.states_hot[t];
                    ab.rows[t].push_back(static_cast<uint32_t>(in_dim + roll.actions[t]));
                }
            }

            bool partial = n < roll.cap;
            if (agent_kind == AgentKind::A2C) {
                std::fill(roll.r_in.begin(), roll.r_in.begin() + n, 0.0);
            } else if (agent_kind == AgentKind::Curious) {
                TensorBuffer targets = partial ? slice_rows(roll.state_dense, n)
                                               : std::move(roll.state_dense);
                TensorBuffer eps = partial ? slice_rows(roll.eps_state, n)
                                           : std::move(roll.eps_state);
                vae::batch_losses(*models.vae_model, sb, targets, eps,
                                  {roll.r_in.data(), n});
                if (train) {
                    vae::train_batch(*models.vae_model, sb, targets, noise_rng);
                }
                if (!partial) {
                    roll.state_dense = std::move(targets);
                    roll.eps_state = std::move(eps);
                }
            } else {
                TensorBuffer targets = partial ? slice_rows(roll.next_dense, n)
                                               : std::move(roll.next_dense);
                TensorBuffer eps_s = partial ? slice_rows(roll.eps_state, n)
                                             : std::move(roll.eps_state);
                TensorBuffer eps_a = partial ? slice_rows(roll.eps_action, n)
                                             : std::move(roll.eps_action);
                std::vector<double> state_loss(n), action_loss(n);
                vae::batch_losses(*models.state_pred, sb, targets, eps_s, state_loss);
                vae::batch_losses(*models.action_pred, ab, targets, eps_a, action_loss);
                for (size_t t = 0; t < n; ++t) roll.r_in[t] = state_loss[t] - action_loss[t];
                if (train) {
                    vae::train_batch(*models.state_pred, sb, targets, noise_rng);
                    vae::train_batch(*models.action_pred, ab, targets, noise_rng);
                }
                if (!partial) {
                    roll.next_dense = std::move(targets);
                    roll.eps_state = std::move(eps_s);
                    roll.eps_action = std::move(eps_a);
                }
            }

            if (train) {
                ReturnsAdvantages ra = compute_returns_and_advantages(
                    {roll.r_ex.data(), n}, {roll.r_in.data(), n}, {roll.done.data(), n},
                    {roll.values.data(), n}, bootstrap, hp);
                a2c_update(ac, sb, {roll.actions.data(), n}, ra, hp);
            }

            for (size_t t = 0; t < n; ++t) {
                auto& e = ep_intrinsic[roll.episode[t]];
                e.first += roll.r_in[t];
                e.second += 1;
            }
            for (EpisodeRecord& rec : pending) {
                auto it = ep_intrinsic.find(rec.episode);
                if (it != ep_intrinsic.end() && it->second.second > 0) {
                    rec.intrinsic_mean =
                        it->second.first / static_cast<double>(it->second.second);
                    ep_intrinsic.erase(it);
                }
                if (sink) sink(rec);
            }
            pending.clear();
            roll.n = 0;
        };

        while (frame < frame_budget) {
            std::vector<double> probs = policy_onehot(ac.actor_spec, ac.actor, x_hot);
            int a = sample_action(probs, action_rng);
            double logp = std::log(probs[static_cast<size_t>(a)]);

            env::StepResult sr = env::step(es, static_cast<env::Action>(a));
            env::BinaryObs nb = env::encode_binary(sr.obs);

            size_t t = roll.n;
            roll.states_hot[t] = x_hot;
            roll.next_hot[t] = nb.hot_indices();
            roll.actions[t] = static_cast<uint8_t>(a);
            roll.done[t] = sr.done ? 1 : 0;
            roll.r_ex[t] = sr.extrinsic_reward;
            roll.logp[t] = logp;
            roll.episode[t] = episode;
            if (agent_kind == AgentKind::Curious) {
                fill_binary_row(roll.state_dense, t, x_hot);
                double* e = roll.eps_state.row(t);
                for (size_t i = 0; i < hp.model_latent; ++i) e[i] = noise_rng.next_gaussian();
            } else if (agent_kind == AgentKind::Power) {
                fill_binary_row(roll.next_dense, t, roll.next_hot[t]);
                double* es_row = roll.eps_state.row(t);
                for (size_t i = 0; i < hp.model_latent; ++i) es_row[i] = noise_rng.next_gaussian();
                double* ea_row = roll.eps_action.row(t);
                for (size_t i = 0; i < hp.model_latent; ++i) ea_row[i] = noise_rng.next_gaussian();
            }
            roll.n += 1;

            frame += 1;
            ep_len += 1;
            ep_return += sr.extrinsic_reward;

            if (sr.done) {
                pending.push_back({episode, frame, ep_return, ep_len, 0.0});
                episode += 1;
                ep_return = 0.0;
                ep_len = 0;
                es = env::reset(env_kind, derive_stream(layout_base, episode));
                x_hot = env::encode_binary(env::egocentric_view(es)).hot_indices();
            } else {
                x_hot = roll.next_hot[t];
            }

            if (roll.n == hp.rollout_length) {
                close_window(/*train=*/true);
            } else if (frame == frame_budget) {
                close_window(/*train=*/false);
            }

            if (frame >= next_ckpt) {
                save_checkpoint(opts.checkpoint_dir, frame, ac, models);
                next_ckpt += opts.checkpoint_every;
            }
        }

        res.frames = frame;
        res.episodes = episode;
    } catch (const std::exception& e) {
        res.finished = false;
        res.error = e.what();
    }
    return res;
}

}  // namespace gridrl::agent
