#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "gridrl/agent.hpp"
#include "gridrl/errors.hpp"

using namespace gridrl;
using namespace gridrl::agent;

namespace {

constexpr double kLn2 = 0.6931471805599453;

HyperParams tiny_hp() {
    HyperParams hp;
    hp.rollout_length = 32;
    hp.model_hidden = 8;
    hp.model_latent = 2;
    return hp;
}

std::vector<double> random_binary_state(SplitMix64& rng, size_t n = env::kBinaryObsLen) {
    std::vector<double> x(n, 0.0);
    for (int k = 0; k < 49; ++k) x[rng.next_below(n)] = 1.0;
    return x;
}

}  // namespace

TEST_CASE("policy: zero weights give the uniform distribution over 7 actions") {
    SplitMix64 rng(1);
    ActorCritic ac = ActorCritic::create(env::kBinaryObsLen, rng);
    ac.actor.fill(0.0);
    std::vector<double> x = random_binary_state(rng);
    std::vector<double> p = policy(ac.actor_spec, ac.actor, x);
    REQUIRE(p.size() == 7);
    for (double v : p) CHECK(v == doctest::Approx(1.0 / 7.0).epsilon(1e-14));
}

TEST_CASE("policy: probabilities a valid distribution on random states") {
    SplitMix64 rng(2);
    ActorCritic ac = ActorCritic::create(env::kBinaryObsLen, rng);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x = random_binary_state(rng);
        std::vector<double> p = policy(ac.actor_spec, ac.actor, x);
        double sum = 0.0;
        for (double v : p) {
            CHECK(v > 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("sample_action: reproducible and respects degenerate distributions") {
    std::vector<double> sure = {0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0};
    SplitMix64 a(3), b(3);
    for (int i = 0; i < 20; ++i) CHECK(sample_action(sure, a) == 2);
    std::vector<double> uniform(7, 1.0 / 7.0);
    std::vector<int> seq1, seq2;
    for (int i = 0; i < 50; ++i) seq1.push_back(sample_action(uniform, a));
    SplitMix64 c(3);
    for (int i = 0; i < 20; ++i) sample_action(sure, c);
    for (int i = 0; i < 50; ++i) seq2.push_back(sample_action(uniform, c));
    CHECK(seq1 == seq2);
}

TEST_CASE("value: zero critic gives zero, hand-set critic matches arithmetic") {
    SplitMix64 rng(4);
    ActorCritic ac = ActorCritic::create(env::kBinaryObsLen, rng);
    ac.critic.fill(0.0);
    std::vector<double> x = random_binary_state(rng);
    CHECK(value(ac.critic_spec, ac.critic, x) == 0.0);

    // 1-layer critic: v = w . x + b
    nn::DenseNetSpec spec{{3, 1}, nn::OutputActivation::Linear};
    nn::ParamSet p = nn::ParamSet::zeros(spec);
    p.weight_at(spec, 0, 0, 0) = 0.5;
    p.weight_at(spec, 0, 0, 1) = -2.0;
    p.weight_at(spec, 0, 0, 2) = 1.0;
    p.biases[0][0] = 0.25;
    CHECK(value(spec, p, std::vector<double>{1.0, 1.0, 0.0}) ==
          doctest::Approx(0.5 - 2.0 + 0.25).epsilon(1e-15));
}

TEST_CASE("intrinsic_reward_curious: zero-weight model gives 1617 ln 2, training shrinks it") {
    SplitMix64 rng(5);
    vae::VariationalModel m =
        vae::VariationalModel::create(vae::PredictorKind::Autoencoder, env::kBinaryObsLen, 8, 2,
                                      rng, 1e-3);
    std::vector<double> x = random_binary_state(rng);

    SUBCASE("zero weights") {
        m.encoder.fill(0.0);
        m.decoder.fill(0.0);
        SplitMix64 noise(6);
        CHECK(intrinsic_reward_curious(m, x, noise) ==
              doctest::Approx(env::kBinaryObsLen * kLn2).epsilon(1e-9));
    }

    SUBCASE("heavy training on one repeated state lowers its novelty reward") {
        SplitMix64 noise(7);
        double before = intrinsic_reward_curious(m, x, noise);
        CHECK(before >= 0.0);
        TensorBuffer batch = TensorBuffer::matrix(8, env::kBinaryObsLen);
        for (size_t b = 0; b < 8; ++b) {
            for (size_t i = 0; i < x.size(); ++i) batch.at(b, i) = x[i];
        }
        for (int step = 0; step < 120; ++step) vae::train_batch(m, batch, batch, noise);
        double after = intrinsic_reward_curious(m, x, noise);
        CHECK(after >= 0.0);
        CHECK(after < before);
    }
}

TEST_CASE("intrinsic_reward_power: zero cases") {
    SUBCASE("pinned streams and an action predictor that ignores its action inputs") {
        SplitMix64 rng(8);
        vae::VariationalModel sp = vae::VariationalModel::create(
            vae::PredictorKind::StatePredictor, 10, 5, 2, rng, 1e-3);
        // Clone into an action predictor whose weights on the 7 action inputs
        // are zero and whose state columns match the state predictor.
        SplitMix64 rng2(9);
        vae::VariationalModel ap = vae::VariationalModel::create(
            vae::PredictorKind::ActionPredictor, 10, 5, 2, rng2, 1e-3);
        ap.encoder.fill(0.0);
        for (size_t in = 0; in < 10; ++in) {
            for (size_t h = 0; h < 5; ++h) {
                ap.encoder.weight_at(ap.encoder_spec, 0, h, in) =
                    sp.encoder.weight_at(sp.encoder_spec, 0, h, in);
            }
        }
        ap.encoder.weights[1] = sp.encoder.weights[1];
        ap.encoder.biases = sp.encoder.biases;
        ap.decoder = sp.decoder;

        std::vector<double> s(10, 0.0), sn(10, 0.0);
        s[1] = s[4] = 1.0;
        sn[2] = sn[7] = 1.0;
        std::vector<double> aug(s);
        aug.resize(17, 0.0);
        aug[10 + 3] = 1.0;

        SplitMix64 e1(21), e2(21);  // pinned: both losses see the same noise
        double l_state = vae::predictor_loss(sp, s, sn, e1);
        double l_action = vae::predictor_loss(ap, aug, sn, e2);
        CHECK(l_state == l_action);
        CHECK(l_state - l_action == 0.0);
    }

    SUBCASE("both models zero-weight give exactly zero even with fresh noise") {
        SplitMix64 rng(10);
        vae::VariationalModel sp = vae::VariationalModel::create(
            vae::PredictorKind::StatePredictor, 12, 4, 2, rng, 1e-3);
        vae::VariationalModel ap = vae::VariationalModel::create(
            vae::PredictorKind::ActionPredictor, 12, 4, 2, rng, 1e-3);
        sp.encoder.fill(0.0);
        sp.decoder.fill(0.0);
        ap.encoder.fill(0.0);
        ap.decoder.fill(0.0);
        std::vector<double> s(12, 0.0), sn(12, 0.0);
        s[0] = 1.0;
        sn[5] = 1.0;
        SplitMix64 noise(11);
        double r = intrinsic_reward_power(sp, ap, s, env::Action::MoveForward, sn, noise);
        CHECK(r == 0.0);
    }
}

TEST_CASE("intrinsic_reward_power: positive on a toy channel where the action decides s'") {
    // Current state is always C; the next state is A for action 0 and B for
    // action 1. A state-only predictor cannot beat chance on the A/B bits,
    // the action predictor can.
    const size_t dim = 4;
    std::vector<double> A(dim, 0.0), B(dim, 0.0), C(dim, 0.0);
    A[0] = 1.0;
    B[1] = 1.0;
    C[2] = 1.0;

    SplitMix64 rng(12);
    vae::VariationalModel sp =
        vae::VariationalModel::create(vae::PredictorKind::StatePredictor, dim, 8, 2, rng, 1e-2);
    vae::VariationalModel ap =
        vae::VariationalModel::create(vae::PredictorKind::ActionPredictor, dim, 8, 2, rng, 1e-2);

    SplitMix64 noise(13);
    const size_t batch = 32;
    for (int step = 0; step < 300; ++step) {
        TensorBuffer Xs = TensorBuffer::matrix(batch, dim);
        TensorBuffer Xa = TensorBuffer::matrix(batch, dim + 7);
        TensorBuffer T = TensorBuffer::matrix(batch, dim);
        for (size_t b = 0; b < batch; ++b) {
            int a = static_cast<int>(noise.next_below(2));
            const std::vector<double>& target = a == 0 ? A : B;
            for (size_t i = 0; i < dim; ++i) {
                Xs.at(b, i) = C[i];
                Xa.at(b, i) = C[i];
                T.at(b, i) = target[i];
            }
            Xa.at(b, dim + a) = 1.0;
        }
        vae::train_batch(sp, Xs, T, noise);
        vae::train_batch(ap, Xa, T, noise);
    }

    // Average the reward over both actions and many noise draws.
    double total = 0.0;
    int n = 0;
    for (int a = 0; a < 2; ++a) {
        for (int rep = 0; rep < 50; ++rep) {
            total += intrinsic_reward_power(sp, ap, C, static_cast<env::Action>(a),
                                            a == 0 ? A : B, noise);
            ++n;
        }
    }
    CHECK(total / n > 0.1);
}

TEST_CASE("compute_returns_and_advantages") {
    HyperParams hp;
    hp.beta = 0.0;

    SUBCASE("all zeros in, all zeros out") {
        std::vector<double> r(4, 0.0), ri(4, 0.0), v(4, 0.0);
        std::vector<uint8_t> d(4, 0);
        auto ra = compute_returns_and_advantages(r, ri, d, v, 0.0, hp);
        for (double x : ra.returns) CHECK(x == 0.0);
        for (double x : ra.advantages) CHECK(x == 0.0);
    }

    SUBCASE("terminal unit reward discounts backwards: 0.9801, 0.99, 1") {
        hp.gamma = 0.99;
        hp.gae_lambda = 1.0;
        std::vector<double> r = {0.0, 0.0, 1.0}, ri(3, 0.0), v(3, 0.0);
        std::vector<uint8_t> d = {0, 0, 1};
        auto ra = compute_returns_and_advantages(r, ri, d, v, 0.0, hp);
        CHECK(ra.returns[0] == doctest::Approx(0.9801).epsilon(1e-12));
        CHECK(ra.returns[1] == doctest::Approx(0.99).epsilon(1e-12));
        CHECK(ra.returns[2] == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("episode boundary cuts the bootstrap") {
        hp.gamma = 0.5;
        hp.gae_lambda = 1.0;
        std::vector<double> r = {1.0, 0.0}, ri(2, 0.0), v(2, 0.0);
        std::vector<uint8_t> d = {1, 0};
        auto ra = compute_returns_and_advantages(r, ri, d, v, 8.0, hp);
        // First step ends an episode: no bootstrap leaks across.
        CHECK(ra.returns[0] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(ra.returns[1] == doctest::Approx(0.5 * 8.0).epsilon(1e-12));
    }

    SUBCASE("beta zero reduces to extrinsic-only returns") {
        std::vector<double> r = {0.0, 1.0}, ri = {123.0, -55.0}, v = {0.3, -0.4};
        std::vector<uint8_t> d = {0, 1};
        hp.beta = 0.0;
        auto with = compute_returns_and_advantages(r, ri, d, v, 0.0, hp);
        std::vector<double> zero_ri(2, 0.0);
        auto without = compute_returns_and_advantages(r, zero_ri, d, v, 0.0, hp);
        CHECK(with.returns == without.returns);
        CHECK(with.advantages == without.advantages);
    }

    SUBCASE("empty batch is a usage error") {
        std::vector<double> e;
        std::vector<uint8_t> d;
        CHECK_THROWS_AS(compute_returns_and_advantages(e, e, d, e, 0.0, hp), UsageError);
    }
}

TEST_CASE("a2c_update") {
    SplitMix64 rng(14);
    ActorCritic ac = ActorCritic::create(20, rng);
    size_t n = 8;
    OneHotBatch states;
    states.dim = 20;
    std::vector<uint8_t> actions;
    for (size_t b = 0; b < n; ++b) {
        states.rows.push_back({static_cast<uint32_t>(b), static_cast<uint32_t>(b + 5)});
        actions.push_back(static_cast<uint8_t>(b % 7));
    }

    SUBCASE("zero advantages and zero entropy coefficient leave the actor unchanged") {
        HyperParams hp = tiny_hp();
        hp.entropy_coefficient = 0.0;
        hp.value_coefficient = 0.5;
        ReturnsAdvantages ra;
        ra.advantages.assign(n, 0.0);
        ra.returns.assign(n, 0.5);
        nn::ParamSet before = ac.actor;
        UpdateDiagnostics diag = a2c_update(ac, states, actions, ra, hp);
        CHECK(ac.actor.weights == before.weights);
        CHECK(ac.actor.biases == before.biases);
        CHECK(diag.policy_loss == 0.0);
    }

    SUBCASE("entropy of the uniform policy is ln 7") {
        ac.actor.fill(0.0);
        HyperParams hp = tiny_hp();
        ReturnsAdvantages ra;
        ra.advantages.assign(n, 0.0);
        ra.returns.assign(n, 0.0);
        UpdateDiagnostics diag = a2c_update(ac, states, actions, ra, hp);
        CHECK(diag.entropy == doctest::Approx(std::log(7.0)).epsilon(1e-12));
    }

    SUBCASE("value regression drives the value loss toward zero") {
        HyperParams hp = tiny_hp();
        ReturnsAdvantages ra;
        ra.advantages.assign(n, 0.0);
        ra.returns.assign(n, 0.7);
        double first = a2c_update(ac, states, actions, ra, hp).value_loss;
        double last = first;
        for (int step = 0; step < 300; ++step) {
            last = a2c_update(ac, states, actions, ra, hp).value_loss;
        }
        CHECK(last < 0.05 * first);
    }
}

TEST_CASE("a2c gradients match finite differences of the written-out loss") {
    // Independent loss evaluation: mean over the batch of
    // -A log pi(a|s) + c_v (G - V)^2 - c_h H(pi).
    HyperParams hp = tiny_hp();
    hp.entropy_coefficient = 0.013;
    hp.value_coefficient = 0.4;

    SplitMix64 rng(2718);
    ActorCritic ac = ActorCritic::create(6, rng);
    size_t n = 5;
    OneHotBatch states;
    states.dim = 6;
    std::vector<uint8_t> actions;
    ReturnsAdvantages ra;
    for (size_t b = 0; b < n; ++b) {
        states.rows.push_back({static_cast<uint32_t>(b % 6), static_cast<uint32_t>((b + 3) % 6)});
        actions.push_back(static_cast<uint8_t>((2 * b + 1) % 7));
        ra.advantages.push_back(0.5 * static_cast<double>(b) - 1.0);
        ra.returns.push_back(0.3 * static_cast<double>(b));
    }

    auto loss = [&]() {
        double total = 0.0;
        for (size_t b = 0; b < n; ++b) {
            std::vector<double> x(6, 0.0);
            for (uint32_t i : states.rows[b]) x[i] = 1.0;
            std::vector<double> p = policy(ac.actor_spec, ac.actor, x);
            double v = value(ac.critic_spec, ac.critic, x);
            double ent = 0.0;
            for (double q : p) ent -= q * std::log(q);
            total += -ra.advantages[b] * std::log(p[actions[b]]) +
                     hp.value_coefficient * (ra.returns[b] - v) * (ra.returns[b] - v) -
                     hp.entropy_coefficient * ent;
        }
        return total / static_cast<double>(n);
    };

    nn::ParamSet ag = nn::ParamSet::zeros(ac.actor_spec);
    nn::ParamSet cg = nn::ParamSet::zeros(ac.critic_spec);
    a2c_gradients(ac, states, actions, ra, hp, ag, cg);

    CHECK(nn::finite_diff_check_generic(ac.actor, loss, ag, 1e-5) < 1e-4);
    CHECK(nn::finite_diff_check_generic(ac.critic, loss, cg, 1e-5) < 1e-4);
}

TEST_CASE("run_training: frame budget zero gives an empty log") {
    HyperParams hp = tiny_hp();
    std::vector<EpisodeRecord> records;
    RunResult r = run_training(env::EnvKind::MultiRoomN3S4, AgentKind::A2C, hp, 1, 0,
                               [&](const EpisodeRecord& rec) { records.push_back(rec); });
    CHECK(r.finished);
    CHECK(r.frames == 0);
    CHECK(records.empty());
}

TEST_CASE("run_training: a2c intrinsic rewards are all zero") {
    HyperParams hp = tiny_hp();
    std::vector<EpisodeRecord> records;
    RunResult r = run_training(env::EnvKind::MultiRoomN3S4, AgentKind::A2C, hp, 3, 1500,
                               [&](const EpisodeRecord& rec) { records.push_back(rec); });
    CHECK(r.finished);
    CHECK(!records.empty());
    for (const auto& rec : records) CHECK(rec.intrinsic_mean == 0.0);
}

TEST_CASE("run_training: episode records are consistent and frames increase") {
    HyperParams hp = tiny_hp();
    std::vector<EpisodeRecord> records;
    run_training(env::EnvKind::MultiRoomN3S4, AgentKind::Curious, hp, 7, 2000,
                 [&](const EpisodeRecord& rec) { records.push_back(rec); });
    REQUIRE(!records.empty());
    uint64_t prev_frame = 0;
    uint64_t expect_episode = 0;
    for (const auto& rec : records) {
        CHECK(rec.episode == expect_episode++);
        CHECK(rec.end_frame > prev_frame);
        CHECK(rec.end_frame - prev_frame == rec.length);
        prev_frame = rec.end_frame;
        CHECK(rec.length <= 60);
        CHECK((rec.extrinsic_return == 0.0 || rec.extrinsic_return == 1.0));
        CHECK(rec.intrinsic_mean >= 0.0);  // curious rewards are nonnegative
        CHECK(std::isfinite(rec.intrinsic_mean));
    }
}

TEST_CASE("run_training: power intrinsic rewards are finite, either sign allowed") {
    HyperParams hp = tiny_hp();
    std::vector<EpisodeRecord> records;
    RunResult r = run_training(env::EnvKind::MultiRoomN3S4, AgentKind::Power, hp, 5, 1500,
                               [&](const EpisodeRecord& rec) { records.push_back(rec); });
    CHECK(r.finished);
    for (const auto& rec : records) CHECK(std::isfinite(rec.intrinsic_mean));
}

TEST_CASE("run_training: identical configuration reproduces the log bit for bit") {
    HyperParams hp = tiny_hp();
    auto run = [&](AgentKind kind) {
        std::vector<EpisodeRecord> records;
        run_training(env::EnvKind::MultiRoomN3S4, kind, hp, 11, 2500,
                     [&](const EpisodeRecord& rec) { records.push_back(rec); });
        return records;
    };
    for (AgentKind kind : {AgentKind::A2C, AgentKind::Curious, AgentKind::Power}) {
        auto a = run(kind);
        auto b = run(kind);
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].episode == b[i].episode);
            CHECK(a[i].end_frame == b[i].end_frame);
            CHECK(a[i].extrinsic_return == b[i].extrinsic_return);
            CHECK(a[i].length == b[i].length);
            CHECK(a[i].intrinsic_mean == b[i].intrinsic_mean);
        }
    }
}

TEST_CASE("run_training: with beta = 0 every agent follows the a2c trajectory") {
    HyperParams hp = tiny_hp();
    hp.beta = 0.0;
    auto trajectory = [&](AgentKind kind) {
        std::vector<EpisodeRecord> records;
        run_training(env::EnvKind::MultiRoomN3S4, kind, hp, 9, 2000,
                     [&](const EpisodeRecord& rec) { records.push_back(rec); });
        return records;
    };
    auto base = trajectory(AgentKind::A2C);
    for (AgentKind kind : {AgentKind::Curious, AgentKind::Power}) {
        auto other = trajectory(kind);
        REQUIRE(other.size() == base.size());
        for (size_t i = 0; i < base.size(); ++i) {
            CHECK(other[i].end_frame == base[i].end_frame);
            CHECK(other[i].extrinsic_return == base[i].extrinsic_return);
            CHECK(other[i].length == base[i].length);
        }
    }
}

TEST_CASE("run_training: checkpoints are written and load back") {
    namespace fs = std::filesystem;
    HyperParams hp = tiny_hp();
    RunOptions opts;
    opts.checkpoint_every = 1000;
    opts.checkpoint_dir = "/tmp/gridrl_test_ckpt";
    fs::remove_all(opts.checkpoint_dir);
    run_training(env::EnvKind::MultiRoomN3S4, AgentKind::Curious, hp, 2, 2000,
                 nullptr, opts);
    CHECK(fs::exists(fs::path(opts.checkpoint_dir) / "ckpt_1000" / "actor.bin"));
    CHECK(fs::exists(fs::path(opts.checkpoint_dir) / "ckpt_2000" / "vae.bin"));
    auto [spec, params] =
        nn::load_params_file((fs::path(opts.checkpoint_dir) / "ckpt_2000" / "actor.bin").string());
    CHECK(spec.layer_sizes.front() == env::kBinaryObsLen);
    CHECK(spec.layer_sizes.back() == 7);
    fs::remove_all(opts.checkpoint_dir);
}

TEST_CASE("hyperparameter validation") {
    HyperParams hp = tiny_hp();
    hp.gamma = 0.0;
    CHECK_THROWS_AS(hp.validate(), ConfigError);
    hp = tiny_hp();
    hp.beta = -1.0;
    CHECK_THROWS_AS(hp.validate(), ConfigError);
    hp = tiny_hp();
    hp.rollout_length = 0;
    CHECK_THROWS_AS(hp.validate(), ConfigError);
    hp = tiny_hp();
    CHECK_NOTHROW(hp.validate());
}
