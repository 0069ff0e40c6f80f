#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "gridrl/errors.hpp"
#include "gridrl/grid_env.hpp"
#include "gridrl/variational.hpp"

using namespace gridrl;
using namespace gridrl::vae;

namespace {

constexpr double kLn2 = 0.6931471805599453;

VariationalModel toy_model(PredictorKind kind, size_t state_dim, size_t hidden, size_t latent,
                           uint64_t seed) {
    SplitMix64 rng(seed);
    return VariationalModel::create(kind, state_dim, hidden, latent, rng, 1e-3);
}

// Numerical-integration oracle for the 1-D Gaussian KL integrand
// q(x) * (log q(x) - log p(x)) with p standard normal.
double kl_quadrature_1d(double mean, double log_variance) {
    double s2 = std::exp(log_variance);
    double sd = std::sqrt(s2);
    double lo = mean - 14.0 * sd - 14.0;
    double hi = mean + 14.0 * sd + 14.0;
    int n = 40000;  // Simpson, even interval count
    double h = (hi - lo) / n;
    auto f = [&](double x) {
        double lq = -0.5 * std::log(2.0 * M_PI * s2) - (x - mean) * (x - mean) / (2.0 * s2);
        double lp = -0.5 * std::log(2.0 * M_PI) - 0.5 * x * x;
        return std::exp(lq) * (lq - lp);
    };
    double acc = f(lo) + f(hi);
    for (int i = 1; i < n; ++i) acc += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

}  // namespace

TEST_CASE("encode: zero weights give a standard-normal code") {
    VariationalModel m = toy_model(PredictorKind::Autoencoder, 6, 4, 2, 1);
    m.encoder.fill(0.0);
    std::vector<double> x = {1.0, 0.0, 1.0, 0.0, 0.0, 1.0};
    GaussianCode c = encode(m, x);
    REQUIRE(c.mean.size() == 2);
    for (double v : c.mean) CHECK(v == 0.0);
    for (double v : c.log_variance) CHECK(v == 0.0);

    GaussianCode c2 = encode(m, x);
    CHECK(c.mean == c2.mean);
    CHECK(c.log_variance == c2.log_variance);
}

TEST_CASE("encode: hand-set one-latent encoder") {
    // encoder 2 -> (identity-ish hidden 2) -> 2 outputs (mean, logvar)
    VariationalModel m = toy_model(PredictorKind::Autoencoder, 2, 2, 1, 2);
    auto& es = m.encoder_spec;
    m.encoder.fill(0.0);
    // hidden = relu(x1 + 2*x2, 3*x1)
    m.encoder.weight_at(es, 0, 0, 0) = 1.0;
    m.encoder.weight_at(es, 0, 0, 1) = 2.0;
    m.encoder.weight_at(es, 0, 1, 0) = 3.0;
    // mean = h0 - h1, logvar = 0.5*h1
    m.encoder.weight_at(es, 1, 0, 0) = 1.0;
    m.encoder.weight_at(es, 1, 0, 1) = -1.0;
    m.encoder.weight_at(es, 1, 1, 1) = 0.5;

    GaussianCode c = encode(m, std::vector<double>{1.0, 1.0});
    // hidden = (3, 3); mean = 0, logvar = 1.5
    CHECK(c.mean[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(c.log_variance[0] == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("sample_latent: vanishing variance collapses to the mean") {
    GaussianCode c;
    c.mean = {0.7, -1.2};
    c.log_variance = {-50.0, -50.0};
    SplitMix64 rng(5);
    std::vector<double> z = sample_latent(c, rng);
    CHECK(z[0] == doctest::Approx(0.7).epsilon(1e-9));
    CHECK(z[1] == doctest::Approx(-1.2).epsilon(1e-9));
}

TEST_CASE("sample_latent: empirical mean over 1e5 draws matches the code mean") {
    GaussianCode c;
    c.mean = {0.3};
    c.log_variance = {std::log(0.25)};  // sd 0.5
    SplitMix64 rng(99);
    double acc = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) acc += sample_latent(c, rng)[0];
    double err = std::abs(acc / n - 0.3);
    CHECK(err < 3.0 * 0.5 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("sample_latent: fixed seed reproduces the draw") {
    GaussianCode c;
    c.mean = {0.0, 1.0, 2.0};
    c.log_variance = {0.0, -1.0, 1.0};
    SplitMix64 a(31), b(31);
    CHECK(sample_latent(c, a) == sample_latent(c, b));
}

TEST_CASE("kl_to_standard_normal: closed form and quadrature oracle") {
    GaussianCode zero;
    zero.mean = {0.0, 0.0};
    zero.log_variance = {0.0, 0.0};
    CHECK(kl_to_standard_normal(zero) == 0.0);

    GaussianCode unit;
    unit.mean = {1.0};
    unit.log_variance = {0.0};
    CHECK(kl_to_standard_normal(unit) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(kl_quadrature_1d(1.0, 0.0) == doctest::Approx(0.5).epsilon(1e-8));

    SplitMix64 rng(17);
    for (int i = 0; i < 10; ++i) {
        double m = 4.0 * rng.next_double() - 2.0;
        double lv = 2.0 * rng.next_double() - 1.0;
        GaussianCode c;
        c.mean = {m};
        c.log_variance = {lv};
        double closed = kl_to_standard_normal(c);
        CHECK(closed >= 0.0);
        CHECK(closed == doctest::Approx(kl_quadrature_1d(m, lv)).epsilon(1e-7));
    }
}

TEST_CASE("kl is nonnegative for random codes") {
    SplitMix64 rng(23);
    for (int i = 0; i < 500; ++i) {
        size_t d = 1 + rng.next_below(6);
        GaussianCode c;
        for (size_t j = 0; j < d; ++j) {
            c.mean.push_back(10.0 * rng.next_double() - 5.0);
            c.log_variance.push_back(6.0 * rng.next_double() - 3.0);
        }
        CHECK(kl_to_standard_normal(c) >= 0.0);
    }
}

TEST_CASE("reconstruction_nll: clamp endpoints and direct-sum oracle") {
    SUBCASE("probs equal to the binary target, after clamping") {
        std::vector<double> target(env::kBinaryObsLen);
        for (size_t i = 0; i < target.size(); ++i) target[i] = (i % 33 == 0) ? 1.0 : 0.0;
        double nll = reconstruction_nll(target, target);
        double expected = -static_cast<double>(env::kBinaryObsLen) * std::log(1.0 - 1e-7);
        CHECK(nll == doctest::Approx(expected).epsilon(1e-9));
        CHECK(nll < 2e-4);
    }

    SUBCASE("probs one half everywhere is the maximal-entropy loss") {
        std::vector<double> probs(env::kBinaryObsLen, 0.5);
        std::vector<double> target(env::kBinaryObsLen, 0.0);
        target[3] = 1.0;
        CHECK(reconstruction_nll(probs, target) ==
              doctest::Approx(env::kBinaryObsLen * kLn2).epsilon(1e-12));
    }

    SUBCASE("random case matches the direct sum") {
        SplitMix64 rng(41);
        std::vector<double> probs(20), target(20);
        for (size_t i = 0; i < 20; ++i) {
            probs[i] = 0.05 + 0.9 * rng.next_double();
            target[i] = rng.next_below(2) ? 1.0 : 0.0;
        }
        double direct = 0.0;
        for (size_t i = 0; i < 20; ++i) {
            direct -= target[i] * std::log(probs[i]) + (1.0 - target[i]) * std::log(1.0 - probs[i]);
        }
        CHECK(reconstruction_nll(probs, target) == doctest::Approx(direct).epsilon(1e-13));
    }

    SUBCASE("length mismatch is a usage error") {
        std::vector<double> p(5, 0.5), t(4, 0.0);
        CHECK_THROWS_AS(reconstruction_nll(p, t), UsageError);
    }
}

TEST_CASE("vae_loss: zero-weight model on any input is 1617 ln 2") {
    VariationalModel m = toy_model(PredictorKind::Autoencoder, env::kBinaryObsLen, 8, 3, 7);
    m.encoder.fill(0.0);
    m.decoder.fill(0.0);
    env::EnvState s = env::reset(env::EnvKind::DoorKey8x8, 11);
    env::BinaryObs b = env::encode_binary(env::egocentric_view(s));
    std::vector<double> x(env::kBinaryObsLen);
    b.to_doubles(x.data());

    SplitMix64 rng(3);
    double loss = vae_loss(m, x, rng);
    CHECK(loss == doctest::Approx(env::kBinaryObsLen * kLn2).epsilon(1e-9));
}

TEST_CASE("losses are nonnegative and deterministic under frozen noise") {
    SplitMix64 seeds(101);
    for (int trial = 0; trial < 10; ++trial) {
        VariationalModel m =
            toy_model(PredictorKind::StatePredictor, 12, 6, 3, seeds.next_u64());
        SplitMix64 rng(trial);
        std::vector<double> x(12), xp(12);
        for (auto* v : {&x, &xp}) {
            for (double& e : *v) e = rng.next_below(2) ? 1.0 : 0.0;
        }
        std::vector<double> eps(3);
        for (double& e : eps) e = rng.next_gaussian();
        double l1 = predictor_loss_with_eps(m, x, xp, eps);
        double l2 = predictor_loss_with_eps(m, x, xp, eps);
        CHECK(l1 >= 0.0);
        CHECK(l1 == l2);
    }
}

TEST_CASE("predictor_loss on the autoencoder kind with x' = x is vae_loss, bit for bit") {
    VariationalModel m = toy_model(PredictorKind::Autoencoder, 10, 5, 2, 13);
    SplitMix64 rng(55);
    std::vector<double> x(10);
    for (double& v : x) v = rng.next_below(2) ? 1.0 : 0.0;

    SplitMix64 s1(77), s2(77);
    double a = vae_loss(m, x, s1);
    double b = predictor_loss(m, x, x, s2);
    CHECK(a == b);
    CHECK(s1.state() == s2.state());
}

TEST_CASE("gradient check: vae and predictor losses on toy instances") {
    // Instances stay at or below ~40 parameters with noise frozen.
    SplitMix64 seeds(2024);
    int tested = 0;
    for (int trial = 0; trial < 12 && tested < 6; ++trial) {
        VariationalModel m = toy_model(PredictorKind::StatePredictor, 4, 2, 1, seeds.next_u64());
        SplitMix64 rng(trial + 1);
        std::vector<double> x = {1.0, 0.0, 1.0, 1.0};
        std::vector<double> xp = {0.0, 1.0, 1.0, 0.0};
        std::vector<double> eps = {rng.next_gaussian()};

        // Skip draws that land on a ReLU kink in either net.
        nn::Trace tr;
        nn::forward(m.encoder_spec, m.encoder, x, &tr);
        bool kink = false;
        for (double v : tr.pre[0]) kink |= std::abs(v) < 1e-3;
        GaussianCode code = encode(m, x);
        std::vector<double> z = sample_latent_with(code, eps);
        nn::forward(m.decoder_spec, m.decoder, z, &tr);
        for (double v : tr.pre[0]) kink |= std::abs(v) < 1e-3;
        if (kink) continue;
        ++tested;

        LossGrads grads{nn::ParamSet::zeros(m.encoder_spec), nn::ParamSet::zeros(m.decoder_spec)};
        predictor_loss_with_eps(m, x, xp, eps, &grads);

        auto eval = [&]() { return predictor_loss_with_eps(m, x, xp, eps); };
        double enc_err = nn::finite_diff_check_generic(m.encoder, eval, grads.encoder, 1e-5);
        double dec_err = nn::finite_diff_check_generic(m.decoder, eval, grads.decoder, 1e-5);
        CHECK(enc_err < 1e-4);
        CHECK(dec_err < 1e-4);
    }
    CHECK(tested >= 3);
}

TEST_CASE("batch_losses matches single-sample losses row by row") {
    VariationalModel m = toy_model(PredictorKind::StatePredictor, 9, 5, 2, 31);
    SplitMix64 rng(8);
    size_t batch = 5;
    OneHotBatch inputs;
    inputs.dim = 9;
    TensorBuffer targets = TensorBuffer::matrix(batch, 9);
    TensorBuffer eps = TensorBuffer::matrix(batch, 2);
    for (size_t b = 0; b < batch; ++b) {
        std::vector<uint32_t> hot;
        for (uint32_t i = 0; i < 9; ++i) {
            if (rng.next_below(2)) hot.push_back(i);
        }
        inputs.rows.push_back(hot);
        for (size_t i = 0; i < 9; ++i) targets.at(b, i) = rng.next_below(2) ? 1.0 : 0.0;
        for (size_t i = 0; i < 2; ++i) eps.at(b, i) = rng.next_gaussian();
    }
    std::vector<double> losses(batch);
    batch_losses(m, inputs, targets, eps, losses);

    for (size_t b = 0; b < batch; ++b) {
        std::vector<double> x(9, 0.0);
        for (uint32_t i : inputs.rows[b]) x[i] = 1.0;
        double single = predictor_loss_with_eps(m, x, {targets.row(b), 9}, {eps.row(b), 2});
        CHECK(losses[b] == doctest::Approx(single).epsilon(1e-11));
    }
}

TEST_CASE("train_batch: learning rate zero leaves parameters unchanged") {
    VariationalModel m = toy_model(PredictorKind::Autoencoder, 8, 4, 2, 3);
    m.encoder_adam.learning_rate = 0.0;
    m.decoder_adam.learning_rate = 0.0;
    nn::ParamSet enc = m.encoder, dec = m.decoder;

    SplitMix64 rng(4);
    TensorBuffer X = TensorBuffer::matrix(4, 8);
    for (double& v : X.values) v = rng.next_below(2) ? 1.0 : 0.0;
    train_batch(m, X, X, rng);
    CHECK(m.encoder.weights == enc.weights);
    CHECK(m.decoder.weights == dec.weights);
}

TEST_CASE("train_batch: empty batch is a usage error") {
    VariationalModel m = toy_model(PredictorKind::Autoencoder, 8, 4, 2, 3);
    TensorBuffer X = TensorBuffer::matrix(0, 8);
    SplitMix64 rng(4);
    CHECK_THROWS_AS(train_batch(m, X, X, rng), UsageError);
}

TEST_CASE("train_batch: 200 steps on a fixed batch cut the loss by well over 20%") {
    VariationalModel m = toy_model(PredictorKind::Autoencoder, 24, 16, 4, 9);
    SplitMix64 rng(10);
    TensorBuffer X = TensorBuffer::matrix(16, 24);
    for (size_t b = 0; b < 16; ++b) {
        for (size_t i = 0; i < 24; ++i) X.at(b, i) = rng.next_below(4) == 0 ? 1.0 : 0.0;
    }
    double first = train_batch(m, X, X, rng);
    double last = first;
    for (int step = 1; step < 200; ++step) last = train_batch(m, X, X, rng);
    CHECK(last < 0.8 * first);
}

TEST_CASE("identical-sample batch gradients equal the single-sample gradient, summed") {
    VariationalModel m = toy_model(PredictorKind::Autoencoder, 7, 4, 2, 19);
    std::vector<double> x = {1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0};
    std::vector<double> eps = {0.3, -0.8};

    LossGrads single{nn::ParamSet::zeros(m.encoder_spec), nn::ParamSet::zeros(m.decoder_spec)};
    double sl = vae_loss_with_eps(m, x, eps, &single);

    size_t batch = 3;
    TensorBuffer X = TensorBuffer::matrix(batch, 7);
    TensorBuffer E = TensorBuffer::matrix(batch, 2);
    for (size_t b = 0; b < batch; ++b) {
        for (size_t i = 0; i < 7; ++i) X.at(b, i) = x[i];
        for (size_t i = 0; i < 2; ++i) E.at(b, i) = eps[i];
    }
    std::vector<double> losses(batch);
    LossGrads summed{nn::ParamSet::zeros(m.encoder_spec), nn::ParamSet::zeros(m.decoder_spec)};
    batch_losses(m, X, X, E, losses, &summed);
    for (double l : losses) CHECK(l == doctest::Approx(sl).epsilon(1e-12));
    for (size_t l = 0; l < summed.encoder.weights.size(); ++l) {
        for (size_t i = 0; i < summed.encoder.weights[l].size(); ++i) {
            CHECK(summed.encoder.weights[l][i] ==
                  doctest::Approx(batch * single.encoder.weights[l][i]).epsilon(1e-10));
        }
    }
}

TEST_CASE("model checkpoints round-trip") {
    VariationalModel m = toy_model(PredictorKind::ActionPredictor, 10, 6, 3, 23);
    std::stringstream buf;
    save_model(buf, m);
    VariationalModel r = load_model(buf);
    CHECK(r.kind == PredictorKind::ActionPredictor);
    CHECK(r.latent_dim == 3);
    CHECK(r.encoder_spec == m.encoder_spec);
    CHECK(r.encoder.weights == m.encoder.weights);
    CHECK(r.decoder.biases == m.decoder.biases);
    CHECK(r.input_dim() == 10 + 7);
}
