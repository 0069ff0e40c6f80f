#include "gridrl/variational.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "gridrl/errors.hpp"
#include "gridrl/kernels.hpp"

namespace gridrl::vae {

namespace {

constexpr char kModelMagic[4] = {'G', 'R', 'V', 'M'};

// d(nll)/d(p) for one entry, zero outside the clamp window.
inline double nll_grad_entry(double p, double t) {
    if (p <= kProbClampLo || p >= kProbClampHi) return 0.0;
    return (p - t) / (p * (1.0 - p));
}

}  // namespace

VariationalModel VariationalModel::create(PredictorKind kind, size_t state_dim, size_t hidden,
                                          size_t latent, SplitMix64& rng, double learning_rate,
                                          size_t extra_input) {
    VariationalModel m;
    m.kind = kind;
    m.latent_dim = latent;
    size_t input_dim = state_dim + (kind == PredictorKind::ActionPredictor ? extra_input : 0);
    m.encoder_spec = {{input_dim, hidden, 2 * latent}, nn::OutputActivation::Linear};
    m.decoder_spec = {{latent, hidden, state_dim}, nn::OutputActivation::Sigmoid};
    m.encoder = nn::init_params(m.encoder_spec, rng);
    m.decoder = nn::init_params(m.decoder_spec, rng);
    m.encoder_adam = nn::AdamState::make(m.encoder_spec, learning_rate);
    m.decoder_adam = nn::AdamState::make(m.decoder_spec, learning_rate);
    return m;
}

GaussianCode encode(const VariationalModel& model, std::span<const double> input) {
    TensorBuffer u = nn::forward(model.encoder_spec, model.encoder, input);
    size_t d = model.latent_dim;
    GaussianCode code;
    code.mean.assign(u.values.begin(), u.values.begin() + d);
    code.log_variance.assign(u.values.begin() + d, u.values.end());
    return code;
}

std::vector<double> sample_latent(const GaussianCode& code, SplitMix64& rng) {
    std::vector<double> eps(code.mean.size());
    for (double& e : eps) e = rng.next_gaussian();
    return sample_latent_with(code, eps);
}

std::vector<double> sample_latent_with(const GaussianCode& code, std::span<const double> eps) {
    if (eps.size() != code.mean.size() || code.log_variance.size() != code.mean.size()) {
        throw UsageError("sample_latent: dimension mismatch");
    }
    std::vector<double> z(code.mean.size());
    for (size_t i = 0; i < z.size(); ++i) {
        z[i] = code.mean[i] + std::exp(0.5 * code.log_variance[i]) * eps[i];
    }
    return z;
}

double kl_to_standard_normal(const GaussianCode& code) {
    double s = 0.0;
    for (size_t i = 0; i < code.mean.size(); ++i) {
        double m = code.mean[i];
        double lv = code.log_variance[i];
        s += m * m + std::exp(lv) - 1.0 - lv;
    }
    return 0.5 * s;
}

double reconstruction_nll(std::span<const double> probs, std::span<const double> target) {
    if (probs.size() != target.size()) throw UsageError("reconstruction_nll: length mismatch");
    double s = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        double p = std::clamp(probs[i], kProbClampLo, kProbClampHi);
        s -= target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p);
    }
    return s;
}

// --- single-sample loss core ---

namespace {

double loss_core(const VariationalModel& model, std::span<const double> x,
                 std::span<const double> target, std::span<const double> eps, LossGrads* grads) {
    if (x.size() != model.input_dim()) throw UsageError("loss: input length mismatch");
    if (target.size() != model.target_dim()) throw UsageError("loss: target length mismatch");
    size_t d = model.latent_dim;

    nn::Trace enc_tr;
    TensorBuffer u = nn::forward(model.encoder_spec, model.encoder, x, grads ? &enc_tr : nullptr);
    GaussianCode code;
    code.mean.assign(u.values.begin(), u.values.begin() + d);
    code.log_variance.assign(u.values.begin() + d, u.values.end());

    std::vector<double> z = sample_latent_with(code, eps);

    nn::Trace dec_tr;
    TensorBuffer probs =
        nn::forward(model.decoder_spec, model.decoder, z, grads ? &dec_tr : nullptr);

    double loss = reconstruction_nll(probs.span(), target) + kl_to_standard_normal(code);
    if (!std::isfinite(loss)) throw NumericError("variational loss is not finite");
    if (!grads) return loss;

    // decoder: d(nll)/d(probs)
    std::vector<double> gp(probs.size());
    for (size_t i = 0; i < gp.size(); ++i) gp[i] = nll_grad_entry(probs.values[i], target[i]);
    std::vector<double> dz;
    nn::backward(model.decoder_spec, model.decoder, dec_tr, gp, grads->decoder, &dz);

    // reparameterization + KL into the encoder output gradient
    std::vector<double> gu(2 * d);
    for (size_t i = 0; i < d; ++i) {
        double lv = code.log_variance[i];
        gu[i] = dz[i] + code.mean[i];
        gu[d + i] = dz[i] * 0.5 * std::exp(0.5 * lv) * eps[i] + 0.5 * (std::exp(lv) - 1.0);
    }
    nn::backward(model.encoder_spec, model.encoder, enc_tr, gu, grads->encoder, nullptr);
    return loss;
}

std::vector<double> draw_eps(size_t d, SplitMix64& rng) {
    std::vector<double> eps(d);
    for (double& e : eps) e = rng.next_gaussian();
    return eps;
}

}  // namespace

double vae_loss(const VariationalModel& model, std::span<const double> x, SplitMix64& rng,
                LossGrads* grads) {
    return loss_core(model, x, x, draw_eps(model.latent_dim, rng), grads);
}

double vae_loss_with_eps(const VariationalModel& model, std::span<const double> x,
                         std::span<const double> eps, LossGrads* grads) {
    return loss_core(model, x, x, eps, grads);
}

double predictor_loss(const VariationalModel& model, std::span<const double> x,
                      std::span<const double> x_prime, SplitMix64& rng, LossGrads* grads) {
    return loss_core(model, x, x_prime, draw_eps(model.latent_dim, rng), grads);
}

double predictor_loss_with_eps(const VariationalModel& model, std::span<const double> x,
                               std::span<const double> x_prime, std::span<const double> eps,
                               LossGrads* grads) {
    return loss_core(model, x, x_prime, eps, grads);
}

// --- batched loss core ---

namespace {

void batch_core(const VariationalModel& model, const OneHotBatch* hot, const TensorBuffer* dense,
                const TensorBuffer& targets, const TensorBuffer& eps, std::span<double> out,
                LossGrads* grads) {
    size_t batch = hot ? hot->batch() : dense->rows();
    size_t d = model.latent_dim;
    if (out.size() != batch) throw UsageError("batch_losses: output span size mismatch");
    if (targets.rows() != batch || targets.cols() != model.target_dim()) {
        throw UsageError("batch_losses: target shape mismatch");
    }
    if (eps.rows() != batch || eps.cols() != d) {
        throw UsageError("batch_losses: eps shape mismatch");
    }

    nn::BatchTrace enc_tr;
    if (hot) {
        nn::forward_batch(model.encoder_spec, model.encoder, *hot, enc_tr);
    } else {
        nn::forward_batch(model.encoder_spec, model.encoder, *dense, enc_tr);
    }
    const TensorBuffer& u = enc_tr.output();  // [batch x 2d]

    TensorBuffer z = TensorBuffer::matrix(batch, d);
    for (size_t b = 0; b < batch; ++b) {
        const double* ub = u.row(b);
        const double* eb = eps.row(b);
        double* zb = z.row(b);
        for (size_t i = 0; i < d; ++i) zb[i] = ub[i] + std::exp(0.5 * ub[d + i]) * eb[i];
    }

    nn::BatchTrace dec_tr;
    nn::forward_batch(model.decoder_spec, model.decoder, z, dec_tr);
    const TensorBuffer& probs = dec_tr.output();  // [batch x target]

    size_t t_dim = model.target_dim();
    for (size_t b = 0; b < batch; ++b) {
        GaussianCode code;
        const double* ub = u.row(b);
        code.mean.assign(ub, ub + d);
        code.log_variance.assign(ub + d, ub + 2 * d);
        double loss = reconstruction_nll({probs.row(b), t_dim}, {targets.row(b), t_dim}) +
                      kl_to_standard_normal(code);
        if (!std::isfinite(loss)) throw NumericError("variational loss is not finite");
        out[b] = loss;
    }
    if (!grads) return;

    TensorBuffer gp = TensorBuffer::matrix(batch, t_dim);
    for (size_t b = 0; b < batch; ++b) {
        const double* pb = probs.row(b);
        const double* tb = targets.row(b);
        double* gb = gp.row(b);
        for (size_t i = 0; i < t_dim; ++i) gb[i] = nll_grad_entry(pb[i], tb[i]);
    }
    TensorBuffer dz;
    nn::backward_batch(model.decoder_spec, model.decoder, dec_tr, gp, grads->decoder, &dz);

    TensorBuffer gu = TensorBuffer::matrix(batch, 2 * d);
    for (size_t b = 0; b < batch; ++b) {
        const double* ub = u.row(b);
        const double* eb = eps.row(b);
        const double* dzb = dz.row(b);
        double* gb = gu.row(b);
        for (size_t i = 0; i < d; ++i) {
            double lv = ub[d + i];
            gb[i] = dzb[i] + ub[i];
            gb[d + i] = dzb[i] * 0.5 * std::exp(0.5 * lv) * eb[i] + 0.5 * (std::exp(lv) - 1.0);
        }
    }
    nn::backward_batch(model.encoder_spec, model.encoder, enc_tr, gu, grads->encoder, nullptr);
}

TensorBuffer draw_eps_matrix(size_t batch, size_t d, SplitMix64& rng) {
    TensorBuffer eps = TensorBuffer::matrix(batch, d);
    for (double& e : eps.values) e = rng.next_gaussian();
    return eps;
}

template <typename Inputs>
double train_batch_impl(VariationalModel& model, const Inputs& inputs, const TensorBuffer& targets,
                        SplitMix64& rng, size_t batch) {
    if (batch == 0) throw UsageError("train_batch: empty batch");
    TensorBuffer eps = draw_eps_matrix(batch, model.latent_dim, rng);
    std::vector<double> losses(batch);
    LossGrads grads{nn::ParamSet::zeros(model.encoder_spec), nn::ParamSet::zeros(model.decoder_spec)};
    batch_losses(model, inputs, targets, eps, losses, &grads);

    double inv = 1.0 / static_cast<double>(batch);
    grads.encoder.scale_all(inv);
    grads.decoder.scale_all(inv);
    nn::adam_step(model.encoder, grads.encoder, model.encoder_adam);
    nn::adam_step(model.decoder, grads.decoder, model.decoder_adam);

    double mean = 0.0;
    for (double l : losses) mean += l;
    return mean * inv;
}

}  // namespace

void batch_losses(const VariationalModel& model, const OneHotBatch& inputs,
                  const TensorBuffer& targets, const TensorBuffer& eps, std::span<double> out,
                  LossGrads* grads) {
    batch_core(model, &inputs, nullptr, targets, eps, out, grads);
}

void batch_losses(const VariationalModel& model, const TensorBuffer& inputs,
                  const TensorBuffer& targets, const TensorBuffer& eps, std::span<double> out,
                  LossGrads* grads) {
    batch_core(model, nullptr, &inputs, targets, eps, out, grads);
}

double train_batch(VariationalModel& model, const OneHotBatch& inputs, const TensorBuffer& targets,
                   SplitMix64& rng) {
    return train_batch_impl(model, inputs, targets, rng, inputs.batch());
}

double train_batch(VariationalModel& model, const TensorBuffer& inputs,
                   const TensorBuffer& targets, SplitMix64& rng) {
    return train_batch_impl(model, inputs, targets, rng, inputs.rows());
}

// --- checkpointing ---

void save_model(std::ostream& out, const VariationalModel& model) {
    out.write(kModelMagic, 4);
    uint8_t kind = static_cast<uint8_t>(model.kind);
    out.write(reinterpret_cast<const char*>(&kind), 1);
    uint64_t latent = model.latent_dim;
    out.write(reinterpret_cast<const char*>(&latent), sizeof(latent));
    nn::save_params(out, model.encoder_spec, model.encoder);
    nn::save_params(out, model.decoder_spec, model.decoder);
}

VariationalModel load_model(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kModelMagic, 4) != 0) {
        throw UsageError("load_model: bad magic");
    }
    uint8_t kind = 0;
    in.read(reinterpret_cast<char*>(&kind), 1);
    uint64_t latent = 0;
    in.read(reinterpret_cast<char*>(&latent), sizeof(latent));
    if (!in) throw UsageError("load_model: truncated stream");

    VariationalModel m;
    m.kind = static_cast<PredictorKind>(kind);
    m.latent_dim = latent;
    std::tie(m.encoder_spec, m.encoder) = nn::load_params(in);
    std::tie(m.decoder_spec, m.decoder) = nn::load_params(in);
    m.encoder_adam = nn::AdamState::make(m.encoder_spec, 1e-3);
    m.decoder_adam = nn::AdamState::make(m.decoder_spec, 1e-3);
    return m;
}

}  // namespace gridrl::vae
