#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "gridrl/nn.hpp"
#include "gridrl/rng.hpp"
#include "gridrl/tensor.hpp"

namespace gridrl::vae {

// What the model decodes toward: its own input, the next state, or the next
// state given (state, action).
enum class PredictorKind : uint8_t { Autoencoder = 0, StatePredictor = 1, ActionPredictor = 2 };

// Diagonal Gaussian over latent codes.
struct GaussianCode {
    std::vector<double> mean;
    std::vector<double> log_variance;
};

// Encoder (input -> mean ++ log-variance, linear bottleneck) and decoder
// (latent -> Bernoulli probabilities, sigmoid output), each with one ReLU
// hidden layer of the same width.
struct VariationalModel {
    PredictorKind kind = PredictorKind::Autoencoder;
    size_t latent_dim = 0;
    nn::DenseNetSpec encoder_spec, decoder_spec;
    nn::ParamSet encoder, decoder;
    nn::AdamState encoder_adam, decoder_adam;

    size_t input_dim() const { return encoder_spec.input_size(); }
    size_t target_dim() const { return decoder_spec.output_size(); }

    // `state_dim` is the observation length; the action-predictor input is
    // state_dim + action count. `extra_input` supplies that action count.
    static VariationalModel create(PredictorKind kind, size_t state_dim, size_t hidden,
                                   size_t latent, SplitMix64& rng, double learning_rate = 1e-3,
                                   size_t extra_input = 7);
};

// Decoder probabilities are clamped into this range before the log.
constexpr double kProbClampLo = 1e-7;
constexpr double kProbClampHi = 1.0 - 1e-7;

GaussianCode encode(const VariationalModel& model, std::span<const double> input);

// z = mean + exp(log_variance / 2) * eps, one sample. The rng variant draws
// eps component-by-component from the stream.
std::vector<double> sample_latent(const GaussianCode& code, SplitMix64& rng);
std::vector<double> sample_latent_with(const GaussianCode& code, std::span<const double> eps);

// KL(N(mean, var) || N(0, I)) in closed form; always >= 0.
double kl_to_standard_normal(const GaussianCode& code);

// Bernoulli negative log-likelihood summed over all entries, probabilities
// clamped first.
double reconstruction_nll(std::span<const double> probs, std::span<const double> target);

struct LossGrads {
    nn::ParamSet encoder;
    nn::ParamSet decoder;
};

// Single-sample losses. The rng variants draw the latent noise from the
// stream (exactly latent_dim gaussians); the *_with_eps variants take frozen
// noise, which makes the loss a deterministic function of parameters and
// inputs. Gradients, when requested, are accumulated into `grads`.
double vae_loss(const VariationalModel& model, std::span<const double> x, SplitMix64& rng,
                LossGrads* grads = nullptr);
double vae_loss_with_eps(const VariationalModel& model, std::span<const double> x,
                         std::span<const double> eps, LossGrads* grads = nullptr);
double predictor_loss(const VariationalModel& model, std::span<const double> x,
                      std::span<const double> x_prime, SplitMix64& rng,
                      LossGrads* grads = nullptr);
double predictor_loss_with_eps(const VariationalModel& model, std::span<const double> x,
                               std::span<const double> x_prime, std::span<const double> eps,
                               LossGrads* grads = nullptr);

// Batched loss evaluation with per-row frozen noise (eps is [batch x latent]).
// Writes one loss per row; when `grads` is given it accumulates the summed
// parameter gradient. No optimizer step is taken.
void batch_losses(const VariationalModel& model, const OneHotBatch& inputs,
                  const TensorBuffer& targets, const TensorBuffer& eps, std::span<double> out,
                  LossGrads* grads = nullptr);
void batch_losses(const VariationalModel& model, const TensorBuffer& inputs,
                  const TensorBuffer& targets, const TensorBuffer& eps, std::span<double> out,
                  LossGrads* grads = nullptr);

// One Adam step on the mean loss over the batch; returns the pre-update mean
// loss. Noise is drawn from the stream row by row.
double train_batch(VariationalModel& model, const OneHotBatch& inputs, const TensorBuffer& targets,
                   SplitMix64& rng);
double train_batch(VariationalModel& model, const TensorBuffer& inputs,
                   const TensorBuffer& targets, SplitMix64& rng);

// Checkpoint: small header (kind, latent dim) followed by the two ParamSets.
void save_model(std::ostream& out, const VariationalModel& model);
VariationalModel load_model(std::istream& in);

}  // namespace gridrl::vae
