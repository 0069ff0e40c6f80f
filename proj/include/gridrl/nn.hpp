#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gridrl/rng.hpp"
#include "gridrl/tensor.hpp"

namespace gridrl::nn {

enum class OutputActivation : uint8_t { Linear = 0, Sigmoid = 1, Softmax = 2 };

// Fully connected network: ReLU on every hidden layer, one of the three
// output activations on the last.
struct DenseNetSpec {
    std::vector<size_t> layer_sizes;
    OutputActivation output_activation = OutputActivation::Linear;

    size_t num_layers() const { return layer_sizes.size() - 1; }
    size_t input_size() const { return layer_sizes.front(); }
    size_t output_size() const { return layer_sizes.back(); }
    void validate() const;

    bool operator==(const DenseNetSpec&) const = default;
};

// Per-layer weights and biases, 64-bit reals.
//
// Layout: layer 0 keeps its weight matrix transposed ([in x out]) so that
// the binary one-hot inputs used throughout this project reduce the first
// matrix product to a row gather; every other layer is [out x in]. Use
// weight_at() to address entries without caring about the layout.
struct ParamSet {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    static ParamSet zeros(const DenseNetSpec& spec);

    size_t total_params() const;
    void fill(double v);
    void add_scaled(const ParamSet& other, double a);  // this += a * other
    double squared_norm() const;
    void scale_all(double a);
    bool all_finite() const;

    static size_t weight_index(const DenseNetSpec& spec, size_t layer, size_t out, size_t in);
    double& weight_at(const DenseNetSpec& spec, size_t layer, size_t out, size_t in) {
        return weights[layer][weight_index(spec, layer, out, in)];
    }
    double weight_at(const DenseNetSpec& spec, size_t layer, size_t out, size_t in) const {
        return weights[layer][weight_index(spec, layer, out, in)];
    }
};

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) drawn in storage order,
// biases zero. Deterministic given the generator state.
ParamSet init_params(const DenseNetSpec& spec, SplitMix64& rng);

struct Trace {
    std::vector<double> input;
    std::vector<uint32_t> input_hot;  // when set, input entries at these indices are 1.0
    bool input_is_hot = false;
    std::vector<std::vector<double>> pre;  // preactivation per layer
    std::vector<std::vector<double>> act;  // activation per layer; act.back() is the output
};

// Single-sample forward pass. Fills the trace (when given) with the
// intermediates backward() needs.
TensorBuffer forward(const DenseNetSpec& spec, const ParamSet& params,
                     std::span<const double> input, Trace* trace = nullptr);
// One-hot fast path: entries listed in `hot` are 1.0, everything else 0.0.
TensorBuffer forward_onehot(const DenseNetSpec& spec, const ParamSet& params,
                            std::span<const uint32_t> hot, Trace* trace = nullptr);

// Reverse pass for a traced forward call. `output_gradient` is the loss
// gradient with respect to the network output (post-activation). Gradients
// are accumulated into `grad` (+=). `input_grad`, when non-null, receives
// the gradient with respect to the input (overwritten).
void backward(const DenseNetSpec& spec, const ParamSet& params, const Trace& trace,
              std::span<const double> output_gradient, ParamSet& grad,
              std::vector<double>* input_grad = nullptr);

struct BatchTrace {
    size_t batch = 0;
    TensorBuffer input;        // dense input copy (empty when one-hot)
    OneHotBatch input_hot;     // sparse input copy (rows empty when dense)
    bool input_is_hot = false;
    std::vector<TensorBuffer> pre;
    std::vector<TensorBuffer> act;

    const TensorBuffer& output() const { return act.back(); }
};

void forward_batch(const DenseNetSpec& spec, const ParamSet& params, const TensorBuffer& X,
                   BatchTrace& trace);
void forward_batch(const DenseNetSpec& spec, const ParamSet& params, const OneHotBatch& X,
                   BatchTrace& trace);

// Batched reverse pass; `output_gradients` has one row per sample. The
// accumulated gradient is the sum over samples (callers divide by the batch
// size when they want a mean). Skips the input gradient unless requested.
void backward_batch(const DenseNetSpec& spec, const ParamSet& params, const BatchTrace& trace,
                    const TensorBuffer& output_gradients, ParamSet& grad,
                    TensorBuffer* input_grad = nullptr);

struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    uint64_t step = 0;
    ParamSet m;
    ParamSet v;

    static AdamState make(const DenseNetSpec& spec, double learning_rate = 1e-3);
};

// Standard Adam with bias correction. Throws NumericError on non-finite
// gradients.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state);

// Global L2 norm over several gradient sets, and in-place clipping.
double global_grad_norm(std::span<const ParamSet* const> grads);
void clip_global_norm(std::span<ParamSet* const> grads, double max_norm);

// Scalar loss on the network output, with its analytic gradient. Used by the
// finite-difference checker to close the loop around backward().
struct OutputLoss {
    std::function<double(std::span<const double>)> value;
    std::function<std::vector<double>(std::span<const double>)> grad;
};

// Central finite differences over every parameter, compared against
// backward(). Returns the maximum relative error. The probe step for a
// parameter p is epsilon * max(1, |p|).
double finite_diff_check(const DenseNetSpec& spec, const ParamSet& params,
                         std::span<const double> input, const OutputLoss& loss, double epsilon);

// Same comparison for an arbitrary differentiable scalar of one ParamSet
// (the composite variational losses use this). `eval` re-evaluates the loss
// at the current parameter values; `analytic` is the gradient under test.
double finite_diff_check_generic(ParamSet& params, const std::function<double()>& eval,
                                 const ParamSet& analytic, double epsilon);

// Checkpoint format: magic "GRNP", version, layer sizes, output activation,
// then raw little-endian 64-bit values in storage order.
void save_params(std::ostream& out, const DenseNetSpec& spec, const ParamSet& params);
std::pair<DenseNetSpec, ParamSet> load_params(std::istream& in);
void save_params_file(const std::string& path, const DenseNetSpec& spec, const ParamSet& params);
std::pair<DenseNetSpec, ParamSet> load_params_file(const std::string& path);

// Numerically safe softmax / sigmoid helpers shared by the modules above
// this one.
void softmax_inplace(std::span<double> z);
void sigmoid_inplace(std::span<double> z);

}  // namespace gridrl::nn
