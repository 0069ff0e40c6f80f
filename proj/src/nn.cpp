#include "gridrl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "gridrl/errors.hpp"
#include "gridrl/kernels.hpp"

namespace gridrl::nn {

namespace {

constexpr char kMagic[4] = {'G', 'R', 'N', 'P'};
constexpr uint32_t kVersion = 1;

// Weight matrix extents in storage order: layer 0 is [in x out], the rest
// are [out x in].
void weight_dims(const DenseNetSpec& spec, size_t layer, size_t& rows, size_t& cols) {
    size_t in = spec.layer_sizes[layer];
    size_t out = spec.layer_sizes[layer + 1];
    if (layer == 0) {
        rows = in;
        cols = out;
    } else {
        rows = out;
        cols = in;
    }
}

void apply_output_activation(OutputActivation a, std::span<double> z) {
    switch (a) {
        case OutputActivation::Linear:
            break;
        case OutputActivation::Sigmoid:
            sigmoid_inplace(z);
            break;
        case OutputActivation::Softmax:
            softmax_inplace(z);
            break;
    }
}

// Converts a gradient with respect to the output activation's result into a
// gradient with respect to its preactivation.
void output_activation_backward(OutputActivation a, std::span<const double> y,
                                std::span<const double> g, std::span<double> out) {
    switch (a) {
        case OutputActivation::Linear:
            std::copy(g.begin(), g.end(), out.begin());
            break;
        case OutputActivation::Sigmoid:
            for (size_t i = 0; i < y.size(); ++i) out[i] = g[i] * y[i] * (1.0 - y[i]);
            break;
        case OutputActivation::Softmax: {
            double gy = 0.0;
            for (size_t i = 0; i < y.size(); ++i) gy += g[i] * y[i];
            for (size_t i = 0; i < y.size(); ++i) out[i] = (g[i] - gy) * y[i];
            break;
        }
    }
}

}  // namespace

void DenseNetSpec::validate() const {
    if (layer_sizes.size() < 2) throw UsageError("DenseNetSpec: need at least 2 layer sizes");
    for (size_t s : layer_sizes) {
        if (s == 0) throw UsageError("DenseNetSpec: zero layer size");
    }
}

ParamSet ParamSet::zeros(const DenseNetSpec& spec) {
    spec.validate();
    ParamSet p;
    p.weights.resize(spec.num_layers());
    p.biases.resize(spec.num_layers());
    for (size_t l = 0; l < spec.num_layers(); ++l) {
        p.weights[l].assign(spec.layer_sizes[l] * spec.layer_sizes[l + 1], 0.0);
        p.biases[l].assign(spec.layer_sizes[l + 1], 0.0);
    }
    return p;
}

size_t ParamSet::total_params() const {
    size_t n = 0;
    for (const auto& w : weights) n += w.size();
    for (const auto& b : biases) n += b.size();
    return n;
}

void ParamSet::fill(double v) {
    for (auto& w : weights) std::fill(w.begin(), w.end(), v);
    for (auto& b : biases) std::fill(b.begin(), b.end(), v);
}

void ParamSet::add_scaled(const ParamSet& other, double a) {
    const auto& k = kern::active();
    for (size_t l = 0; l < weights.size(); ++l) {
        k.axpy(a, other.weights[l].data(), weights[l].data(), weights[l].size());
        k.axpy(a, other.biases[l].data(), biases[l].data(), biases[l].size());
    }
}

double ParamSet::squared_norm() const {
    const auto& k = kern::active();
    double s = 0.0;
    for (const auto& w : weights) s += k.dot(w.data(), w.data(), w.size());
    for (const auto& b : biases) s += k.dot(b.data(), b.data(), b.size());
    return s;
}

void ParamSet::scale_all(double a) {
    const auto& k = kern::active();
    for (auto& w : weights) k.scale(a, w.data(), w.size());
    for (auto& b : biases) k.scale(a, b.data(), b.size());
}

bool ParamSet::all_finite() const {
    const auto& k = kern::active();
    for (const auto& w : weights) {
        if (!k.all_finite(w.data(), w.size())) return false;
    }
    for (const auto& b : biases) {
        if (!k.all_finite(b.data(), b.size())) return false;
    }
    return true;
}

size_t ParamSet::weight_index(const DenseNetSpec& spec, size_t layer, size_t out, size_t in) {
    size_t rows, cols;
    weight_dims(spec, layer, rows, cols);
    (void)rows;
    return layer == 0 ? in * cols + out : out * cols + in;
}

ParamSet init_params(const DenseNetSpec& spec, SplitMix64& rng) {
    ParamSet p = ParamSet::zeros(spec);
    for (size_t l = 0; l < spec.num_layers(); ++l) {
        double bound = 1.0 / std::sqrt(static_cast<double>(spec.layer_sizes[l]));
        for (double& w : p.weights[l]) w = (2.0 * rng.next_double() - 1.0) * bound;
    }
    return p;
}

// --- single-sample forward / backward ---

namespace {

void forward_impl(const DenseNetSpec& spec, const ParamSet& params,
                  std::span<const double> dense, std::span<const uint32_t> hot, bool is_hot,
                  Trace* trace, std::vector<double>& out) {
    const auto& k = kern::active();
    size_t num_layers = spec.num_layers();
    std::vector<double> cur;

    if (trace) {
        trace->pre.assign(num_layers, {});
        trace->act.assign(num_layers, {});
        trace->input_is_hot = is_hot;
        if (is_hot) {
            trace->input_hot.assign(hot.begin(), hot.end());
            trace->input.clear();
        } else {
            trace->input.assign(dense.begin(), dense.end());
            trace->input_hot.clear();
        }
    }

    for (size_t l = 0; l < num_layers; ++l) {
        size_t in = spec.layer_sizes[l];
        size_t width = spec.layer_sizes[l + 1];
        std::vector<double> z(width);
        const double* W = params.weights[l].data();
        if (l == 0) {
            // transposed layout: z = b + sum_i x_i * row_i
            z = params.biases[l];
            if (is_hot) {
                k.gather_rows_accum(W, width, hot.data(), hot.size(), z.data());
            } else {
                for (size_t i = 0; i < in; ++i) {
                    if (dense[i] != 0.0) k.axpy(dense[i], W + i * width, z.data(), width);
                }
            }
        } else {
            k.matvec(W, cur.data(), params.biases[l].data(), z.data(), width, in);
        }
        if (trace) trace->pre[l] = z;
        if (l + 1 < num_layers) {
            k.relu(z.data(), z.data(), width);
        } else {
            apply_output_activation(spec.output_activation, {z.data(), width});
        }
        if (trace) trace->act[l] = z;
        cur = std::move(z);
    }
    out = std::move(cur);
}

}  // namespace

TensorBuffer forward(const DenseNetSpec& spec, const ParamSet& params,
                     std::span<const double> input, Trace* trace) {
    spec.validate();
    if (input.size() != spec.input_size()) {
        throw UsageError("forward: input length does not match first layer size");
    }
    std::vector<double> out;
    forward_impl(spec, params, input, {}, false, trace, out);
    return TensorBuffer::vector(std::move(out));
}

TensorBuffer forward_onehot(const DenseNetSpec& spec, const ParamSet& params,
                            std::span<const uint32_t> hot, Trace* trace) {
    spec.validate();
    for (uint32_t i : hot) {
        if (i >= spec.input_size()) throw UsageError("forward_onehot: index out of range");
    }
    std::vector<double> out;
    forward_impl(spec, params, {}, hot, true, trace, out);
    return TensorBuffer::vector(std::move(out));
}

void backward(const DenseNetSpec& spec, const ParamSet& params, const Trace& trace,
              std::span<const double> output_gradient, ParamSet& grad,
              std::vector<double>* input_grad) {
    const auto& k = kern::active();
    size_t num_layers = spec.num_layers();
    if (trace.pre.size() != num_layers || trace.act.size() != num_layers) {
        throw UsageError("backward: trace does not match spec");
    }
    if (output_gradient.size() != spec.output_size()) {
        throw UsageError("backward: output gradient length mismatch");
    }

    std::vector<double> g(spec.output_size());
    output_activation_backward(spec.output_activation, trace.act.back(), output_gradient,
                               {g.data(), g.size()});

    for (size_t li = num_layers; li-- > 0;) {
        size_t in = spec.layer_sizes[li];
        size_t width = spec.layer_sizes[li + 1];
        const double* W = params.weights[li].data();

        k.axpy(1.0, g.data(), grad.biases[li].data(), width);

        if (li == 0) {
            double* dW = grad.weights[0].data();
            if (trace.input_is_hot) {
                k.scatter_rows_add(dW, width, trace.input_hot.data(), trace.input_hot.size(),
                                   g.data());
            } else {
                for (size_t i = 0; i < in; ++i) {
                    if (trace.input[i] != 0.0) k.axpy(trace.input[i], g.data(), dW + i * width, width);
                }
            }
            if (input_grad) {
                input_grad->assign(in, 0.0);
                k.matvec(W, g.data(), nullptr, input_grad->data(), in, width);
            }
            break;
        }

        const std::vector<double>& a = trace.act[li - 1];
        double* dW = grad.weights[li].data();
        for (size_t o = 0; o < width; ++o) {
            if (g[o] != 0.0) k.axpy(g[o], a.data(), dW + o * in, in);
        }

        std::vector<double> da(in, 0.0);
        for (size_t o = 0; o < width; ++o) {
            if (g[o] != 0.0) k.axpy(g[o], W + o * in, da.data(), in);
        }
        std::vector<double> gn(in);
        k.relu_mask_grad(trace.pre[li - 1].data(), da.data(), gn.data(), in);
        g = std::move(gn);
    }
}

// --- batched forward / backward ---

namespace {

void forward_batch_impl(const DenseNetSpec& spec, const ParamSet& params, const TensorBuffer* X,
                        const OneHotBatch* H, BatchTrace& trace) {
    const auto& k = kern::active();
    size_t num_layers = spec.num_layers();
    size_t batch = X ? X->rows() : H->batch();

    trace.batch = batch;
    trace.input_is_hot = (H != nullptr);
    if (H) {
        trace.input_hot = *H;
        trace.input = {};
    } else {
        trace.input = *X;
        trace.input_hot = {};
    }
    trace.pre.assign(num_layers, {});
    trace.act.assign(num_layers, {});

    const TensorBuffer* cur = nullptr;
    for (size_t l = 0; l < num_layers; ++l) {
        size_t in = spec.layer_sizes[l];
        size_t width = spec.layer_sizes[l + 1];
        TensorBuffer z = TensorBuffer::matrix(batch, width);
        // bias rows
        for (size_t b = 0; b < batch; ++b) {
            std::memcpy(z.row(b), params.biases[l].data(), width * sizeof(double));
        }
        const double* W = params.weights[l].data();
        if (l == 0) {
            if (H) {
                for (size_t b = 0; b < batch; ++b) {
                    const auto& hot = H->rows[b];
                    k.gather_rows_accum(W, width, hot.data(), hot.size(), z.row(b));
                }
            } else {
                // Z += X * W0 with W0 stored [in x width]
                k.gemm_nn(X->values.data(), W, z.values.data(), batch, in, width);
            }
        } else {
            // Z += A * W^T with W stored [width x in]
            k.gemm_nt(cur->values.data(), W, z.values.data(), batch, in, width);
        }
        trace.pre[l] = z;
        if (l + 1 < num_layers) {
            k.relu(z.values.data(), z.values.data(), z.size());
        } else {
            for (size_t b = 0; b < batch; ++b) {
                apply_output_activation(spec.output_activation, {z.row(b), width});
            }
        }
        trace.act[l] = std::move(z);
        cur = &trace.act[l];
    }
}

}  // namespace

void forward_batch(const DenseNetSpec& spec, const ParamSet& params, const TensorBuffer& X,
                   BatchTrace& trace) {
    spec.validate();
    if (X.cols() != spec.input_size()) throw UsageError("forward_batch: input width mismatch");
    forward_batch_impl(spec, params, &X, nullptr, trace);
}

void forward_batch(const DenseNetSpec& spec, const ParamSet& params, const OneHotBatch& X,
                   BatchTrace& trace) {
    spec.validate();
    if (X.dim != spec.input_size()) throw UsageError("forward_batch: one-hot width mismatch");
    forward_batch_impl(spec, params, nullptr, &X, trace);
}

void backward_batch(const DenseNetSpec& spec, const ParamSet& params, const BatchTrace& trace,
                    const TensorBuffer& output_gradients, ParamSet& grad,
                    TensorBuffer* input_grad) {
    const auto& k = kern::active();
    size_t num_layers = spec.num_layers();
    size_t batch = trace.batch;
    if (output_gradients.rows() != batch || output_gradients.cols() != spec.output_size()) {
        throw UsageError("backward_batch: output gradient shape mismatch");
    }

    TensorBuffer G = TensorBuffer::matrix(batch, spec.output_size());
    for (size_t b = 0; b < batch; ++b) {
        output_activation_backward(spec.output_activation,
                                   {trace.act.back().row(b), spec.output_size()},
                                   {output_gradients.row(b), spec.output_size()},
                                   {G.row(b), spec.output_size()});
    }

    for (size_t li = num_layers; li-- > 0;) {
        size_t in = spec.layer_sizes[li];
        size_t width = spec.layer_sizes[li + 1];
        const double* W = params.weights[li].data();

        for (size_t b = 0; b < batch; ++b) {
            k.axpy(1.0, G.row(b), grad.biases[li].data(), width);
        }

        if (li == 0) {
            double* dW = grad.weights[0].data();
            if (trace.input_is_hot) {
                for (size_t b = 0; b < batch; ++b) {
                    const auto& hot = trace.input_hot.rows[b];
                    k.scatter_rows_add(dW, width, hot.data(), hot.size(), G.row(b));
                }
            } else {
                // dW0 += X^T * G, with X transposed into scratch
                std::vector<double> Xt(in * batch);
                kern::transpose(trace.input.values.data(), Xt.data(), batch, in);
                k.gemm_nn(Xt.data(), G.values.data(), dW, in, batch, width);
            }
            if (input_grad) {
                *input_grad = TensorBuffer::matrix(batch, in);
                // dX = G * W0^T with W0 stored [in x width]: rows dotted
                k.gemm_nt(G.values.data(), W, input_grad->values.data(), batch, width, in);
            }
            break;
        }

        const TensorBuffer& A = trace.act[li - 1];
        // dW += G^T * A
        std::vector<double> Gt(width * batch);
        kern::transpose(G.values.data(), Gt.data(), batch, width);
        k.gemm_nn(Gt.data(), A.values.data(), grad.weights[li].data(), width, batch, in);

        // dA = G * W, then mask through the ReLU
        TensorBuffer dA = TensorBuffer::matrix(batch, in);
        k.gemm_nn(G.values.data(), W, dA.values.data(), batch, width, in);
        TensorBuffer Gn = TensorBuffer::matrix(batch, in);
        k.relu_mask_grad(trace.pre[li - 1].values.data(), dA.values.data(), Gn.values.data(),
                         dA.size());
        G = std::move(Gn);
    }
}

// --- optimizer ---

AdamState AdamState::make(const DenseNetSpec& spec, double learning_rate) {
    AdamState s;
    s.learning_rate = learning_rate;
    s.m = ParamSet::zeros(spec);
    s.v = ParamSet::zeros(spec);
    return s;
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state) {
    if (!grads.all_finite()) throw NumericError("adam_step: non-finite gradient");
    const auto& k = kern::active();
    state.step += 1;
    double t = static_cast<double>(state.step);
    double bc1 = 1.0 / (1.0 - std::pow(state.beta1, t));
    double bc2 = 1.0 / (1.0 - std::pow(state.beta2, t));
    for (size_t l = 0; l < params.weights.size(); ++l) {
        k.adam(params.weights[l].data(), grads.weights[l].data(), state.m.weights[l].data(),
               state.v.weights[l].data(), params.weights[l].size(), state.learning_rate,
               state.beta1, state.beta2, state.epsilon, bc1, bc2);
        k.adam(params.biases[l].data(), grads.biases[l].data(), state.m.biases[l].data(),
               state.v.biases[l].data(), params.biases[l].size(), state.learning_rate,
               state.beta1, state.beta2, state.epsilon, bc1, bc2);
    }
}

double global_grad_norm(std::span<const ParamSet* const> grads) {
    double s = 0.0;
    for (const ParamSet* g : grads) s += g->squared_norm();
    return std::sqrt(s);
}

void clip_global_norm(std::span<ParamSet* const> grads, double max_norm) {
    double s = 0.0;
    for (ParamSet* g : grads) s += g->squared_norm();
    double norm = std::sqrt(s);
    if (norm > max_norm && norm > 0.0) {
        double f = max_norm / norm;
        for (ParamSet* g : grads) g->scale_all(f);
    }
}

// --- finite differences ---

namespace {

double rel_err(double a, double b) {
    double denom = std::max({std::abs(a), std::abs(b), 1e-6});
    return std::abs(a - b) / denom;
}

double fd_sweep(ParamSet& params, const std::function<double()>& eval, const ParamSet& analytic,
                double epsilon) {
    double worst = 0.0;
    auto probe = [&](double& p, double an) {
        double saved = p;
        double h = epsilon * std::max(1.0, std::abs(saved));
        p = saved + h;
        double fp = eval();
        p = saved - h;
        double fm = eval();
        p = saved;
        double fd = (fp - fm) / (2.0 * h);
        worst = std::max(worst, rel_err(fd, an));
    };
    for (size_t l = 0; l < params.weights.size(); ++l) {
        for (size_t i = 0; i < params.weights[l].size(); ++i) {
            probe(params.weights[l][i], analytic.weights[l][i]);
        }
        for (size_t i = 0; i < params.biases[l].size(); ++i) {
            probe(params.biases[l][i], analytic.biases[l][i]);
        }
    }
    return worst;
}

}  // namespace

double finite_diff_check(const DenseNetSpec& spec, const ParamSet& params,
                         std::span<const double> input, const OutputLoss& loss, double epsilon) {
    if (epsilon <= 0.0) throw UsageError("finite_diff_check: epsilon must be positive");
    ParamSet work = params;

    Trace trace;
    TensorBuffer out = forward(spec, work, input, &trace);
    std::vector<double> og = loss.grad(out.span());
    ParamSet analytic = ParamSet::zeros(spec);
    backward(spec, work, trace, og, analytic);

    auto eval = [&]() {
        TensorBuffer o = forward(spec, work, input, nullptr);
        return loss.value(o.span());
    };
    return fd_sweep(work, eval, analytic, epsilon);
}

double finite_diff_check_generic(ParamSet& params, const std::function<double()>& eval,
                                 const ParamSet& analytic, double epsilon) {
    if (epsilon <= 0.0) throw UsageError("finite_diff_check_generic: epsilon must be positive");
    return fd_sweep(params, eval, analytic, epsilon);
}

// --- serialization ---

namespace {

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw UsageError("load_params: truncated stream");
    return v;
}

}  // namespace

void save_params(std::ostream& out, const DenseNetSpec& spec, const ParamSet& params) {
    out.write(kMagic, 4);
    write_pod<uint32_t>(out, kVersion);
    write_pod<uint32_t>(out, static_cast<uint32_t>(spec.layer_sizes.size()));
    for (size_t s : spec.layer_sizes) write_pod<uint64_t>(out, s);
    write_pod<uint8_t>(out, static_cast<uint8_t>(spec.output_activation));
    for (size_t l = 0; l < spec.num_layers(); ++l) {
        out.write(reinterpret_cast<const char*>(params.weights[l].data()),
                  static_cast<std::streamsize>(params.weights[l].size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(params.biases[l].data()),
                  static_cast<std::streamsize>(params.biases[l].size() * sizeof(double)));
    }
}

std::pair<DenseNetSpec, ParamSet> load_params(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) throw UsageError("load_params: bad magic");
    uint32_t version = read_pod<uint32_t>(in);
    if (version != kVersion) throw UsageError("load_params: unsupported version");
    uint32_t n = read_pod<uint32_t>(in);
    DenseNetSpec spec;
    spec.layer_sizes.resize(n);
    for (uint32_t i = 0; i < n; ++i) spec.layer_sizes[i] = read_pod<uint64_t>(in);
    spec.output_activation = static_cast<OutputActivation>(read_pod<uint8_t>(in));
    spec.validate();
    ParamSet params = ParamSet::zeros(spec);
    for (size_t l = 0; l < spec.num_layers(); ++l) {
        in.read(reinterpret_cast<char*>(params.weights[l].data()),
                static_cast<std::streamsize>(params.weights[l].size() * sizeof(double)));
        in.read(reinterpret_cast<char*>(params.biases[l].data()),
                static_cast<std::streamsize>(params.biases[l].size() * sizeof(double)));
        if (!in) throw UsageError("load_params: truncated stream");
    }
    return {spec, params};
}

void save_params_file(const std::string& path, const DenseNetSpec& spec, const ParamSet& params) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open for writing: " + path);
    save_params(f, spec, params);
}

std::pair<DenseNetSpec, ParamSet> load_params_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open for reading: " + path);
    return load_params(f);
}

// --- activations ---

void softmax_inplace(std::span<double> z) {
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : z) v /= sum;
}

void sigmoid_inplace(std::span<double> z) {
    for (double& v : z) v = 1.0 / (1.0 + std::exp(-v));
}

}  // namespace gridrl::nn
