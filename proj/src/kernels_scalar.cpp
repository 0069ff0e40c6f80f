#include <cmath>
#include <cstring>

#include "gridrl/kernels.hpp"

// Reference implementations. Loop orders mirror the SIMD variants so that a
// weight matrix larger than cache is streamed exactly once per call while the
// smaller operand stays resident.

namespace gridrl::kern {
namespace {

void s_matvec(const double* W, const double* x, const double* b, double* y,
              size_t rows, size_t cols) {
    for (size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        const double* w = W + r * cols;
        for (size_t c = 0; c < cols; ++c) acc += w[c] * x[c];
        y[r] = b ? acc + b[r] : acc;
    }
}

void s_gemm_nn(const double* A, const double* B, double* C, size_t M, size_t K, size_t N) {
    // k-outer so each B row is reused across all M output rows.
    for (size_t k = 0; k < K; ++k) {
        const double* brow = B + k * N;
        for (size_t m = 0; m < M; ++m) {
            double a = A[m * K + k];
            if (a == 0.0) continue;
            double* crow = C + m * N;
            for (size_t n = 0; n < N; ++n) crow[n] += a * brow[n];
        }
    }
}

void s_gemm_nt(const double* A, const double* B, double* C, size_t M, size_t K, size_t N) {
    // n-outer so each B row (the large streamed operand) is read once.
    for (size_t n = 0; n < N; ++n) {
        const double* brow = B + n * K;
        for (size_t m = 0; m < M; ++m) {
            const double* arow = A + m * K;
            double acc = 0.0;
            for (size_t k = 0; k < K; ++k) acc += arow[k] * brow[k];
            C[m * N + n] += acc;
        }
    }
}

double s_dot(const double* a, const double* b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void s_axpy(double a, const double* x, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void s_scale(double a, double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) x[i] *= a;
}

void s_relu(const double* x, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void s_relu_mask_grad(const double* pre, const double* g, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = pre[i] > 0.0 ? g[i] : 0.0;
}

void s_adam(double* p, const double* g, double* m, double* v, size_t n,
            double lr, double beta1, double beta2, double eps, double bc1, double bc2) {
    for (size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        double mhat = m[i] * bc1;
        double vhat = v[i] * bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

bool s_all_finite(const double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i])) return false;
    }
    return true;
}

void s_gather_rows_accum(const double* M, size_t row_len, const uint32_t* idx,
                         size_t nidx, double* y) {
    for (size_t j = 0; j < nidx; ++j) {
        const double* row = M + static_cast<size_t>(idx[j]) * row_len;
        for (size_t i = 0; i < row_len; ++i) y[i] += row[i];
    }
}

void s_scatter_rows_add(double* M, size_t row_len, const uint32_t* idx,
                        size_t nidx, const double* v) {
    for (size_t j = 0; j < nidx; ++j) {
        double* row = M + static_cast<size_t>(idx[j]) * row_len;
        for (size_t i = 0; i < row_len; ++i) row[i] += v[i];
    }
}

}  // namespace

const Kernels& scalar_kernels() {
    static const Kernels k = {
        "scalar",      s_matvec, s_gemm_nn,    s_gemm_nt,           s_dot,
        s_axpy,        s_scale,  s_relu,       s_relu_mask_grad,    s_adam,
        s_all_finite,  s_gather_rows_accum,    s_scatter_rows_add,
    };
    return k;
}

void transpose(const double* A, double* At, size_t M, size_t N) {
    for (size_t m = 0; m < M; ++m) {
        for (size_t n = 0; n < N; ++n) At[n * M + m] = A[m * N + n];
    }
}

}  // namespace gridrl::kern
