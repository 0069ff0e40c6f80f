#pragma once

#include <cstddef>
#include <cstdint>

namespace gridrl::kern {

// Data-parallel inner loops of the dense-network numerics. Every operation
// has a scalar reference implementation and (on x86-64) an AVX2/FMA variant;
// the active set is selected once at runtime. SIMD variants may differ from
// the scalar reference in summation order, so results agree to rounding, not
// bit-for-bit; a fixed selection is used for the whole process so any single
// run is deterministic.
struct Kernels {
    const char* name;

    // y = W x + b.  W row-major [rows x cols]; b may be null.
    void (*matvec)(const double* W, const double* x, const double* b, double* y,
                   size_t rows, size_t cols);

    // C[M x N] += A[M x K] * B[K x N], all row-major.
    void (*gemm_nn)(const double* A, const double* B, double* C, size_t M, size_t K, size_t N);

    // C[M x N] += A[M x K] * B^T where B is row-major [N x K] (rows dotted).
    void (*gemm_nt)(const double* A, const double* B, double* C, size_t M, size_t K, size_t N);

    double (*dot)(const double* a, const double* b, size_t n);

    // y += a * x
    void (*axpy)(double a, const double* x, double* y, size_t n);

    // x *= a
    void (*scale)(double a, double* x, size_t n);

    // y = max(x, 0)
    void (*relu)(const double* x, double* y, size_t n);

    // out = g where pre > 0, else 0  (subgradient at 0 is 0)
    void (*relu_mask_grad)(const double* pre, const double* g, double* out, size_t n);

    // One Adam update over n parameters. bc1/bc2 are the precomputed bias
    // corrections 1/(1-beta1^t) and 1/(1-beta2^t).
    void (*adam)(double* p, const double* g, double* m, double* v, size_t n,
                 double lr, double beta1, double beta2, double eps, double bc1, double bc2);

    bool (*all_finite)(const double* x, size_t n);

    // y += sum of the selected rows of M (M row-major [dim x row_len]).
    // This is the one-hot fast path: a binary input vector reduces the
    // transposed first-layer product to a row gather.
    void (*gather_rows_accum)(const double* M, size_t row_len, const uint32_t* idx,
                              size_t nidx, double* y);

    // Each selected row of M += v.  Gradient counterpart of the gather.
    void (*scatter_rows_add)(double* M, size_t row_len, const uint32_t* idx,
                             size_t nidx, const double* v);
};

const Kernels& scalar_kernels();
// Returns the AVX2 set when compiled in and supported by the CPU, otherwise
// the scalar set.
const Kernels& avx2_kernels();

enum class KernelMode { Auto, Scalar, Avx2 };

// Selects the active set. Auto picks AVX2 when available. The environment
// variable GRIDRL_KERNELS=scalar|avx2|auto overrides the default at startup.
void set_kernel_mode(KernelMode mode);
KernelMode kernel_mode();
const Kernels& active();

bool cpu_has_avx2();

// At[N x M] = A[M x N].  Plain helper, only ever applied to small matrices.
void transpose(const double* A, double* At, size_t M, size_t N);

}  // namespace gridrl::kern
