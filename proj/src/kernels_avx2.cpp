#include "gridrl/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>

namespace gridrl::kern {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

void v_matvec(const double* W, const double* x, const double* b, double* y,
              size_t rows, size_t cols) {
    size_t r = 0;
    // 4 rows at a time so each x load feeds four FMA chains.
    for (; r + 4 <= rows; r += 4) {
        const double* w0 = W + (r + 0) * cols;
        const double* w1 = W + (r + 1) * cols;
        const double* w2 = W + (r + 2) * cols;
        const double* w3 = W + (r + 3) * cols;
        __m256d a0 = _mm256_setzero_pd();
        __m256d a1 = _mm256_setzero_pd();
        __m256d a2 = _mm256_setzero_pd();
        __m256d a3 = _mm256_setzero_pd();
        size_t c = 0;
        for (; c + 4 <= cols; c += 4) {
            __m256d xv = _mm256_loadu_pd(x + c);
            a0 = _mm256_fmadd_pd(_mm256_loadu_pd(w0 + c), xv, a0);
            a1 = _mm256_fmadd_pd(_mm256_loadu_pd(w1 + c), xv, a1);
            a2 = _mm256_fmadd_pd(_mm256_loadu_pd(w2 + c), xv, a2);
            a3 = _mm256_fmadd_pd(_mm256_loadu_pd(w3 + c), xv, a3);
        }
        double s0 = hsum(a0), s1 = hsum(a1), s2 = hsum(a2), s3 = hsum(a3);
        for (; c < cols; ++c) {
            s0 += w0[c] * x[c];
            s1 += w1[c] * x[c];
            s2 += w2[c] * x[c];
            s3 += w3[c] * x[c];
        }
        y[r + 0] = b ? s0 + b[r + 0] : s0;
        y[r + 1] = b ? s1 + b[r + 1] : s1;
        y[r + 2] = b ? s2 + b[r + 2] : s2;
        y[r + 3] = b ? s3 + b[r + 3] : s3;
    }
    for (; r < rows; ++r) {
        const double* w = W + r * cols;
        __m256d acc = _mm256_setzero_pd();
        size_t c = 0;
        for (; c + 4 <= cols; c += 4) {
            acc = _mm256_fmadd_pd(_mm256_loadu_pd(w + c), _mm256_loadu_pd(x + c), acc);
        }
        double s = hsum(acc);
        for (; c < cols; ++c) s += w[c] * x[c];
        y[r] = b ? s + b[r] : s;
    }
}

// Accumulate a * brow into crow.
inline void v_axpy_row(double a, const double* brow, double* crow, size_t N) {
    __m256d av = _mm256_set1_pd(a);
    size_t n = 0;
    for (; n + 8 <= N; n += 8) {
        __m256d c0 = _mm256_loadu_pd(crow + n);
        __m256d c1 = _mm256_loadu_pd(crow + n + 4);
        c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + n), c0);
        c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + n + 4), c1);
        _mm256_storeu_pd(crow + n, c0);
        _mm256_storeu_pd(crow + n + 4, c1);
    }
    for (; n + 4 <= N; n += 4) {
        __m256d c0 = _mm256_loadu_pd(crow + n);
        c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + n), c0);
        _mm256_storeu_pd(crow + n, c0);
    }
    for (; n < N; ++n) crow[n] += a * brow[n];
}

void v_gemm_nn(const double* A, const double* B, double* C, size_t M, size_t K, size_t N) {
    // Loop order keeps the re-streamed operand small: with many output rows
    // (M >= K) walk C row-by-row and re-read B from cache; otherwise walk B
    // row-by-row and re-read C. Per-element accumulation order (ascending k)
    // is the same either way.
    if (M >= K) {
        size_t m = 0;
        for (; m + 2 <= M; m += 2) {
            const double* a0 = A + m * K;
            const double* a1 = A + (m + 1) * K;
            double* c0 = C + m * N;
            double* c1 = C + (m + 1) * N;
            size_t k = 0;
            for (; k + 2 <= K; k += 2) {
                double a00 = a0[k], a01 = a0[k + 1];
                double a10 = a1[k], a11 = a1[k + 1];
                if (a00 == 0.0 && a01 == 0.0 && a10 == 0.0 && a11 == 0.0) continue;
                const double* b0 = B + k * N;
                const double* b1 = B + (k + 1) * N;
                __m256d va00 = _mm256_set1_pd(a00);
                __m256d va01 = _mm256_set1_pd(a01);
                __m256d va10 = _mm256_set1_pd(a10);
                __m256d va11 = _mm256_set1_pd(a11);
                size_t n = 0;
                for (; n + 4 <= N; n += 4) {
                    __m256d vb0 = _mm256_loadu_pd(b0 + n);
                    __m256d vb1 = _mm256_loadu_pd(b1 + n);
                    __m256d vc0 = _mm256_loadu_pd(c0 + n);
                    vc0 = _mm256_fmadd_pd(va00, vb0, vc0);
                    vc0 = _mm256_fmadd_pd(va01, vb1, vc0);
                    _mm256_storeu_pd(c0 + n, vc0);
                    __m256d vc1 = _mm256_loadu_pd(c1 + n);
                    vc1 = _mm256_fmadd_pd(va10, vb0, vc1);
                    vc1 = _mm256_fmadd_pd(va11, vb1, vc1);
                    _mm256_storeu_pd(c1 + n, vc1);
                }
                for (; n < N; ++n) {
                    c0[n] += a00 * b0[n];
                    c0[n] += a01 * b1[n];
                    c1[n] += a10 * b0[n];
                    c1[n] += a11 * b1[n];
                }
            }
            for (; k < K; ++k) {
                const double* brow = B + k * N;
                if (a0[k] != 0.0) v_axpy_row(a0[k], brow, c0, N);
                if (a1[k] != 0.0) v_axpy_row(a1[k], brow, c1, N);
            }
        }
        for (; m < M; ++m) {
            const double* arow = A + m * K;
            double* crow = C + m * N;
            for (size_t k = 0; k < K; ++k) {
                if (arow[k] != 0.0) v_axpy_row(arow[k], B + k * N, crow, N);
            }
        }
    } else {
        for (size_t k = 0; k < K; ++k) {
            const double* brow = B + k * N;
            for (size_t m = 0; m < M; ++m) {
                double a = A[m * K + k];
                if (a == 0.0) continue;
                v_axpy_row(a, brow, C + m * N, N);
            }
        }
    }
}

void v_gemm_nt(const double* A, const double* B, double* C, size_t M, size_t K, size_t N) {
    size_t n = 0;
    // 4 B rows per pass: each A row load feeds four dot accumulations.
    for (; n + 4 <= N; n += 4) {
        const double* b0 = B + (n + 0) * K;
        const double* b1 = B + (n + 1) * K;
        const double* b2 = B + (n + 2) * K;
        const double* b3 = B + (n + 3) * K;
        for (size_t m = 0; m < M; ++m) {
            const double* arow = A + m * K;
            __m256d a0 = _mm256_setzero_pd();
            __m256d a1 = _mm256_setzero_pd();
            __m256d a2 = _mm256_setzero_pd();
            __m256d a3 = _mm256_setzero_pd();
            size_t k = 0;
            for (; k + 4 <= K; k += 4) {
                __m256d av = _mm256_loadu_pd(arow + k);
                a0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + k), a0);
                a1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + k), a1);
                a2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + k), a2);
                a3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + k), a3);
            }
            double s0 = hsum(a0), s1 = hsum(a1), s2 = hsum(a2), s3 = hsum(a3);
            for (; k < K; ++k) {
                double av = arow[k];
                s0 += av * b0[k];
                s1 += av * b1[k];
                s2 += av * b2[k];
                s3 += av * b3[k];
            }
            double* crow = C + m * N + n;
            crow[0] += s0;
            crow[1] += s1;
            crow[2] += s2;
            crow[3] += s3;
        }
    }
    for (; n < N; ++n) {
        const double* brow = B + n * K;
        for (size_t m = 0; m < M; ++m) {
            const double* arow = A + m * K;
            __m256d acc = _mm256_setzero_pd();
            size_t k = 0;
            for (; k + 4 <= K; k += 4) {
                acc = _mm256_fmadd_pd(_mm256_loadu_pd(arow + k), _mm256_loadu_pd(brow + k), acc);
            }
            double s = hsum(acc);
            for (; k < K; ++k) s += arow[k] * brow[k];
            C[m * N + n] += s;
        }
    }
}

double v_dot(const double* a, const double* b, size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void v_axpy(double a, const double* x, double* y, size_t n) {
    __m256d av = _mm256_set1_pd(a);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void v_scale(double a, double* x, size_t n) {
    __m256d av = _mm256_set1_pd(a);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) x[i] *= a;
}

void v_relu(const double* x, double* y, size_t n) {
    __m256d zero = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void v_relu_mask_grad(const double* pre, const double* g, double* out, size_t n) {
    __m256d zero = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(pre + i), zero, _CMP_GT_OQ);
        _mm256_storeu_pd(out + i, _mm256_and_pd(mask, _mm256_loadu_pd(g + i)));
    }
    for (; i < n; ++i) out[i] = pre[i] > 0.0 ? g[i] : 0.0;
}

void v_adam(double* p, const double* g, double* m, double* v, size_t n,
            double lr, double beta1, double beta2, double eps, double bc1, double bc2) {
    __m256d b1 = _mm256_set1_pd(beta1);
    __m256d b2 = _mm256_set1_pd(beta2);
    __m256d ob1 = _mm256_set1_pd(1.0 - beta1);
    __m256d ob2 = _mm256_set1_pd(1.0 - beta2);
    __m256d vbc1 = _mm256_set1_pd(bc1);
    __m256d vbc2 = _mm256_set1_pd(bc2);
    __m256d vlr = _mm256_set1_pd(lr);
    __m256d veps = _mm256_set1_pd(eps);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d gv = _mm256_loadu_pd(g + i);
        __m256d mv = _mm256_fmadd_pd(b1, _mm256_loadu_pd(m + i), _mm256_mul_pd(ob1, gv));
        __m256d vv = _mm256_fmadd_pd(b2, _mm256_loadu_pd(v + i),
                                     _mm256_mul_pd(ob2, _mm256_mul_pd(gv, gv)));
        _mm256_storeu_pd(m + i, mv);
        _mm256_storeu_pd(v + i, vv);
        __m256d mhat = _mm256_mul_pd(mv, vbc1);
        __m256d vhat = _mm256_mul_pd(vv, vbc2);
        __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
        __m256d upd = _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom);
        _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), upd));
    }
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        p[i] -= lr * (m[i] * bc1) / (std::sqrt(v[i] * bc2) + eps);
    }
}

bool v_all_finite(const double* x, size_t n) {
    const __m256d abs_mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffll));
    const __m256d inf = _mm256_set1_pd(__builtin_inf());
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_and_pd(_mm256_loadu_pd(x + i), abs_mask);
        // NaN compares false against anything, so this also rejects NaN.
        __m256d ok = _mm256_cmp_pd(v, inf, _CMP_LT_OQ);
        if (_mm256_movemask_pd(ok) != 0xf) return false;
    }
    for (; i < n; ++i) {
        if (!std::isfinite(x[i])) return false;
    }
    return true;
}

void v_gather_rows_accum(const double* M, size_t row_len, const uint32_t* idx,
                         size_t nidx, double* y) {
    for (size_t j = 0; j < nidx; ++j) {
        const double* row = M + static_cast<size_t>(idx[j]) * row_len;
        size_t i = 0;
        for (; i + 4 <= row_len; i += 4) {
            __m256d yv = _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(row + i));
            _mm256_storeu_pd(y + i, yv);
        }
        for (; i < row_len; ++i) y[i] += row[i];
    }
}

void v_scatter_rows_add(double* M, size_t row_len, const uint32_t* idx,
                        size_t nidx, const double* v) {
    for (size_t j = 0; j < nidx; ++j) {
        double* row = M + static_cast<size_t>(idx[j]) * row_len;
        size_t i = 0;
        for (; i + 4 <= row_len; i += 4) {
            __m256d rv = _mm256_add_pd(_mm256_loadu_pd(row + i), _mm256_loadu_pd(v + i));
            _mm256_storeu_pd(row + i, rv);
        }
        for (; i < row_len; ++i) row[i] += v[i];
    }
}

}  // namespace

const Kernels& avx2_impl_kernels() {
    static const Kernels k = {
        "avx2",        v_matvec, v_gemm_nn,    v_gemm_nt,           v_dot,
        v_axpy,        v_scale,  v_relu,       v_relu_mask_grad,    v_adam,
        v_all_finite,  v_gather_rows_accum,    v_scatter_rows_add,
    };
    return k;
}

}  // namespace gridrl::kern

#else

namespace gridrl::kern {

const Kernels& avx2_impl_kernels() { return scalar_kernels(); }

}  // namespace gridrl::kern

#endif
