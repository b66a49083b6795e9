// AVX2 + FMA kernels. This translation unit is compiled with -mavx2 -mfma;
// nothing here may run before avx2_kernels() has checked the CPU.

#include <immintrin.h>

#include <cmath>

#include "featsim/simd/kernels.hpp"

namespace featsim::simd::detail {
namespace {

// 4x16 register tile: 8 accumulators, 2 B loads and 4 broadcasts per k.
inline void tile_4x16(std::size_t k, const float* a, std::size_t lda, const float* b, std::size_t ldb, float* c,
                      std::size_t ldc) {
    __m256 c00 = _mm256_loadu_ps(c), c01 = _mm256_loadu_ps(c + 8);
    __m256 c10 = _mm256_loadu_ps(c + ldc), c11 = _mm256_loadu_ps(c + ldc + 8);
    __m256 c20 = _mm256_loadu_ps(c + 2 * ldc), c21 = _mm256_loadu_ps(c + 2 * ldc + 8);
    __m256 c30 = _mm256_loadu_ps(c + 3 * ldc), c31 = _mm256_loadu_ps(c + 3 * ldc + 8);
    for (std::size_t p = 0; p < k; ++p) {
        const __m256 b0 = _mm256_loadu_ps(b + p * ldb);
        const __m256 b1 = _mm256_loadu_ps(b + p * ldb + 8);
        __m256 av = _mm256_broadcast_ss(a + p);
        c00 = _mm256_fmadd_ps(av, b0, c00);
        c01 = _mm256_fmadd_ps(av, b1, c01);
        av = _mm256_broadcast_ss(a + lda + p);
        c10 = _mm256_fmadd_ps(av, b0, c10);
        c11 = _mm256_fmadd_ps(av, b1, c11);
        av = _mm256_broadcast_ss(a + 2 * lda + p);
        c20 = _mm256_fmadd_ps(av, b0, c20);
        c21 = _mm256_fmadd_ps(av, b1, c21);
        av = _mm256_broadcast_ss(a + 3 * lda + p);
        c30 = _mm256_fmadd_ps(av, b0, c30);
        c31 = _mm256_fmadd_ps(av, b1, c31);
    }
    _mm256_storeu_ps(c, c00);
    _mm256_storeu_ps(c + 8, c01);
    _mm256_storeu_ps(c + ldc, c10);
    _mm256_storeu_ps(c + ldc + 8, c11);
    _mm256_storeu_ps(c + 2 * ldc, c20);
    _mm256_storeu_ps(c + 2 * ldc + 8, c21);
    _mm256_storeu_ps(c + 3 * ldc, c30);
    _mm256_storeu_ps(c + 3 * ldc + 8, c31);
}

inline void row_1x8(std::size_t k, const float* a, const float* b, std::size_t ldb, float* c) {
    __m256 acc = _mm256_loadu_ps(c);
    for (std::size_t p = 0; p < k; ++p) acc = _mm256_fmadd_ps(_mm256_broadcast_ss(a + p), _mm256_loadu_ps(b + p * ldb), acc);
    _mm256_storeu_ps(c, acc);
}

inline void row_1x1(std::size_t k, const float* a, const float* b, std::size_t ldb, float* c) {
    float acc = *c;
    for (std::size_t p = 0; p < k; ++p) acc = std::fma(a[p], b[p * ldb], acc);
    *c = acc;
}

// Columns are processed in panels so a panel of B stays cache resident
// while all row tiles sweep over it.
constexpr std::size_t kPanel = 256;

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
               std::size_t ldb, float* c, std::size_t ldc) {
    for (std::size_t j0 = 0; j0 < n; j0 += kPanel) {
        const std::size_t j1 = j0 + kPanel < n ? j0 + kPanel : n;
        std::size_t i = 0;
        for (; i + 4 <= m; i += 4) {
            const float* ai = a + i * lda;
            float* ci = c + i * ldc;
            std::size_t j = j0;
            for (; j + 16 <= j1; j += 16) tile_4x16(k, ai, lda, b + j, ldb, ci + j, ldc);
            for (; j + 8 <= j1; j += 8)
                for (std::size_t r = 0; r < 4; ++r) row_1x8(k, ai + r * lda, b + j, ldb, ci + r * ldc + j);
            for (; j < j1; ++j)
                for (std::size_t r = 0; r < 4; ++r) row_1x1(k, ai + r * lda, b + j, ldb, ci + r * ldc + j);
        }
        for (; i < m; ++i) {
            const float* ai = a + i * lda;
            float* ci = c + i * ldc;
            std::size_t j = j0;
            for (; j + 8 <= j1; j += 8) row_1x8(k, ai, b + j, ldb, ci + j);
            for (; j < j1; ++j) row_1x1(k, ai, b + j, ldb, ci + j);
        }
    }
}

void axpy_avx2(std::size_t n, float alpha, const float* x, float* y) {
    const __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), _mm256_mul_ps(av, _mm256_loadu_ps(x + i))));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

float dot_avx2(std::size_t n, const float* x, const float* y) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
        acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), acc1);
    }
    for (; i + 8 <= n; i += 8) acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
    acc0 = _mm256_add_ps(acc0, acc1);
    __m128 lo = _mm256_castps256_ps128(acc0);
    __m128 hi = _mm256_extractf128_ps(acc0, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    float s = _mm_cvtss_f32(lo);
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

void relu_forward_avx2(std::size_t n, const float* x, float* y) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        // max_ps returns the second operand for NaN and signed zeros, matching x > 0 ? x : 0.
        _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_avx2(std::size_t n, const float* y, const float* gy, float* gx) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(y + i), zero, _CMP_GT_OQ);
        const __m256 g = _mm256_and_ps(mask, _mm256_loadu_ps(gy + i));
        _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_loadu_ps(gx + i), g));
    }
    for (; i < n; ++i)
        if (y[i] > 0.0f) gx[i] += gy[i];
}

void adam_update_avx2(std::size_t n, float* theta, float* m, float* v, const float* g, const AdamCoeffs& c) {
    const __m256 b1 = _mm256_set1_ps(c.beta1), b2 = _mm256_set1_ps(c.beta2);
    const __m256 omb1 = _mm256_set1_ps(1.0f - c.beta1), omb2 = _mm256_set1_ps(1.0f - c.beta2);
    const __m256 bc1 = _mm256_set1_ps(c.bias_correction1), bc2 = _mm256_set1_ps(c.bias_correction2);
    const __m256 lr = _mm256_set1_ps(c.lr), eps = _mm256_set1_ps(c.eps);
    std::size_t i = 0;
    // Same operation order as the scalar kernel and no contraction, so the
    // update is bit-identical to it.
    for (; i + 8 <= n; i += 8) {
        const __m256 gv = _mm256_loadu_ps(g + i);
        const __m256 mv = _mm256_add_ps(_mm256_mul_ps(b1, _mm256_loadu_ps(m + i)), _mm256_mul_ps(omb1, gv));
        const __m256 vv =
            _mm256_add_ps(_mm256_mul_ps(b2, _mm256_loadu_ps(v + i)), _mm256_mul_ps(omb2, _mm256_mul_ps(gv, gv)));
        _mm256_storeu_ps(m + i, mv);
        _mm256_storeu_ps(v + i, vv);
        const __m256 m_hat = _mm256_div_ps(mv, bc1);
        const __m256 v_hat = _mm256_div_ps(vv, bc2);
        const __m256 step = _mm256_div_ps(_mm256_mul_ps(lr, m_hat), _mm256_add_ps(_mm256_sqrt_ps(v_hat), eps));
        _mm256_storeu_ps(theta + i, _mm256_sub_ps(_mm256_loadu_ps(theta + i), step));
    }
    const float one_minus_b1 = 1.0f - c.beta1;
    const float one_minus_b2 = 1.0f - c.beta2;
    for (; i < n; ++i) {
        m[i] = c.beta1 * m[i] + one_minus_b1 * g[i];
        v[i] = c.beta2 * v[i] + one_minus_b2 * (g[i] * g[i]);
        const float m_hat = m[i] / c.bias_correction1;
        const float v_hat = v[i] / c.bias_correction2;
        theta[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
}

}  // namespace

extern const KernelTable kAvx2Table;
const KernelTable kAvx2Table{
    "avx2", &gemm_avx2, &axpy_avx2, &dot_avx2, &relu_forward_avx2, &relu_backward_avx2, &adam_update_avx2,
};

}  // namespace featsim::simd::detail
