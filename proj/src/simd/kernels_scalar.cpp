// Reference kernels. Plain loops, no intrinsics; every vector variant is
// tested against these.

#include <cmath>

#include "featsim/simd/kernels.hpp"

namespace featsim::simd {
namespace {

void gemm_scalar(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
                 std::size_t ldb, float* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        float* crow = c + i * ldc;
        for (std::size_t p = 0; p < k; ++p) {
            const float aip = a[i * lda + p];
            const float* brow = b + p * ldb;
            for (std::size_t j = 0; j < n; ++j) crow[j] = std::fma(aip, brow[j], crow[j]);
        }
    }
}

void axpy_scalar(std::size_t n, float alpha, const float* x, float* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

float dot_scalar(std::size_t n, const float* x, const float* y) {
    float s = 0.0f;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

void relu_forward_scalar(std::size_t n, const float* x, float* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_scalar(std::size_t n, const float* y, const float* gy, float* gx) {
    for (std::size_t i = 0; i < n; ++i)
        if (y[i] > 0.0f) gx[i] += gy[i];
}

void adam_update_scalar(std::size_t n, float* theta, float* m, float* v, const float* g, const AdamCoeffs& c) {
    const float one_minus_b1 = 1.0f - c.beta1;
    const float one_minus_b2 = 1.0f - c.beta2;
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = c.beta1 * m[i] + one_minus_b1 * g[i];
        v[i] = c.beta2 * v[i] + one_minus_b2 * (g[i] * g[i]);
        const float m_hat = m[i] / c.bias_correction1;
        const float v_hat = v[i] / c.bias_correction2;
        theta[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
}

constexpr KernelTable kScalar{
    "scalar",      &gemm_scalar,          &axpy_scalar, &dot_scalar, &relu_forward_scalar, &relu_backward_scalar,
    &adam_update_scalar,
};

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

}  // namespace featsim::simd
