#pragma once

// Inner-loop kernels with interchangeable implementations.
//
// Every variant is reached through a KernelTable. The scalar table is the
// reference; vector tables are selected at runtime when the CPU supports
// them (override with FEATSIM_SIMD=scalar|avx2). GEMM accumulates each
// output element with fused multiply-adds in increasing k order, so all
// variants agree bit for bit on it; reductions (dot) use lane-parallel
// partial sums and agree only to rounding.

#include <cstddef>
#include <string_view>
#include <vector>

namespace featsim::simd {

struct AdamCoeffs {
    float lr;
    float beta1;
    float beta2;
    float eps;
    float bias_correction1;  // 1 - beta1^t
    float bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
    std::string_view name;

    // C[M,N] += A[M,K] * B[K,N]; leading dimensions in elements.
    void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
                 std::size_t ldb, float* c, std::size_t ldc);
    // y += alpha * x
    void (*axpy)(std::size_t n, float alpha, const float* x, float* y);
    float (*dot)(std::size_t n, const float* x, const float* y);
    // y = max(x, 0)
    void (*relu_forward)(std::size_t n, const float* x, float* y);
    // gx += gy where y > 0
    void (*relu_backward)(std::size_t n, const float* y, const float* gy, float* gx);
    void (*adam_update)(std::size_t n, float* theta, float* m, float* v, const float* g, const AdamCoeffs& c);
};

const KernelTable& scalar_kernels();
/// nullptr when the build has no AVX2 variant or the CPU lacks AVX2+FMA.
const KernelTable* avx2_kernels();

/// Every table usable on this machine, reference first.
std::vector<const KernelTable*> available_kernels();

/// The table used by tensor ops. Chosen once from FEATSIM_SIMD and CPU features.
const KernelTable& active_kernels();
/// Override the active table (tests, benchmarking). Not thread-safe.
void set_active_kernels(const KernelTable& table);

/// Worker count for intra-op parallelism, from FEATSIM_THREADS (default 1).
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Dispatching GEMM that splits rows across thread_count() workers.
/// Row partitioning never changes per-element accumulation order, so the
/// result is independent of the thread count.
void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
          std::size_t ldb, float* c, std::size_t ldc);

}  // namespace featsim::simd
