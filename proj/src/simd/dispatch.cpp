#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>

#include "featsim/simd/kernels.hpp"

namespace featsim::simd {

#if defined(FEATSIM_HAVE_AVX2)
namespace detail {
extern const KernelTable kAvx2Table;
}
#endif

const KernelTable* avx2_kernels() {
#if defined(FEATSIM_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? &detail::kAvx2Table : nullptr;
#else
    return nullptr;
#endif
}

std::vector<const KernelTable*> available_kernels() {
    std::vector<const KernelTable*> out{&scalar_kernels()};
    if (const auto* t = avx2_kernels()) out.push_back(t);
    return out;
}

namespace {

const KernelTable* choose_default() {
    const char* env = std::getenv("FEATSIM_SIMD");
    const std::string want = env ? env : "";
    if (want == "scalar") return &scalar_kernels();
    if (const auto* t = avx2_kernels()) return t;
    return &scalar_kernels();
}

const KernelTable*& active_slot() {
    static const KernelTable* slot = choose_default();
    return slot;
}

std::size_t& thread_slot() {
    static std::size_t n = [] {
        const char* env = std::getenv("FEATSIM_THREADS");
        if (!env) return std::size_t{1};
        const long v = std::strtol(env, nullptr, 10);
        return v > 0 ? static_cast<std::size_t>(v) : std::size_t{1};
    }();
    return n;
}

}  // namespace

const KernelTable& active_kernels() { return *active_slot(); }
void set_active_kernels(const KernelTable& table) { active_slot() = &table; }

std::size_t thread_count() { return thread_slot(); }
void set_thread_count(std::size_t n) { thread_slot() = n > 0 ? n : 1; }

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
          std::size_t ldb, float* c, std::size_t ldc) {
    const auto& kt = active_kernels();
    const std::size_t workers = thread_count();
    // Below this much work the spawn cost dominates.
    if (workers <= 1 || m < 8 || m * n * k < (1u << 18)) {
        kt.gemm(m, n, k, a, lda, b, ldb, c, ldc);
        return;
    }
    // Chunks are multiples of 4 rows so tiles line up with the serial run.
    const std::size_t tiles = (m + 3) / 4;
    const std::size_t per = (tiles + workers - 1) / workers;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t r0 = w * per * 4;
        if (r0 >= m) break;
        const std::size_t rows = std::min(per * 4, m - r0);
        pool.emplace_back([=, &kt] { kt.gemm(rows, n, k, a + r0 * lda, lda, b, ldb, c + r0 * ldc, ldc); });
    }
    for (auto& t : pool) t.join();
}

}  // namespace featsim::simd
