#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "featsim/error.hpp"
#include "featsim/fsm.hpp"
#include "featsim/reference.hpp"

using namespace featsim;
namespace fs = std::filesystem;

namespace {

Tensor random_map(const Shape& s, std::mt19937_64& rng, float lo = 0.0f, float hi = 1.0f) {
    Tensor t(s);
    for (auto& v : t.data()) v = std::uniform_real_distribution<float>(lo, hi)(rng);
    return t;
}

}  // namespace

TEST(Fsm, ZeroInputZeroBiasGivesZeroDistance) {
    FsmParams p = build_fsm(FsmConfig::from_shapes(Shape{4, 8, 8}, Shape{4, 8, 8}), 3);
    for (auto* q : p.parameters())
        if (q->value().ndim() == 1) q->mutable_value().fill(0.0f);
    const auto r = fsm_forward(constant(Tensor::zeros(Shape{4, 8, 8})), Tensor::zeros(Shape{4, 8, 8}), p);
    EXPECT_EQ(r.distance.value()[0], 0.0f);
    EXPECT_EQ(r.similarity, 1.0f);
}

TEST(Fsm, ShapeAdaptation) {
    const FsmParams p = build_fsm(FsmConfig::from_shapes(Shape{8, 16, 16}, Shape{16, 32, 32}), 1);
    std::mt19937_64 rng(1);
    const auto r = fsm_forward(constant(random_map(Shape{8, 16, 16}, rng)), random_map(Shape{16, 32, 32}, rng), p);
    EXPECT_EQ(r.adjusted.shape(), (Shape{16, 32, 32}));
}

TEST(Fsm, ParameterCount) {
    const FsmConfig c = FsmConfig::from_shapes(Shape{8, 16, 16}, Shape{16, 32, 32});
    // adjust 8->16, chanstat 16->16, spatstat 16->1, reduce 32->16, all 3x3.
    const std::size_t want = (16 * 8 * 9 + 16) + (16 * 16 * 9 + 16) + (16 * 9 + 1) + (16 * 32 * 9 + 16);
    EXPECT_EQ(fsm_parameter_count(c), want);
    EXPECT_EQ(build_fsm(c, 0).parameter_count(), want);
}

TEST(Fsm, DistanceAndSimilarityRanges) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 25; ++trial) {
        const Shape ct{2 + static_cast<std::size_t>(trial % 3), 4, 4}, gt{3, 8, 8};
        const FsmParams p = build_fsm(FsmConfig::from_shapes(ct, gt), rng());
        const auto r = fsm_forward(constant(random_map(ct, rng, -2, 2)), random_map(gt, rng, -2, 2), p);
        const float d = r.distance.value()[0];
        EXPECT_GE(d, 0.0f);
        EXPECT_GT(r.similarity, 0.0f);
        EXPECT_LE(r.similarity, 1.0f);
        EXPECT_NEAR(r.similarity, 1.0 / (1.0 + d), 1e-6);
    }
}

TEST(Fsm, DeterministicPerSeed) {
    const FsmConfig c = FsmConfig::from_shapes(Shape{2, 4, 4}, Shape{3, 4, 4});
    std::mt19937_64 rng(9);
    const Tensor a = random_map(Shape{2, 4, 4}, rng), b = random_map(Shape{3, 4, 4}, rng);
    const float d1 = fsm_forward(constant(a), b, build_fsm(c, 4)).distance.value()[0];
    const float d2 = fsm_forward(constant(a), b, build_fsm(c, 4)).distance.value()[0];
    EXPECT_EQ(d1, d2);
}

TEST(Fsm, GradientReachesCtFeaturesOnly) {
    const FsmParams p = build_fsm(FsmConfig::from_shapes(Shape{2, 4, 4}, Shape{3, 4, 4}), 2);
    std::mt19937_64 rng(2);
    Var ct = leaf(random_map(Shape{2, 4, 4}, rng));
    backward(fsm_forward(ct, random_map(Shape{3, 4, 4}, rng), p).distance);
    EXPECT_EQ(ct.grad().shape(), (Shape{2, 4, 4}));
}

TEST(Fsm, ShapeMismatchThrows) {
    const FsmParams p = build_fsm(FsmConfig::from_shapes(Shape{2, 4, 4}, Shape{3, 4, 4}), 2);
    EXPECT_THROW(fsm_forward(constant(Tensor(Shape{3, 4, 4})), Tensor(Shape{3, 4, 4}), p), PreconditionError);
    EXPECT_THROW(fsm_forward(constant(Tensor(Shape{2, 4, 4})), Tensor(Shape{3, 8, 8}), p), PreconditionError);
}

TEST(Fsm, SaveLoadRoundTrip) {
    const fs::path dir = fs::temp_directory_path() / ("featsim_fsm_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    const FsmParams p = build_fsm(FsmConfig::from_shapes(Shape{2, 4, 4}, Shape{3, 8, 8}), 2);
    p.save(dir);
    const FsmParams q = FsmParams::load(dir);
    EXPECT_EQ(q.config, p.config);
    const auto pp = p.parameters(), qp = q.parameters();
    ASSERT_EQ(pp.size(), qp.size());
    for (std::size_t i = 0; i < pp.size(); ++i) EXPECT_TRUE(pp[i]->value().bit_equal(qp[i]->value()));
    fs::remove_all(dir);
}

TEST(Fsm, DistanceMatchesDoubleReference) {
    std::mt19937_64 rng(13);
    for (const auto& [ct, gt] : {std::pair{Shape{2, 4, 4}, Shape{3, 4, 4}}, std::pair{Shape{8, 16, 16}, Shape{16, 32, 32}}}) {
        FsmParams p = build_fsm(FsmConfig::from_shapes(ct, gt), rng());
        for (auto* q : p.parameters())
            if (q->value().ndim() == 1) q->mutable_value().fill(0.05f);
        const Tensor a = random_map(ct, rng), b = random_map(gt, rng);
        const double want = reference::fsm_distance(a, b, p);
        EXPECT_NEAR(fsm_forward(constant(a), b, p).distance.value()[0], want, 1e-5 * std::max(1.0, want));
    }
}
