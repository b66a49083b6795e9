#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "featsim/error.hpp"
#include "featsim/metrics.hpp"

using namespace featsim;
using namespace featsim::metrics;

namespace {

BinaryMask random_mask(std::size_t h, std::size_t w, double fill, std::mt19937_64& rng, Spacing s = {}) {
    BinaryMask m(h, w, s);
    std::bernoulli_distribution b(fill);
    for (auto& v : m.bits) v = b(rng) ? 1 : 0;
    return m;
}

// Random union of axis-aligned boxes: blob-like shapes with long surfaces.
BinaryMask random_blobs(std::size_t h, std::size_t w, std::mt19937_64& rng, Spacing s) {
    BinaryMask m(h, w, s);
    const std::size_t n = 1 + rng() % 4;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t y0 = rng() % h, x0 = rng() % w;
        const std::size_t y1 = std::min(h, y0 + 1 + rng() % (h / 2)), x1 = std::min(w, x0 + 1 + rng() % (w / 2));
        for (std::size_t y = y0; y < y1; ++y)
            for (std::size_t x = x0; x < x1; ++x) m.set(y, x);
    }
    return m;
}

}  // namespace

TEST(Dsc, HandCases) {
    BinaryMask a(4, 4), b(4, 4);
    for (std::size_t x = 0; x < 4; ++x) a.set(0, x);
    EXPECT_EQ(dsc(a, a), 1.0);
    for (std::size_t x = 0; x < 4; ++x) b.set(3, x);
    EXPECT_EQ(dsc(a, b), 0.0);
    BinaryMask c(4, 4);
    c.set(0, 0);
    c.set(0, 1);
    c.set(1, 0);
    c.set(1, 1);
    EXPECT_EQ(dsc(a, c), 0.5);
    EXPECT_EQ(dsc(BinaryMask(3, 3), BinaryMask(3, 3)), 1.0);
    EXPECT_THROW(dsc(a, BinaryMask(3, 4)), PreconditionError);
}

TEST(Surface, Examples) {
    BinaryMask one(5, 5);
    one.set(2, 2);
    EXPECT_EQ(extract_surface(one), (std::vector<Pixel>{{2, 2}}));

    BinaryMask sq(5, 5);
    for (std::size_t y = 1; y < 4; ++y)
        for (std::size_t x = 1; x < 4; ++x) sq.set(y, x);
    const auto s = extract_surface(sq);
    EXPECT_EQ(s.size(), 8u);
    EXPECT_EQ(std::count(s.begin(), s.end(), Pixel{2, 2}), 0);

    EXPECT_TRUE(extract_surface(BinaryMask(5, 5)).empty());

    // Pixels on the image border count as surface.
    BinaryMask full(3, 3);
    for (auto& v : full.bits) v = 1;
    EXPECT_EQ(extract_surface(full).size(), 8u);
}

TEST(Assd, HandCases) {
    BinaryMask a(5, 8), b(5, 8);
    a.set(2, 1);
    b.set(2, 4);
    EXPECT_DOUBLE_EQ(*assd(a, b), 3.0);
    EXPECT_DOUBLE_EQ(*assd_brute_force(a, b), 3.0);
    EXPECT_EQ(*assd(a, a), 0.0);

    BinaryMask ah(5, 8, {1.0, 0.5}), bh(5, 8, {1.0, 0.5});
    ah.set(2, 1);
    bh.set(2, 4);
    EXPECT_DOUBLE_EQ(*assd(ah, bh), 1.5);
}

TEST(Assd, EmptyMaskIsUndefined) {
    BinaryMask a(4, 4), b(4, 4);
    a.set(1, 1);
    EXPECT_FALSE(assd(a, b).has_value());
    EXPECT_FALSE(assd(b, a).has_value());
    EXPECT_FALSE(assd_brute_force(b, b).has_value());
}

TEST(Assd, FastPathMatchesBruteForce) {
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> sp(0.3, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t h = 2 + rng() % 31, w = 2 + rng() % 31;
        const Spacing s{sp(rng), sp(rng)};
        const bool blobs = trial % 2 == 0;
        const BinaryMask a = blobs ? random_blobs(h, w, rng, s) : random_mask(h, w, 0.2, rng, s);
        const BinaryMask b = blobs ? random_blobs(h, w, rng, s) : random_mask(h, w, 0.2, rng, s);
        const auto fast = assd(a, b), slow = assd_brute_force(a, b);
        ASSERT_EQ(fast.has_value(), slow.has_value());
        if (fast) {
            EXPECT_NEAR(*fast, *slow, 1e-6) << h << "x" << w;
        }
    }
}

TEST(Assd, DistanceTransformMatchesBruteForce) {
    std::mt19937_64 rng(4);
    const BinaryMask m = random_mask(9, 13, 0.1, rng, {0.7, 1.3});
    const auto dt = squared_distance_transform(m);
    for (std::size_t y = 0; y < 9; ++y)
        for (std::size_t x = 0; x < 13; ++x) {
            double best = INFINITY;
            for (std::size_t v = 0; v < 9; ++v)
                for (std::size_t u = 0; u < 13; ++u)
                    if (m.at(v, u)) {
                        const double dy = (double(y) - double(v)) * 0.7, dx = (double(x) - double(u)) * 1.3;
                        best = std::min(best, dy * dy + dx * dx);
                    }
            EXPECT_NEAR(dt[y * 13 + x], best, 1e-9);
        }
}

TEST(Metrics, Symmetry) {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 30; ++trial) {
        const BinaryMask a = random_mask(12, 12, 0.3, rng), b = random_mask(12, 12, 0.3, rng);
        EXPECT_EQ(dsc(a, b), dsc(b, a));
        const auto ab = assd(a, b), ba = assd(b, a);
        ASSERT_EQ(ab.has_value(), ba.has_value());
        if (ab) {
            EXPECT_NEAR(*ab, *ba, 1e-12);
            EXPECT_GE(*ab, 0.0);
        }
        const double d = dsc(a, b);
        EXPECT_GE(d, 0.0);
        EXPECT_LE(d, 1.0);
    }
}

TEST(Metrics, DilationAwayFromTruthDoesNotIncreaseDsc) {
    BinaryMask gt(16, 16);
    for (std::size_t y = 5; y < 10; ++y)
        for (std::size_t x = 5; x < 10; ++x) gt.set(y, x);
    BinaryMask pred = gt;
    double prev = dsc(pred, gt);
    EXPECT_EQ(prev, 1.0);
    for (int ring = 0; ring < 4; ++ring) {
        BinaryMask grown = pred;
        for (std::size_t y = 0; y < 16; ++y)
            for (std::size_t x = 0; x < 16; ++x)
                if (pred.at(y, x)) {
                    if (y > 0) grown.set(y - 1, x);
                    if (y < 15) grown.set(y + 1, x);
                    if (x > 0) grown.set(y, x - 1);
                    if (x < 15) grown.set(y, x + 1);
                }
        pred = grown;
        const double d = dsc(pred, gt);
        EXPECT_LE(d, prev);
        prev = d;
    }
}

TEST(Evaluate, PerfectPrediction) {
    LabelMap m(6, 6);
    for (std::size_t i = 0; i < 36; ++i) m.labels[i] = static_cast<std::uint8_t>(i % 3);
    const auto cases = evaluate_case(m, m, {}, {1, 2}, 3, 0);
    ASSERT_EQ(cases.size(), 2u);
    for (const auto& c : cases) {
        EXPECT_EQ(c.dsc, 1.0);
        ASSERT_TRUE(c.assd.has_value());
        EXPECT_EQ(*c.assd, 0.0);
    }
    EXPECT_THROW(evaluate_case(m, m, {}, {3}, 3, 0), PreconditionError);
}

TEST(Evaluate, AbsentClassConvention) {
    LabelMap m(4, 4);
    m.labels[0] = 1;
    const auto cases = evaluate_case(m, m, {}, {1, 2}, 3, 7);
    EXPECT_EQ(cases[1].dsc, 1.0);
    EXPECT_FALSE(cases[1].assd.has_value());
    const auto report = aggregate(cases, {1, 2});
    EXPECT_EQ(report.per_class[1].assd.n, 0u);
    EXPECT_EQ(report.overall.assd.n, 1u);
}

TEST(Aggregate, PopulationStd) {
    const auto s = mean_std({0.8, 1.0});
    EXPECT_NEAR(s.mean, 0.9, 1e-12);
    EXPECT_NEAR(s.std, 0.1, 1e-12);
    EXPECT_EQ(format_mean_std(MeanStd{0.946, 0.015, 2}, 1, 100.0), "94.6±1.5");
}

TEST(Aggregate, CsvLayout) {
    std::vector<CaseResult> cases{{0, 1, 0.8, 2.0}, {1, 1, 1.0, std::nullopt}};
    const std::string csv = report_csv(aggregate(cases, {1}));
    EXPECT_EQ(csv.rfind("case,class,dsc,assd\n", 0), 0u);
    EXPECT_NE(csv.find("0,1,80.000,2.0000\n"), std::string::npos);
    EXPECT_NE(csv.find("1,1,100.000,\n"), std::string::npos);
    EXPECT_NE(csv.find("mean±std,1,90.0±10.0,2.00±0.00"), std::string::npos);
}

TEST(BinaryMaskTest, SpacingMustBePositive) {
    EXPECT_THROW(BinaryMask(2, 2, {0.0, 1.0}), PreconditionError);
    EXPECT_THROW(BinaryMask(2, 2, {1.0, -1.0}), PreconditionError);
}
