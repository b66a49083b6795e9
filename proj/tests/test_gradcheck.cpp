#include <gtest/gtest.h>

#include "featsim/gradcheck.hpp"

using namespace featsim;

TEST(GradCheck, EveryOpMatchesFiniteDifferences) {
    gradcheck::SuiteOptions opt;
    opt.seed = 11;
    opt.seeds = 5;
    opt.sizes = {4, 8};
    const auto entries = gradcheck::run_suite(opt);
    ASSERT_EQ(entries.size(), gradcheck::suite_ops().size());
    for (const auto& e : entries) {
        EXPECT_TRUE(e.passed) << e.op << " rel error " << e.max_rel_error;
        EXPECT_LE(e.max_rel_error, 1e-3) << e.op;
        EXPECT_EQ(e.runs, 10u);
    }
}

TEST(GradCheck, DetectsCorruptedGradient) {
    gradcheck::SuiteOptions opt;
    opt.seed = 2;
    opt.seeds = 1;
    opt.sizes = {4};
    opt.corrupt_op = "conv2d_3x3";
    opt.check.corrupt_factor = 1.01;
    for (const auto& e : gradcheck::run_suite(opt)) {
        if (e.op == "conv2d_3x3")
            EXPECT_FALSE(e.passed);
        else
            EXPECT_TRUE(e.passed) << e.op;
    }
}
