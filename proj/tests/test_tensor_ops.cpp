#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "featsim/error.hpp"
#include "featsim/ops.hpp"

using namespace featsim;

namespace {

Tensor random_tensor(const Shape& s, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    Tensor t(s);
    for (auto& v : t.data()) v = d(rng);
    return t;
}

// Direct "same"-padded cross-correlation, accumulated in double.
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b) {
    const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const std::size_t cout = w.dim(0), k = w.dim(2);
    const long pad = static_cast<long>(k / 2);
    Tensor y(Shape{cout, h, wd});
    for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < wd; ++j) {
                double acc = b[o];
                for (std::size_t c = 0; c < cin; ++c)
                    for (std::size_t u = 0; u < k; ++u)
                        for (std::size_t v = 0; v < k; ++v) {
                            const long yy = static_cast<long>(i + u) - pad, xx = static_cast<long>(j + v) - pad;
                            if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(wd)) continue;
                            acc += static_cast<double>(w[((o * cin + c) * k + u) * k + v]) *
                                   x.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
                        }
                y.at(o, i, j) = static_cast<float>(acc);
            }
    return y;
}

}  // namespace

TEST(Conv2d, MatchesDirectConvolution) {
    std::mt19937_64 rng(7);
    for (std::size_t k : {1u, 3u})
        for (std::size_t trial = 0; trial < 5; ++trial) {
            const std::size_t cin = 1 + trial % 3, cout = 2 + trial, h = 5 + trial, w = 9 - trial;
            Tensor x = random_tensor(Shape{cin, h, w}, rng);
            Tensor wt = random_tensor(Shape{cout, cin, k, k}, rng);
            Tensor b = random_tensor(Shape{cout}, rng);
            const Tensor got = ops::conv2d(constant(x), constant(wt), constant(b)).value();
            const Tensor want = conv_oracle(x, wt, b);
            ASSERT_EQ(got.shape(), want.shape());
            for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got[i], want[i], 1e-5);
        }
}

TEST(Conv2d, ZeroKernelGivesBias) {
    Tensor x(Shape{2, 4, 4}, 3.0f);
    Tensor w = Tensor::zeros(Shape{3, 2, 3, 3});
    Tensor b(Shape{3}, std::vector<float>{0.5f, -1.0f, 2.0f});
    const Tensor y = ops::conv2d(constant(x), constant(w), constant(b)).value();
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(y[c * 16 + i], b[c]);
}

TEST(Conv2d, RejectsChannelMismatchAndEvenKernel) {
    Tensor x(Shape{2, 4, 4});
    EXPECT_THROW(ops::conv2d(constant(x), constant(Tensor(Shape{1, 3, 3, 3})), constant(Tensor(Shape{1}))),
                 PreconditionError);
    EXPECT_THROW(ops::conv2d(constant(x), constant(Tensor(Shape{1, 2, 2, 2})), constant(Tensor(Shape{1}))),
                 PreconditionError);
}

TEST(Relu, Examples) {
    const Tensor y = ops::relu(constant(Tensor(Shape{3}, std::vector<float>{-1.0f, 0.0f, 2.0f}))).value();
    EXPECT_EQ(y[0], 0.0f);
    EXPECT_EQ(y[1], 0.0f);
    EXPECT_EQ(y[2], 2.0f);
}

TEST(Softmax, UniformLogits) {
    const Tensor y = ops::softmax_channels(constant(Tensor(Shape{2, 1, 1}, 0.0f))).value();
    EXPECT_FLOAT_EQ(y[0], 0.5f);
    EXPECT_FLOAT_EQ(y[1], 0.5f);
}

TEST(Softmax, SumsToOneAndIsStableForLargeLogits) {
    std::mt19937_64 rng(3);
    Tensor x = random_tensor(Shape{4, 3, 5}, rng);
    x[0] = 1000.0f;
    const Tensor y = ops::softmax_channels(constant(x)).value();
    ASSERT_TRUE(y.all_finite());
    for (std::size_t p = 0; p < 15; ++p) {
        double s = 0;
        for (std::size_t c = 0; c < 4; ++c) s += y[c * 15 + p];
        EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

TEST(MaxPool, Example) {
    const Tensor x(Shape{1, 2, 2}, std::vector<float>{1, 3, 2, 4});
    const Tensor y = ops::maxpool2x2(constant(x)).value();
    ASSERT_EQ(y.shape(), (Shape{1, 1, 1}));
    EXPECT_EQ(y[0], 4.0f);
}

TEST(MaxPool, OddSizeThrows) {
    EXPECT_THROW(ops::maxpool2x2(constant(Tensor(Shape{1, 3, 4}))), PreconditionError);
}

TEST(MaxPool, GradientRoutesToArgmax) {
    Var x = leaf(Tensor(Shape{1, 2, 2}, std::vector<float>{1, 3, 2, 4}));
    backward(ops::sum(ops::maxpool2x2(x)));
    const Tensor g = x.grad();
    EXPECT_EQ(g[0], 0.0f);
    EXPECT_EQ(g[1], 0.0f);
    EXPECT_EQ(g[2], 0.0f);
    EXPECT_EQ(g[3], 1.0f);
}

TEST(Upsample, RepeatsEachPixel) {
    const Tensor x(Shape{1, 1, 2}, std::vector<float>{1, 2});
    const Tensor y = ops::upsample2x(constant(x)).value();
    ASSERT_EQ(y.shape(), (Shape{1, 2, 4}));
    const std::vector<float> want{1, 1, 2, 2, 1, 1, 2, 2};
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(y[i], want[i]);
}

TEST(NearestInterpolate, Examples) {
    const Tensor one(Shape{1, 1, 1}, 5.0f);
    const Tensor y = ops::nearest_interpolate(constant(one), 3, 3).value();
    for (auto v : y.data()) EXPECT_EQ(v, 5.0f);

    const Tensor x(Shape{1, 2, 2}, std::vector<float>{1, 2, 3, 4});
    const Tensor up = ops::nearest_interpolate(constant(x), 4, 4).value();
    const Tensor ref = ops::upsample2x(constant(x)).value();
    EXPECT_TRUE(up.bit_equal(ref));

    const Tensor same = ops::nearest_interpolate(constant(x), 2, 2).value();
    EXPECT_TRUE(same.bit_equal(x));
}

TEST(NearestInterpolate, Downsample) {
    Tensor x(Shape{1, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) x[i] = static_cast<float>(i);
    const Tensor y = ops::nearest_interpolate(constant(x), 2, 2).value();
    const std::vector<float> want{0, 2, 8, 10};
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(y[i], want[i]);
}

TEST(Concat, StacksChannels) {
    const Tensor a(Shape{1, 1, 2}, std::vector<float>{1, 2});
    const Tensor b(Shape{2, 1, 2}, std::vector<float>{3, 4, 5, 6});
    const Tensor y = ops::concat_channels(constant(a), constant(b)).value();
    ASSERT_EQ(y.shape(), (Shape{3, 1, 2}));
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(y[i], static_cast<float>(i + 1));
    EXPECT_THROW(ops::concat_channels(constant(a), constant(Tensor(Shape{1, 2, 2}))), PreconditionError);
}

TEST(GlobalAvgPool, Mean) {
    const Tensor x(Shape{2, 1, 2}, std::vector<float>{1, 3, -2, 2});
    const Tensor y = ops::global_avg_pool(constant(x)).value();
    ASSERT_EQ(y.shape(), (Shape{2}));
    EXPECT_EQ(y[0], 2.0f);
    EXPECT_EQ(y[1], 0.0f);
}

TEST(ShapeChecks, ElementwiseMismatchThrows) {
    EXPECT_THROW(ops::add(constant(Tensor(Shape{2})), constant(Tensor(Shape{3}))), PreconditionError);
    EXPECT_THROW(ops::mean_squared_difference(constant(Tensor(Shape{2})), constant(Tensor(Shape{3}))),
                 PreconditionError);
}
