#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "featsim/error.hpp"
#include "featsim/label_map.hpp"
#include "featsim/ops.hpp"
#include "featsim/reference.hpp"
#include "featsim/training.hpp"
#include "featsim/unet.hpp"

using namespace featsim;
namespace fs = std::filesystem;

namespace {

Tensor random_image(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Tensor x(Shape{c, h, w});
    for (auto& v : x.data()) v = std::uniform_real_distribution<float>(0, 1)(rng);
    return x;
}

std::size_t count_params(const std::vector<const Parameter*>& ps) {
    std::size_t n = 0;
    for (const auto* p : ps) n += p->value().numel();
    return n;
}

fs::path temp_dir(const std::string& tag) {
    const fs::path d = fs::temp_directory_path() / ("featsim_unet_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(d);
    return d;
}

}  // namespace

TEST(UNet, ParameterCountSmallConfig) {
    const UNetConfig cfg{1, 2, 1, 4};
    EXPECT_EQ(unet_parameter_count(cfg), 1810u);
    const UNet net = UNet::build(cfg, 0);
    EXPECT_EQ(net.parameter_count(), 1810u);
    EXPECT_EQ(count_params(net.parameters()), 1810u);
    EXPECT_EQ(count_params(net.encoder_parameters()) + count_params(net.decoder_parameters()), 1810u);
}

TEST(UNet, ParameterCountMatchesLayerSum) {
    for (std::size_t depth : {1u, 2u, 3u})
        for (std::size_t base : {2u, 8u}) {
            const UNetConfig cfg{4, 4, depth, base};
            const UNet net = UNet::build(cfg, 1);
            EXPECT_EQ(count_params(net.parameters()), unet_parameter_count(cfg));
        }
}

TEST(UNet, BottleneckShape) {
    const UNet net = UNet::build(UNetConfig{1, 4, 3, 8}, 3);
    EXPECT_EQ(net.bottleneck_shape(64, 64), (Shape{64, 8, 8}));
    const auto out = net.forward(random_image(1, 64, 64, 1));
    EXPECT_EQ(out.features.bottleneck().shape(), (Shape{64, 8, 8}));
    EXPECT_EQ(out.probs.shape(), (Shape{4, 64, 64}));
}

TEST(UNet, OutputIsDistributionPerPixel) {
    const UNet net = UNet::build(UNetConfig{1, 4, 2, 4}, 3);
    const Tensor p = net.forward(random_image(1, 16, 16, 2)).probs.value();
    for (std::size_t i = 0; i < 256; ++i) {
        double s = 0;
        for (std::size_t c = 0; c < 4; ++c) {
            EXPECT_GE(p[c * 256 + i], 0.0f);
            s += p[c * 256 + i];
        }
        EXPECT_NEAR(s, 1.0, 1e-5);
    }
}

TEST(UNet, DeterministicBuildAndForward) {
    const UNetConfig cfg{1, 4, 2, 4};
    const UNet a = UNet::build(cfg, 17), b = UNet::build(cfg, 17), c = UNet::build(cfg, 18);
    EXPECT_EQ(hash_parameters(a.parameters()), hash_parameters(b.parameters()));
    EXPECT_NE(hash_parameters(a.parameters()), hash_parameters(c.parameters()));
    const Tensor x = random_image(1, 16, 16, 3);
    EXPECT_TRUE(a.forward(x).probs.value().bit_equal(b.forward(x).probs.value()));
}

TEST(UNet, BiasesStartAtZero) {
    const UNet net = UNet::build(UNetConfig{1, 4, 2, 4}, 5);
    for (const auto* p : net.parameters())
        if (p->value().ndim() == 1) {
            for (auto v : p->value().data()) EXPECT_EQ(v, 0.0f) << p->name();
        }
}

TEST(UNet, RejectsIndivisibleInput) {
    const UNet net = UNet::build(UNetConfig{1, 4, 3, 4}, 5);
    EXPECT_THROW(net.forward(random_image(1, 20, 20, 1)), PreconditionError);
    EXPECT_THROW(net.forward(random_image(2, 16, 16, 1)), PreconditionError);
}

TEST(Transplant, CopiesDecoderKeepsEncoder) {
    const UNetConfig ct{1, 4, 2, 4}, gt{4, 4, 2, 4};
    const UNet dst = UNet::build(ct, 1), src = UNet::build(gt, 2);
    const UNet out = transplant_decoder(dst, src);
    EXPECT_EQ(hash_parameters(out.encoder_parameters()), hash_parameters(dst.encoder_parameters()));
    EXPECT_EQ(hash_parameters(out.decoder_parameters()), hash_parameters(src.decoder_parameters()));
}

TEST(Transplant, MismatchedArchitecturesThrow) {
    const UNet dst = UNet::build(UNetConfig{1, 4, 2, 4}, 1);
    EXPECT_THROW(transplant_decoder(dst, UNet::build(UNetConfig{4, 4, 3, 4}, 1)), PreconditionError);
    EXPECT_THROW(transplant_decoder(dst, UNet::build(UNetConfig{4, 4, 2, 8}, 1)), PreconditionError);
    EXPECT_THROW(transplant_decoder(dst, UNet::build(UNetConfig{4, 3, 2, 4}, 1)), PreconditionError);
}

TEST(Checkpoint, SaveLoadRoundTrip) {
    const fs::path dir = temp_dir("rt");
    const UNet net = UNet::build(UNetConfig{4, 4, 2, 4}, 11);
    net.save(dir);
    const UNet back = UNet::load(dir);
    EXPECT_EQ(back.config(), net.config());
    EXPECT_EQ(hash_parameters(back.parameters()), hash_parameters(net.parameters()));
    const Tensor x = random_image(4, 16, 16, 4);
    EXPECT_TRUE(back.forward(x).probs.value().bit_equal(net.forward(x).probs.value()));
    fs::remove_all(dir);
}

TEST(Checkpoint, EditedShapeIsRejected) {
    const fs::path dir = temp_dir("edit");
    UNet::build(UNetConfig{1, 4, 1, 4}, 11).save(dir);
    nlohmann::json j;
    std::ifstream(dir / "manifest.json") >> j;
    j["parameters"][0]["shape"][0] = 5;
    std::ofstream(dir / "manifest.json") << j.dump(2);
    EXPECT_THROW(UNet::load(dir), RuntimeError);
    fs::remove_all(dir);
}

TEST(Checkpoint, MissingDirectoryIsRuntimeError) {
    EXPECT_THROW(UNet::load("/nonexistent/featsim_ckpt"), RuntimeError);
}

TEST(DiceLoss, Examples) {
    LabelMap m(2, 2);
    m.labels = {0, 1, 1, 0};
    const Tensor y = one_hot(m, 2);
    EXPECT_NEAR(dice_loss(constant(y), y, 1.0f).value()[0], 0.0, 1e-7);
    // Swapped prediction: per class (0 + 1) / (2 + 2 + 1) = 0.2.
    const Tensor swapped = one_hot(LabelMap{2, 2, 0}, 2);
    LabelMap inv(2, 2);
    inv.labels = {1, 0, 0, 1};
    EXPECT_NEAR(dice_loss(constant(one_hot(inv, 2)), y, 1.0f).value()[0], 0.8, 1e-6);
    EXPECT_THROW(dice_loss(constant(swapped), one_hot(m, 3), 1.0f), PreconditionError);
}

TEST(DiceLoss, BoundedForValidProbabilities) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor logits(Shape{3, 6, 6});
        for (auto& v : logits.data()) v = std::normal_distribution<float>(0, 2)(rng);
        const Tensor p = ops::softmax_channels(constant(logits)).value();
        LabelMap m(6, 6);
        for (auto& v : m.labels) v = static_cast<std::uint8_t>(rng() % 3);
        const float l = dice_loss(constant(p), one_hot(m, 3), 1.0f).value()[0];
        EXPECT_GE(l, 0.0f);
        EXPECT_LE(l, 1.0f);
    }
}

TEST(UNet, ForwardMatchesDoubleReference) {
    for (std::size_t depth : {1u, 2u}) {
        const UNet net = UNet::build(UNetConfig{1, 3, depth, 4}, 21 + depth);
        const Tensor x = random_image(1, 16, 16, depth);
        const Tensor got = net.forward(x).probs.value();
        const auto want = reference::unet_probs(net, x);
        ASSERT_EQ(got.numel(), want.v.size());
        for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got[i], want.v[i], 1e-5);
    }
}
