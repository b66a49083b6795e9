#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "featsim/dataset.hpp"
#include "featsim/error.hpp"
#include "featsim/label_map.hpp"
#include "featsim/ops.hpp"
#include "featsim/phantom.hpp"
#include "featsim/training.hpp"

using namespace featsim;
namespace fs = std::filesystem;

namespace {

std::vector<Sample> phantoms(std::size_t n, std::size_t size, std::uint64_t seed) {
    std::vector<Sample> out;
    for (std::size_t i = 0; i < n; ++i) {
        auto p = generate_phantom(sample_seed(seed, i), size, size, difficulty_preset("easy"));
        out.push_back({p.image, p.mask});
    }
    return out;
}

std::vector<LabelMap> masks_of(const std::vector<Sample>& s) {
    std::vector<LabelMap> m;
    for (const auto& x : s) m.push_back(x.mask);
    return m;
}

TrainConfig small_config(std::size_t epochs) {
    TrainConfig c;
    c.epochs = epochs;
    c.batch_size = 2;
    c.seed = 5;
    return c;
}

const UNetConfig kArch{1, 4, 2, 4};

}  // namespace

TEST(CorruptGt, FlipRateAndIdentity) {
    LabelMap m(100, 100, 1);
    std::mt19937_64 rng(1);
    const LabelMap c = corrupt_gt(m, 0.2, rng);
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (c.labels[i] != m.labels[i]) {
            ++flipped;
            EXPECT_EQ(c.labels[i], 0);
        }
    }
    EXPECT_NEAR(static_cast<double>(flipped) / 10000.0, 0.2, 0.02);

    LabelMap mixed(10, 10);
    for (std::size_t i = 0; i < 100; ++i) mixed.labels[i] = static_cast<std::uint8_t>(i % 4);
    EXPECT_EQ(corrupt_gt(mixed, 0.0, rng), mixed);
    EXPECT_THROW(corrupt_gt(mixed, 1.5, rng), PreconditionError);
}

TEST(CorruptGt, BackgroundNeverFlips) {
    LabelMap m(20, 20, 0);
    std::mt19937_64 rng(3);
    EXPECT_EQ(corrupt_gt(m, 0.9, rng), m);
}

TEST(TrainConfigTest, Validation) {
    TrainConfig c;
    EXPECT_NO_THROW(c.validate());
    c.noise_p = -0.1;
    EXPECT_THROW(c.validate(), PreconditionError);
    c = {};
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), PreconditionError);
    c = {};
    c.lr = 0.0f;
    EXPECT_THROW(c.validate(), PreconditionError);
}

TEST(DeriveSeed, StreamsDiffer) {
    EXPECT_NE(derive_seed(1, SeedStream::ct_init), derive_seed(1, SeedStream::gt_init));
    EXPECT_EQ(derive_seed(1, SeedStream::noise), derive_seed(1, SeedStream::noise));
}

TEST(Stage1, LossDecreasesAndStaysFinite) {
    const auto data = phantoms(50, 32, 1);
    TrainConfig cfg = small_config(20);
    cfg.batch_size = 4;
    LossCurve curve;
    train_stage1(masks_of(data), UNetConfig{1, 4, 2, 8}, cfg, &curve);
    ASSERT_EQ(curve.records.size(), 20u);
    for (const auto& r : curve.records) {
        EXPECT_TRUE(std::isfinite(r.loss));
        EXPECT_EQ(r.stage, "stage1");
        EXPECT_FALSE(r.fsm_distance.has_value());
    }
    EXPECT_LT(curve.records.back().loss, curve.records.front().loss);
}

TEST(Stage1, CopyTaskWithoutNoiseIsLearned) {
    const auto data = phantoms(4, 32, 2);
    TrainConfig cfg = small_config(100);
    cfg.lr = 3e-3f;
    cfg.no_noise = true;
    const UNet net = train_stage1(masks_of(data), UNetConfig{1, 4, 2, 8}, cfg);
    double mean = 0;
    for (const auto& s : data) {
        const LabelMap pred = predict(net, one_hot(s.mask, 4));
        for (std::uint8_t c = 1; c < 4; ++c)
            mean += metrics::dsc(metrics::BinaryMask::from_labels(pred, c), metrics::BinaryMask::from_labels(s.mask, c));
    }
    mean /= 12.0;
    EXPECT_GT(mean, 0.99);
}

TEST(Stage1, Deterministic) {
    const auto data = phantoms(4, 16, 3);
    const TrainConfig cfg = small_config(2);
    const UNet a = train_stage1(masks_of(data), kArch, cfg);
    const UNet b = train_stage1(masks_of(data), kArch, cfg);
    EXPECT_EQ(hash_parameters(a.parameters()), hash_parameters(b.parameters()));
}

TEST(Stage2, LeavesGtNetworkUntouchedAndLogsDistance) {
    const auto data = phantoms(4, 16, 4);
    const TrainConfig cfg = small_config(2);
    UNetConfig gt_arch = kArch;
    gt_arch.in_channels = 4;
    const UNet n_gt = UNet::build(gt_arch, 1);
    const auto before = hash_parameters(n_gt.parameters());
    LossCurve curve;
    const auto r = train_stage2(data, n_gt, kArch, cfg, &curve);
    EXPECT_EQ(hash_parameters(n_gt.parameters()), before);
    ASSERT_EQ(curve.records.size(), 2u);
    for (const auto& rec : curve.records) {
        ASSERT_TRUE(rec.fsm_distance.has_value());
        EXPECT_GE(*rec.fsm_distance, 0.0);
    }
    EXPECT_EQ(r.fsm.config, FsmConfig::from_shapes(n_gt.bottleneck_shape(16, 16), r.n_ct.bottleneck_shape(16, 16)));
}

TEST(Stage2, XiZeroEqualsPlainTraining) {
    const auto data = phantoms(4, 16, 5);
    TrainConfig cfg = small_config(3);
    cfg.xi = 0.0f;
    UNetConfig gt_arch = kArch;
    gt_arch.in_channels = 4;
    const UNet n_gt = UNet::build(gt_arch, 1);
    const auto staged = train_stage2(data, n_gt, kArch, cfg);
    const UNet plain = train_plain(data, kArch, cfg);
    EXPECT_EQ(hash_parameters(staged.n_ct.parameters()), hash_parameters(plain.parameters()));
}

TEST(Stage3, FreezesEncoderAndStartsFromGtDecoder) {
    const auto data = phantoms(4, 16, 6);
    TrainConfig cfg = small_config(2);
    UNetConfig gt_arch = kArch;
    gt_arch.in_channels = 4;
    const UNet n_gt = UNet::build(gt_arch, 1);
    const UNet n_ct = UNet::build(kArch, 2);

    const UNet start = transplant_decoder(n_ct, n_gt);
    EXPECT_EQ(hash_parameters(start.decoder_parameters()), hash_parameters(n_gt.decoder_parameters()));

    const auto enc_before = hash_parameters(n_ct.encoder_parameters());
    const UNet refined = train_stage3_refine(n_ct, n_gt, data, cfg);
    EXPECT_EQ(hash_parameters(refined.encoder_parameters()), enc_before);
    EXPECT_NE(hash_parameters(refined.decoder_parameters()), hash_parameters(n_gt.decoder_parameters()));
    for (const auto* p : refined.parameters()) EXPECT_TRUE(p->trainable()) << p->name();
}

TEST(Joint, TrainsAllThreeModules) {
    const auto data = phantoms(4, 16, 7);
    const TrainConfig cfg = small_config(2);
    LossCurve curve;
    const auto r = train_joint(data, kArch, cfg, &curve);
    EXPECT_EQ(r.n_gt.config().in_channels, 4u);
    EXPECT_EQ(curve.records.size(), 2u);
    for (const auto& rec : curve.records) EXPECT_TRUE(std::isfinite(rec.loss));
}

TEST(LossCurveCsv, Layout) {
    LossCurve c;
    c.records.push_back({1, "stage1", 0.5, std::nullopt});
    c.records.push_back({1, "stage2", 0.25, 0.125});
    const std::string csv = c.to_csv();
    EXPECT_EQ(csv.rfind("epoch,stage,loss,fsm_distance\n", 0), 0u);
    EXPECT_NE(csv.find("1,stage1,"), std::string::npos);
    EXPECT_NE(csv.find("1,stage2,"), std::string::npos);
}

TEST(Pipeline, SmallRunWritesArtifacts) {
    const fs::path dir = fs::temp_directory_path() / ("featsim_pipe_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    const auto ds = generate_dataset(dir / "data", 6, 3, 16, 16, difficulty_preset("easy"), 3);
    TrainConfig cfg = small_config(1);
    cfg.k_folds = 3;
    PipelineOptions opt;
    opt.folds = {0};
    opt.out_dir = dir / "run";
    const auto art = run_pipeline(ds, kArch, cfg, opt);
    ASSERT_EQ(art.folds.size(), 1u);
    const auto& f = art.folds[0];
    ASSERT_TRUE(f.n_gt && f.fsm && f.n_ct_stage2 && f.n_ct_stage3);
    EXPECT_TRUE(fs::exists(*f.n_ct_stage3 / "manifest.json"));
    EXPECT_TRUE(fs::exists(dir / "run" / "fold_0" / "losses.csv"));
    EXPECT_TRUE(fs::exists(dir / "run" / "metrics.csv"));
    EXPECT_EQ(f.held_out.size(), 2u * 3u);

    cfg.k_folds = 4;
    EXPECT_THROW(run_pipeline(ds, kArch, cfg, opt), PreconditionError);
    fs::remove_all(dir);
}

TEST(DiceLossTraining, PerfectAndSwappedPredictions) {
    LabelMap m(64, 64);
    for (std::size_t i = 0; i < m.size(); ++i) m.labels[i] = static_cast<std::uint8_t>((i / 7) % 3);
    const Tensor y = one_hot(m, 3);
    EXPECT_LE(dice_loss(constant(y), y, 1.0f).value()[0], 1e-6f);

    // Every pixel is class 1; the prediction says class 0 everywhere.
    const Tensor target = one_hot(LabelMap(8, 8, 1), 2);
    const Tensor swapped = one_hot(LabelMap(8, 8, 0), 2);
    const double n = 64.0, eps = 1.0;
    EXPECT_NEAR(dice_loss(constant(swapped), target, 1.0f).value()[0], 1.0 - eps / (n + eps), 1e-6);
}

TEST(Stage2, ObjectiveIsLinearCombination) {
    const Var total = ops::add(constant(Tensor::scalar(0.2f)), ops::scale(constant(Tensor::scalar(1.0f)), 0.3f));
    EXPECT_FLOAT_EQ(total.value()[0], 0.5f);
}

TEST(Stage2, XiZeroLossCurveMatchesPlain) {
    const auto data = phantoms(4, 16, 8);
    TrainConfig cfg = small_config(3);
    cfg.xi = 0.0f;
    UNetConfig gt_arch = kArch;
    gt_arch.in_channels = 4;
    LossCurve staged, plain;
    train_stage2(data, UNet::build(gt_arch, 1), kArch, cfg, &staged);
    train_plain(data, kArch, cfg, &plain);
    ASSERT_EQ(staged.records.size(), plain.records.size());
    for (std::size_t i = 0; i < staged.records.size(); ++i) EXPECT_EQ(staged.records[i].loss, plain.records[i].loss);
}

TEST(Stage3, TrainingLossDoesNotIncrease) {
    const auto data = phantoms(8, 32, 9);
    TrainConfig cfg = small_config(10);
    cfg.batch_size = 4;
    const UNetConfig ct_arch{1, 4, 2, 8};
    const UNet n_gt = train_stage1(masks_of(data), ct_arch, cfg);
    const UNet n_ct = train_stage2(data, n_gt, ct_arch, cfg).n_ct;
    const double before = mean_dice_loss(transplant_decoder(n_ct, n_gt), data, cfg.dice_eps);
    const UNet refined = train_stage3_refine(n_ct, n_gt, data, cfg);
    EXPECT_LE(mean_dice_loss(refined, data, cfg.dice_eps), before);
}
