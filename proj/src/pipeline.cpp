#include <numeric>

#include "featsim/error.hpp"
#include "featsim/training.hpp"

namespace featsim {

namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> organ_classes(std::size_t k) {
    std::vector<std::uint8_t> out;
    for (std::size_t c = 1; c < k; ++c) out.push_back(static_cast<std::uint8_t>(c));
    return out;
}

FoldArtifacts run_fold(const DatasetManifest& dataset, const std::vector<Sample>& all, std::size_t fold,
                       const UNetConfig& arch, const TrainConfig& config, const PipelineOptions& options) {
    FoldArtifacts fa;
    fa.fold = fold;
    const bool persist = !options.out_dir.empty();
    if (persist) {
        fa.dir = options.out_dir / ("fold_" + std::to_string(fold));
        fs::create_directories(fa.dir);
    }

    const auto train_ids = fold_complement(dataset, fold);
    const auto test_ids = fold_members(dataset, fold);
    std::vector<Sample> train, test;
    for (auto i : train_ids) train.push_back(all[i]);
    for (auto i : test_ids) test.push_back(all[i]);
    const metrics::Spacing spacing{dataset.spacing_y, dataset.spacing_x};

    auto save_net = [&](const UNet& net, const char* name, std::optional<fs::path>& slot) {
        if (!persist) return;
        slot = fa.dir / name;
        net.save(*slot);
    };

    if (options.mode == PipelineMode::plain) {
        const UNet net = train_plain(train, arch, config, &fa.losses);
        save_net(net, "n_ct_plain", fa.n_ct_plain);
        fa.held_out = evaluate_network(net, test, test_ids, spacing);
    } else {
        UNet n_gt;
        UNet n_ct;
        if (config.joint_train) {
            auto joint = train_joint(train, arch, config, &fa.losses);
            n_gt = std::move(joint.n_gt);
            n_ct = std::move(joint.n_ct);
            if (persist) {
                fa.fsm = fa.dir / "fsm";
                joint.fsm.save(*fa.fsm);
            }
        } else {
            std::vector<LabelMap> masks;
            for (const auto& s : train) masks.push_back(s.mask);
            n_gt = train_stage1(masks, arch, config, &fa.losses);
            auto s2 = train_stage2(train, n_gt, arch, config, &fa.losses);
            n_ct = std::move(s2.n_ct);
            if (persist) {
                fa.fsm = fa.dir / "fsm";
                s2.fsm.save(*fa.fsm);
            }
        }
        save_net(n_gt, "n_gt", fa.n_gt);
        save_net(n_ct, "n_ct_stage2", fa.n_ct_stage2);
        fa.held_out_stage2 = evaluate_network(n_ct, test, test_ids, spacing);
        if (config.no_refine) {
            fa.held_out = fa.held_out_stage2;
        } else {
            const UNet refined = train_stage3_refine(n_ct, n_gt, train, config, &fa.losses);
            save_net(refined, "n_ct_stage3", fa.n_ct_stage3);
            fa.held_out = evaluate_network(refined, test, test_ids, spacing);
        }
    }
    if (persist) {
        fa.losses.write_csv(fa.dir / "losses.csv");
        metrics::write_report_csv(metrics::aggregate(fa.held_out, organ_classes(arch.num_classes)),
                                  fa.dir / "metrics.csv");
    }
    return fa;
}

}  // namespace

PipelineArtifacts run_pipeline(const DatasetManifest& dataset, const UNetConfig& arch, const TrainConfig& config,
                               const PipelineOptions& options) {
    config.validate();
    arch.validate();
    FEATSIM_REQUIRE(arch.num_classes == dataset.num_classes, "run_pipeline: network and dataset class counts differ");
    FEATSIM_REQUIRE(config.k_folds == dataset.k_folds, "run_pipeline: config k_folds " + std::to_string(config.k_folds) +
                                                           " differs from the dataset split (" +
                                                           std::to_string(dataset.k_folds) + ")");
    const std::size_t div = std::size_t{1} << arch.depth;
    FEATSIM_REQUIRE(dataset.height % div == 0 && dataset.width % div == 0,
                    "run_pipeline: image size must be divisible by 2^depth = " + std::to_string(div));

    std::vector<std::size_t> folds = options.folds;
    if (folds.empty()) {
        folds.resize(dataset.k_folds);
        std::iota(folds.begin(), folds.end(), std::size_t{0});
    }
    for (auto f : folds) FEATSIM_REQUIRE(f < dataset.k_folds, "run_pipeline: fold " + std::to_string(f) + " out of range");

    const auto all = load_samples(dataset);
    PipelineArtifacts out;
    std::vector<metrics::CaseResult> final_cases, stage2_cases;
    for (auto f : folds) {
        auto fa = run_fold(dataset, all, f, arch, config, options);
        final_cases.insert(final_cases.end(), fa.held_out.begin(), fa.held_out.end());
        stage2_cases.insert(stage2_cases.end(), fa.held_out_stage2.begin(), fa.held_out_stage2.end());
        out.folds.push_back(std::move(fa));
    }
    const auto classes = organ_classes(arch.num_classes);
    out.report = metrics::aggregate(std::move(final_cases), classes);
    out.report_stage2 = metrics::aggregate(std::move(stage2_cases), classes);
    if (!options.out_dir.empty()) metrics::write_report_csv(out.report, options.out_dir / "metrics.csv");
    return out;
}

}  // namespace featsim
