#pragma once

// Three-stage training: (1) a denoising autoencoder N_GT on GT masks,
// (2) the segmenter N_CT with the FSM feature-consistency term on the
// bottleneck, (3) decoder transplant from N_GT and decoder fine-tuning.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "featsim/dataset.hpp"
#include "featsim/fsm.hpp"
#include "featsim/label_map.hpp"
#include "featsim/metrics.hpp"
#include "featsim/unet.hpp"

namespace featsim {

struct TrainConfig {
    float lr = 3e-4f;
    std::size_t epochs = 100;  // per stage
    double noise_p = 0.2;
    float xi = 0.3f;
    std::size_t batch_size = 4;
    std::uint64_t seed = 0;
    std::size_t k_folds = 5;
    bool joint_train = false;
    bool no_refine = false;
    bool no_noise = false;
    float dice_eps = 1.0f;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// Soft multi-class Dice loss
///   1 - (1/K) sum_k (2 sum p_k g_k + eps) / (sum p_k + sum g_k + eps).
Var dice_loss(const Var& probs, const Tensor& target_onehot, float eps);

/// Each foreground pixel independently becomes background with probability p.
LabelMap corrupt_gt(const LabelMap& mask, double p, std::mt19937_64& rng);

struct EpochRecord {
    std::size_t epoch = 0;
    std::string stage;
    double loss = 0.0;
    std::optional<double> fsm_distance;
    bool operator==(const EpochRecord&) const = default;
};

struct LossCurve {
    std::vector<EpochRecord> records;

    /// epoch,stage,loss,fsm_distance (empty field when the stage has no FSM term).
    std::string to_csv() const;
    void write_csv(const std::filesystem::path& path) const;
};

/// Stream seeds derived from the run seed, one per purpose.
enum class SeedStream : std::uint64_t {
    gt_init = 1,
    ct_init = 2,
    fsm_init = 3,
    stage1_order = 11,
    stage2_order = 12,
    stage3_order = 13,
    joint_order = 14,
    noise = 21,
};
std::uint64_t derive_seed(std::uint64_t seed, SeedStream stream);

/// Stage 1. `arch.in_channels` is replaced by the class count.
UNet train_stage1(const std::vector<LabelMap>& gt_masks, UNetConfig arch, const TrainConfig& config,
                  LossCurve* curve = nullptr);

struct Stage2Result {
    UNet n_ct;
    FsmParams fsm;
};

/// Stage 2: minimizes dice(N_CT(x), y) + xi * fsm_distance over N_CT and
/// FSM parameters. `n_gt` is only read. `arch.in_channels` must match the images.
Stage2Result train_stage2(const std::vector<Sample>& pairs, const UNet& n_gt, const UNetConfig& arch,
                          const TrainConfig& config, LossCurve* curve = nullptr);

/// Plain segmenter training with the same initialization and sample order
/// as stage 2, without the FSM term.
UNet train_plain(const std::vector<Sample>& pairs, const UNetConfig& arch, const TrainConfig& config,
                 LossCurve* curve = nullptr);

/// Stage 3: transplants N_GT's decoder into N_CT and fine-tunes decoder and
/// head with the encoder frozen.
UNet train_stage3_refine(const UNet& n_ct, const UNet& n_gt, const std::vector<Sample>& pairs,
                         const TrainConfig& config, LossCurve* curve = nullptr);

struct JointResult {
    UNet n_gt;
    UNet n_ct;
    FsmParams fsm;
};

/// Joint-Train ablation: one phase minimizing dice(N_GT recon) + dice(N_CT)
/// + xi * fsm_distance over all three parameter sets.
JointResult train_joint(const std::vector<Sample>& pairs, const UNetConfig& arch, const TrainConfig& config,
                        LossCurve* curve = nullptr);

/// Mean dice_loss of a network over samples (no gradients).
double mean_dice_loss(const UNet& net, const std::vector<Sample>& pairs, float eps);

/// Argmax segmentation of an image.
LabelMap predict(const UNet& net, const Tensor& image);

/// Per-case DSC/ASSD of a network over held-out samples, organ classes 1..K-1.
std::vector<metrics::CaseResult> evaluate_network(const UNet& net, const std::vector<Sample>& samples,
                                                  const std::vector<std::size_t>& case_ids, metrics::Spacing spacing);

enum class PipelineMode {
    full,   // stages 1 -> 2 -> 3, honouring the ablation flags
    plain,  // baseline segmenter only
};

struct FoldArtifacts {
    std::size_t fold = 0;
    std::filesystem::path dir;
    std::optional<std::filesystem::path> n_gt;
    std::optional<std::filesystem::path> fsm;
    std::optional<std::filesystem::path> n_ct_stage2;
    std::optional<std::filesystem::path> n_ct_stage3;
    std::optional<std::filesystem::path> n_ct_plain;
    LossCurve losses;
    std::vector<metrics::CaseResult> held_out;
    /// Held-out results of the stage-2 network, i.e. the No-Refine reading
    /// of a full run.
    std::vector<metrics::CaseResult> held_out_stage2;
};

struct PipelineArtifacts {
    std::vector<FoldArtifacts> folds;
    metrics::ClassReport report;          // final network per fold
    metrics::ClassReport report_stage2;   // stage-2 network per fold (empty for plain)
};

struct PipelineOptions {
    PipelineMode mode = PipelineMode::full;
    std::vector<std::size_t> folds;  // empty = all
    std::filesystem::path out_dir;   // empty = keep everything in memory
};

/// Runs the requested mode on every selected fold: train on the other
/// folds, evaluate the held-out one.
PipelineArtifacts run_pipeline(const DatasetManifest& dataset, const UNetConfig& arch, const TrainConfig& config,
                               const PipelineOptions& options);

}  // namespace featsim
