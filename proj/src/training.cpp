#include "featsim/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "featsim/adam.hpp"
#include "featsim/error.hpp"
#include "featsim/ops.hpp"

namespace featsim {

void TrainConfig::validate() const {
    FEATSIM_REQUIRE(noise_p >= 0.0 && noise_p < 1.0, "TrainConfig: noise_p must be in [0, 1)");
    FEATSIM_REQUIRE(xi >= 0.0f, "TrainConfig: xi must be >= 0");
    FEATSIM_REQUIRE(k_folds >= 2, "TrainConfig: k_folds must be >= 2");
    FEATSIM_REQUIRE(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    FEATSIM_REQUIRE(lr > 0.0f, "TrainConfig: lr must be positive");
    FEATSIM_REQUIRE(dice_eps > 0.0f, "TrainConfig: dice_eps must be positive");
}

Var dice_loss(const Var& probs, const Tensor& target, float eps) {
    FEATSIM_REQUIRE(probs.shape() == target.shape(), "dice_loss: probs " + shape_to_string(probs.shape()) +
                                                         " vs target " + shape_to_string(target.shape()));
    FEATSIM_REQUIRE(probs.shape().size() == 3, "dice_loss: expected (K, H, W)");
    const std::size_t k = probs.shape()[0], hw = probs.shape()[1] * probs.shape()[2];
    const Tensor& p = probs.value();
    std::vector<double> inter(k, 0.0), denom(k, 0.0);
    double score = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        double i_sum = 0.0, s_sum = 0.0;
        for (std::size_t j = 0; j < hw; ++j) {
            const double pv = p[c * hw + j], gv = target[c * hw + j];
            i_sum += pv * gv;
            s_sum += pv + gv;
        }
        inter[c] = 2.0 * i_sum + eps;
        denom[c] = s_sum + eps;
        score += inter[c] / denom[c];
    }
    const double loss = 1.0 - score / static_cast<double>(k);
    auto fn = [k, hw, target, inter = std::move(inter), denom = std::move(denom)](const Tensor& g,
                                                                                std::span<const NodePtr> ps) {
        Tensor* gp = grad_sink(ps[0]);
        if (!gp) return;
        const double scale = -static_cast<double>(g[0]) / static_cast<double>(k);
        for (std::size_t c = 0; c < k; ++c) {
            const double d2 = denom[c] * denom[c];
            for (std::size_t j = 0; j < hw; ++j) {
                const double gv = target[c * hw + j];
                (*gp)[c * hw + j] += static_cast<float>(scale * (2.0 * gv * denom[c] - inter[c]) / d2);
            }
        }
    };
    return make_result(Tensor::scalar(static_cast<float>(loss)), {probs}, std::move(fn));
}

LabelMap corrupt_gt(const LabelMap& mask, double p, std::mt19937_64& rng) {
    FEATSIM_REQUIRE(p >= 0.0 && p < 1.0, "corrupt_gt: p must be in [0, 1)");
    LabelMap out = mask;
    if (p == 0.0) return out;
    std::bernoulli_distribution flip(p);
    for (auto& c : out.labels)
        if (c != 0 && flip(rng)) c = 0;
    return out;
}

std::string LossCurve::to_csv() const {
    std::ostringstream os;
    os << "epoch,stage,loss,fsm_distance\n";
    char buf[64];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof buf, "%.9g", r.loss);
        os << r.epoch << ',' << r.stage << ',' << buf << ',';
        if (r.fsm_distance) {
            std::snprintf(buf, sizeof buf, "%.9g", *r.fsm_distance);
            os << buf;
        }
        os << '\n';
    }
    return os.str();
}

void LossCurve::write_csv(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw RuntimeError("cannot write " + path.string());
    f << to_csv();
}

std::uint64_t derive_seed(std::uint64_t seed, SeedStream stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(stream) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace {

struct StepLoss {
    Var objective;  // what gets differentiated
    double fsm_distance = std::numeric_limits<double>::quiet_NaN();
};

// Mini-batch Adam over shuffled samples. `step(i)` builds the objective for
// sample i; gradients of a batch are averaged before the update.
template <class StepFn>
void run_epochs(const std::string& stage, std::size_t n, const TrainConfig& config, std::uint64_t order_seed,
                const std::vector<Parameter*>& params, StepFn&& step, LossCurve* curve) {
    FEATSIM_REQUIRE(n > 0, stage + ": no training samples");
    Adam adam(AdamOptions{config.lr});
    std::mt19937_64 order_rng(order_seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), order_rng);
        double loss_sum = 0.0, fsm_sum = 0.0;
        bool has_fsm = false;
        for (std::size_t b0 = 0; b0 < n; b0 += config.batch_size) {
            const std::size_t b1 = std::min(n, b0 + config.batch_size);
            zero_grad(params);
            const float inv = 1.0f / static_cast<float>(b1 - b0);
            for (std::size_t i = b0; i < b1; ++i) {
                StepLoss s = step(order[i]);
                const double v = s.objective.value()[0];
                if (!std::isfinite(v))
                    throw RuntimeError(stage + ": non-finite loss " + std::to_string(v) + " at epoch " +
                                       std::to_string(epoch + 1) + ", sample " + std::to_string(order[i]));
                loss_sum += v;
                if (!std::isnan(s.fsm_distance)) {
                    has_fsm = true;
                    fsm_sum += s.fsm_distance;
                }
                backward(ops::scale(s.objective, inv));
            }
            adam.step(params);
        }
        if (curve) {
            EpochRecord r{epoch + 1, stage, loss_sum / static_cast<double>(n), std::nullopt};
            if (has_fsm) r.fsm_distance = fsm_sum / static_cast<double>(n);
            curve->records.push_back(std::move(r));
        }
    }
}

std::vector<Tensor> one_hot_targets(const std::vector<Sample>& pairs, std::size_t k) {
    std::vector<Tensor> out;
    out.reserve(pairs.size());
    for (const auto& s : pairs) out.push_back(one_hot(s.mask, k));
    return out;
}

void require_pairs(const std::vector<Sample>& pairs, const UNetConfig& arch, const char* stage) {
    FEATSIM_REQUIRE(!pairs.empty(), std::string(stage) + ": no training pairs");
    for (const auto& s : pairs)
        FEATSIM_REQUIRE(s.image.ndim() == 3 && s.image.dim(0) == arch.in_channels,
                        std::string(stage) + ": image channels do not match the network input");
}

UNet train_segmenter(const std::vector<Sample>& pairs, const UNet* n_gt, FsmParams* fsm_out, const UNetConfig& arch,
                     const TrainConfig& config, const char* stage, LossCurve* curve) {
    config.validate();
    require_pairs(pairs, arch, stage);
    UNet n_ct = UNet::build(arch, derive_seed(config.seed, SeedStream::ct_init));
    const auto targets = one_hot_targets(pairs, arch.num_classes);
    std::vector<Parameter*> params = n_ct.parameters();

    if (!n_gt) {
        run_epochs(stage, pairs.size(), config, derive_seed(config.seed, SeedStream::stage2_order), params,
                   [&](std::size_t i) {
                       const auto out = n_ct.forward(pairs[i].image);
                       return StepLoss{dice_loss(out.probs, targets[i], config.dice_eps)};
                   },
                   curve);
        return n_ct;
    }

    // N_GT is frozen, so its bottleneck for each mask is computed once.
    std::vector<Tensor> gt_features;
    {
        NoGradGuard no_grad;
        for (const auto& t : targets) gt_features.push_back(n_gt->encode(constant(t)).bottleneck().value());
    }
    const std::size_t h = pairs.front().image.dim(1), w = pairs.front().image.dim(2);
    *fsm_out = build_fsm(FsmConfig::from_shapes(n_ct.bottleneck_shape(h, w), gt_features.front().shape()),
                         derive_seed(config.seed, SeedStream::fsm_init));
    const auto fsm_params = fsm_out->parameters();
    params.insert(params.end(), fsm_params.begin(), fsm_params.end());

    run_epochs(stage, pairs.size(), config, derive_seed(config.seed, SeedStream::stage2_order), params,
               [&](std::size_t i) {
                   const auto out = n_ct.forward(pairs[i].image);
                   const Var seg = dice_loss(out.probs, targets[i], config.dice_eps);
                   const auto m = fsm_forward(out.features.bottleneck(), gt_features[i], *fsm_out);
                   return StepLoss{ops::add(seg, ops::scale(m.distance, config.xi)), m.distance.value()[0]};
               },
               curve);
    return n_ct;
}

}  // namespace

UNet train_stage1(const std::vector<LabelMap>& gt_masks, UNetConfig arch, const TrainConfig& config, LossCurve* curve) {
    config.validate();
    FEATSIM_REQUIRE(!gt_masks.empty(), "stage1: no training masks");
    arch.in_channels = arch.num_classes;
    UNet n_gt = UNet::build(arch, derive_seed(config.seed, SeedStream::gt_init));
    std::vector<Tensor> targets;
    for (const auto& m : gt_masks) targets.push_back(one_hot(m, arch.num_classes));
    const double p = config.no_noise ? 0.0 : config.noise_p;
    std::mt19937_64 noise_rng(derive_seed(config.seed, SeedStream::noise));
    run_epochs("stage1", gt_masks.size(), config, derive_seed(config.seed, SeedStream::stage1_order),
               n_gt.parameters(),
               [&](std::size_t i) {
                   const Tensor input = p > 0.0 ? one_hot(corrupt_gt(gt_masks[i], p, noise_rng), arch.num_classes)
                                                : targets[i];
                   const auto out = n_gt.forward(input);
                   return StepLoss{dice_loss(out.probs, targets[i], config.dice_eps)};
               },
               curve);
    return n_gt;
}

Stage2Result train_stage2(const std::vector<Sample>& pairs, const UNet& n_gt, const UNetConfig& arch,
                          const TrainConfig& config, LossCurve* curve) {
    FEATSIM_REQUIRE(n_gt.config().num_classes == arch.num_classes, "stage2: N_GT and N_CT class counts differ");
    FsmParams fsm;
    UNet n_ct = train_segmenter(pairs, &n_gt, &fsm, arch, config, "stage2", curve);
    return Stage2Result{std::move(n_ct), std::move(fsm)};
}

UNet train_plain(const std::vector<Sample>& pairs, const UNetConfig& arch, const TrainConfig& config, LossCurve* curve) {
    return train_segmenter(pairs, nullptr, nullptr, arch, config, "plain", curve);
}

UNet train_stage3_refine(const UNet& n_ct, const UNet& n_gt, const std::vector<Sample>& pairs,
                         const TrainConfig& config, LossCurve* curve) {
    config.validate();
    require_pairs(pairs, n_ct.config(), "stage3");
    UNet refined = transplant_decoder(n_ct, n_gt);
    refined.set_encoder_trainable(false);
    const auto targets = one_hot_targets(pairs, refined.config().num_classes);

    // The encoder is frozen: its features are fixed for the whole stage.
    std::vector<EncoderFeatures> features;
    features.reserve(pairs.size());
    for (const auto& s : pairs) features.push_back(refined.encode(constant(s.image)));

    run_epochs("stage3", pairs.size(), config, derive_seed(config.seed, SeedStream::stage3_order),
               refined.decoder_parameters(),
               [&](std::size_t i) {
                   return StepLoss{dice_loss(refined.decode(features[i]), targets[i], config.dice_eps)};
               },
               curve);
    refined.set_encoder_trainable(true);
    return refined;
}

JointResult train_joint(const std::vector<Sample>& pairs, const UNetConfig& arch, const TrainConfig& config,
                        LossCurve* curve) {
    config.validate();
    require_pairs(pairs, arch, "joint");
    UNetConfig gt_arch = arch;
    gt_arch.in_channels = arch.num_classes;
    UNet n_gt = UNet::build(gt_arch, derive_seed(config.seed, SeedStream::gt_init));
    UNet n_ct = UNet::build(arch, derive_seed(config.seed, SeedStream::ct_init));
    const auto targets = one_hot_targets(pairs, arch.num_classes);
    const std::size_t h = pairs.front().image.dim(1), w = pairs.front().image.dim(2);
    FsmParams fsm = build_fsm(FsmConfig::from_shapes(n_ct.bottleneck_shape(h, w), n_gt.bottleneck_shape(h, w)),
                              derive_seed(config.seed, SeedStream::fsm_init));

    std::vector<Parameter*> params = n_gt.parameters();
    for (auto* p : n_ct.parameters()) params.push_back(p);
    for (auto* p : fsm.parameters()) params.push_back(p);

    const double p = config.no_noise ? 0.0 : config.noise_p;
    std::mt19937_64 noise_rng(derive_seed(config.seed, SeedStream::noise));
    run_epochs("joint", pairs.size(), config, derive_seed(config.seed, SeedStream::joint_order), params,
               [&](std::size_t i) {
                   const Tensor input = p > 0.0 ? one_hot(corrupt_gt(pairs[i].mask, p, noise_rng), arch.num_classes)
                                                : targets[i];
                   const auto gt_out = n_gt.forward(input);
                   const auto ct_out = n_ct.forward(pairs[i].image);
                   // The FSM reads N_GT's bottleneck as a constant, as in stage 2.
                   const auto m = fsm_forward(ct_out.features.bottleneck(), gt_out.features.bottleneck().value(), fsm);
                   const Var recon = dice_loss(gt_out.probs, targets[i], config.dice_eps);
                   const Var seg = dice_loss(ct_out.probs, targets[i], config.dice_eps);
                   return StepLoss{ops::add(ops::add(recon, seg), ops::scale(m.distance, config.xi)),
                                   m.distance.value()[0]};
               },
               curve);
    return JointResult{std::move(n_gt), std::move(n_ct), std::move(fsm)};
}

double mean_dice_loss(const UNet& net, const std::vector<Sample>& pairs, float eps) {
    NoGradGuard no_grad;
    double total = 0.0;
    for (const auto& s : pairs) {
        const Tensor input = net.config().in_channels == s.image.dim(0) ? s.image : one_hot(s.mask, net.config().num_classes);
        total += dice_loss(net.forward(input).probs, one_hot(s.mask, net.config().num_classes), eps).value()[0];
    }
    return total / static_cast<double>(pairs.size());
}

LabelMap predict(const UNet& net, const Tensor& image) {
    NoGradGuard no_grad;
    return argmax_channels(net.forward(image).probs.value());
}

std::vector<metrics::CaseResult> evaluate_network(const UNet& net, const std::vector<Sample>& samples,
                                                  const std::vector<std::size_t>& case_ids, metrics::Spacing spacing) {
    FEATSIM_REQUIRE(samples.size() == case_ids.size(), "evaluate_network: one case id per sample required");
    const std::size_t k = net.config().num_classes;
    std::vector<std::uint8_t> classes;
    for (std::size_t c = 1; c < k; ++c) classes.push_back(static_cast<std::uint8_t>(c));
    std::vector<metrics::CaseResult> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto r = metrics::evaluate_case(predict(net, samples[i].image), samples[i].mask, spacing, classes, k,
                                              case_ids[i]);
        out.insert(out.end(), r.begin(), r.end());
    }
    return out;
}

}  // namespace featsim
