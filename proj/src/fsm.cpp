#include "featsim/fsm.hpp"

#include <random>

#include <json.hpp>

#include "featsim/checkpoint.hpp"
#include "featsim/error.hpp"
#include "featsim/ops.hpp"

namespace featsim {

using nlohmann::json;

void FsmConfig::validate() const {
    FEATSIM_REQUIRE(ct_channels > 0 && ct_height > 0 && ct_width > 0, "FsmConfig: CT feature extents must be positive");
    FEATSIM_REQUIRE(gt_channels > 0 && gt_height > 0 && gt_width > 0, "FsmConfig: GT feature extents must be positive");
}

FsmConfig FsmConfig::from_shapes(const Shape& ct, const Shape& gt) {
    FEATSIM_REQUIRE(ct.size() == 3 && gt.size() == 3, "FsmConfig: feature maps must be (C, H, W)");
    FsmConfig c{ct[0], ct[1], ct[2], gt[0], gt[1], gt[2]};
    c.validate();
    return c;
}

std::size_t fsm_parameter_count(const FsmConfig& c) {
    return conv_param_count(c.ct_channels, c.gt_channels, 3) + conv_param_count(c.gt_channels, c.gt_channels, 3) +
           conv_param_count(c.gt_channels, 1, 3) + conv_param_count(2 * c.gt_channels, c.gt_channels, 3);
}

FsmParams build_fsm(const FsmConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    const std::size_t c = config.gt_channels;
    auto adjust = Conv2dLayer::make("fsm.adjust", config.ct_channels, c, 3, rng);
    auto chanstat = Conv2dLayer::make("fsm.chanstat", c, c, 3, rng);
    auto spatstat = Conv2dLayer::make("fsm.spatstat", c, 1, 3, rng);
    auto reduce = Conv2dLayer::make("fsm.reduce", 2 * c, c, 3, rng);
    return FsmParams{config, std::move(adjust), std::move(chanstat), std::move(spatstat), std::move(reduce)};
}

std::vector<Parameter*> FsmParams::parameters() {
    return {&adjust.weight, &adjust.bias, &chanstat.weight, &chanstat.bias,
            &spatstat.weight, &spatstat.bias, &reduce.weight, &reduce.bias};
}

std::vector<const Parameter*> FsmParams::parameters() const {
    auto v = const_cast<FsmParams*>(this)->parameters();
    return {v.begin(), v.end()};
}

std::size_t FsmParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->value().numel();
    return n;
}

void FsmParams::save(const std::filesystem::path& dir) const {
    const json cfg{{"ct_channels", config.ct_channels}, {"ct_height", config.ct_height},
                   {"ct_width", config.ct_width},       {"gt_channels", config.gt_channels},
                   {"gt_height", config.gt_height},     {"gt_width", config.gt_width}};
    checkpoint::save(dir, "fsm", cfg, parameters());
}

FsmParams FsmParams::load(const std::filesystem::path& dir) {
    const auto contents = checkpoint::load(dir);
    if (contents.kind != "fsm") throw RuntimeError("checkpoint " + dir.string() + " holds a '" + contents.kind + "', not an fsm");
    FsmConfig cfg;
    try {
        const auto& j = contents.config;
        cfg = {j.at("ct_channels").get<std::size_t>(), j.at("ct_height").get<std::size_t>(),
               j.at("ct_width").get<std::size_t>(),    j.at("gt_channels").get<std::size_t>(),
               j.at("gt_height").get<std::size_t>(),   j.at("gt_width").get<std::size_t>()};
        cfg.validate();
    } catch (const json::exception& e) {
        throw RuntimeError("checkpoint " + dir.string() + ": bad fsm config: " + e.what());
    } catch (const PreconditionError& e) {
        throw RuntimeError("checkpoint " + dir.string() + ": " + e.what());
    }
    FsmParams p = build_fsm(cfg, 0);
    checkpoint::assign(contents, p.parameters());
    return p;
}

FsmResult fsm_forward(const Var& f_ct, const Tensor& f_gt, const FsmParams& params) {
    const auto& cfg = params.config;
    FEATSIM_REQUIRE(f_ct.shape() == (Shape{cfg.ct_channels, cfg.ct_height, cfg.ct_width}),
                    "fsm_forward: CT features " + shape_to_string(f_ct.shape()) + " do not match the FSM config");
    FEATSIM_REQUIRE(f_gt.shape() == (Shape{cfg.gt_channels, cfg.gt_height, cfg.gt_width}),
                    "fsm_forward: GT features " + shape_to_string(f_gt.shape()) + " do not match the FSM config");

    const Var gt = constant(f_gt);
    const Var resized = (cfg.ct_height == cfg.gt_height && cfg.ct_width == cfg.gt_width)
                            ? f_ct
                            : ops::nearest_interpolate(f_ct, cfg.gt_height, cfg.gt_width);
    const Var adjusted = ops::relu(params.adjust(resized));

    const Var channel_stat = ops::global_avg_pool(ops::relu(params.chanstat(gt)));
    const Var spatial_stat = ops::relu(params.spatstat(gt));

    const Var by_channel = ops::scale_channels(adjusted, channel_stat);
    const Var by_pixel = ops::mul_spatial(adjusted, spatial_stat);
    const Var reduced = ops::relu(params.reduce(ops::concat_channels(by_channel, by_pixel)));

    Var distance = ops::mean_squared_difference(reduced, adjusted);
    const float d = distance.value()[0];
    return FsmResult{std::move(distance), 1.0f / (1.0f + d), adjusted, reduced};
}

}  // namespace featsim
