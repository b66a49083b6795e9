#include "featsim/unet.hpp"

#include <random>

#include <json.hpp>

#include "featsim/checkpoint.hpp"
#include "featsim/error.hpp"
#include "featsim/ops.hpp"

namespace featsim {

using nlohmann::json;

void UNetConfig::validate() const {
    FEATSIM_REQUIRE(in_channels >= 1, "UNetConfig: in_channels must be >= 1");
    FEATSIM_REQUIRE(num_classes >= 2, "UNetConfig: num_classes must be >= 2");
    FEATSIM_REQUIRE(depth >= 1 && depth <= 8, "UNetConfig: depth must be in [1, 8]");
    FEATSIM_REQUIRE(base_channels >= 1, "UNetConfig: base_channels must be >= 1");
}

namespace {

json config_to_json(const UNetConfig& c) {
    return {{"in_channels", c.in_channels},
            {"num_classes", c.num_classes},
            {"depth", c.depth},
            {"base_channels", c.base_channels}};
}

UNetConfig config_from_json(const json& j) {
    UNetConfig c;
    c.in_channels = j.at("in_channels").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.depth = j.at("depth").get<std::size_t>();
    c.base_channels = j.at("base_channels").get<std::size_t>();
    return c;
}

}  // namespace

std::size_t unet_parameter_count(const UNetConfig& c) {
    std::size_t n = 0;
    std::size_t prev = c.in_channels;
    for (std::size_t l = 0; l < c.depth; ++l) {
        const std::size_t ch = c.channels_at(l);
        n += conv_param_count(prev, ch, 3) + conv_param_count(ch, ch, 3);
        prev = ch;
    }
    const std::size_t bottom = c.channels_at(c.depth);
    n += conv_param_count(prev, bottom, 3) + conv_param_count(bottom, bottom, 3);
    for (std::size_t l = 0; l < c.depth; ++l) {
        const std::size_t ch = c.channels_at(l);
        n += conv_param_count(2 * ch, ch, 3) + conv_param_count(2 * ch, ch, 3) + conv_param_count(ch, ch, 3);
    }
    n += conv_param_count(c.base_channels, c.num_classes, 1);
    return n;
}

UNet UNet::build(const UNetConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    UNet net;
    net.config_ = config;
    std::size_t prev = config.in_channels;
    for (std::size_t l = 0; l < config.depth; ++l) {
        const std::size_t ch = config.channels_at(l);
        const std::string p = "enc" + std::to_string(l);
        auto c1 = Conv2dLayer::make(p + ".conv1", prev, ch, 3, rng);
        auto c2 = Conv2dLayer::make(p + ".conv2", ch, ch, 3, rng);
        net.encoder_.push_back({std::move(c1), std::move(c2)});
        prev = ch;
    }
    const std::size_t bottom = config.channels_at(config.depth);
    {
        auto c1 = Conv2dLayer::make("bottleneck.conv1", prev, bottom, 3, rng);
        auto c2 = Conv2dLayer::make("bottleneck.conv2", bottom, bottom, 3, rng);
        net.bottleneck_ = {std::move(c1), std::move(c2)};
    }
    net.decoder_.resize(config.depth);
    // Built deepest first, the order data flows through them.
    for (std::size_t l = config.depth; l-- > 0;) {
        const std::size_t ch = config.channels_at(l);
        const std::string p = "dec" + std::to_string(l);
        auto up = Conv2dLayer::make(p + ".up", 2 * ch, ch, 3, rng);
        auto c1 = Conv2dLayer::make(p + ".conv1", 2 * ch, ch, 3, rng);
        auto c2 = Conv2dLayer::make(p + ".conv2", ch, ch, 3, rng);
        net.decoder_[l] = {std::move(up), std::move(c1), std::move(c2)};
    }
    net.head_ = Conv2dLayer::make("head", config.base_channels, config.num_classes, 1, rng);
    return net;
}

EncoderFeatures UNet::encode(const Var& x) const {
    FEATSIM_REQUIRE(x.shape().size() == 3, "UNet: expected a (C, H, W) input, got " + shape_to_string(x.shape()));
    FEATSIM_REQUIRE(x.shape()[0] == config_.in_channels, "UNet: input has " + std::to_string(x.shape()[0]) +
                                                             " channels, network expects " +
                                                             std::to_string(config_.in_channels));
    const std::size_t div = std::size_t{1} << config_.depth;
    FEATSIM_REQUIRE(x.shape()[1] % div == 0 && x.shape()[2] % div == 0,
                    "UNet: spatial size " + shape_to_string(x.shape()) + " is not divisible by 2^depth = " +
                        std::to_string(div));
    EncoderFeatures feats;
    Var h = x;
    for (const auto& level : encoder_) {
        h = ops::relu(level.conv2(ops::relu(level.conv1(h))));
        feats.levels.push_back(h);
        h = ops::maxpool2x2(h);
    }
    h = ops::relu(bottleneck_.conv2(ops::relu(bottleneck_.conv1(h))));
    feats.levels.push_back(h);
    return feats;
}

Var UNet::decode(const EncoderFeatures& feats) const {
    Var h = feats.bottleneck();
    for (std::size_t l = config_.depth; l-- > 0;) {
        const auto& d = decoder_[l];
        Var up = ops::relu(d.up(ops::upsample2x(h)));
        Var cat = ops::concat_channels(feats.levels[l], up);
        h = ops::relu(d.conv2(ops::relu(d.conv1(cat))));
    }
    return ops::softmax_channels(head_(h));
}

UNetOutput UNet::forward(const Var& x) const {
    UNetOutput out;
    out.features = encode(x);
    out.probs = decode(out.features);
    return out;
}

Shape UNet::bottleneck_shape(std::size_t h, std::size_t w) const {
    return {config_.channels_at(config_.depth), h >> config_.depth, w >> config_.depth};
}

std::vector<Parameter*> UNet::encoder_parameters() {
    std::vector<Parameter*> out;
    for (auto& l : encoder_)
        for (auto* c : {&l.conv1, &l.conv2}) out.insert(out.end(), {&c->weight, &c->bias});
    for (auto* c : {&bottleneck_.conv1, &bottleneck_.conv2}) out.insert(out.end(), {&c->weight, &c->bias});
    return out;
}

std::vector<Parameter*> UNet::decoder_parameters() {
    std::vector<Parameter*> out;
    for (std::size_t l = config_.depth; l-- > 0;)
        for (auto* c : {&decoder_[l].up, &decoder_[l].conv1, &decoder_[l].conv2})
            out.insert(out.end(), {&c->weight, &c->bias});
    out.insert(out.end(), {&head_.weight, &head_.bias});
    return out;
}

std::vector<Parameter*> UNet::parameters() {
    auto out = encoder_parameters();
    auto dec = decoder_parameters();
    out.insert(out.end(), dec.begin(), dec.end());
    return out;
}

namespace {
std::vector<const Parameter*> to_const(const std::vector<Parameter*>& v) { return {v.begin(), v.end()}; }
}  // namespace

std::vector<const Parameter*> UNet::parameters() const { return to_const(const_cast<UNet*>(this)->parameters()); }
std::vector<const Parameter*> UNet::encoder_parameters() const {
    return to_const(const_cast<UNet*>(this)->encoder_parameters());
}
std::vector<const Parameter*> UNet::decoder_parameters() const {
    return to_const(const_cast<UNet*>(this)->decoder_parameters());
}

std::size_t UNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->value().numel();
    return n;
}

void UNet::set_encoder_trainable(bool trainable) {
    for (auto* p : encoder_parameters()) p->set_trainable(trainable);
}

void UNet::save(const std::filesystem::path& dir) const { checkpoint::save(dir, "unet", config_to_json(config_), parameters()); }

UNet UNet::load(const std::filesystem::path& dir) {
    const auto contents = checkpoint::load(dir);
    if (contents.kind != "unet") throw RuntimeError("checkpoint " + dir.string() + " holds a '" + contents.kind + "', not a unet");
    UNetConfig cfg;
    try {
        cfg = config_from_json(contents.config);
        cfg.validate();
    } catch (const nlohmann::json::exception& e) {
        throw RuntimeError("checkpoint " + dir.string() + ": bad unet config: " + e.what());
    } catch (const PreconditionError& e) {
        throw RuntimeError("checkpoint " + dir.string() + ": " + e.what());
    }
    UNet net = build(cfg, 0);
    checkpoint::assign(contents, net.parameters());
    return net;
}

UNet transplant_decoder(const UNet& dst, const UNet& src) {
    const auto& a = dst.config();
    const auto& b = src.config();
    FEATSIM_REQUIRE(a.depth == b.depth && a.base_channels == b.base_channels && a.num_classes == b.num_classes,
                    "transplant_decoder: architectures differ (depth/base_channels/num_classes)");
    UNet out = dst;
    auto to = out.decoder_parameters();
    const auto from = src.decoder_parameters();
    for (std::size_t i = 0; i < to.size(); ++i) to[i]->mutable_value() = from[i]->value();
    return out;
}

std::uint64_t hash_parameters(const std::vector<const Parameter*>& params) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto* p : params) h = hash_tensor(p->value(), h);
    return h;
}

}  // namespace featsim
