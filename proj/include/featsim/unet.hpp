#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "featsim/autograd.hpp"
#include "featsim/layers.hpp"

namespace featsim {

struct UNetConfig {
    std::size_t in_channels = 1;    // 1 for CT slices, K for one-hot masks
    std::size_t num_classes = 4;
    std::size_t depth = 3;          // pooling steps
    std::size_t base_channels = 8;  // doubles per level

    void validate() const;
    std::size_t channels_at(std::size_t level) const { return base_channels << level; }
    bool operator==(const UNetConfig&) const = default;
};

/// Per-level encoder outputs before pooling, then the bottleneck.
struct EncoderFeatures {
    std::vector<Var> levels;  // depth + 1 entries

    const Var& bottleneck() const { return levels.back(); }
};

struct UNetOutput {
    Var probs;  // (K, H, W), softmax over channels
    EncoderFeatures features;
};

/// Encoder/decoder with concatenated skips. Encoder level l: two 3x3
/// conv+ReLU then 2x2 max-pool. Decoder level l: nearest x2 upsample, 3x3
/// conv+ReLU, concat with the skip, two 3x3 conv+ReLU. 1x1 head + softmax.
class UNet {
public:
    static UNet build(const UNetConfig& config, std::uint64_t seed);

    const UNetConfig& config() const { return config_; }

    UNetOutput forward(const Var& x) const;
    UNetOutput forward(const Tensor& x) const { return forward(constant(x)); }
    /// Encoder and bottleneck only.
    EncoderFeatures encode(const Var& x) const;
    /// Decoder, head and softmax applied to precomputed encoder features.
    Var decode(const EncoderFeatures& feats) const;

    /// Shape of the bottleneck for an (in_channels, h, w) input.
    Shape bottleneck_shape(std::size_t h, std::size_t w) const;

    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
    /// Encoder blocks and bottleneck.
    std::vector<Parameter*> encoder_parameters();
    std::vector<const Parameter*> encoder_parameters() const;
    /// Decoder blocks and output head.
    std::vector<Parameter*> decoder_parameters();
    std::vector<const Parameter*> decoder_parameters() const;

    std::size_t parameter_count() const;
    void set_encoder_trainable(bool trainable);

    void save(const std::filesystem::path& dir) const;
    static UNet load(const std::filesystem::path& dir);

private:
    struct Level {
        Conv2dLayer conv1;
        Conv2dLayer conv2;
    };
    struct UpLevel {
        Conv2dLayer up;
        Conv2dLayer conv1;
        Conv2dLayer conv2;
    };

    UNetConfig config_;
    std::vector<Level> encoder_;
    Level bottleneck_;
    std::vector<UpLevel> decoder_;  // decoder_[l] produces level l
    Conv2dLayer head_;
};

/// Closed-form scalar parameter count for a config.
std::size_t unet_parameter_count(const UNetConfig& config);

/// Copy of `dst` whose decoder and head parameters are taken from `src`.
/// Depth, base width and class count must agree (input channels may differ).
UNet transplant_decoder(const UNet& dst, const UNet& src);

/// FNV hash over a parameter list, for frozen-parameter checks.
std::uint64_t hash_parameters(const std::vector<const Parameter*>& params);

}  // namespace featsim
