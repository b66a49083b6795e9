#pragma once

// Feature Similarity Module: a learned distance between a segmenter's
// feature map F_ct and an autoencoder's feature map F_gt.
//
//   A   = relu(adjust(nearest(F_ct -> H x W)))          (C, H, W)
//   S_c = gap(relu(chanstat(F_gt)))                     (C)
//   S_s = relu(spatstat(F_gt))                          (1, H, W)
//   R   = relu(reduce(concat(A * S_c, A (.) S_s)))      (C, H, W)
//   distance = mean((R - A)^2), similarity = 1 / (1 + distance)
//
// F_gt enters as a plain tensor: no gradient can reach the network that
// produced it.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "featsim/autograd.hpp"
#include "featsim/layers.hpp"

namespace featsim {

struct FsmConfig {
    std::size_t ct_channels = 0;
    std::size_t ct_height = 0;
    std::size_t ct_width = 0;
    std::size_t gt_channels = 0;
    std::size_t gt_height = 0;
    std::size_t gt_width = 0;

    void validate() const;
    static FsmConfig from_shapes(const Shape& ct, const Shape& gt);
    bool operator==(const FsmConfig&) const = default;
};

struct FsmParams {
    FsmConfig config;
    Conv2dLayer adjust;     // 3x3, C1 -> C
    Conv2dLayer chanstat;   // 3x3, C -> C
    Conv2dLayer spatstat;   // 3x3, C -> 1
    Conv2dLayer reduce;     // 3x3, 2C -> C

    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
    std::size_t parameter_count() const;

    void save(const std::filesystem::path& dir) const;
    static FsmParams load(const std::filesystem::path& dir);
};

std::size_t fsm_parameter_count(const FsmConfig& config);

FsmParams build_fsm(const FsmConfig& config, std::uint64_t seed);

struct FsmResult {
    Var distance;      // single element, >= 0
    float similarity;  // 1 / (1 + distance), in (0, 1]
    Var adjusted;      // A
    Var reconstructed; // R
};

FsmResult fsm_forward(const Var& f_ct, const Tensor& f_gt, const FsmParams& params);

}  // namespace featsim
