#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "featsim/tensor.hpp"

namespace featsim {

/// Per-pixel class ids of an H x W slice (0 = background).
struct LabelMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> labels;

    LabelMap() = default;
    LabelMap(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), labels(h * w, fill) {}

    std::uint8_t& at(std::size_t y, std::size_t x) { return labels[y * width + x]; }
    std::uint8_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
    std::size_t size() const { return labels.size(); }

    bool operator==(const LabelMap&) const = default;
};

/// (K, H, W) one-hot encoding; every label must be < num_classes.
Tensor one_hot(const LabelMap& m, std::size_t num_classes);

/// Per-pixel argmax over channels of a (K, H, W) tensor; ties go to the lower id.
LabelMap argmax_channels(const Tensor& probs);

}  // namespace featsim
