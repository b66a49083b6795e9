#pragma once

#include <filesystem>

#include "featsim/label_map.hpp"
#include "featsim/tensor.hpp"

namespace featsim {

/// Binary 8-bit PGM (P5) of a (1, H, W) image with values in [0, 1].
void write_pgm(const Tensor& image, const std::filesystem::path& path);
/// Image with the mask drawn over it: class c maps to a distinct gray level,
/// background pixels keep the image intensity.
void write_pgm_overlay(const Tensor& image, const LabelMap& mask, const std::filesystem::path& path);

}  // namespace featsim
