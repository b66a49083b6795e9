#pragma once

// Synthetic CT-like slices: three elliptic organs on a soft background,
// distractor blobs that mimic organ A's intensity, blurred borders and
// pixel noise. Masks are the crisp pre-blur ellipses.

#include <cstdint>
#include <string_view>

#include "featsim/label_map.hpp"
#include "featsim/tensor.hpp"

namespace featsim {

inline constexpr std::size_t kPhantomClasses = 4;  // background + 3 organs

struct Difficulty {
    double border_blur_sigma = 1.5;
    double distractor_intensity_delta = 0.05;
    double noise_sigma = 0.02;
};

/// "easy", "medium" or "hard". Throws PreconditionError otherwise.
Difficulty difficulty_preset(std::string_view name);

struct PhantomSample {
    Tensor image;  // (1, H, W), values in [0, 1]
    LabelMap mask;
    std::uint64_t seed = 0;
    Difficulty difficulty;
};

/// Base intensities before blur and noise.
struct PhantomIntensities {
    static constexpr float background = 0.25f;
    static constexpr float organ_a = 0.55f;
    static constexpr float organ_b = 0.80f;
    static constexpr float organ_c = 0.40f;
};

/// Requires at least 16x16. Deterministic per seed. Throws RuntimeError when the organs cannot be
/// placed without overlap.
PhantomSample generate_phantom(std::uint64_t seed, std::size_t height, std::size_t width, const Difficulty& difficulty);

/// Pixels (as a mask) covered by the distractor blobs of the sample with the
/// same arguments; exposed for tests that measure blob statistics.
LabelMap phantom_distractors(std::uint64_t seed, std::size_t height, std::size_t width, const Difficulty& difficulty);

}  // namespace featsim
