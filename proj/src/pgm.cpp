#include "featsim/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "featsim/error.hpp"

namespace featsim {

namespace {

std::uint8_t to_gray(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

void write_p5(const std::vector<std::uint8_t>& px, std::size_t h, std::size_t w, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw RuntimeError("pgm: cannot open " + path.string());
    f << "P5\n" << w << ' ' << h << "\n255\n";
    f.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
    if (!f) throw RuntimeError("pgm: write failed for " + path.string());
}

}  // namespace

void write_pgm(const Tensor& image, const std::filesystem::path& path) {
    FEATSIM_REQUIRE(image.ndim() == 3 && image.dim(0) == 1, "write_pgm: expected (1, H, W)");
    std::vector<std::uint8_t> px(image.numel());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = to_gray(image[i]);
    write_p5(px, image.dim(1), image.dim(2), path);
}

void write_pgm_overlay(const Tensor& image, const LabelMap& mask, const std::filesystem::path& path) {
    FEATSIM_REQUIRE(image.ndim() == 3 && image.dim(0) == 1 && image.dim(1) == mask.height && image.dim(2) == mask.width,
                    "write_pgm_overlay: image and mask extents differ");
    static constexpr std::uint8_t kLevels[] = {0, 255, 170, 85};
    std::vector<std::uint8_t> px(image.numel());
    for (std::size_t i = 0; i < px.size(); ++i) {
        const auto c = mask.labels[i];
        px[i] = c == 0 ? to_gray(image[i]) : kLevels[c % 4];
    }
    write_p5(px, mask.height, mask.width, path);
}

}  // namespace featsim
