#include "featsim/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "featsim/error.hpp"

namespace featsim {

namespace {

struct Ellipse {
    double cy, cx, ry, rx, angle;

    bool contains(double y, double x) const {
        const double dy = y - cy, dx = x - cx;
        const double c = std::cos(angle), s = std::sin(angle);
        const double u = (c * dx + s * dy) / rx;
        const double v = (-s * dx + c * dy) / ry;
        return u * u + v * v <= 1.0;
    }
    // Same shape grown by `margin` pixels on each semi-axis.
    Ellipse grown(double margin) const { return {cy, cx, ry + margin, rx + margin, angle}; }
};

constexpr int kPlacementRetries = 200;
// Gap between blobs: 2 px at 64x64, scaled down for smaller images.
double blob_margin(std::size_t h, std::size_t w) {
    return std::clamp(static_cast<double>(std::min(h, w)) / 32.0, 0.5, 2.0);
}

struct Layout {
    std::vector<Ellipse> organs;       // A, B, C
    std::vector<Ellipse> distractors;  // 1..3
};

bool overlaps(const Ellipse& e, const std::vector<Ellipse>& placed, std::size_t h, std::size_t w) {
    const Ellipse g = e.grown(blob_margin(h, w));
    const double reach = std::max(g.ry, g.rx);
    const auto y0 = static_cast<std::ptrdiff_t>(std::floor(g.cy - reach));
    const auto y1 = static_cast<std::ptrdiff_t>(std::ceil(g.cy + reach));
    const auto x0 = static_cast<std::ptrdiff_t>(std::floor(g.cx - reach));
    const auto x1 = static_cast<std::ptrdiff_t>(std::ceil(g.cx + reach));
    for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(0, y0); y <= std::min<std::ptrdiff_t>(h - 1, y1); ++y)
        for (std::ptrdiff_t x = std::max<std::ptrdiff_t>(0, x0); x <= std::min<std::ptrdiff_t>(w - 1, x1); ++x) {
            if (!g.contains(static_cast<double>(y), static_cast<double>(x))) continue;
            for (const auto& p : placed)
                if (p.contains(static_cast<double>(y), static_cast<double>(x))) return true;
        }
    return false;
}

// Semi-axes are drawn as fractions of the shorter image side.
bool place(std::mt19937_64& rng, std::size_t h, std::size_t w, double r_lo, double r_hi, bool allow_rotation,
           std::vector<Ellipse>& placed, Ellipse& out) {
    const double side = static_cast<double>(std::min(h, w));
    std::uniform_real_distribution<double> radius(r_lo * side, r_hi * side);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int attempt = 0; attempt < kPlacementRetries; ++attempt) {
        const double ry = std::max(1.0, radius(rng));
        const double rx = std::max(1.0, radius(rng));
        const double angle = allow_rotation ? unit(rng) * std::numbers::pi : 0.0;
        const double reach = std::max(ry, rx) + 1.0;
        if (2.0 * reach >= static_cast<double>(h) || 2.0 * reach >= static_cast<double>(w)) continue;
        const double cy = reach + unit(rng) * (static_cast<double>(h) - 1.0 - 2.0 * reach);
        const double cx = reach + unit(rng) * (static_cast<double>(w) - 1.0 - 2.0 * reach);
        const Ellipse e{cy, cx, ry, rx, angle};
        if (!overlaps(e, placed, h, w)) {
            out = e;
            return true;
        }
    }
    return false;
}

Layout make_layout(std::mt19937_64& rng, std::size_t h, std::size_t w) {
    Layout layout;
    std::vector<Ellipse> placed;
    // Organ A is the large one; B and C are kidney-sized.
    const double ranges[3][2] = {{0.14, 0.22}, {0.07, 0.12}, {0.07, 0.12}};
    for (const auto& r : ranges) {
        Ellipse e{};
        if (!place(rng, h, w, r[0], r[1], true, placed, e))
            throw RuntimeError("generate_phantom: could not place non-overlapping organs in a " + std::to_string(h) +
                               "x" + std::to_string(w) + " image after " + std::to_string(kPlacementRetries) +
                               " attempts");
        placed.push_back(e);
        layout.organs.push_back(e);
    }
    std::uniform_int_distribution<int> count(1, 3);
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
        Ellipse e{};
        // A blob that does not fit is skipped; at least one is required.
        if (place(rng, h, w, 0.05, 0.08, false, placed, e)) {
            placed.push_back(e);
            layout.distractors.push_back(e);
        }
    }
    if (layout.distractors.empty())
        throw RuntimeError("generate_phantom: no room for a distractor blob in a " + std::to_string(h) + "x" +
                           std::to_string(w) + " image");
    return layout;
}

std::vector<float> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<float> k(2 * radius + 1);
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) total += std::exp(-0.5 * i * i / (sigma * sigma));
    for (int i = -radius; i <= radius; ++i)
        k[i + radius] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)) / total);
    return k;
}

// Separable blur with clamp-to-edge borders.
void blur(std::vector<float>& img, std::size_t h, std::size_t w, double sigma) {
    if (sigma <= 0.0) return;
    const auto k = gaussian_kernel(sigma);
    const auto radius = static_cast<std::ptrdiff_t>(k.size() / 2);
    const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
    std::vector<float> tmp(img.size());
    for (std::ptrdiff_t y = 0; y < H; ++y)
        for (std::ptrdiff_t x = 0; x < W; ++x) {
            float acc = 0.0f;
            for (std::ptrdiff_t i = -radius; i <= radius; ++i)
                acc += k[i + radius] * img[y * W + std::clamp<std::ptrdiff_t>(x + i, 0, W - 1)];
            tmp[y * W + x] = acc;
        }
    for (std::ptrdiff_t y = 0; y < H; ++y)
        for (std::ptrdiff_t x = 0; x < W; ++x) {
            float acc = 0.0f;
            for (std::ptrdiff_t i = -radius; i <= radius; ++i)
                acc += k[i + radius] * tmp[std::clamp<std::ptrdiff_t>(y + i, 0, H - 1) * W + x];
            img[y * W + x] = acc;
        }
}

void check_args(std::size_t h, std::size_t w, const Difficulty& d) {
    FEATSIM_REQUIRE(h >= 16 && w >= 16, "generate_phantom: image must be at least 16x16");
    FEATSIM_REQUIRE(d.border_blur_sigma >= 0.0 && d.noise_sigma >= 0.0, "generate_phantom: negative blur or noise");
}

}  // namespace

Difficulty difficulty_preset(std::string_view name) {
    if (name == "easy") return {0.5, 0.20, 0.01};
    if (name == "medium") return {1.5, 0.05, 0.02};
    if (name == "hard") return {2.5, 0.0, 0.03};
    throw PreconditionError("unknown difficulty '" + std::string(name) + "' (expected easy, medium or hard)");
}

PhantomSample generate_phantom(std::uint64_t seed, std::size_t height, std::size_t width, const Difficulty& difficulty) {
    check_args(height, width, difficulty);
    std::mt19937_64 rng(seed);
    const Layout layout = make_layout(rng, height, width);

    const float organ_levels[3] = {PhantomIntensities::organ_a, PhantomIntensities::organ_b,
                                   PhantomIntensities::organ_c};
    const float distractor_level =
        std::clamp(PhantomIntensities::organ_a + static_cast<float>(difficulty.distractor_intensity_delta), 0.0f, 1.0f);

    LabelMap mask(height, width);
    std::vector<float> img(height * width, PhantomIntensities::background);
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
            const double fy = static_cast<double>(y), fx = static_cast<double>(x);
            for (std::size_t o = 0; o < layout.organs.size(); ++o)
                if (layout.organs[o].contains(fy, fx)) {
                    mask.at(y, x) = static_cast<std::uint8_t>(o + 1);
                    img[y * width + x] = organ_levels[o];
                }
            for (const auto& d : layout.distractors)
                if (d.contains(fy, fx)) img[y * width + x] = distractor_level;
        }

    blur(img, height, width, difficulty.border_blur_sigma);
    std::normal_distribution<float> noise(0.0f, static_cast<float>(difficulty.noise_sigma));
    for (auto& v : img) {
        if (difficulty.noise_sigma > 0.0) v += noise(rng);
        v = std::clamp(v, 0.0f, 1.0f);
    }

    PhantomSample s;
    s.image = Tensor(Shape{1, height, width}, std::move(img));
    s.mask = std::move(mask);
    s.seed = seed;
    s.difficulty = difficulty;
    return s;
}

LabelMap phantom_distractors(std::uint64_t seed, std::size_t height, std::size_t width, const Difficulty& difficulty) {
    check_args(height, width, difficulty);
    std::mt19937_64 rng(seed);
    const Layout layout = make_layout(rng, height, width);
    LabelMap m(height, width);
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            for (const auto& d : layout.distractors)
                if (d.contains(static_cast<double>(y), static_cast<double>(x))) m.at(y, x) = 1;
    return m;
}

}  // namespace featsim
