#include "featsim/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "featsim/error.hpp"
#include "featsim/pgm.hpp"
#include "featsim/tsr.hpp"

namespace featsim {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
    FEATSIM_REQUIRE(k >= 2, "kfold_split: k must be at least 2");
    FEATSIM_REQUIRE(n >= k, "kfold_split: " + std::to_string(n) + " samples cannot fill " + std::to_string(k) + " folds");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = n / k + (f < n % k ? 1 : 0);
        folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                        order.begin() + static_cast<std::ptrdiff_t>(pos + size));
        std::sort(folds[f].begin(), folds[f].end());
        pos += size;
    }
    return folds;
}

std::uint64_t sample_seed(std::uint64_t global_seed, std::size_t index) {
    // splitmix64 of (seed, index) so neighbouring seeds give unrelated streams.
    std::uint64_t z = global_seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(index) + 1;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

DatasetManifest generate_dataset(const fs::path& out_dir, std::size_t count, std::uint64_t seed, std::size_t height,
                                 std::size_t width, const Difficulty& difficulty, std::size_t k_folds, bool previews) {
    FEATSIM_REQUIRE(count >= k_folds, "generate_dataset: need at least k_folds samples");
    fs::create_directories(out_dir / "samples");
    if (previews) fs::create_directories(out_dir / "previews");

    DatasetManifest m;
    m.root = out_dir;
    m.height = height;
    m.width = width;
    m.seed = seed;
    m.difficulty = difficulty;
    m.k_folds = k_folds;
    for (std::size_t i = 0; i < count; ++i) {
        const auto s = generate_phantom(sample_seed(seed, i), height, width, difficulty);
        char stem[32];
        std::snprintf(stem, sizeof stem, "sample_%04zu", i);
        const std::string image = std::string("samples/") + stem + "_image.tsr";
        const std::string mask = std::string("samples/") + stem + "_mask.tsr";
        tsr::write(s.image, out_dir / image);
        tsr::write(s.mask, out_dir / mask);
        if (previews) {
            write_pgm(s.image, out_dir / "previews" / (std::string(stem) + ".pgm"));
            write_pgm_overlay(s.image, s.mask, out_dir / "previews" / (std::string(stem) + "_overlay.pgm"));
        }
        m.images.push_back(image);
        m.masks.push_back(mask);
    }
    m.fold_of.assign(count, 0);
    const auto folds = kfold_split(count, k_folds, seed);
    for (std::size_t f = 0; f < folds.size(); ++f)
        for (auto i : folds[f]) m.fold_of[i] = f;
    save_manifest(m);
    return m;
}

void save_manifest(const DatasetManifest& m) {
    json samples = json::array();
    for (std::size_t i = 0; i < m.size(); ++i)
        samples.push_back({{"image", m.images[i]}, {"mask", m.masks[i]}, {"fold", m.fold_of[i]}});
    json j{
        {"format", "featsim-dataset-1"},
        {"num_classes", m.num_classes},
        {"height", m.height},
        {"width", m.width},
        {"seed", m.seed},
        {"spacing_mm", {m.spacing_y, m.spacing_x}},
        {"difficulty",
         {{"border_blur_sigma", m.difficulty.border_blur_sigma},
          {"distractor_intensity_delta", m.difficulty.distractor_intensity_delta},
          {"noise_sigma", m.difficulty.noise_sigma}}},
        {"k_folds", m.k_folds},
        {"samples", samples},
    };
    std::ofstream f(m.root / "manifest.json", std::ios::trunc);
    if (!f) throw RuntimeError("cannot write " + (m.root / "manifest.json").string());
    f << j.dump(2) << '\n';
}

DatasetManifest load_manifest(const fs::path& path_or_dir) {
    const fs::path path = fs::is_directory(path_or_dir) ? path_or_dir / "manifest.json" : path_or_dir;
    std::ifstream f(path);
    if (!f) throw RuntimeError("dataset manifest not found: " + path.string());
    DatasetManifest m;
    m.root = path.parent_path();
    try {
        const json j = json::parse(f);
        m.num_classes = j.at("num_classes").get<std::size_t>();
        m.height = j.at("height").get<std::size_t>();
        m.width = j.at("width").get<std::size_t>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.spacing_y = j.at("spacing_mm").at(0).get<double>();
        m.spacing_x = j.at("spacing_mm").at(1).get<double>();
        const auto& d = j.at("difficulty");
        m.difficulty = {d.at("border_blur_sigma").get<double>(), d.at("distractor_intensity_delta").get<double>(),
                        d.at("noise_sigma").get<double>()};
        m.k_folds = j.at("k_folds").get<std::size_t>();
        for (const auto& s : j.at("samples")) {
            m.images.push_back(s.at("image").get<std::string>());
            m.masks.push_back(s.at("mask").get<std::string>());
            m.fold_of.push_back(s.at("fold").get<std::size_t>());
        }
    } catch (const json::exception& e) {
        throw RuntimeError("corrupt dataset manifest " + path.string() + ": " + e.what());
    }
    if (m.k_folds < 2) throw RuntimeError("dataset manifest: k_folds must be at least 2");
    if (m.spacing_y <= 0.0 || m.spacing_x <= 0.0) throw RuntimeError("dataset manifest: spacing must be positive");
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m.fold_of[i] >= m.k_folds)
            throw RuntimeError("dataset manifest: sample " + std::to_string(i) + " has split id out of range");
        for (const auto* rel : {&m.images[i], &m.masks[i]})
            if (!fs::exists(m.root / *rel)) throw RuntimeError("dataset manifest: missing file " + (m.root / *rel).string());
    }
    return m;
}

std::vector<Sample> load_samples(const DatasetManifest& m, const std::vector<std::size_t>& indices) {
    std::vector<Sample> out;
    out.reserve(indices.size());
    for (auto i : indices) {
        FEATSIM_REQUIRE(i < m.size(), "load_samples: index out of range");
        Sample s{tsr::read_tensor(m.root / m.images[i]), tsr::read_labels(m.root / m.masks[i])};
        if (s.image.shape() != Shape{1, m.height, m.width} || s.mask.height != m.height || s.mask.width != m.width)
            throw RuntimeError("sample " + std::to_string(i) + " does not match the manifest extents");
        for (auto c : s.mask.labels)
            if (c >= m.num_classes) throw RuntimeError("sample " + std::to_string(i) + " has an out-of-range class id");
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Sample> load_samples(const DatasetManifest& m) {
    std::vector<std::size_t> all(m.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return load_samples(m, all);
}

std::vector<std::size_t> fold_members(const DatasetManifest& m, std::size_t fold) {
    FEATSIM_REQUIRE(fold < m.k_folds, "fold " + std::to_string(fold) + " out of range");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < m.size(); ++i)
        if (m.fold_of[i] == fold) out.push_back(i);
    return out;
}

std::vector<std::size_t> fold_complement(const DatasetManifest& m, std::size_t fold) {
    FEATSIM_REQUIRE(fold < m.k_folds, "fold " + std::to_string(fold) + " out of range");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < m.size(); ++i)
        if (m.fold_of[i] != fold) out.push_back(i);
    return out;
}

}  // namespace featsim
