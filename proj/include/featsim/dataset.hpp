#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "featsim/label_map.hpp"
#include "featsim/phantom.hpp"
#include "featsim/tensor.hpp"

namespace featsim {

/// A (CT image, GT mask) training pair.
struct Sample {
    Tensor image;  // (1, H, W)
    LabelMap mask;
};

struct DatasetManifest {
    std::filesystem::path root;  // directory holding manifest.json
    std::size_t num_classes = kPhantomClasses;
    std::size_t height = 0;
    std::size_t width = 0;
    std::uint64_t seed = 0;
    double spacing_y = 1.0;
    double spacing_x = 1.0;
    Difficulty difficulty;
    std::vector<std::string> images;  // relative to root
    std::vector<std::string> masks;
    std::size_t k_folds = 5;
    std::vector<std::size_t> fold_of;  // split id per sample

    std::size_t size() const { return images.size(); }
};

/// Partition of 0..n-1 into k shuffled folds. The first n % k folds hold one
/// extra sample.
std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

/// Generates `count` phantoms into `out_dir` (TSR files plus manifest.json).
DatasetManifest generate_dataset(const std::filesystem::path& out_dir, std::size_t count, std::uint64_t seed,
                                 std::size_t height, std::size_t width, const Difficulty& difficulty,
                                 std::size_t k_folds = 5, bool previews = false);

/// Seed of the i-th sample of a dataset with the given global seed.
std::uint64_t sample_seed(std::uint64_t global_seed, std::size_t index);

void save_manifest(const DatasetManifest& m);
/// Validates paths, extents and split ids. Throws RuntimeError with the reason.
DatasetManifest load_manifest(const std::filesystem::path& path_or_dir);

std::vector<Sample> load_samples(const DatasetManifest& m);
std::vector<Sample> load_samples(const DatasetManifest& m, const std::vector<std::size_t>& indices);

/// Indices of samples in fold `fold` (held out) and the remaining ones.
std::vector<std::size_t> fold_members(const DatasetManifest& m, std::size_t fold);
std::vector<std::size_t> fold_complement(const DatasetManifest& m, std::size_t fold);

}  // namespace featsim
