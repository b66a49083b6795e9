#pragma once

// Segmentation metrics: Dice similarity coefficient and average symmetric
// surface distance, with a brute-force ASSD used as the reference for the
// distance-transform implementation.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "featsim/label_map.hpp"

namespace featsim::metrics {

struct Spacing {
    double y = 1.0;  // mm per row
    double x = 1.0;  // mm per column
};

struct BinaryMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> bits;  // 0 or 1, row-major
    Spacing spacing;

    BinaryMask() = default;
    BinaryMask(std::size_t h, std::size_t w, Spacing s = {});

    static BinaryMask from_labels(const LabelMap& m, std::uint8_t cls, Spacing s = {});

    bool at(std::size_t y, std::size_t x) const { return bits[y * width + x] != 0; }
    void set(std::size_t y, std::size_t x, bool v = true) { bits[y * width + x] = v ? 1 : 0; }
    std::size_t count() const;
    bool empty() const { return count() == 0; }
};

using Pixel = std::pair<std::size_t, std::size_t>;  // (y, x)

/// 2|A n B| / (|A| + |B|); 1 when both masks are empty.
double dsc(const BinaryMask& a, const BinaryMask& b);

/// Foreground pixels with a background or out-of-bounds 4-neighbour, in
/// row-major order.
std::vector<Pixel> extract_surface(const BinaryMask& m);

/// Average symmetric surface distance in mm via an exact Euclidean distance
/// transform. std::nullopt when either mask is empty.
std::optional<double> assd(const BinaryMask& a, const BinaryMask& b);

/// Same quantity by exhaustive pairwise search over surface pixels.
std::optional<double> assd_brute_force(const BinaryMask& a, const BinaryMask& b);

/// Squared Euclidean distance (mm^2) from every pixel to the nearest set
/// pixel of `m`; +inf everywhere when `m` is empty.
std::vector<double> squared_distance_transform(const BinaryMask& m);

struct CaseResult {
    std::size_t case_id = 0;
    std::uint8_t cls = 0;
    double dsc = 0.0;
    std::optional<double> assd;  // undefined when either mask is empty
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // population convention
    std::size_t n = 0;
};

MeanStd mean_std(const std::vector<double>& values);

struct ClassSummary {
    std::uint8_t cls = 0;  // 0 here means "all classes pooled"
    MeanStd dsc;
    MeanStd assd;  // over cases where ASSD is defined
};

struct ClassReport {
    std::vector<CaseResult> cases;
    std::vector<ClassSummary> per_class;
    ClassSummary overall;
};

/// Per-class binarization of one case, then DSC and ASSD for each class in
/// `classes`. Throws PreconditionError for shape mismatch or a class id
/// (requested or present in the maps) not below `num_classes`.
std::vector<CaseResult> evaluate_case(const LabelMap& pred, const LabelMap& gt, Spacing spacing,
                                      const std::vector<std::uint8_t>& classes, std::size_t num_classes,
                                      std::size_t case_id);

ClassReport aggregate(std::vector<CaseResult> cases, const std::vector<std::uint8_t>& classes);

/// "94.6±1.5" style cell: values multiplied by `scale`, fixed decimals.
std::string format_mean_std(const MeanStd& v, int decimals, double scale = 1.0);

/// case,class,dsc,assd rows (DSC in percent, ASSD in mm, empty when
/// undefined) followed by mean±std summary rows per class and pooled.
void write_report_csv(const ClassReport& report, const std::filesystem::path& path);
std::string report_csv(const ClassReport& report);

}  // namespace featsim::metrics
