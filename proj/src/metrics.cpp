#include "featsim/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "featsim/error.hpp"

namespace featsim::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_same_extent(const BinaryMask& a, const BinaryMask& b, const char* op) {
    FEATSIM_REQUIRE(a.height == b.height && a.width == b.width, std::string(op) + ": mask extents differ");
}

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) on positions
// index * step. Reads n values with stride `stride` from f, writes to out.
void distance_transform_1d(const double* f, std::size_t n, std::size_t stride, double step, double* out,
                           std::vector<std::size_t>& v, std::vector<double>& z) {
    v.resize(n);
    z.resize(n + 1);
    std::ptrdiff_t k = -1;
    for (std::size_t q = 0; q < n; ++q) {
        const double fq = f[q * stride];
        if (std::isinf(fq)) continue;
        const double zq = static_cast<double>(q) * step;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        // z[0] is -inf, so the envelope never pops below its first parabola.
        double s;
        for (;;) {
            const std::size_t p = v[static_cast<std::size_t>(k)];
            const double zp = static_cast<double>(p) * step;
            s = ((fq + zq * zq) - (f[p * stride] + zp * zp)) / (2.0 * (zq - zp));
            if (s > z[static_cast<std::size_t>(k)]) break;
            --k;
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        z[static_cast<std::size_t>(k)] = s;
        z[static_cast<std::size_t>(k) + 1] = kInf;
    }
    if (k < 0) {
        for (std::size_t q = 0; q < n; ++q) out[q * stride] = kInf;
        return;
    }
    std::size_t j = 0;
    for (std::size_t q = 0; q < n; ++q) {
        const double zq = static_cast<double>(q) * step;
        while (z[j + 1] < zq) ++j;
        const double d = zq - static_cast<double>(v[j]) * step;
        out[q * stride] = d * d + f[v[j] * stride];
    }
}

double directed_surface_sum(const std::vector<Pixel>& from, const std::vector<double>& dist2, std::size_t width) {
    double total = 0.0;
    for (const auto& [y, x] : from) total += std::sqrt(dist2[y * width + x]);
    return total;
}

BinaryMask surface_mask(const BinaryMask& m, const std::vector<Pixel>& surface) {
    BinaryMask s(m.height, m.width, m.spacing);
    for (const auto& [y, x] : surface) s.set(y, x);
    return s;
}

}  // namespace

BinaryMask::BinaryMask(std::size_t h, std::size_t w, Spacing s) : height(h), width(w), bits(h * w, 0), spacing(s) {
    FEATSIM_REQUIRE(s.y > 0.0 && s.x > 0.0, "BinaryMask: spacing must be strictly positive");
}

BinaryMask BinaryMask::from_labels(const LabelMap& m, std::uint8_t cls, Spacing s) {
    BinaryMask b(m.height, m.width, s);
    for (std::size_t i = 0; i < m.size(); ++i) b.bits[i] = m.labels[i] == cls ? 1 : 0;
    return b;
}

std::size_t BinaryMask::count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b != 0;
    return n;
}

double dsc(const BinaryMask& a, const BinaryMask& b) {
    require_same_extent(a, b, "dsc");
    std::size_t na = 0, nb = 0, both = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        const bool x = a.bits[i] != 0, y = b.bits[i] != 0;
        na += x;
        nb += y;
        both += x && y;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<Pixel> extract_surface(const BinaryMask& m) {
    std::vector<Pixel> out;
    for (std::size_t y = 0; y < m.height; ++y)
        for (std::size_t x = 0; x < m.width; ++x) {
            if (!m.at(y, x)) continue;
            const bool border = y == 0 || x == 0 || y + 1 == m.height || x + 1 == m.width || !m.at(y - 1, x) ||
                                !m.at(y + 1, x) || !m.at(y, x - 1) || !m.at(y, x + 1);
            if (border) out.emplace_back(y, x);
        }
    return out;
}

std::vector<double> squared_distance_transform(const BinaryMask& m) {
    const std::size_t h = m.height, w = m.width;
    std::vector<double> f(h * w), g(h * w);
    for (std::size_t i = 0; i < h * w; ++i) f[i] = m.bits[i] ? 0.0 : kInf;
    std::vector<std::size_t> v;
    std::vector<double> z;
    for (std::size_t x = 0; x < w; ++x) distance_transform_1d(f.data() + x, h, w, m.spacing.y, g.data() + x, v, z);
    for (std::size_t y = 0; y < h; ++y) distance_transform_1d(g.data() + y * w, w, 1, m.spacing.x, f.data() + y * w, v, z);
    return f;
}

std::optional<double> assd(const BinaryMask& a, const BinaryMask& b) {
    require_same_extent(a, b, "assd");
    const auto sa = extract_surface(a);
    const auto sb = extract_surface(b);
    if (sa.empty() || sb.empty()) return std::nullopt;
    const auto da = squared_distance_transform(surface_mask(a, sa));
    auto mb = surface_mask(b, sb);
    mb.spacing = a.spacing;
    const auto db = squared_distance_transform(mb);
    const double total = directed_surface_sum(sa, db, a.width) + directed_surface_sum(sb, da, a.width);
    return total / static_cast<double>(sa.size() + sb.size());
}

std::optional<double> assd_brute_force(const BinaryMask& a, const BinaryMask& b) {
    require_same_extent(a, b, "assd_brute_force");
    const auto sa = extract_surface(a);
    const auto sb = extract_surface(b);
    if (sa.empty() || sb.empty()) return std::nullopt;
    const Spacing sp = a.spacing;
    auto nearest = [sp](const Pixel& p, const std::vector<Pixel>& set) {
        double best = kInf;
        for (const auto& q : set) {
            const double dy = (static_cast<double>(p.first) - static_cast<double>(q.first)) * sp.y;
            const double dx = (static_cast<double>(p.second) - static_cast<double>(q.second)) * sp.x;
            best = std::min(best, dy * dy + dx * dx);
        }
        return std::sqrt(best);
    };
    double total = 0.0;
    for (const auto& p : sa) total += nearest(p, sb);
    for (const auto& q : sb) total += nearest(q, sa);
    return total / static_cast<double>(sa.size() + sb.size());
}

MeanStd mean_std(const std::vector<double>& values) {
    MeanStd r;
    r.n = values.size();
    if (values.empty()) return r;
    double s = 0.0;
    for (double v : values) s += v;
    r.mean = s / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(values.size()));
    return r;
}

std::vector<CaseResult> evaluate_case(const LabelMap& pred, const LabelMap& gt, Spacing spacing,
                                      const std::vector<std::uint8_t>& classes, std::size_t num_classes,
                                      std::size_t case_id) {
    FEATSIM_REQUIRE(pred.height == gt.height && pred.width == gt.width, "evaluate: prediction and GT extents differ");
    for (auto c : classes)
        FEATSIM_REQUIRE(c < num_classes, "evaluate: unknown class id " + std::to_string(c));
    for (const auto* m : {&pred, &gt})
        for (auto c : m->labels)
            FEATSIM_REQUIRE(c < num_classes, "evaluate: label map contains unknown class id " + std::to_string(c));
    std::vector<CaseResult> out;
    for (auto c : classes) {
        const auto a = BinaryMask::from_labels(pred, c, spacing);
        const auto b = BinaryMask::from_labels(gt, c, spacing);
        out.push_back({case_id, c, dsc(a, b), assd(a, b)});
    }
    return out;
}

ClassReport aggregate(std::vector<CaseResult> cases, const std::vector<std::uint8_t>& classes) {
    ClassReport r;
    auto summarize = [&](std::optional<std::uint8_t> cls) {
        std::vector<double> d, s;
        for (const auto& c : cases) {
            if (cls && c.cls != *cls) continue;
            d.push_back(c.dsc);
            if (c.assd) s.push_back(*c.assd);
        }
        return ClassSummary{cls.value_or(0), mean_std(d), mean_std(s)};
    };
    for (auto c : classes) r.per_class.push_back(summarize(c));
    r.overall = summarize(std::nullopt);
    r.cases = std::move(cases);
    return r;
}

std::string format_mean_std(const MeanStd& v, int decimals, double scale) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f±%.*f", decimals, v.mean * scale, decimals, v.std * scale);
    return buf;
}

std::string report_csv(const ClassReport& report) {
    std::ostringstream os;
    os << "case,class,dsc,assd\n";
    char buf[64];
    for (const auto& c : report.cases) {
        os << c.case_id << ',' << static_cast<int>(c.cls) << ',';
        std::snprintf(buf, sizeof buf, "%.3f", c.dsc * 100.0);
        os << buf << ',';
        if (c.assd) {
            std::snprintf(buf, sizeof buf, "%.4f", *c.assd);
            os << buf;
        }
        os << '\n';
    }
    auto summary_row = [&os](const ClassSummary& s, const std::string& label) {
        os << "mean±std," << label << ',' << format_mean_std(s.dsc, 1, 100.0) << ','
           << (s.assd.n ? format_mean_std(s.assd, 2) : std::string()) << '\n';
    };
    for (const auto& s : report.per_class) summary_row(s, std::to_string(static_cast<int>(s.cls)));
    summary_row(report.overall, "all");
    return os.str();
}

void write_report_csv(const ClassReport& report, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw RuntimeError("cannot write " + path.string());
    f << report_csv(report);
}

}  // namespace featsim::metrics
