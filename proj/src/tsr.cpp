#include "featsim/tsr.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace featsim::tsr {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'R', '1'};
constexpr std::size_t kFixedHeader = 4 + 1 + 1;


void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::vector<std::uint8_t> header(Dtype dtype, const Shape& shape) {
    FEATSIM_REQUIRE(!shape.empty() && shape.size() <= 255, "tsr: rank must be in [1, 255]");
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    out.push_back(static_cast<std::uint8_t>(dtype));
    out.push_back(static_cast<std::uint8_t>(shape.size()));
    for (auto e : shape) {
        FEATSIM_REQUIRE(e > 0 && e <= std::numeric_limits<std::uint32_t>::max(), "tsr: extent out of u32 range");
        put_u32(out, static_cast<std::uint32_t>(e));
    }
    return out;
}

void write_bytes(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw TsrError(ErrorKind::io, "tsr: cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw TsrError(ErrorKind::io, "tsr: write failed for " + path.string());
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw TsrError(ErrorKind::io, "tsr: cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::io: return "io";
        case ErrorKind::bad_magic: return "bad_magic";
        case ErrorKind::bad_dtype: return "bad_dtype";
        case ErrorKind::bad_header: return "bad_header";
        case ErrorKind::extent_overflow: return "extent_overflow";
        case ErrorKind::truncated: return "truncated";
        case ErrorKind::trailing_data: return "trailing_data";
    }
    return "unknown";
}

std::size_t encoded_size(Dtype dtype, const Shape& shape) {
    const std::size_t elem = dtype == Dtype::f32 ? 4 : 1;
    return kFixedHeader + 4 * shape.size() + shape_numel(shape) * elem;
}

std::vector<std::uint8_t> encode(const Tensor& t) {
    auto out = header(Dtype::f32, t.shape());
    out.reserve(out.size() + 4 * t.numel());
    for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

std::vector<std::uint8_t> encode(const LabelMap& m) {
    auto out = header(Dtype::u8, Shape{m.height, m.width});
    out.insert(out.end(), m.labels.begin(), m.labels.end());
    return out;
}

Decoded decode(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw TsrError(ErrorKind::bad_magic, "tsr: missing TSR1 magic");
    if (bytes.size() < kFixedHeader) throw TsrError(ErrorKind::truncated, "tsr: header truncated");
    const std::uint8_t tag = bytes[4];
    if (tag > 1) throw TsrError(ErrorKind::bad_dtype, "tsr: unknown dtype tag " + std::to_string(tag));
    const auto dtype = static_cast<Dtype>(tag);
    const std::size_t ndim = bytes[5];
    if (ndim == 0) throw TsrError(ErrorKind::bad_header, "tsr: rank 0");
    if (bytes.size() < kFixedHeader + 4 * ndim) throw TsrError(ErrorKind::truncated, "tsr: extents truncated");

    Shape shape(ndim);
    const std::size_t elem = dtype == Dtype::f32 ? 4 : 1;
    std::uint64_t count = 1;
    for (std::size_t i = 0; i < ndim; ++i) {
        const std::uint32_t e = get_u32(bytes.data() + kFixedHeader + 4 * i);
        if (e == 0) throw TsrError(ErrorKind::bad_header, "tsr: zero extent at axis " + std::to_string(i));
        if (count > std::numeric_limits<std::uint64_t>::max() / e / elem)
            throw TsrError(ErrorKind::extent_overflow, "tsr: element count overflows");
        count *= e;
        shape[i] = e;
    }
    const std::size_t offset = kFixedHeader + 4 * ndim;
    const std::uint64_t payload = count * elem;
    if (payload > bytes.size() - offset)
        throw TsrError(ErrorKind::truncated, "tsr: payload has " + std::to_string(bytes.size() - offset) +
                                                 " bytes, expected " + std::to_string(payload));
    if (payload < bytes.size() - offset) throw TsrError(ErrorKind::trailing_data, "tsr: bytes after payload");

    Decoded d{dtype, std::move(shape), {}, {}};
    const std::uint8_t* p = bytes.data() + offset;
    if (dtype == Dtype::f32) {
        d.f32.resize(count);
        for (std::size_t i = 0; i < count; ++i) d.f32[i] = std::bit_cast<float>(get_u32(p + 4 * i));
    } else {
        d.u8.assign(p, p + count);
    }
    return d;
}

void write(const Tensor& t, const std::filesystem::path& path) { write_bytes(encode(t), path); }
void write(const LabelMap& m, const std::filesystem::path& path) { write_bytes(encode(m), path); }

Tensor read_tensor(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    auto d = decode(bytes);
    if (d.dtype != Dtype::f32) throw TsrError(ErrorKind::bad_dtype, "tsr: " + path.string() + " is not f32");
    return Tensor(std::move(d.shape), std::move(d.f32));
}

LabelMap read_labels(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    auto d = decode(bytes);
    if (d.dtype != Dtype::u8 || d.shape.size() != 2)
        throw TsrError(ErrorKind::bad_dtype, "tsr: " + path.string() + " is not a rank-2 u8 label map");
    LabelMap m;
    m.height = d.shape[0];
    m.width = d.shape[1];
    m.labels = std::move(d.u8);
    return m;
}

}  // namespace featsim::tsr
