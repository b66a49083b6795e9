#pragma once

// TSR container: "TSR1", u8 dtype tag (0 = f32, 1 = u8), u8 ndim,
// ndim x u32 little-endian extents, row-major little-endian payload.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "featsim/error.hpp"
#include "featsim/label_map.hpp"
#include "featsim/tensor.hpp"

namespace featsim::tsr {

enum class Dtype : std::uint8_t { f32 = 0, u8 = 1 };

enum class ErrorKind {
    io,
    bad_magic,
    bad_dtype,
    bad_header,  // ndim == 0 or a zero extent
    extent_overflow,
    truncated,
    trailing_data,
};

const char* to_string(ErrorKind kind);

class TsrError : public RuntimeError {
public:
    TsrError(ErrorKind kind, const std::string& what) : RuntimeError(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Serialized size in bytes of a container with the given extents.
std::size_t encoded_size(Dtype dtype, const Shape& shape);

std::vector<std::uint8_t> encode(const Tensor& t);
std::vector<std::uint8_t> encode(const LabelMap& m);

struct Decoded {
    Dtype dtype;
    Shape shape;
    std::vector<float> f32;
    std::vector<std::uint8_t> u8;
};
Decoded decode(std::span<const std::uint8_t> bytes);

void write(const Tensor& t, const std::filesystem::path& path);
void write(const LabelMap& m, const std::filesystem::path& path);

/// Reads an f32 container.
Tensor read_tensor(const std::filesystem::path& path);
/// Reads a rank-2 u8 container.
LabelMap read_labels(const std::filesystem::path& path);

}  // namespace featsim::tsr
