#include "featsim/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "featsim/error.hpp"

namespace featsim {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
    for (auto e : shape_) FEATSIM_REQUIRE(e > 0, "tensor extents must be positive, got " + shape_to_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto e : shape_) FEATSIM_REQUIRE(e > 0, "tensor extents must be positive, got " + shape_to_string(shape_));
    FEATSIM_REQUIRE(shape_numel(shape_) == data_.size(),
                    "payload length " + std::to_string(data_.size()) + " does not match shape " + shape_to_string(shape_));
}

float Tensor::item() const {
    FEATSIM_REQUIRE(data_.size() == 1, "item() on tensor of shape " + shape_to_string(shape_));
    return data_[0];
}

void Tensor::fill(float v) {
    for (auto& x : data_) x = v;
}

Tensor Tensor::reshaped(Shape shape) const {
    FEATSIM_REQUIRE(shape_numel(shape) == data_.size(), "reshape to " + shape_to_string(shape) + " changes element count");
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
    for (float x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

bool Tensor::bit_equal(const Tensor& other) const {
    return shape_ == other.shape_ &&
           (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
}

std::uint64_t hash_tensor(const Tensor& t, std::uint64_t seed) {
    std::uint64_t h = seed;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    };
    for (auto e : t.shape()) {
        std::uint64_t v = e;
        mix(&v, sizeof v);
    }
    mix(t.ptr(), t.numel() * sizeof(float));
    return h;
}

}  // namespace featsim
