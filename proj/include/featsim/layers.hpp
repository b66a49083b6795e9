#pragma once

#include <random>
#include <string>

#include "featsim/autograd.hpp"

namespace featsim {

/// Convolution with bias, He (fan-in) initialized.
struct Conv2dLayer {
    Parameter weight;  // (Cout, Cin, k, k)
    Parameter bias;    // (Cout)

    static Conv2dLayer make(const std::string& name, std::size_t in_channels, std::size_t out_channels,
                            std::size_t kernel_size, std::mt19937_64& rng);

    Var operator()(const Var& x) const;
    std::size_t in_channels() const { return weight.value().dim(1); }
    std::size_t out_channels() const { return weight.value().dim(0); }
    std::size_t kernel_size() const { return weight.value().dim(2); }
};

/// Scalar count of a conv layer with bias.
constexpr std::size_t conv_param_count(std::size_t cin, std::size_t cout, std::size_t k) {
    return cout * cin * k * k + cout;
}

}  // namespace featsim
