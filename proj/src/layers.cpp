#include "featsim/layers.hpp"

#include <cmath>

#include "featsim/ops.hpp"

namespace featsim {

Conv2dLayer Conv2dLayer::make(const std::string& name, std::size_t in_channels, std::size_t out_channels,
                              std::size_t kernel_size, std::mt19937_64& rng) {
    const double fan_in = static_cast<double>(in_channels * kernel_size * kernel_size);
    std::normal_distribution<float> dist(0.0f, static_cast<float>(std::sqrt(2.0 / fan_in)));
    Tensor w(Shape{out_channels, in_channels, kernel_size, kernel_size});
    for (auto& v : w.data()) v = dist(rng);
    return Conv2dLayer{Parameter(name + ".weight", std::move(w)), Parameter(name + ".bias", Tensor(Shape{out_channels}))};
}

Var Conv2dLayer::operator()(const Var& x) const { return ops::conv2d(x, weight.var(), bias.var()); }

}  // namespace featsim
