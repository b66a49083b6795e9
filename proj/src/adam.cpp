#include "featsim/adam.hpp"

#include <cmath>

#include "featsim/error.hpp"
#include "featsim/simd/kernels.hpp"

namespace featsim {

void Adam::step(std::span<Parameter* const> params) {
    ++t_;
    const double t = static_cast<double>(t_);
    const simd::AdamCoeffs coeffs{
        options_.lr,
        options_.beta1,
        options_.beta2,
        options_.eps,
        static_cast<float>(1.0 - std::pow(static_cast<double>(options_.beta1), t)),
        static_cast<float>(1.0 - std::pow(static_cast<double>(options_.beta2), t)),
    };
    const auto& kt = simd::active_kernels();
    for (Parameter* p : params) {
        if (!p->trainable()) continue;
        auto [it, inserted] = moments_.try_emplace(p->id());
        if (inserted) {
            it->second.first = Tensor::zeros(p->value().shape());
            it->second.second = Tensor::zeros(p->value().shape());
        }
        Tensor& g = p->mutable_grad();
        if (g.numel() != p->value().numel()) g = Tensor::zeros(p->value().shape());
        kt.adam_update(p->value().numel(), p->mutable_value().ptr(), it->second.first.ptr(), it->second.second.ptr(),
                       g.ptr(), coeffs);
    }
}

const Adam::Moments* Adam::moments(const Parameter& p) const {
    auto it = moments_.find(p.id());
    return it == moments_.end() ? nullptr : &it->second;
}

void zero_grad(std::span<Parameter* const> params) {
    for (Parameter* p : params) p->zero_grad();
}

}  // namespace featsim
