#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "featsim/autograd.hpp"

namespace featsim {

struct AdamOptions {
    float lr = 3e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

/// Adam with bias-corrected moments. Moments are keyed by parameter id and
/// created lazily with the parameter's shape.
class Adam {
public:
    explicit Adam(AdamOptions options = {}) : options_(options) {}

    /// One update of every trainable parameter in `params`. Gradients are
    /// read, not cleared.
    void step(std::span<Parameter* const> params);
    void step(std::vector<Parameter*> params) { step(std::span<Parameter* const>(params)); }

    std::uint64_t steps() const { return t_; }
    const AdamOptions& options() const { return options_; }

    struct Moments {
        Tensor first;
        Tensor second;
    };
    const Moments* moments(const Parameter& p) const;

private:
    AdamOptions options_;
    std::uint64_t t_ = 0;
    std::unordered_map<std::uint64_t, Moments> moments_;
};

void zero_grad(std::span<Parameter* const> params);

}  // namespace featsim
