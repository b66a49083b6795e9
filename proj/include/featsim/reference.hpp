#pragma once

// Double-precision forward passes built from direct loops. They share no
// code with the float engine and serve as oracles for it.

#include <cstddef>
#include <vector>

#include "featsim/fsm.hpp"
#include "featsim/unet.hpp"

namespace featsim::reference {

struct DTensor {
    std::size_t c = 0, h = 0, w = 0;
    std::vector<double> v;

    DTensor() = default;
    DTensor(std::size_t c_, std::size_t h_, std::size_t w_) : c(c_), h(h_), w(w_), v(c_ * h_ * w_, 0.0) {}
    explicit DTensor(const Tensor& t);

    double& at(std::size_t ch, std::size_t y, std::size_t x) { return v[(ch * h + y) * w + x]; }
    double at(std::size_t ch, std::size_t y, std::size_t x) const { return v[(ch * h + y) * w + x]; }
};

DTensor conv2d(const DTensor& x, const Tensor& kernel, const Tensor& bias);
DTensor relu(DTensor x);
DTensor maxpool2x2(const DTensor& x);
DTensor upsample2x(const DTensor& x);
DTensor nearest_interpolate(const DTensor& x, std::size_t th, std::size_t tw);
DTensor concat_channels(const DTensor& a, const DTensor& b);
DTensor softmax_channels(const DTensor& x);

/// Class probabilities of the network for one (C, H, W) input.
DTensor unet_probs(const UNet& net, const Tensor& x);

/// FSM distance mean((R - A)^2).
double fsm_distance(const Tensor& f_ct, const Tensor& f_gt, const FsmParams& params);

double dice_loss(const DTensor& probs, const Tensor& target_onehot, double eps);

}  // namespace featsim::reference
