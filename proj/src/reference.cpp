#include "featsim/reference.hpp"

#include <algorithm>
#include <cmath>

#include "featsim/error.hpp"

namespace featsim::reference {

DTensor::DTensor(const Tensor& t) {
    FEATSIM_REQUIRE(t.ndim() == 3, "reference: expected a (C, H, W) tensor");
    c = t.dim(0);
    h = t.dim(1);
    w = t.dim(2);
    v.assign(t.data().begin(), t.data().end());
}

DTensor conv2d(const DTensor& x, const Tensor& kernel, const Tensor& bias) {
    const std::size_t cout = kernel.dim(0), cin = kernel.dim(1), k = kernel.dim(2);
    FEATSIM_REQUIRE(cin == x.c, "reference conv2d: channel mismatch");
    const long pad = static_cast<long>(k / 2), hh = static_cast<long>(x.h), ww = static_cast<long>(x.w);
    DTensor y(cout, x.h, x.w);
    for (std::size_t o = 0; o < cout; ++o)
        for (long i = 0; i < hh; ++i)
            for (long j = 0; j < ww; ++j) {
                double acc = bias[o];
                for (std::size_t ci = 0; ci < cin; ++ci)
                    for (long u = 0; u < static_cast<long>(k); ++u)
                        for (long v = 0; v < static_cast<long>(k); ++v) {
                            const long yy = i + u - pad, xx = j + v - pad;
                            if (yy < 0 || xx < 0 || yy >= hh || xx >= ww) continue;
                            acc += static_cast<double>(kernel[((o * cin + ci) * k + u) * k + v]) *
                                   x.at(ci, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
                        }
                y.at(o, static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = acc;
            }
    return y;
}

DTensor relu(DTensor x) {
    for (auto& v : x.v) v = std::max(v, 0.0);
    return x;
}

DTensor maxpool2x2(const DTensor& x) {
    DTensor y(x.c, x.h / 2, x.w / 2);
    for (std::size_t c = 0; c < x.c; ++c)
        for (std::size_t i = 0; i < y.h; ++i)
            for (std::size_t j = 0; j < y.w; ++j)
                y.at(c, i, j) = std::max({x.at(c, 2 * i, 2 * j), x.at(c, 2 * i, 2 * j + 1), x.at(c, 2 * i + 1, 2 * j),
                                          x.at(c, 2 * i + 1, 2 * j + 1)});
    return y;
}

DTensor upsample2x(const DTensor& x) { return nearest_interpolate(x, 2 * x.h, 2 * x.w); }

DTensor nearest_interpolate(const DTensor& x, std::size_t th, std::size_t tw) {
    DTensor y(x.c, th, tw);
    for (std::size_t c = 0; c < x.c; ++c)
        for (std::size_t i = 0; i < th; ++i)
            for (std::size_t j = 0; j < tw; ++j) y.at(c, i, j) = x.at(c, i * x.h / th, j * x.w / tw);
    return y;
}

DTensor concat_channels(const DTensor& a, const DTensor& b) {
    DTensor y(a.c + b.c, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), y.v.begin());
    std::copy(b.v.begin(), b.v.end(), y.v.begin() + static_cast<long>(a.v.size()));
    return y;
}

DTensor softmax_channels(const DTensor& x) {
    DTensor y = x;
    for (std::size_t i = 0; i < x.h; ++i)
        for (std::size_t j = 0; j < x.w; ++j) {
            double m = -INFINITY, s = 0.0;
            for (std::size_t c = 0; c < x.c; ++c) m = std::max(m, x.at(c, i, j));
            for (std::size_t c = 0; c < x.c; ++c) s += std::exp(x.at(c, i, j) - m);
            for (std::size_t c = 0; c < x.c; ++c) y.at(c, i, j) = std::exp(x.at(c, i, j) - m) / s;
        }
    return y;
}

namespace {

const Parameter& find(const std::vector<const Parameter*>& params, const std::string& name) {
    for (const auto* p : params)
        if (p->name() == name) return *p;
    throw PreconditionError("reference: no parameter named " + name);
}

DTensor conv(const std::vector<const Parameter*>& params, const std::string& layer, const DTensor& x) {
    return conv2d(x, find(params, layer + ".weight").value(), find(params, layer + ".bias").value());
}

DTensor conv_relu(const std::vector<const Parameter*>& params, const std::string& layer, const DTensor& x) {
    return relu(conv(params, layer, x));
}

}  // namespace

DTensor unet_probs(const UNet& net, const Tensor& x) {
    const auto params = net.parameters();
    const std::size_t depth = net.config().depth;
    std::vector<DTensor> skips;
    DTensor h(x);
    for (std::size_t l = 0; l < depth; ++l) {
        const std::string p = "enc" + std::to_string(l);
        h = conv_relu(params, p + ".conv2", conv_relu(params, p + ".conv1", h));
        skips.push_back(h);
        h = maxpool2x2(h);
    }
    h = conv_relu(params, "bottleneck.conv2", conv_relu(params, "bottleneck.conv1", h));
    for (std::size_t l = depth; l-- > 0;) {
        const std::string p = "dec" + std::to_string(l);
        const DTensor up = conv_relu(params, p + ".up", upsample2x(h));
        h = conv_relu(params, p + ".conv2", conv_relu(params, p + ".conv1", concat_channels(skips[l], up)));
    }
    return softmax_channels(conv(params, "head", h));
}

double fsm_distance(const Tensor& f_ct, const Tensor& f_gt, const FsmParams& params) {
    const DTensor gt(f_gt);
    const DTensor a = relu(conv2d(nearest_interpolate(DTensor(f_ct), gt.h, gt.w), params.adjust.weight.value(),
                                  params.adjust.bias.value()));
    const DTensor cs = relu(conv2d(gt, params.chanstat.weight.value(), params.chanstat.bias.value()));
    const DTensor ss = relu(conv2d(gt, params.spatstat.weight.value(), params.spatstat.bias.value()));
    const std::size_t n = a.h * a.w;

    DTensor mixed(2 * a.c, a.h, a.w);
    for (std::size_t c = 0; c < a.c; ++c) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += cs.v[c * n + i];
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            mixed.v[c * n + i] = a.v[c * n + i] * mean;
            mixed.v[(a.c + c) * n + i] = a.v[c * n + i] * ss.v[i];
        }
    }
    const DTensor r = relu(conv2d(mixed, params.reduce.weight.value(), params.reduce.bias.value()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) s += (r.v[i] - a.v[i]) * (r.v[i] - a.v[i]);
    return s / static_cast<double>(a.v.size());
}

double dice_loss(const DTensor& probs, const Tensor& target, double eps) {
    const std::size_t n = probs.h * probs.w;
    double total = 0.0;
    for (std::size_t c = 0; c < probs.c; ++c) {
        double inter = 0.0, sp = 0.0, sg = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            inter += probs.v[c * n + i] * target[c * n + i];
            sp += probs.v[c * n + i];
            sg += target[c * n + i];
        }
        total += (2.0 * inter + eps) / (sp + sg + eps);
    }
    return 1.0 - total / static_cast<double>(probs.c);
}

}  // namespace featsim::reference
