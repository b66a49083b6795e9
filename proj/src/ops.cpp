#include "featsim/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "featsim/error.hpp"
#include "featsim/simd/kernels.hpp"

namespace featsim::ops {

namespace {

void require_rank3(const Var& x, const char* op) {
    FEATSIM_REQUIRE(x.shape().size() == 3,
                    std::string(op) + ": expected a (C, H, W) tensor, got " + shape_to_string(x.shape()));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
    FEATSIM_REQUIRE(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                                                shape_to_string(b.shape()));
}

// col[(ci*k + ky)*k + kx, y*W + x] = in[ci, y + ky - pad, x + kx - pad] (zero outside).
void im2col(const float* in, std::size_t cin, std::size_t h, std::size_t w, std::size_t k, float* col) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
    const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
    for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
                float* row = col + ((ci * k + ky) * k + kx) * h * w;
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                const float* src = in + ci * h * w;
                for (std::ptrdiff_t y = 0; y < H; ++y) {
                    const std::ptrdiff_t sy = y + dy;
                    float* dst = row + y * W;
                    if (sy < 0 || sy >= H) {
                        std::fill(dst, dst + W, 0.0f);
                        continue;
                    }
                    const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
                    const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
                    std::fill(dst, dst + x0, 0.0f);
                    std::copy(src + sy * W + x0 + dx, src + sy * W + x1 + dx, dst + x0);
                    std::fill(dst + x1, dst + W, 0.0f);
                }
            }
}

void col2im_add(const float* col, std::size_t cin, std::size_t h, std::size_t w, std::size_t k, float* out) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
    const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
    for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
                const float* row = col + ((ci * k + ky) * k + kx) * h * w;
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                float* dst = out + ci * h * w;
                for (std::ptrdiff_t y = 0; y < H; ++y) {
                    const std::ptrdiff_t sy = y + dy;
                    if (sy < 0 || sy >= H) continue;
                    const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
                    const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
                    const float* src = row + y * W;
                    float* d = dst + sy * W + dx;
                    for (std::ptrdiff_t x = x0; x < x1; ++x) d[x] += src[x];
                }
            }
}

void transpose(const float* src, std::size_t rows, std::size_t cols, float* dst) {
    constexpr std::size_t kBlock = 32;
    for (std::size_t r0 = 0; r0 < rows; r0 += kBlock)
        for (std::size_t c0 = 0; c0 < cols; c0 += kBlock) {
            const std::size_t r1 = std::min(rows, r0 + kBlock), c1 = std::min(cols, c0 + kBlock);
            for (std::size_t r = r0; r < r1; ++r)
                for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
        }
}

}  // namespace

Var conv2d(const Var& x, const Var& kernel, const Var& bias) {
    require_rank3(x, "conv2d");
    const Shape& ks = kernel.shape();
    FEATSIM_REQUIRE(ks.size() == 4, "conv2d: kernel must be (Cout, Cin, k, k), got " + shape_to_string(ks));
    FEATSIM_REQUIRE(ks[2] == ks[3] && ks[2] % 2 == 1, "conv2d: kernel must be square with odd size, got " + shape_to_string(ks));
    const std::size_t cin = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    const std::size_t cout = ks[0], k = ks[2];
    FEATSIM_REQUIRE(ks[1] == cin, "conv2d: input has " + std::to_string(cin) + " channels but kernel expects " +
                                      std::to_string(ks[1]));
    FEATSIM_REQUIRE(bias.shape() == Shape{cout}, "conv2d: bias must have shape [" + std::to_string(cout) + "], got " +
                                                     shape_to_string(bias.shape()));

    const std::size_t hw = h * w, ck = cin * k * k;
    // 1x1 kernels read the input directly; no column buffer is built.
    Tensor col;
    const float* colp = x.value().ptr();
    if (k != 1) {
        col = Tensor(Shape{ck, hw});
        im2col(x.value().ptr(), cin, h, w, k, col.ptr());
        colp = col.ptr();
    }

    Tensor out(Shape{cout, h, w});
    for (std::size_t co = 0; co < cout; ++co) std::fill_n(out.ptr() + co * hw, hw, bias.value()[co]);
    simd::gemm(cout, hw, ck, kernel.value().ptr(), ck, colp, hw, out.ptr(), hw);

    auto fn = [cin, h, w, k, cout, hw, ck, col = std::move(col)](const Tensor& g, std::span<const NodePtr> ps) {
        const NodePtr& xn = ps[0];
        const NodePtr& kn = ps[1];
        const NodePtr& bn = ps[2];
        if (Tensor* gb = grad_sink(bn)) {
            for (std::size_t co = 0; co < cout; ++co) {
                double s = 0.0;
                const float* gr = g.ptr() + co * hw;
                for (std::size_t i = 0; i < hw; ++i) s += gr[i];
                (*gb)[co] += static_cast<float>(s);
            }
        }
        if (Tensor* gk = grad_sink(kn)) {
            const float* cp = k == 1 ? xn->value.ptr() : col.ptr();
            std::vector<float> col_t(hw * ck);
            transpose(cp, ck, hw, col_t.data());
            simd::gemm(cout, ck, hw, g.ptr(), hw, col_t.data(), ck, gk->ptr(), ck);
        }
        if (Tensor* gx = grad_sink(xn)) {
            std::vector<float> w_t(ck * cout);
            transpose(kn->value.ptr(), cout, ck, w_t.data());
            if (k == 1) {
                simd::gemm(ck, hw, cout, w_t.data(), cout, g.ptr(), hw, gx->ptr(), hw);
            } else {
                std::vector<float> dcol(ck * hw, 0.0f);
                simd::gemm(ck, hw, cout, w_t.data(), cout, g.ptr(), hw, dcol.data(), hw);
                col2im_add(dcol.data(), cin, h, w, k, gx->ptr());
            }
        }
    };
    return make_result(std::move(out), {x, kernel, bias}, std::move(fn));
}

Var relu(const Var& x) {
    Tensor out(x.shape());
    const auto& kt = simd::active_kernels();
    kt.relu_forward(x.numel(), x.value().ptr(), out.ptr());
    // The closure reads the output through a weak reference to avoid a cycle.
    auto result = make_result(std::move(out), {x}, nullptr);
    if (result.requires_grad()) {
        std::weak_ptr<Node> self = result.node();
        result.node()->backward_fn = [self](const Tensor& g, std::span<const NodePtr> ps) {
            if (Tensor* gx = grad_sink(ps[0])) {
                auto me = self.lock();
                simd::active_kernels().relu_backward(g.numel(), me->value.ptr(), g.ptr(), gx->ptr());
            }
        };
    }
    return result;
}

Var maxpool2x2(const Var& x) {
    require_rank3(x, "maxpool2x2");
    const std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    FEATSIM_REQUIRE(h % 2 == 0 && w % 2 == 0, "maxpool2x2: spatial size must be even, got " + shape_to_string(x.shape()));
    const std::size_t oh = h / 2, ow = w / 2;
    Tensor out(Shape{c, oh, ow});
    std::vector<std::uint32_t> argmax(c * oh * ow);
    const float* in = x.value().ptr();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xx = 0; xx < ow; ++xx) {
                std::size_t best = (ch * h + 2 * y) * w + 2 * xx;
                const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
                for (std::size_t idx : cand)
                    if (in[idx] > in[best]) best = idx;
                const std::size_t o = (ch * oh + y) * ow + xx;
                out[o] = in[best];
                argmax[o] = static_cast<std::uint32_t>(best);
            }
    auto fn = [argmax = std::move(argmax)](const Tensor& g, std::span<const NodePtr> ps) {
        if (Tensor* gx = grad_sink(ps[0]))
            for (std::size_t o = 0; o < argmax.size(); ++o) (*gx)[argmax[o]] += g[o];
    };
    return make_result(std::move(out), {x}, std::move(fn));
}

Var nearest_interpolate(const Var& x, std::size_t target_h, std::size_t target_w) {
    require_rank3(x, "nearest_interpolate");
    FEATSIM_REQUIRE(target_h >= 1 && target_w >= 1, "nearest_interpolate: target extents must be >= 1");
    const std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    std::vector<std::size_t> ys(target_h), xs(target_w);
    for (std::size_t i = 0; i < target_h; ++i) ys[i] = i * h / target_h;
    for (std::size_t j = 0; j < target_w; ++j) xs[j] = j * w / target_w;
    Tensor out(Shape{c, target_h, target_w});
    const float* in = x.value().ptr();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < target_h; ++i) {
            const float* src = in + (ch * h + ys[i]) * w;
            float* dst = out.ptr() + (ch * target_h + i) * target_w;
            for (std::size_t j = 0; j < target_w; ++j) dst[j] = src[xs[j]];
        }
    auto fn = [c, h, w, target_h, target_w, ys = std::move(ys), xs = std::move(xs)](const Tensor& g,
                                                                                 std::span<const NodePtr> ps) {
        Tensor* gx = grad_sink(ps[0]);
        if (!gx) return;
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < target_h; ++i) {
                float* dst = gx->ptr() + (ch * h + ys[i]) * w;
                const float* src = g.ptr() + (ch * target_h + i) * target_w;
                for (std::size_t j = 0; j < target_w; ++j) dst[xs[j]] += src[j];
            }
    };
    return make_result(std::move(out), {x}, std::move(fn));
}

Var upsample2x(const Var& x) {
    require_rank3(x, "upsample2x");
    return nearest_interpolate(x, 2 * x.shape()[1], 2 * x.shape()[2]);
}

Var concat_channels(const Var& a, const Var& b) {
    require_rank3(a, "concat_channels");
    require_rank3(b, "concat_channels");
    FEATSIM_REQUIRE(a.shape()[1] == b.shape()[1] && a.shape()[2] == b.shape()[2],
                    "concat_channels: spatial mismatch " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
    const std::size_t na = a.numel(), nb = b.numel();
    Tensor out(Shape{a.shape()[0] + b.shape()[0], a.shape()[1], a.shape()[2]});
    std::copy_n(a.value().ptr(), na, out.ptr());
    std::copy_n(b.value().ptr(), nb, out.ptr() + na);
    auto fn = [na, nb](const Tensor& g, std::span<const NodePtr> ps) {
        const auto& kt = simd::active_kernels();
        if (Tensor* ga = grad_sink(ps[0])) kt.axpy(na, 1.0f, g.ptr(), ga->ptr());
        if (Tensor* gb = grad_sink(ps[1])) kt.axpy(nb, 1.0f, g.ptr() + na, gb->ptr());
    };
    return make_result(std::move(out), {a, b}, std::move(fn));
}

Var softmax_channels(const Var& x) {
    require_rank3(x, "softmax_channels");
    const std::size_t c = x.shape()[0], hw = x.shape()[1] * x.shape()[2];
    Tensor out(x.shape());
    const float* in = x.value().ptr();
    for (std::size_t p = 0; p < hw; ++p) {
        float mx = -std::numeric_limits<float>::infinity();
        for (std::size_t ch = 0; ch < c; ++ch) mx = std::max(mx, in[ch * hw + p]);
        float s = 0.0f;
        for (std::size_t ch = 0; ch < c; ++ch) {
            const float e = std::exp(in[ch * hw + p] - mx);
            out[ch * hw + p] = e;
            s += e;
        }
        const float inv = 1.0f / s;
        for (std::size_t ch = 0; ch < c; ++ch) out[ch * hw + p] *= inv;
    }
    auto result = make_result(std::move(out), {x}, nullptr);
    if (result.requires_grad()) {
        std::weak_ptr<Node> self = result.node();
        result.node()->backward_fn = [self, c, hw](const Tensor& g, std::span<const NodePtr> ps) {
            Tensor* gx = grad_sink(ps[0]);
            if (!gx) return;
            const Tensor& y = self.lock()->value;
            for (std::size_t p = 0; p < hw; ++p) {
                float dotp = 0.0f;
                for (std::size_t ch = 0; ch < c; ++ch) dotp += g[ch * hw + p] * y[ch * hw + p];
                for (std::size_t ch = 0; ch < c; ++ch) (*gx)[ch * hw + p] += y[ch * hw + p] * (g[ch * hw + p] - dotp);
            }
        };
    }
    return result;
}

Var global_avg_pool(const Var& x) {
    require_rank3(x, "global_avg_pool");
    const std::size_t c = x.shape()[0], hw = x.shape()[1] * x.shape()[2];
    Tensor out(Shape{c});
    for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t i = 0; i < hw; ++i) s += x.value()[ch * hw + i];
        out[ch] = static_cast<float>(s / static_cast<double>(hw));
    }
    auto fn = [c, hw](const Tensor& g, std::span<const NodePtr> ps) {
        Tensor* gx = grad_sink(ps[0]);
        if (!gx) return;
        const float inv = 1.0f / static_cast<float>(hw);
        for (std::size_t ch = 0; ch < c; ++ch) {
            const float v = g[ch] * inv;
            float* dst = gx->ptr() + ch * hw;
            for (std::size_t i = 0; i < hw; ++i) dst[i] += v;
        }
    };
    return make_result(std::move(out), {x}, std::move(fn));
}

Var scale_channels(const Var& x, const Var& s) {
    require_rank3(x, "scale_channels");
    const std::size_t c = x.shape()[0], hw = x.shape()[1] * x.shape()[2];
    FEATSIM_REQUIRE(s.shape() == Shape{c}, "scale_channels: scale must have shape [" + std::to_string(c) + "], got " +
                                               shape_to_string(s.shape()));
    Tensor out(x.shape());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] = x.value()[ch * hw + i] * s.value()[ch];
    auto fn = [c, hw](const Tensor& g, std::span<const NodePtr> ps) {
        const Tensor& xv = ps[0]->value;
        const Tensor& sv = ps[1]->value;
        if (Tensor* gx = grad_sink(ps[0]))
            for (std::size_t ch = 0; ch < c; ++ch)
                simd::active_kernels().axpy(hw, sv[ch], g.ptr() + ch * hw, gx->ptr() + ch * hw);
        if (Tensor* gs = grad_sink(ps[1]))
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t i = 0; i < hw; ++i) acc += static_cast<double>(g[ch * hw + i]) * xv[ch * hw + i];
                (*gs)[ch] += static_cast<float>(acc);
            }
    };
    return make_result(std::move(out), {x, s}, std::move(fn));
}

Var mul_spatial(const Var& x, const Var& s) {
    require_rank3(x, "mul_spatial");
    const std::size_t c = x.shape()[0], hw = x.shape()[1] * x.shape()[2];
    FEATSIM_REQUIRE(s.shape() == (Shape{1, x.shape()[1], x.shape()[2]}),
                    "mul_spatial: map must have shape [1x" + std::to_string(x.shape()[1]) + "x" +
                        std::to_string(x.shape()[2]) + "], got " + shape_to_string(s.shape()));
    Tensor out(x.shape());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] = x.value()[ch * hw + i] * s.value()[i];
    auto fn = [c, hw](const Tensor& g, std::span<const NodePtr> ps) {
        const Tensor& xv = ps[0]->value;
        const Tensor& sv = ps[1]->value;
        if (Tensor* gx = grad_sink(ps[0]))
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t i = 0; i < hw; ++i) (*gx)[ch * hw + i] += g[ch * hw + i] * sv[i];
        if (Tensor* gs = grad_sink(ps[1]))
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t i = 0; i < hw; ++i) (*gs)[i] += g[ch * hw + i] * xv[ch * hw + i];
    };
    return make_result(std::move(out), {x, s}, std::move(fn));
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    Tensor out = a.value();
    simd::active_kernels().axpy(out.numel(), 1.0f, b.value().ptr(), out.ptr());
    auto fn = [](const Tensor& g, std::span<const NodePtr> ps) {
        const auto& kt = simd::active_kernels();
        if (Tensor* ga = grad_sink(ps[0])) kt.axpy(g.numel(), 1.0f, g.ptr(), ga->ptr());
        if (Tensor* gb = grad_sink(ps[1])) kt.axpy(g.numel(), 1.0f, g.ptr(), gb->ptr());
    };
    return make_result(std::move(out), {a, b}, std::move(fn));
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
    auto fn = [](const Tensor& g, std::span<const NodePtr> ps) {
        const auto& kt = simd::active_kernels();
        if (Tensor* ga = grad_sink(ps[0])) kt.axpy(g.numel(), 1.0f, g.ptr(), ga->ptr());
        if (Tensor* gb = grad_sink(ps[1])) kt.axpy(g.numel(), -1.0f, g.ptr(), gb->ptr());
    };
    return make_result(std::move(out), {a, b}, std::move(fn));
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a, b, "mul");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
    auto fn = [](const Tensor& g, std::span<const NodePtr> ps) {
        const Tensor& av = ps[0]->value;
        const Tensor& bv = ps[1]->value;
        if (Tensor* ga = grad_sink(ps[0]))
            for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * bv[i];
        if (Tensor* gb = grad_sink(ps[1]))
            for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] += g[i] * av[i];
    };
    return make_result(std::move(out), {a, b}, std::move(fn));
}

Var scale(const Var& a, float factor) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * factor;
    auto fn = [factor](const Tensor& g, std::span<const NodePtr> ps) {
        if (Tensor* ga = grad_sink(ps[0])) simd::active_kernels().axpy(g.numel(), factor, g.ptr(), ga->ptr());
    };
    return make_result(std::move(out), {a}, std::move(fn));
}

Var sum(const Var& x) {
    double s = 0.0;
    for (float v : x.value().data()) s += v;
    auto fn = [](const Tensor& g, std::span<const NodePtr> ps) {
        if (Tensor* gx = grad_sink(ps[0]))
            for (auto& v : gx->data()) v += g[0];
    };
    return make_result(Tensor::scalar(static_cast<float>(s)), {x}, std::move(fn));
}

Var mean(const Var& x) {
    const std::size_t n = x.numel();
    double s = 0.0;
    for (float v : x.value().data()) s += v;
    auto fn = [n](const Tensor& g, std::span<const NodePtr> ps) {
        if (Tensor* gx = grad_sink(ps[0])) {
            const float v = g[0] / static_cast<float>(n);
            for (auto& e : gx->data()) e += v;
        }
    };
    return make_result(Tensor::scalar(static_cast<float>(s / static_cast<double>(n))), {x}, std::move(fn));
}

Var mean_squared_difference(const Var& a, const Var& b) {
    require_same_shape(a, b, "mean_squared_difference");
    const std::size_t n = a.numel();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a.value()[i]) - b.value()[i];
        s += d * d;
    }
    auto fn = [n](const Tensor& g, std::span<const NodePtr> ps) {
        const Tensor& av = ps[0]->value;
        const Tensor& bv = ps[1]->value;
        const float f = 2.0f * g[0] / static_cast<float>(n);
        Tensor* ga = grad_sink(ps[0]);
        Tensor* gb = grad_sink(ps[1]);
        for (std::size_t i = 0; i < n; ++i) {
            const float d = f * (av[i] - bv[i]);
            if (ga) (*ga)[i] += d;
            if (gb) (*gb)[i] -= d;
        }
    };
    return make_result(Tensor::scalar(static_cast<float>(s / static_cast<double>(n))), {a, b}, std::move(fn));
}

Var weighted_sum(const Var& x, const Tensor& weights) {
    FEATSIM_REQUIRE(x.shape() == weights.shape(), "weighted_sum: shape mismatch " + shape_to_string(x.shape()) + " vs " +
                                                      shape_to_string(weights.shape()));
    double s = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) s += static_cast<double>(x.value()[i]) * weights[i];
    auto fn = [weights](const Tensor& g, std::span<const NodePtr> ps) {
        if (Tensor* gx = grad_sink(ps[0])) simd::active_kernels().axpy(weights.numel(), g[0], weights.ptr(), gx->ptr());
    };
    return make_result(Tensor::scalar(static_cast<float>(s)), {x}, std::move(fn));
}

}  // namespace featsim::ops
