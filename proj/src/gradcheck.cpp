#include "featsim/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "featsim/error.hpp"
#include "featsim/fsm.hpp"
#include "featsim/ops.hpp"
#include "featsim/reference.hpp"
#include "featsim/training.hpp"
#include "featsim/unet.hpp"

namespace featsim::gradcheck {

Result check(Problem& problem, const Options& options) {
    Result r;
    r.name = problem.name;
    problem.zero_grads();
    backward(problem.loss());
    const auto objective = [&problem]() -> double {
        NoGradGuard no_grad;
        return problem.value ? problem.value() : problem.loss().value()[0];
    };

    for (std::size_t pi = 0; pi < problem.probes.size(); ++pi) {
        auto& probe = problem.probes[pi];
        Tensor analytic = probe.grad();
        if (pi == 0 && options.corrupt_factor)
            for (auto& v : analytic.data()) v = static_cast<float>(v * *options.corrupt_factor);

        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        Tensor& x = *probe.value;
        for (std::size_t j = 0; j < x.numel(); ++j) {
            const float orig = x[j];
            const float up = static_cast<float>(orig + options.step);
            const float down = static_cast<float>(orig - options.step);
            x[j] = up;
            const double f_up = objective();
            x[j] = down;
            const double f_down = objective();
            x[j] = orig;
            const double numeric = (f_up - f_down) / (static_cast<double>(up) - static_cast<double>(down));
            const double a = analytic[j];
            diff2 += (a - numeric) * (a - numeric);
            a2 += a * a;
            n2 += numeric * numeric;
        }
        const double denom = std::max(std::sqrt(std::max(a2, n2)), 1e-12);
        const double err = diff2 == 0.0 ? 0.0 : std::sqrt(diff2) / denom;
        r.probes.push_back({probe.name, err});
        r.max_rel_error = std::max(r.max_rel_error, err);
    }
    r.passed = r.max_rel_error <= options.tolerance;
    return r;
}

namespace {

Tensor uniform(const Shape& s, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
    std::uniform_real_distribution<float> d(lo, hi);
    Tensor t(s);
    for (auto& v : t.data()) v = d(rng);
    return t;
}

// Values at least `gap` away from zero so no probe straddles the ReLU kink.
Tensor away_from_zero(const Shape& s, std::mt19937_64& rng, float gap = 0.05f) {
    Tensor t = uniform(s, rng);
    for (auto& v : t.data())
        if (std::abs(v) < gap) v = v < 0.0f ? v - gap : v + gap;
    return t;
}

// Distinct values spaced 0.01 apart in random order, so every pooling
// window has a unique maximum separated by more than the FD step.
Tensor well_separated(const Shape& s, std::mt19937_64& rng) {
    Tensor t(s);
    std::vector<std::size_t> idx(t.numel());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < idx.size(); ++i) t[idx[i]] = -1.0f + 0.01f * static_cast<float>(i);
    return t;
}

double dot(const Tensor& a, const Tensor& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += static_cast<double>(a[i]) * w[i];
    return s;
}

double msd_reference(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.numel());
}

// Non-negative weights summing to about one per output and positive biases:
// with non-negative inputs every ReLU stays strictly active, so the composite
// is smooth in a neighbourhood far larger than the finite-difference step.
void make_all_active(const std::vector<Parameter*>& params, std::mt19937_64& rng) {
    for (auto* q : params) {
        Tensor& v = q->mutable_value();
        if (v.ndim() == 1) {
            v.fill(0.1f);
            continue;
        }
        const double fan_in = static_cast<double>(v.numel() / v.dim(0));
        std::uniform_real_distribution<float> d(0.0f, static_cast<float>(2.0 / fan_in));
        for (auto& w : v.data()) w = d(rng);
    }
}

// Graph inputs held by the problem closures.
struct Leaves {
    std::vector<Var> vars;
};

Problem from_leaves(std::string name, std::vector<Tensor> inputs, std::function<Var(const std::vector<Var>&)> fn) {
    auto leaves = std::make_shared<Leaves>();
    for (auto& t : inputs) leaves->vars.push_back(leaf(std::move(t)));
    Problem p;
    p.name = std::move(name);
    for (std::size_t i = 0; i < leaves->vars.size(); ++i) {
        Var v = leaves->vars[i];
        p.probes.push_back({"input" + std::to_string(i), &v.node()->value, [v] { return v.grad(); }});
    }
    p.loss = [leaves, fn = std::move(fn)] { return fn(leaves->vars); };
    p.zero_grads = [leaves] {
        for (auto& v : leaves->vars) v.node()->grad = Tensor::zeros(v.shape());
    };
    return p;
}

// Scalar objective from a tensor op: a random projection of its output.
std::function<Var(const std::vector<Var>&)> projected(std::function<Var(const std::vector<Var>&)> op, Tensor weights) {
    return [op = std::move(op), weights = std::move(weights)](const std::vector<Var>& in) {
        return ops::weighted_sum(op(in), weights);
    };
}

std::vector<const Tensor*> probe_values(const Problem& p) {
    std::vector<const Tensor*> out;
    for (const auto& probe : p.probes) out.push_back(probe.value);
    return out;
}

Shape out_shape(const std::function<Var(const std::vector<Var>&)>& op, const std::vector<Tensor>& inputs) {
    NoGradGuard no_grad;
    std::vector<Var> vs;
    for (const auto& t : inputs) vs.push_back(constant(t));
    return op(vs).shape();
}

Problem op_problem(const std::string& name, std::vector<Tensor> inputs, std::function<Var(const std::vector<Var>&)> op,
                   std::mt19937_64& rng) {
    const Shape s = out_shape(op, inputs);
    Tensor weights = uniform(s, rng);
    Problem p = from_leaves(name, std::move(inputs), projected(op, weights));
    p.value = [op, weights, tensors = probe_values(p)] {
        std::vector<Var> in;
        for (const Tensor* t : tensors) in.push_back(constant(*t));
        return dot(op(in).value(), weights);
    };
    return p;
}

template <class Params>
void add_parameter_probes(Problem& p, const std::shared_ptr<Params>& owner, std::vector<Parameter*> params) {
    for (Parameter* q : params)
        p.probes.push_back({q->name(), &q->mutable_value(), [owner, q] { return q->grad(); }});
    auto prev = p.zero_grads;
    p.zero_grads = [owner, params, prev] {
        prev();
        for (auto* q : params) q->zero_grad();
    };
}

Problem fsm_problem(const Shape& ct, const Shape& gt, std::mt19937_64& rng) {
    auto fsm = std::make_shared<FsmParams>(build_fsm(FsmConfig::from_shapes(ct, gt), rng()));
    make_all_active(fsm->parameters(), rng);
    const Tensor f_gt = uniform(gt, rng, 0.1f, 1.0f);
    Problem p = from_leaves("fsm_forward", {uniform(ct, rng, 0.1f, 1.0f)},
                            [fsm, f_gt](const std::vector<Var>& in) { return fsm_forward(in[0], f_gt, *fsm).distance; });
    add_parameter_probes(p, fsm, fsm->parameters());
    const Tensor* f_ct = p.probes[0].value;
    p.value = [fsm, f_gt, f_ct] { return reference::fsm_distance(*f_ct, f_gt, *fsm); };
    return p;
}

// Rectangle on a noisy background with its mask as the target. Hidden layers
// are all-active; the head keeps its signed initialisation since no ReLU
// follows it.
Problem unet_problem(std::size_t size, std::mt19937_64& rng) {
    auto net = std::make_shared<UNet>(UNet::build(UNetConfig{1, 2, 1, 4}, rng()));
    auto params = net->parameters();
    make_all_active(std::vector<Parameter*>(params.begin(), params.end() - 2), rng);

    Tensor x(Shape{1, size, size});
    LabelMap m(size, size);
    const std::size_t half = size / 2;
    const std::size_t y0 = rng() % half, x0 = rng() % half;
    const std::size_t y1 = y0 + 1 + rng() % half, x1 = x0 + 1 + rng() % half;
    std::uniform_real_distribution<float> jitter(0.0f, 0.1f);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t c = 0; c < size; ++c) {
            const bool inside = y >= y0 && y < y1 && c >= x0 && c < x1;
            m.at(y, c) = inside ? 1 : 0;
            x.at(0, y, c) = (inside ? 0.9f : 0.1f) + jitter(rng);
        }
    const Tensor target = one_hot(m, 2);

    Problem p;
    p.name = "unet_dice";
    p.loss = [net, x, target] { return dice_loss(net->forward(x).probs, target, 1.0f); };
    p.value = [net, x, target] { return reference::dice_loss(reference::unet_probs(*net, x), target, 1.0); };
    p.zero_grads = [] {};
    add_parameter_probes(p, net, params);
    return p;
}

Problem make_problem(const std::string& op, std::size_t size, std::mt19937_64& rng) {
    const std::size_t c = 2 + rng() % 3;  // 2..4 channels
    const Shape fm{c, size, size};
    if (op == "conv2d_3x3")
        return op_problem(op, {uniform(fm, rng), uniform(Shape{3, c, 3, 3}, rng), uniform(Shape{3}, rng)},
                          [](const auto& in) { return ops::conv2d(in[0], in[1], in[2]); }, rng);
    if (op == "conv2d_1x1")
        return op_problem(op, {uniform(fm, rng), uniform(Shape{3, c, 1, 1}, rng), uniform(Shape{3}, rng)},
                          [](const auto& in) { return ops::conv2d(in[0], in[1], in[2]); }, rng);
    if (op == "relu") return op_problem(op, {away_from_zero(fm, rng)}, [](const auto& in) { return ops::relu(in[0]); }, rng);
    if (op == "maxpool2x2")
        return op_problem(op, {well_separated(fm, rng)}, [](const auto& in) { return ops::maxpool2x2(in[0]); }, rng);
    if (op == "upsample2x")
        return op_problem(op, {uniform(fm, rng)}, [](const auto& in) { return ops::upsample2x(in[0]); }, rng);
    if (op == "nearest_interpolate") {
        const std::size_t th = size + 3, tw = size > 2 ? size - 1 : 1;
        return op_problem(op, {uniform(fm, rng)},
                          [th, tw](const auto& in) { return ops::nearest_interpolate(in[0], th, tw); }, rng);
    }
    if (op == "softmax_channels")
        return op_problem(op, {uniform(fm, rng, -2.0f, 2.0f)}, [](const auto& in) { return ops::softmax_channels(in[0]); },
                          rng);
    if (op == "concat_channels")
        return op_problem(op, {uniform(fm, rng), uniform(Shape{1, size, size}, rng)},
                          [](const auto& in) { return ops::concat_channels(in[0], in[1]); }, rng);
    if (op == "global_avg_pool")
        return op_problem(op, {uniform(fm, rng)}, [](const auto& in) { return ops::global_avg_pool(in[0]); }, rng);
    if (op == "scale_channels")
        return op_problem(op, {uniform(fm, rng), uniform(Shape{c}, rng)},
                          [](const auto& in) { return ops::scale_channels(in[0], in[1]); }, rng);
    if (op == "mul_spatial")
        return op_problem(op, {uniform(fm, rng), uniform(Shape{1, size, size}, rng)},
                          [](const auto& in) { return ops::mul_spatial(in[0], in[1]); }, rng);
    if (op == "mean_squared_difference") {
        Problem p = from_leaves(op, {uniform(fm, rng), uniform(fm, rng)},
                                [](const auto& in) { return ops::mean_squared_difference(in[0], in[1]); });
        p.value = [a = p.probes[0].value, b = p.probes[1].value] { return msd_reference(*a, *b); };
        return p;
    }
    if (op == "dice_loss") {
        LabelMap m(size, size);
        for (auto& v : m.labels) v = static_cast<std::uint8_t>(rng() % 2);
        const Tensor target = one_hot(m, 2);
        Problem p = from_leaves(op, {uniform(Shape{2, size, size}, rng, 0.05f, 0.95f)},
                                [target](const auto& in) { return dice_loss(in[0], target, 1.0f); });
        p.value = [probs = p.probes[0].value, target] {
            return reference::dice_loss(reference::DTensor(*probs), target, 1.0);
        };
        return p;
    }
    if (op == "fsm_forward") {
        // Mixed shapes: equal spatial size, then a CT map half the GT size.
        if (size <= 4) return fsm_problem(Shape{2, size, size}, Shape{3, size, size}, rng);
        return fsm_problem(Shape{2, size / 2, size / 2}, Shape{3, size, size}, rng);
    }
    if (op == "unet_dice") return unet_problem(std::max<std::size_t>(2, size & ~std::size_t{1}), rng);
    throw PreconditionError("gradcheck: unknown op '" + op + "'");
}

}  // namespace

std::vector<std::string> suite_ops() {
    return {"conv2d_3x3",       "conv2d_1x1",      "relu",           "maxpool2x2",
            "upsample2x",       "nearest_interpolate", "softmax_channels", "concat_channels",
            "global_avg_pool",  "scale_channels",  "mul_spatial",    "mean_squared_difference",
            "dice_loss",        "fsm_forward",     "unet_dice"};
}

std::vector<SuiteEntry> run_suite(const SuiteOptions& options) {
    FEATSIM_REQUIRE(!options.sizes.empty(), "gradcheck: no sizes given");
    for (auto s : options.sizes) FEATSIM_REQUIRE(s >= 2 && s % 2 == 0 && s <= 8, "gradcheck: sizes must be even and in [2, 8]");
    std::vector<SuiteEntry> out;
    for (const auto& op : suite_ops()) {
        SuiteEntry e{op};
        Options opt = options.check;
        if (!(options.corrupt_op && *options.corrupt_op == op)) opt.corrupt_factor.reset();
        for (std::size_t k = 0; k < options.seeds; ++k)
            for (auto size : options.sizes) {
                std::mt19937_64 rng(options.seed * 1000003ULL + k * 7919ULL + size);
                Problem p = make_problem(op, size, rng);
                const Result r = check(p, opt);
                ++e.runs;
                e.max_rel_error = std::max(e.max_rel_error, r.max_rel_error);
                e.passed = e.passed && r.passed;
            }
        out.push_back(e);
    }
    return out;
}

}  // namespace featsim::gradcheck
