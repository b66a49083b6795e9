#pragma once

// Finite-difference verification of analytic gradients.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "featsim/autograd.hpp"

namespace featsim::gradcheck {

/// A differentiable input: its value is perturbed in place, its analytic
/// gradient read after backward().
struct Probe {
    std::string name;
    Tensor* value;
    std::function<Tensor()> grad;
};

struct Problem {
    std::string name;
    std::vector<Probe> probes;
    std::function<Var()> loss;         // rebuilds the graph from current values
    /// Objective for the finite differences, evaluated in double; defaults
    /// to the value of loss().
    std::function<double()> value;
    std::function<void()> zero_grads;  // clears every probe's gradient
};

struct Options {
    double step = 1e-3;
    double tolerance = 1e-3;
    /// Test hook: scale the analytic gradient of the first probe by this
    /// factor before comparing.
    std::optional<double> corrupt_factor;
};

struct ProbeError {
    std::string name;
    double rel_error;
};

struct Result {
    std::string name;
    std::vector<ProbeError> probes;
    double max_rel_error = 0.0;
    bool passed = false;
};

/// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||)
/// per probe, with central differences of the given step.
Result check(Problem& problem, const Options& options = {});

struct SuiteOptions {
    std::uint64_t seed = 0;
    std::size_t seeds = 5;
    std::vector<std::size_t> sizes{4, 8};  // spatial extents to exercise
    Options check;
    std::optional<std::string> corrupt_op;  // apply check.corrupt_factor to this op only
};

/// Op names covered by the suite, in report order.
std::vector<std::string> suite_ops();

struct SuiteEntry {
    std::string op;
    std::size_t runs = 0;
    double max_rel_error = 0.0;
    bool passed = true;
};

/// Runs every op over all seeds and sizes; entries follow suite_ops().
std::vector<SuiteEntry> run_suite(const SuiteOptions& options);

}  // namespace featsim::gradcheck
