#pragma once

#include <functional>
#include <string>
#include <vector>

#include "wsaflow/rng.hpp"
#include "wsaflow/tensor.hpp"

namespace wsaflow {

// Compares reverse-mode gradients of a scalar-valued build function against
// central finite differences, perturbing every element of every input leaf.
// `rebuild` must construct the graph afresh from the inputs' current values.
// Returns the worst relative error with denominator max(|analytic|, |numeric|, 1e-8).
//
// require_stable_probe guards piecewise-smooth networks: each element is
// probed at eps and 8*eps, and a sample whose two estimates disagree beyond a
// third of the 1e-3 acceptance tolerance is excluded. Probes that straddle an
// abs / leaky-relu / max kink or that sit in cancellation noise fail this
// self-consistency test and cannot judge the analytic gradient either way;
// a genuinely wrong gradient on any measurable element still fails.
double grad_check(const std::function<TensorD()>& rebuild, const std::vector<TensorD>& inputs,
                  double eps = 1e-5, bool require_stable_probe = false);

struct OpCheck {
    std::string name;
    // Runs one randomized check; returns the max relative error.
    std::function<double(uint64_t seed)> run;
};

// One entry per differentiable op in the tensor engine.
const std::vector<OpCheck>& registered_op_checks();

}  // namespace wsaflow
