#pragma once

#include <map>
#include <string>

#include "wsaflow/rng.hpp"
#include "wsaflow/tensor.hpp"

namespace wsaflow {

// All learnable tensors of a model, keyed "module.l{level}.layer.{w|b}".
// std::map keeps iteration order deterministic for optimizers and checkpoints.
template <typename T>
using ParamMap = std::map<std::string, TensorT<T>>;

template <typename T>
const TensorT<T>& param(const ParamMap<T>& m, const std::string& name) {
    auto it = m.find(name);
    if (it == m.end()) throw ConfigError("missing parameter: " + name);
    return it->second;
}

// He-uniform weight + zero bias. The init stream is derived from the name so
// that params shared between model variants start identical under one seed.
template <typename T>
void add_linear_params(ParamMap<T>& m, const std::string& prefix, int cin, int cout,
                       uint64_t seed, double weight_scale = 1.0) {
    Rng rng(fnv1a(prefix) ^ seed);
    const double limit = weight_scale * std::sqrt(6.0 / double(cin));
    std::vector<T> w(size_t(cin) * cout);
    for (auto& v : w) v = T(rng.uniform(-limit, limit));
    m.emplace(prefix + ".w", TensorT<T>::from_data({cin, cout}, std::move(w), true));
    m.emplace(prefix + ".b", TensorT<T>::zeros({cout}, true));
}

template <typename T>
TensorT<T> apply_linear(const ParamMap<T>& m, const std::string& prefix, const TensorT<T>& x) {
    return linear(x, param(m, prefix + ".w"), param(m, prefix + ".b"));
}

// Layers live at prefix.0, prefix.1, ...; leaky relu after each (optionally
// skipping the last).
template <typename T>
TensorT<T> apply_mlp(const ParamMap<T>& m, const std::string& prefix, TensorT<T> x, T slope,
                     bool activate_last = true) {
    int i = 0;
    while (m.count(prefix + "." + std::to_string(i) + ".w")) {
        x = apply_linear(m, prefix + "." + std::to_string(i), x);
        ++i;
        const bool last = !m.count(prefix + "." + std::to_string(i) + ".w");
        if (!last || activate_last) x = leaky_relu(x, slope);
    }
    if (i == 0) throw ConfigError("apply_mlp: no layers under " + prefix);
    return x;
}

template <typename T>
long long param_count(const ParamMap<T>& m) {
    long long n = 0;
    for (const auto& [name, t] : m) n += t.size();
    return n;
}

template <typename T>
void zero_param_grads(ParamMap<T>& m) {
    for (auto& [name, t] : m) t.zero_grad();
}

}  // namespace wsaflow
