#include "wsaflow/grad_check.hpp"

#include <cmath>

namespace wsaflow {

double grad_check(const std::function<TensorD()>& rebuild, const std::vector<TensorD>& inputs,
                  double eps, bool require_stable_probe) {
    if (eps <= 0) throw ContractError("grad_check: eps must be positive");
    TensorD loss = rebuild();
    if (loss.size() != 1) throw ContractError("grad_check: function must be scalar-valued");
    backward(loss);

    std::vector<std::vector<double>> analytic;
    for (const auto& in : inputs)
        analytic.push_back(in.has_grad() ? in.grad() : std::vector<double>(size_t(in.size()), 0.0));

    auto central = [&](TensorD& in, size_t i, double h) {
        auto& v = in.raw_value();
        const double keep = v[i];
        v[i] = keep + h;
        const double f_plus = rebuild().item();
        v[i] = keep - h;
        const double f_minus = rebuild().item();
        v[i] = keep;
        if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
            throw NumericError("grad_check: non-finite evaluation");
        return (f_plus - f_minus) / (2.0 * h);
    };

    double worst = 0.0;
    for (size_t t = 0; t < inputs.size(); ++t) {
        TensorD in = inputs[t];
        for (size_t i = 0; i < in.raw_value().size(); ++i) {
            const double numeric = central(in, i, eps);
            if (require_stable_probe) {
                const double wide = central(in, i, 8.0 * eps);
                const double gap = std::abs(numeric - wide) /
                                   std::max({std::abs(numeric), std::abs(wide), 1e-8});
                if (gap > 1e-3 / 3.0) continue;  // FD cannot measure this element
            }
            const double a = analytic[t][i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

namespace {

// Values bounded away from zero so that kinked ops (relu, abs, ...) are
// sampled off their kinks at the probe scale.
std::vector<double> random_offkink(Rng& rng, size_t n, double lo = 0.2, double hi = 2.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(lo, hi);
    return v;
}

std::vector<double> random_any(Rng& rng, size_t n, double lo = -2.0, double hi = 2.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

// Distinct values with gaps wide enough that finite differences cannot flip an argmax.
std::vector<double> random_gapped(Rng& rng, size_t n) {
    std::vector<double> v(n);
    for (size_t i = 0; i < n; ++i) v[i] = rng.uniform(-2.0, 2.0);
    bool ok = false;
    while (!ok) {
        ok = true;
        for (size_t i = 0; i < n && ok; ++i)
            for (size_t j = i + 1; j < n && ok; ++j)
                if (std::abs(v[i] - v[j]) < 1e-3) {
                    v[j] = rng.uniform(-2.0, 2.0);
                    ok = false;
                }
    }
    return v;
}

TensorD leaf(Shape s, std::vector<double> data) {
    return TensorD::from_data(std::move(s), std::move(data), /*requires_grad=*/true);
}

IndexTable random_table(Rng& rng, int rows, int cols, int m) {
    IndexTable t;
    t.rows = rows;
    t.cols = cols;
    t.idx.resize(size_t(rows) * cols);
    for (auto& i : t.idx) i = rng.uniform_int(m);
    return t;
}

}  // namespace

const std::vector<OpCheck>& registered_op_checks() {
    static const std::vector<OpCheck> checks = {
        {"add",
         [](uint64_t seed) {
             Rng rng(seed);
             auto a = leaf({3, 4}, random_any(rng, 12));
             auto b = leaf({3, 4}, random_any(rng, 12));
             return grad_check([&] { return sum_all(mul(add(a, b), add(a, b))); }, {a, b});
         }},
        {"sub",
         [](uint64_t seed) {
             Rng rng(seed);
             auto a = leaf({3, 4}, random_any(rng, 12));
             auto b = leaf({3, 4}, random_any(rng, 12));
             return grad_check([&] { return sum_all(mul(sub(a, b), sub(a, b))); }, {a, b});
         }},
        {"mul",
         [](uint64_t seed) {
             Rng rng(seed);
             auto a = leaf({2, 5}, random_any(rng, 10));
             auto b = leaf({2, 5}, random_any(rng, 10));
             return grad_check([&] { return sum_all(mul(a, b)); }, {a, b});
         }},
        {"scale",
         [](uint64_t seed) {
             Rng rng(seed);
             auto a = leaf({4, 3}, random_any(rng, 12));
             const double c = rng.uniform(-2.0, 2.0);
             return grad_check([&] { return sum_all(mul(scale(a, c), a)); }, {a});
         }},
        {"linear",
         [](uint64_t seed) {
             Rng rng(seed);
             auto x = leaf({4, 3}, random_any(rng, 12));
             auto w = leaf({3, 5}, random_any(rng, 15));
             auto b = leaf({5}, random_any(rng, 5));
             return grad_check([&] { return sum_all(mul(linear(x, w, b), linear(x, w, b))); },
                               {x, w, b});
         }},
        {"relu",
         [](uint64_t seed) {
             Rng rng(seed);
             auto x = leaf({3, 6}, random_offkink(rng, 18));
             return grad_check([&] { return sum_all(mul(relu(x), x)); }, {x});
         }},
        {"leaky_relu",
         [](uint64_t seed) {
             Rng rng(seed);
             auto x = leaf({3, 6}, random_offkink(rng, 18));
             return grad_check([&] { return sum_all(mul(leaky_relu(x, 0.1), x)); }, {x});
         }},
        {"softmax",
         [](uint64_t seed) {
             Rng rng(seed);
             auto x = leaf({3, 5}, random_any(rng, 15));
             auto v = leaf({3, 5}, random_any(rng, 15));
             return grad_check([&] { return sum_all(mul(softmax(x), v)); }, {x, v});
         }},
        {"gather",
         [](uint64_t seed) {
             Rng rng(seed);
             auto f = leaf({6, 3}, random_any(rng, 18));
             auto t = random_table(rng, 4, 3, 6);
             auto v = leaf({4, 3, 3}, random_any(rng, 36));
             return grad_check([&] { return sum_all(mul(gather(f, t), v)); }, {f, v});
         }},
        {"reduce_max",
         [](uint64_t seed) {
             Rng rng(seed);
             auto x = leaf({3, 4, 2}, random_gapped(rng, 24));
             auto v = leaf({3, 2}, random_any(rng, 6));
             return grad_check([&] { return sum_all(mul(reduce_max(x, 1), v)); }, {x, v});
         }},
        {"reduce_mean",
         [](uint64_t seed) {
             Rng rng(seed);
             auto x = leaf({3, 4, 2}, random_any(rng, 24));
             auto v = leaf({3, 2}, random_any(rng, 6));
             return grad_check([&] { return sum_all(mul(reduce_mean(x, 1), v)); }, {x, v});
         }},
        {"reduce_sum",
         [](uint64_t seed) {
             Rng rng(seed);
             auto x = leaf({2, 5, 3}, random_any(rng, 30));
             auto v = leaf({2, 3}, random_any(rng, 6));
             return grad_check([&] { return sum_all(mul(reduce_sum(x, 1), v)); }, {x, v});
         }},
        {"concat",
         [](uint64_t seed) {
             Rng rng(seed);
             auto a = leaf({3, 2}, random_any(rng, 6));
             auto b = leaf({3, 4}, random_any(rng, 12));
             auto c = leaf({3, 1}, random_any(rng, 3));
             auto v = leaf({3, 7}, random_any(rng, 21));
             return grad_check([&] { return sum_all(mul(concat<double>({a, b, c}), v)); },
                               {a, b, c, v});
         }},
        {"scale_rows",
         [](uint64_t seed) {
             Rng rng(seed);
             auto x = leaf({3, 4, 2}, random_any(rng, 24));
             auto w = leaf({3, 4}, random_any(rng, 12));
             return grad_check([&] { return sum_all(scale_rows(x, w)); }, {x, w});
         }},
        {"sub_bcast",
         [](uint64_t seed) {
             Rng rng(seed);
             auto x = leaf({3, 4, 2}, random_any(rng, 24));
             auto c = leaf({3, 2}, random_any(rng, 6));
             auto v = leaf({3, 4, 2}, random_any(rng, 24));
             return grad_check([&] { return sum_all(mul(sub_bcast(x, c), v)); }, {x, c, v});
         }},
        {"expand_mid",
         [](uint64_t seed) {
             Rng rng(seed);
             auto x = leaf({3, 2}, random_any(rng, 6));
             auto v = leaf({3, 4, 2}, random_any(rng, 24));
             return grad_check([&] { return sum_all(mul(expand_mid(x, 4), v)); }, {x, v});
         }},
        {"reshape",
         [](uint64_t seed) {
             Rng rng(seed);
             auto x = leaf({3, 4, 2}, random_any(rng, 24));
             auto v = leaf({3, 8}, random_any(rng, 24));
             return grad_check([&] { return sum_all(mul(reshape(x, {3, 8}), v)); }, {x, v});
         }},
        {"abs",
         [](uint64_t seed) {
             Rng rng(seed);
             auto x = leaf({4, 3}, random_offkink(rng, 12));
             auto v = leaf({4, 3}, random_any(rng, 12));
             return grad_check([&] { return sum_all(mul(abs_t(x), v)); }, {x, v});
         }},
        {"l2norm_rows",
         [](uint64_t seed) {
             Rng rng(seed);
             auto x = leaf({4, 3}, random_offkink(rng, 12, 0.5, 2.0));
             auto v = leaf({4}, random_any(rng, 4));
             return grad_check([&] { return sum_all(mul(l2norm_rows(x), v)); }, {x, v});
         }},
        {"sum_all",
         [](uint64_t seed) {
             Rng rng(seed);
             auto x = leaf({5, 2}, random_any(rng, 10));
             return grad_check([&] { return sum_all(mul(x, x)); }, {x});
         }},
        {"mean_all",
         [](uint64_t seed) {
             Rng rng(seed);
             auto x = leaf({5, 2}, random_any(rng, 10));
             return grad_check([&] { return mean_all(mul(x, x)); }, {x});
         }},
    };
    return checks;
}

}  // namespace wsaflow
