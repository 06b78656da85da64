#include "wsaflow/wsa.hpp"

#include <cmath>

namespace wsaflow {

double verify_rigidity_identity(const RigidMotion& motion, const std::vector<Vec3>& neighbors,
                                const Vec3& center, const std::vector<double>& weights) {
    validate_motion(motion);
    if (neighbors.size() != weights.size() || neighbors.empty())
        throw std::invalid_argument("rigidity: one weight per neighbor required");
    double wsum = 0;
    for (double w : weights) wsum += w;
    if (std::abs(wsum - 1.0) > 1e-9)
        throw std::invalid_argument("rigidity: weights must sum to 1 within 1e-9");

    auto flow_at = [&](const Vec3& p) { return motion.R.apply(p) + motion.t - p; };
    Vec3 agg{0, 0, 0};
    for (size_t k = 0; k < neighbors.size(); ++k) agg += flow_at(neighbors[k]) * weights[k];
    return (agg - flow_at(center)).norm();
}

RigidityTrialStats run_rigidity_trials(int trials, uint64_t seed, const Vec3* violation) {
    if (trials < 1) throw std::invalid_argument("rigidity trials: need trials >= 1");
    Rng rng(seed);
    RigidityTrialStats stats;
    stats.trials = trials;
    for (int t = 0; t < trials; ++t) {
        RigidMotion m;
        m.R = random_rotation(rng);
        m.t = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};

        const int k = 3 + rng.uniform_int(8);
        std::vector<Vec3> pts(static_cast<size_t>(k));
        for (auto& p : pts) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};

        // convex weights via softmax of random logits
        std::vector<double> w(static_cast<size_t>(k));
        double mx = -1e30;
        for (auto& x : w) {
            x = rng.uniform(-2, 2);
            mx = std::max(mx, x);
        }
        double sum = 0;
        for (auto& x : w) {
            x = std::exp(x - mx);
            sum += x;
        }
        for (auto& x : w) x /= sum;

        // center chosen as the weighted barycenter enforces the second condition
        Vec3 center{0, 0, 0};
        for (int i = 0; i < k; ++i) center += pts[size_t(i)] * w[size_t(i)];

        if (violation) {
            const Vec3 shifted = center + *violation;
            const double res = verify_rigidity_identity(m, pts, shifted, w);
            const Vec3 e = *violation;
            const double predicted = (m.R.apply(e) - e).norm();  // ||(R - I) e||
            stats.max_residual = std::max(stats.max_residual, res);
            stats.max_prediction_err = std::max(stats.max_prediction_err, std::abs(res - predicted));
        } else {
            const double res = verify_rigidity_identity(m, pts, center, w);
            stats.max_residual = std::max(stats.max_residual, res);
        }
    }
    return stats;
}

}  // namespace wsaflow
