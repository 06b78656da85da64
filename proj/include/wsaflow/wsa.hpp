#pragma once

#include <string>
#include <vector>

#include "wsaflow/geometry.hpp"
#include "wsaflow/params.hpp"
#include "wsaflow/tensor.hpp"

namespace wsaflow {

// One convex weight row per fine point over its K coarse neighbors, plus the
// neighbor mapping the weights refer to.
template <typename T>
struct AggregationWeightsT {
    TensorT<T> alpha;  // [N_fine, K], rows sum to 1
    IndexTable table;  // fine -> coarse
};

// alpha = softmax over K of the channel-mean of MLP([p_k - p_i, f_e(p_k)]).
template <typename T>
AggregationWeightsT<T> compute_weights(const TensorT<T>& fine_coords,
                                       const TensorT<T>& coarse_coords,
                                       const TensorT<T>& coarse_est_feats,
                                       const NeighborTable& neighbors, const ParamMap<T>& params,
                                       const std::string& prefix, T slope) {
    if (neighbors.rows != fine_coords.dim(0))
        throw std::invalid_argument("compute_weights: neighbor rows must match fine points");
    if (coarse_coords.dim(0) != coarse_est_feats.dim(0))
        throw std::invalid_argument("compute_weights: coarse arrays disagree on row count");
    IndexTable table = neighbors.as_index_table();
    auto offsets = sub_bcast(gather(coarse_coords, table), fine_coords);  // [N,K,3]
    auto feats = gather(coarse_est_feats, table);                         // [N,K,Ce]
    auto h = apply_mlp(params, prefix, concat<T>({offsets, feats}), slope);
    auto logits = reduce_mean(h, 2);  // [N,K]
    AggregationWeightsT<T> out;
    out.alpha = softmax(logits);
    out.table = std::move(table);
    return out;
}

// Convex combination of per-neighbor rows under one weight set.
template <typename T>
TensorT<T> aggregate(const AggregationWeightsT<T>& w, const TensorT<T>& coarse_rows) {
    return reduce_sum(scale_rows(gather(coarse_rows, w.table), w.alpha), 1);
}

template <typename T>
struct UpsampleResultT {
    TensorT<T> coords_up;  // [N_fine,3], feeds the coordinate loss
    TensorT<T> feats_up;   // [N_fine,Ce]
    TensorT<T> flow_up;    // [N_fine,3]
    AggregationWeightsT<T> weights;  // the single weight set behind all three
};

// The weight-sharing contract: coordinates, estimator features, and flow are
// aggregated with the identical alpha tensor. There is deliberately no
// variant of this call taking separate weights per stream.
template <typename T>
UpsampleResultT<T> wsa_upsample(const AggregationWeightsT<T>& weights,
                                const TensorT<T>& coarse_coords,
                                const TensorT<T>& coarse_est_feats,
                                const TensorT<T>& coarse_flow) {
    const int rows = coarse_coords.dim(0);
    if (coarse_est_feats.dim(0) != rows || coarse_flow.dim(0) != rows)
        throw std::invalid_argument("wsa_upsample: coarse arrays disagree on row count");
    for (int v : weights.table.idx)
        if (v < 0 || v >= rows) throw std::invalid_argument("wsa_upsample: table out of range");
    UpsampleResultT<T> out;
    out.coords_up = aggregate(weights, coarse_coords);
    out.feats_up = aggregate(weights, coarse_est_feats);
    out.flow_up = aggregate(weights, coarse_flow);
    out.weights = weights;
    return out;
}

// Params for the weight network: two-layer MLP on [offset, f_e].
template <typename T>
void add_upsample_params(ParamMap<T>& m, const std::string& prefix, int est_channels, int hidden,
                         uint64_t seed) {
    add_linear_params(m, prefix + ".0", 3 + est_channels, hidden, seed);
    add_linear_params(m, prefix + ".1", hidden, hidden, seed);
}

// ---------------------------------------------------------------------------
// Rigidity identity (numeric verifier)
// ---------------------------------------------------------------------------

// Under one rigid motion, per-neighbor flow is s_k = (R - I) p_k + t. Returns
// || sum_k w_k s_k - s(center) ||. With sum w = 1 and sum w_k p_k = center the
// residual vanishes; with the barycenter off by e it equals ||(R - I) e||.
double verify_rigidity_identity(const RigidMotion& motion, const std::vector<Vec3>& neighbors,
                                const Vec3& center, const std::vector<double>& weights);

struct RigidityTrialStats {
    int trials = 0;
    double max_residual = 0;        // worst || sum w s - s_center ||
    double max_prediction_err = 0;  // worst | residual - ||(R-I)e|| | (violation mode)
};

// Random motions, neighborhoods, and convex weights; the barycentric condition
// is enforced by construction (center := sum w_k p_k), optionally shifted by
// `violation` to exercise the perturbation algebra.
RigidityTrialStats run_rigidity_trials(int trials, uint64_t seed,
                                       const Vec3* violation = nullptr);

}  // namespace wsaflow
