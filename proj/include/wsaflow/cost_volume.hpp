#pragma once

#include <string>

#include "wsaflow/geometry.hpp"
#include "wsaflow/model_config.hpp"
#include "wsaflow/params.hpp"
#include "wsaflow/tensor.hpp"

namespace wsaflow {

// Selects every cv_dilation-th column of a neighbor window of width
// min(cv_dilation * k, reference size), padded back to k columns.
inline IndexTable dilated_neighbors(const PointCloud& query, const PointCloud& reference, int k,
                                    int dilation) {
    if (dilation < 1) throw ConfigError("cost_volume: dilation must be >= 1");
    const auto window = knn_padded(query, reference, k * dilation);
    IndexTable out;
    out.rows = window.rows;
    out.cols = k;
    out.idx.resize(size_t(window.rows) * k);
    for (int i = 0; i < window.rows; ++i)
        for (int j = 0; j < k; ++j) out.idx[size_t(i) * k + j] = window.index_at(i, j * dilation);
    return out;
}

template <typename T>
void add_cost_volume_params(ParamMap<T>& m, const std::string& prefix, int feat_channels,
                            const ModelConfig& cfg, uint64_t seed) {
    add_linear_params(m, prefix + ".s1.0", feat_channels * 2 + 3, cfg.cv_hidden, seed);
    add_linear_params(m, prefix + ".s1.1", cfg.cv_hidden, cfg.cv_channels, seed);
    add_linear_params(m, prefix + ".s1.att", cfg.cv_channels, 1, seed);
    add_linear_params(m, prefix + ".s2.0", 3 + cfg.cv_channels, cfg.cv_hidden, seed);
    add_linear_params(m, prefix + ".s2.1", cfg.cv_hidden, cfg.cv_hidden, seed);
}

// Neighbor structure of one cost-volume evaluation. The selections depend on
// the warped positions (hence on the flow); probing code can capture them once
// and replay, keeping finite differences on the active smooth branch.
struct CostVolumeTables {
    IndexTable t1;  // warped source -> target patch
    IndexTable t2;  // warped source -> dilated source neighborhood
};

inline CostVolumeTables make_cost_volume_tables(const PointCloud& warped_src,
                                                const PointCloud& target,
                                                const ModelConfig& cfg) {
    CostVolumeTables t;
    t.t1 = knn_padded(warped_src, target, cfg.k_cv_target).as_index_table();
    t.t2 = dilated_neighbors(warped_src, warped_src, cfg.k_cv_dilated, cfg.cv_dilation);
    return t;
}

// Patch-to-dilated-patch matching cost.
//
// Stage 1: each warped source point attends over its K1 nearest target points;
// the pair MLP sees [f_src, f_tgt, q_k - p_i^w] and an attention head turns the
// pair features into softmax weights for the sum.
// Stage 2: each point re-aggregates stage-1 costs over a dilated neighborhood
// of the warped source cloud with a second learned softmax weighting.
// Only relative offsets enter, so co-translating both clouds leaves the
// result unchanged.
template <typename T>
TensorT<T> cost_volume(const CostVolumeTables& tables, const TensorT<T>& warped_coords,
                       const TensorT<T>& src_feats, const TensorT<T>& target_coords,
                       const TensorT<T>& target_feats, const ParamMap<T>& params,
                       const std::string& prefix, const ModelConfig& cfg) {
    if (target_coords.dim(0) < 1) throw ConfigError("cost_volume: empty target level");
    const T slope = T(cfg.leaky_slope);
    const int n = warped_coords.dim(0);

    // stage 1: point-to-patch against the target
    const auto& t1 = tables.t1;
    auto offsets = sub_bcast(gather(target_coords, t1), warped_coords);          // [N,K1,3]
    auto f_src = expand_mid(src_feats, cfg.k_cv_target);                         // [N,K1,C]
    auto f_tgt = gather(target_feats, t1);                                       // [N,K1,C]
    auto pair = apply_mlp(params, prefix + ".s1", concat<T>({f_src, f_tgt, offsets}), slope);
    auto logits = reshape(apply_linear(params, prefix + ".s1.att", pair), {n, cfg.k_cv_target});
    auto point_cost = reduce_sum(scale_rows(pair, softmax(logits)), 1);          // [N,Ccv]

    // stage 2: re-aggregate over a dilated source neighborhood
    const auto& t2 = tables.t2;
    auto off2 = sub_bcast(gather(warped_coords, t2), warped_coords);             // [N,K2,3]
    auto cost_nb = gather(point_cost, t2);                                       // [N,K2,Ccv]
    auto h2 = apply_mlp(params, prefix + ".s2", concat<T>({off2, cost_nb}), slope);
    auto w2 = softmax(reduce_mean(h2, 2));                                       // [N,K2]
    return reduce_sum(scale_rows(cost_nb, w2), 1);                               // [N,Ccv]
}

}  // namespace wsaflow
