#pragma once

#include <string>
#include <vector>

#include "wsaflow/geometry.hpp"
#include "wsaflow/model_config.hpp"
#include "wsaflow/params.hpp"
#include "wsaflow/tensor.hpp"

namespace wsaflow {

// Point sets of every pyramid level plus the FPS index trails.
struct PyramidPoints {
    std::vector<PointCloud> pts;
    std::vector<std::vector<int>> down_indices;  // level l -> indices into level l-1 (empty at 0)
    std::vector<std::vector<int>> orig_indices;  // level l -> indices into level 0

    int levels() const { return int(pts.size()); }
};

inline PyramidPoints build_pyramid(const PointCloud& cloud, const std::vector<double>& ratios,
                                   int fps_start = 0) {
    if (ratios.empty() || ratios[0] != 1.0)
        throw ConfigError("build_pyramid: ratios must start at 1");
    for (size_t i = 1; i < ratios.size(); ++i)
        if (ratios[i] >= ratios[i - 1] || ratios[i] <= 0)
            throw ConfigError("build_pyramid: ratios must be strictly decreasing");
    const int n0 = cloud.size();
    if (n0 < 1) throw ConfigError("build_pyramid: empty cloud");

    PyramidPoints p;
    p.pts.push_back(cloud);
    p.down_indices.emplace_back();
    std::vector<int> ident(static_cast<size_t>(n0));
    for (int i = 0; i < n0; ++i) ident[size_t(i)] = i;
    p.orig_indices.push_back(std::move(ident));

    for (size_t l = 1; l < ratios.size(); ++l) {
        const int m = std::max(1, int(std::lround(n0 * ratios[l])));
        const PointCloud& prev = p.pts.back();
        if (m > prev.size())
            throw ConfigError("build_pyramid: level " + std::to_string(l) + " larger than parent");
        auto picked = farthest_point_sample(prev, m, fps_start);
        PointCloud lvl;
        std::vector<int> orig;
        lvl.points.reserve(size_t(m));
        orig.reserve(size_t(m));
        for (int i : picked) {
            lvl.points.push_back(prev[i]);
            orig.push_back(p.orig_indices.back()[size_t(i)]);
        }
        p.pts.push_back(std::move(lvl));
        p.down_indices.push_back(std::move(picked));
        p.orig_indices.push_back(std::move(orig));
    }
    return p;
}

// FlowNet3D-style set_conv: per child point, gather K parent neighbors, run a
// shared MLP on [p_k - p_i, f(p_k)], then max-pool over the neighborhood.
template <typename T>
TensorT<T> set_conv(const PointCloud& parent_pts, const TensorT<T>& parent_coords,
                    const TensorT<T>& parent_feats, const PointCloud& child_pts,
                    const TensorT<T>& child_coords, int k, const ParamMap<T>& params,
                    const std::string& prefix, T slope) {
    const auto table = knn_padded(child_pts, parent_pts, k).as_index_table();
    auto offsets = sub_bcast(gather(parent_coords, table), child_coords);  // [N,K,3]
    auto neigh_feats = gather(parent_feats, table);                        // [N,K,Cin]
    auto h = apply_mlp(params, prefix, concat<T>({offsets, neigh_feats}), slope);
    return reduce_max(h, 1);  // [N,Cout]
}

template <typename T>
struct FeaturePyramidT {
    PyramidPoints pts;
    std::vector<TensorT<T>> coords;  // leaf [N_l,3] per level
    std::vector<TensorT<T>> feats;   // [N_l,C_l] per level
};

// Encoder params: "enc.l{l}" MLPs, two layers each.
template <typename T>
void add_backbone_params(ParamMap<T>& m, const ModelConfig& cfg, uint64_t seed) {
    for (int l = 0; l < cfg.levels(); ++l) {
        const int cin = (l == 0 ? 3 : cfg.feat_channels[size_t(l - 1)]) + 3;
        const int cout = cfg.feat_channels[size_t(l)];
        add_linear_params(m, "enc.l" + std::to_string(l) + ".0", cin, cout, seed);
        add_linear_params(m, "enc.l" + std::to_string(l) + ".1", cout, cout, seed);
    }
}

template <typename T>
FeaturePyramidT<T> extract_features(const PointCloud& cloud, const ModelConfig& cfg,
                                    const ParamMap<T>& params) {
    FeaturePyramidT<T> fp;
    fp.pts = build_pyramid(cloud, cfg.ratios);
    const T slope = T(cfg.leaky_slope);
    for (int l = 0; l < fp.pts.levels(); ++l)
        fp.coords.push_back(cloud_to_tensor<T>(fp.pts.pts[size_t(l)]));
    for (int l = 0; l < fp.pts.levels(); ++l) {
        // level 0 convolves the cloud against itself with coordinates as input features
        const int parent = l == 0 ? 0 : l - 1;
        const TensorT<T>& parent_feats = l == 0 ? fp.coords[0] : fp.feats[size_t(l - 1)];
        fp.feats.push_back(set_conv(fp.pts.pts[size_t(parent)], fp.coords[size_t(parent)],
                                    parent_feats, fp.pts.pts[size_t(l)], fp.coords[size_t(l)],
                                    cfg.k_setconv, params, "enc.l" + std::to_string(l), slope));
    }
    return fp;
}

}  // namespace wsaflow
