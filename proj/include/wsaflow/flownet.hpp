#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wsaflow/backbone.hpp"
#include "wsaflow/cost_volume.hpp"
#include "wsaflow/deform.hpp"
#include "wsaflow/geometry.hpp"
#include "wsaflow/model_config.hpp"
#include "wsaflow/params.hpp"
#include "wsaflow/wsa.hpp"

namespace wsaflow {

struct LossWeights {
    std::vector<double> gamma{0.02, 0.04, 0.08, 0.16, 0.16};
    double alpha_s = 1.0;
    double alpha_p = 0.3;
    double alpha_dd = 0.3;

    void validate(int levels) const {
        if (int(gamma.size()) != levels)
            throw ConfigError("loss: need one gamma per pyramid level");
        for (double g : gamma)
            if (g < 0) throw ConfigError("loss: gamma must be nonnegative");
        if (alpha_s < 0 || alpha_p < 0 || alpha_dd < 0)
            throw ConfigError("loss: term weights must be nonnegative");
    }
};

template <typename T>
struct LevelStateT {
    TensorT<T> flow;       // [N_l,3]
    TensorT<T> est_feats;  // [N_l,Ce]
    TensorT<T> coords_up;  // [N_l,3]; only when upsampled with shared weights
    TensorT<T> cost;       // [N_l,Ccv]
    TensorT<T> dd;         // [N_l,K*C] flattened; undefined when the module is off
};

template <typename T>
struct ForwardResultT {
    FeaturePyramidT<T> src;
    FeaturePyramidT<T> tgt;
    std::vector<LevelStateT<T>> levels;

    const TensorT<T>& flow_l0() const { return levels[0].flow; }
};

// Dense-block estimator: every layer sees the block input plus all previous
// layer outputs; a final FC projects the estimator feature to a 3-vector flow.
template <typename T>
void add_estimator_params(ParamMap<T>& m, const std::string& prefix, int in_channels,
                          const ModelConfig& cfg, uint64_t seed) {
    add_linear_params(m, prefix + ".0", in_channels, cfg.est_hidden, seed);
    add_linear_params(m, prefix + ".1", in_channels + cfg.est_hidden, cfg.est_hidden, seed);
    add_linear_params(m, prefix + ".2", in_channels + 2 * cfg.est_hidden, cfg.est_channels, seed);
    // small init keeps early flow near zero so coarse-to-fine warping starts stable
    add_linear_params(m, prefix + ".flow", cfg.est_channels, 3, seed, 0.1);
}

template <typename T>
std::pair<TensorT<T>, TensorT<T>> estimator_step(const TensorT<T>& point_feats,
                                                 const TensorT<T>& cost, const TensorT<T>& dd_flat,
                                                 const TensorT<T>& up_feats,
                                                 const TensorT<T>& up_flow,
                                                 const ParamMap<T>& params,
                                                 const std::string& prefix, T slope) {
    const int n = point_feats.dim(0);
    if (cost.dim(0) != n || dd_flat.dim(0) != n || up_feats.dim(0) != n || up_flow.dim(0) != n)
        throw ConfigError("estimator: inputs disagree on point count");
    auto in = concat<T>({point_feats, cost, dd_flat, up_feats, up_flow});
    if (in.dim(1) != param(params, prefix + ".0.w").dim(0))
        throw ConfigError("estimator: input channels " + std::to_string(in.dim(1)) +
                          " do not match configured width " +
                          std::to_string(param(params, prefix + ".0.w").dim(0)));
    auto h1 = leaky_relu(apply_linear(params, prefix + ".0", in), slope);
    auto h2 = leaky_relu(apply_linear(params, prefix + ".1", concat<T>({in, h1})), slope);
    auto fe = leaky_relu(apply_linear(params, prefix + ".2", concat<T>({in, h1, h2})), slope);
    auto flow = apply_linear(params, prefix + ".flow", fe);
    return {fe, flow};
}

template <typename T>
class WsaFlowNetT {
   public:
    WsaFlowNetT(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
        for (int l = 0; l < cfg_.levels(); ++l) {
            const std::string ls = std::to_string(l);
            add_cost_volume_params(params_, "cv.l" + ls, cfg_.feat_channels[size_t(l)], cfg_,
                                   seed);
            add_estimator_params(params_, "est.l" + ls, cfg_.estimator_in_channels(l), cfg_, seed);
            if (l < cfg_.levels() - 1) {
                if (cfg_.use_wsa) {
                    add_upsample_params(params_, "up.l" + ls, cfg_.est_channels, cfg_.wsa_hidden,
                                        seed);
                } else {
                    add_upsample_params(params_, "up.l" + ls + ".feat", cfg_.est_channels,
                                        cfg_.wsa_hidden, seed);
                    add_upsample_params(params_, "up.l" + ls + ".flow", cfg_.est_channels,
                                        cfg_.wsa_hidden, seed);
                }
            }
        }
        add_backbone_params(params_, cfg_, seed);
    }

    WsaFlowNetT(ModelConfig cfg, ParamMap<T> params)
        : cfg_(std::move(cfg)), params_(std::move(params)) {}

    const ModelConfig& config() const { return cfg_; }
    ParamMap<T>& params() { return params_; }
    const ParamMap<T>& params() const { return params_; }

    // Coarse-to-fine pass. Estimation starts at the coarsest level with zero
    // up-inputs; every finer level upsamples, warps, matches, and re-estimates.
    // When cv_cache is given, an empty cache is filled with the cost-volume
    // neighbor tables and a filled one is replayed; finite-difference probes
    // use this to hold the discrete selections fixed.
    ForwardResultT<T> forward(const PointCloud& p, const PointCloud& q,
                              std::vector<CostVolumeTables>* cv_cache = nullptr) const {
        cfg_.validate(p.size());
        cfg_.validate(q.size());
        const T slope = T(cfg_.leaky_slope);
        ForwardResultT<T> r;
        r.src = extract_features(p, cfg_, params_);
        r.tgt = extract_features(q, cfg_, params_);
        const int levels = cfg_.levels();
        r.levels.resize(size_t(levels));

        for (int l = levels - 1; l >= 0; --l) {
            const std::string ls = std::to_string(l);
            auto& state = r.levels[size_t(l)];
            const PointCloud& src_pts = r.src.pts.pts[size_t(l)];
            const TensorT<T>& src_coords = r.src.coords[size_t(l)];
            const int n = src_pts.size();

            TensorT<T> up_feats, up_flow;
            if (l == levels - 1) {
                up_feats = TensorT<T>::zeros({n, cfg_.est_channels});
                up_flow = TensorT<T>::zeros({n, 3});
            } else {
                const auto& coarse = r.levels[size_t(l + 1)];
                const auto nt = knn_padded(src_pts, r.src.pts.pts[size_t(l + 1)], cfg_.k_up);
                const TensorT<T>& coarse_coords = r.src.coords[size_t(l + 1)];
                if (cfg_.use_wsa) {
                    auto w = compute_weights(src_coords, coarse_coords, coarse.est_feats, nt,
                                             params_, "up.l" + ls, slope);
                    auto ups = wsa_upsample(w, coarse_coords, coarse.est_feats, coarse.flow);
                    state.coords_up = ups.coords_up;
                    up_feats = ups.feats_up;
                    up_flow = ups.flow_up;
                } else {
                    auto wf = compute_weights(src_coords, coarse_coords, coarse.est_feats, nt,
                                              params_, "up.l" + ls + ".feat", slope);
                    auto ws = compute_weights(src_coords, coarse_coords, coarse.est_feats, nt,
                                              params_, "up.l" + ls + ".flow", slope);
                    up_feats = aggregate(wf, coarse.est_feats);
                    up_flow = aggregate(ws, coarse.flow);
                }
            }

            auto warped_coords = add(src_coords, up_flow);
            const PointCloud warped = tensor_to_cloud(warped_coords);

            if (cv_cache && cv_cache->empty()) cv_cache->resize(size_t(levels));
            CostVolumeTables local_tables;
            const CostVolumeTables* tables;
            if (cv_cache) {
                auto& slot = (*cv_cache)[size_t(l)];
                if (slot.t1.rows == 0) slot = make_cost_volume_tables(warped, r.tgt.pts.pts[size_t(l)], cfg_);
                tables = &slot;
            } else {
                local_tables = make_cost_volume_tables(warped, r.tgt.pts.pts[size_t(l)], cfg_);
                tables = &local_tables;
            }
            state.cost = cost_volume(*tables, warped_coords, r.src.feats[size_t(l)],
                                     r.tgt.coords[size_t(l)], r.tgt.feats[size_t(l)], params_,
                                     "cv.l" + ls, cfg_);

            TensorT<T> dd_flat;
            if (cfg_.use_dd) {
                const auto src_idx = knn_padded(src_pts, src_pts, cfg_.k_dd).as_index_table();
                const auto warped_idx = cfg_.dd_recompute_knn
                                            ? knn_padded(warped, warped, cfg_.k_dd).as_index_table()
                                            : src_idx;
                auto d_src = local_structure(src_coords, src_idx, cfg_.dd_euclidean);
                auto d_warp = local_structure(warped_coords, warped_idx, cfg_.dd_euclidean);
                state.dd = flatten_structure(deformation_degree(d_src, d_warp));
                dd_flat = state.dd;
            } else {
                dd_flat = TensorT<T>::zeros({n, cfg_.dd_width()});
            }

            auto [fe, flow] = estimator_step(r.src.feats[size_t(l)], state.cost, dd_flat, up_feats,
                                             up_flow, params_, "est.l" + ls, slope);
            state.est_feats = fe;
            state.flow = flow;
        }
        return r;
    }

   private:
    ModelConfig cfg_;
    ParamMap<T> params_;
};

using WsaFlowNet = WsaFlowNetT<float>;

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Ground truth carried down the pyramid through the FPS index trail.
inline std::vector<FlowField> downsample_ground_truth(const FlowField& gt,
                                                      const PyramidPoints& pyr) {
    std::vector<FlowField> out;
    for (const auto& orig : pyr.orig_indices) {
        FlowField f;
        f.vectors.reserve(orig.size());
        for (int i : orig) f.vectors.push_back(gt[i]);
        out.push_back(std::move(f));
    }
    return out;
}

namespace detail {
template <typename T>
TensorT<T> weighted_norm_sum(const std::vector<TensorT<T>>& preds,
                             const std::vector<TensorT<T>>& refs, const std::vector<double>& gamma,
                             const char* what) {
    if (preds.size() != refs.size() || preds.size() > gamma.size())
        throw std::invalid_argument(std::string(what) + ": level count mismatch");
    TensorT<T> total = TensorT<T>::zeros({1});
    for (size_t l = 0; l < preds.size(); ++l) {
        if (preds[l].shape() != refs[l].shape())
            throw std::invalid_argument(std::string(what) + ": shape mismatch at level " +
                                        std::to_string(l));
        total = add(total, scale(sum_all(l2norm_rows(sub(preds[l], refs[l]))), T(gamma[l])));
    }
    return total;
}
}  // namespace detail

// L_S = sum_l gamma_l sum_i ||s_hat - s_gt||
template <typename T>
TensorT<T> loss_scene_flow(const std::vector<TensorT<T>>& pred_flows,
                           const std::vector<TensorT<T>>& gt_flows,
                           const std::vector<double>& gamma) {
    return detail::weighted_norm_sum(pred_flows, gt_flows, gamma, "loss_scene_flow");
}

// L_P = sum_l gamma_l sum_i ||p_hat - p||, over levels that were upsampled.
template <typename T>
TensorT<T> loss_coordinate(const std::vector<TensorT<T>>& coords_up,
                           const std::vector<TensorT<T>>& fine_coords,
                           const std::vector<double>& gamma) {
    return detail::weighted_norm_sum(coords_up, fine_coords, gamma, "loss_coordinate");
}

// L_DD = sum_l gamma_l sum_i ||delta_DD row||
template <typename T>
TensorT<T> loss_deformation(const std::vector<TensorT<T>>& dd_rows,
                            const std::vector<double>& gamma) {
    if (dd_rows.size() > gamma.size())
        throw std::invalid_argument("loss_deformation: more levels than gammas");
    TensorT<T> total = TensorT<T>::zeros({1});
    for (size_t l = 0; l < dd_rows.size(); ++l)
        total = add(total, scale(sum_all(l2norm_rows(dd_rows[l])), T(gamma[l])));
    return total;
}

template <typename T>
TensorT<T> loss_total(const TensorT<T>& ls, const TensorT<T>& lp, const TensorT<T>& ldd,
                      const LossWeights& w) {
    if (w.alpha_s < 0 || w.alpha_p < 0 || w.alpha_dd < 0)
        throw std::invalid_argument("loss_total: negative weight");
    return add(scale(ls, T(w.alpha_s)), add(scale(lp, T(w.alpha_p)), scale(ldd, T(w.alpha_dd))));
}

// Convenience: all four losses for one sample.
template <typename T>
struct SampleLossesT {
    TensorT<T> scene_flow, coordinate, deformation, total;
    double coord_residual_l0 = 0;  // mean ||p_hat - p|| at the finest level
};

template <typename T>
SampleLossesT<T> compute_losses(const ForwardResultT<T>& fwd, const FlowField& gt,
                                const LossWeights& w) {
    const auto gts = downsample_ground_truth(gt, fwd.src.pts);
    std::vector<TensorT<T>> preds, gt_tensors, ups, fines, dds;
    for (size_t l = 0; l < fwd.levels.size(); ++l) {
        preds.push_back(fwd.levels[l].flow);
        gt_tensors.push_back(flow_to_tensor<T>(gts[l]));
        if (fwd.levels[l].coords_up.defined()) {
            ups.push_back(fwd.levels[l].coords_up);
            fines.push_back(fwd.src.coords[l]);
        }
        if (fwd.levels[l].dd.defined()) dds.push_back(fwd.levels[l].dd);
    }
    SampleLossesT<T> out;
    out.scene_flow = loss_scene_flow(preds, gt_tensors, w.gamma);
    out.coordinate = ups.empty() ? TensorT<T>::zeros({1}) : loss_coordinate(ups, fines, w.gamma);
    out.deformation = dds.empty() ? TensorT<T>::zeros({1}) : loss_deformation(dds, w.gamma);
    out.total = loss_total(out.scene_flow, out.coordinate, out.deformation, w);
    if (!ups.empty()) {
        const auto res = l2norm_rows(sub(ups[0], fines[0]));
        double acc = 0;
        for (T v : res.value()) acc += double(v);
        out.coord_residual_l0 = acc / double(res.size());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct FlowMetrics {
    double epe3d = 0;
    double acc3d_strict = 0;
    double acc3d_relax = 0;
    double outliers3d = 0;
};

// EPE3D plus thresholded accuracy and outlier fractions. Relative error for a
// zero-norm ground-truth vector is 0 on an exact match and +inf otherwise.
FlowMetrics compute_metrics(const FlowField& pred, const FlowField& gt);

// Per-point strict-accuracy flags (the Acc3DS test), used for coloring.
std::vector<bool> acc3d_strict_flags(const FlowField& pred, const FlowField& gt);

}  // namespace wsaflow
