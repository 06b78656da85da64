#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "wsaflow/cost_volume.hpp"

using namespace wsaflow;

namespace {

PointCloud random_cloud(Rng& rng, int n) {
    PointCloud c;
    for (int i = 0; i < n; ++i)
        c.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    return c;
}

TensorD random_feats(Rng& rng, int n, int c) {
    std::vector<double> v(size_t(n) * c);
    for (auto& x : v) x = rng.uniform(-1, 1);
    return TensorD::from_data({n, c}, v);
}

ModelConfig small_cfg() {
    ModelConfig cfg = ModelConfig::tiny();
    cfg.feat_channels = {6, 8};
    return cfg;
}

}  // namespace

TEST_CASE("zero final-layer weights give an all-zero cost volume") {
    Rng rng(1);
    ModelConfig cfg = small_cfg();
    auto src = random_cloud(rng, 20);
    auto tgt = random_cloud(rng, 20);
    ParamMap<double> m;
    add_cost_volume_params(m, "cv", 6, cfg, 3);
    // zero the stage-1 output layer: every stage-1 cost is zero, and stage 2
    // only re-weights those costs
    for (auto& [name, t] : m)
        if (name.rfind("cv.s1.1", 0) == 0) std::fill(t.raw_value().begin(), t.raw_value().end(), 0.0);
    auto cv = cost_volume(make_cost_volume_tables(src, tgt, cfg), cloud_to_tensor<double>(src),
                          random_feats(rng, 20, 6), cloud_to_tensor<double>(tgt),
                          random_feats(rng, 20, 6), m, "cv", cfg);
    CHECK(cv.shape() == Shape{20, cfg.cv_channels});
    for (double v : cv.value()) CHECK(v == 0);
}

TEST_CASE("cost volume shape follows the config") {
    Rng rng(2);
    ModelConfig cfg = small_cfg();
    cfg.cv_channels = 5;
    auto src = random_cloud(rng, 12);
    auto tgt = random_cloud(rng, 30);
    ParamMap<double> m;
    add_cost_volume_params(m, "cv", 6, cfg, 5);
    auto cv = cost_volume(make_cost_volume_tables(src, tgt, cfg), cloud_to_tensor<double>(src),
                          random_feats(rng, 12, 6), cloud_to_tensor<double>(tgt),
                          random_feats(rng, 30, 6), m, "cv", cfg);
    CHECK(cv.shape() == Shape{12, 5});
}

TEST_CASE("co-translating both clouds leaves the cost volume unchanged") {
    // only relative offsets q_k - p_i^w enter, so absolute positions cancel
    Rng rng(3);
    ModelConfig cfg = small_cfg();
    auto src = random_cloud(rng, 24);
    auto tgt = random_cloud(rng, 24);
    auto f_src = random_feats(rng, 24, 6);
    auto f_tgt = random_feats(rng, 24, 6);
    ParamMap<double> m;
    add_cost_volume_params(m, "cv", 6, cfg, 7);

    auto base = cost_volume(make_cost_volume_tables(src, tgt, cfg), cloud_to_tensor<double>(src),
                            f_src, cloud_to_tensor<double>(tgt), f_tgt, m, "cv", cfg);

    const Vec3 t{0.4, -0.2, 0.7};
    auto src_m = src;
    auto tgt_m = tgt;
    for (auto& p : src_m.points) p += t;
    for (auto& p : tgt_m.points) p += t;
    auto moved = cost_volume(make_cost_volume_tables(src_m, tgt_m, cfg), cloud_to_tensor<double>(src_m),
                             f_src, cloud_to_tensor<double>(tgt_m), f_tgt, m, "cv", cfg);

    for (size_t i = 0; i < base.value().size(); ++i)
        CHECK(std::abs(base.value()[i] - moved.value()[i]) < 1e-5);
}

TEST_CASE("co-rotation preserves every neighbor selection in the cost volume") {
    // offsets rotate equivariantly (the direction signal the estimator needs),
    // but the matching structure itself is rigid-motion invariant
    Rng rng(13);
    auto src = random_cloud(rng, 24);
    auto tgt = random_cloud(rng, 30);
    RigidMotion motion{random_rotation(rng), {0.4, -0.2, 0.7}};
    auto src_m = apply_rigid(src, motion);
    auto tgt_m = apply_rigid(tgt, motion);

    auto t1 = knn_padded(src, tgt, 4);
    auto t1_m = knn_padded(src_m, tgt_m, 4);
    CHECK(t1.indices == t1_m.indices);
    auto t2 = dilated_neighbors(src, src, 4, 2);
    auto t2_m = dilated_neighbors(src_m, src_m, 4, 2);
    CHECK(t2.idx == t2_m.idx);
}

TEST_CASE("congruent neighborhoods in identical clouds give identical costs") {
    // uniform line, zero flow: interior points see translated copies of the
    // same neighborhood (ties resolve to the lower index), so their cost rows
    // are computed from identical inputs
    PointCloud c;
    for (int i = 0; i < 6; ++i) c.points.push_back({double(i), 0, 0});
    auto feats = TensorD::full({6, 6}, 0.25);
    ModelConfig cfg = small_cfg();
    cfg.k_cv_target = 2;
    cfg.k_cv_dilated = 2;
    cfg.cv_dilation = 1;
    ParamMap<double> m;
    add_cost_volume_params(m, "cv", 6, cfg, 9);
    auto cv = cost_volume(make_cost_volume_tables(c, c, cfg), cloud_to_tensor<double>(c), feats,
                          cloud_to_tensor<double>(c), feats, m, "cv", cfg);
    for (int ch = 0; ch < cfg.cv_channels; ++ch) {
        CHECK(cv.at({2, ch}) == cv.at({3, ch}));
        CHECK(cv.at({2, ch}) == cv.at({4, ch}));
    }
}

TEST_CASE("dilated neighbor selection strides over the window") {
    PointCloud line;
    for (int i = 0; i < 10; ++i) line.points.push_back({double(i), 0, 0});
    PointCloud q(std::vector<Vec3>{{0, 0, 0}});
    auto t = dilated_neighbors(q, line, 3, 2);
    // nearest 6 are 0..5; stride 2 picks 0, 2, 4
    CHECK(t.cols == 3);
    CHECK(t.at(0, 0) == 0);
    CHECK(t.at(0, 1) == 2);
    CHECK(t.at(0, 2) == 4);

    auto plain = dilated_neighbors(q, line, 3, 1);
    CHECK(plain.at(0, 0) == 0);
    CHECK(plain.at(0, 1) == 1);
    CHECK(plain.at(0, 2) == 2);
}

TEST_CASE("attention weightings sum to one inside the cost volume") {
    // exercised indirectly: softmax invariants hold for any logits produced
    Rng rng(5);
    std::vector<double> v(7 * 4);
    for (auto& x : v) x = rng.uniform(-5, 5);
    auto s = softmax(TensorD::from_data({7, 4}, v));
    for (int r = 0; r < 7; ++r) {
        double sum = 0;
        for (int c = 0; c < 4; ++c) sum += s.at({r, c});
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}
