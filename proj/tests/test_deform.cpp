#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "wsaflow/deform.hpp"
#include "wsaflow/geometry.hpp"

using namespace wsaflow;

namespace {

TensorD cloud_tensor(const std::vector<Vec3>& pts) {
    return cloud_to_tensor<double>(PointCloud(pts));
}

}  // namespace

TEST_CASE("local_structure is the per-channel |offset| / 3") {
    auto coords = cloud_tensor({{0, 0, 0}, {3, 0, -6}});
    IndexTable idx{2, 2, {1, 0, 0, 1}};
    auto d = local_structure(coords, idx);
    CHECK(d.shape() == Shape{2, 2, 3});
    // point 0, neighbor (3,0,-6): |delta|/3 = (1, 0, 2)
    CHECK(d.at({0, 0, 0}) == doctest::Approx(1));
    CHECK(d.at({0, 0, 1}) == doctest::Approx(0));
    CHECK(d.at({0, 0, 2}) == doctest::Approx(2));
    // self neighbor rows are zero
    CHECK(d.at({0, 1, 0}) == 0);
    CHECK(d.at({0, 1, 1}) == 0);
    CHECK(d.at({0, 1, 2}) == 0);
    CHECK(d.at({1, 1, 0}) == 0);

    IndexTable bad{2, 1, {2, 0}};
    CHECK_THROWS_AS(local_structure(coords, bad), IndexError);
}

TEST_CASE("local_structure ignores global translation") {
    Rng rng(17);
    std::vector<Vec3> pts(10);
    for (auto& p : pts) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    PointCloud c(pts);
    auto idx = knn(c, c, 4).as_index_table();
    auto d0 = local_structure(cloud_to_tensor<double>(c), idx);

    const Vec3 shift{12.5, -3.25, 0.5};
    std::vector<Vec3> moved = pts;
    for (auto& p : moved) p += shift;
    auto d1 = local_structure(cloud_to_tensor<double>(PointCloud(moved)), idx);
    // differences only; equal up to the rounding of the shifted coordinates
    for (size_t i = 0; i < d0.value().size(); ++i)
        CHECK(std::abs(d0.value()[i] - d1.value()[i]) < 1e-14);
}

TEST_CASE("deformation degree vanishes for zero flow with reused indices") {
    Rng rng(4);
    std::vector<Vec3> pts(12);
    for (auto& p : pts) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    PointCloud c(pts);
    auto idx = knn(c, c, 5).as_index_table();
    auto coords = cloud_to_tensor<double>(c);
    auto d = local_structure(coords, idx);
    auto dd = deformation_degree(d, local_structure(coords, idx));
    for (double v : dd.value()) CHECK(v == 0);
}

TEST_CASE("deformation degree vanishes for pure translation flows") {
    Rng rng(8);
    std::vector<Vec3> pts(16);
    for (auto& p : pts) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    PointCloud c(pts);
    auto idx = knn(c, c, 6).as_index_table();
    const Vec3 t{0.4, -1.1, 0.25};
    std::vector<Vec3> moved = pts;
    for (auto& p : moved) p += t;
    auto dd = deformation_degree(local_structure(cloud_to_tensor<double>(c), idx),
                                 local_structure(cloud_to_tensor<double>(PointCloud(moved)), idx));
    for (double v : dd.value()) CHECK(std::abs(v) < 1e-6);
}

TEST_CASE("uniform doubling flow leaves delta_DD equal to delta(P)") {
    Rng rng(15);
    std::vector<Vec3> pts(10);
    for (auto& p : pts) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    PointCloud c(pts);
    auto idx = knn(c, c, 4).as_index_table();
    std::vector<Vec3> doubled = pts;
    for (auto& p : doubled) p = p * 2.0;  // flow s_i = p_i
    auto d_src = local_structure(cloud_to_tensor<double>(c), idx);
    auto dd = deformation_degree(d_src,
                                 local_structure(cloud_to_tensor<double>(PointCloud(doubled)), idx));
    for (size_t i = 0; i < dd.value().size(); ++i)
        CHECK(dd.value()[i] == doctest::Approx(d_src.value()[i]).epsilon(1e-12));
}

TEST_CASE("per-channel form moves under rotation, euclidean norm form does not") {
    Rng rng(23);
    std::vector<Vec3> pts(14);
    for (auto& p : pts) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    PointCloud c(pts);
    auto idx = knn(c, c, 5).as_index_table();
    RigidMotion m{random_rotation(rng), {0, 0, 0}};
    auto rot = apply_rigid(c, m);

    auto dd_chan = deformation_degree(local_structure(cloud_to_tensor<double>(c), idx),
                                      local_structure(cloud_to_tensor<double>(rot), idx));
    double max_chan = 0;
    for (double v : dd_chan.value()) max_chan = std::max(max_chan, v);
    CHECK(max_chan > 1e-3);  // per-channel |offsets| are not rotation invariant

    auto dd_norm =
        deformation_degree(local_structure(cloud_to_tensor<double>(c), idx, true),
                           local_structure(cloud_to_tensor<double>(rot), idx, true));
    for (double v : dd_norm.value()) CHECK(std::abs(v) < 1e-9);  // distances are preserved
}

TEST_CASE("rejects mismatched structures and flattens for the estimator") {
    auto a = TensorD::zeros({3, 2, 3});
    auto b = TensorD::zeros({3, 3, 3});
    CHECK_THROWS_AS(deformation_degree(a, b), DimensionError);

    auto dd = deformation_degree(a, TensorD::zeros({3, 2, 3}));
    auto flat = flatten_structure(dd);
    CHECK(flat.shape() == Shape{3, 6});
}
