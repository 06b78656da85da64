#pragma once

#include <cstdint>
#include <vector>

#include "wsaflow/errors.hpp"
#include "wsaflow/rng.hpp"
#include "wsaflow/tensor.hpp"

namespace wsaflow {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm2() const { return dot(*this); }
    double norm() const;
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
};

struct Mat3 {
    // row-major
    double m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return Mat3{}; }
    double at(int r, int c) const { return m[r * 3 + c]; }
    double& at(int r, int c) { return m[r * 3 + c]; }
    Vec3 apply(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 mul(const Mat3& o) const;
    Mat3 transpose() const;
    double det() const;
    double trace() const { return m[0] + m[4] + m[8]; }
};

struct PointCloud {
    std::vector<Vec3> points;

    PointCloud() = default;
    explicit PointCloud(std::vector<Vec3> p) : points(std::move(p)) {}
    int size() const { return int(points.size()); }
    const Vec3& operator[](int i) const { return points[size_t(i)]; }
    Vec3& operator[](int i) { return points[size_t(i)]; }
};

struct FlowField {
    std::vector<Vec3> vectors;

    FlowField() = default;
    explicit FlowField(std::vector<Vec3> v) : vectors(std::move(v)) {}
    int size() const { return int(vectors.size()); }
    const Vec3& operator[](int i) const { return vectors[size_t(i)]; }
    Vec3& operator[](int i) { return vectors[size_t(i)]; }
};

// Rotation + translation; R must be a proper rotation.
struct RigidMotion {
    Mat3 R;
    Vec3 t;
};

bool is_valid_rotation(const Mat3& r, double tol = 1e-9);
void validate_motion(const RigidMotion& m, double tol = 1e-9);

// K nearest reference indices per query point, rows sorted by nondecreasing
// distance, ties broken by lower index.
struct NeighborTable {
    int rows = 0;
    int k = 0;
    std::vector<int> indices;       // rows*k
    std::vector<double> distances;  // rows*k, meters

    int index_at(int r, int c) const { return indices[size_t(r) * k + c]; }
    double dist_at(int r, int c) const { return distances[size_t(r) * k + c]; }
    IndexTable as_index_table() const { return IndexTable{rows, k, indices}; }
};

// Greedy max-min farthest point sampling; deterministic, ties to lowest index.
std::vector<int> farthest_point_sample(const PointCloud& cloud, int m, int start = 0);

// Exact brute-force k nearest neighbors.
NeighborTable knn(const PointCloud& query, const PointCloud& reference, int k);

// knn with a fixed column count: when k exceeds the reference size the real
// neighbors are followed by copies of the farthest one, so downstream tensor
// shapes stay independent of the cloud size.
NeighborTable knn_padded(const PointCloud& query, const PointCloud& reference, int k);

PointCloud apply_rigid(const PointCloud& cloud, const RigidMotion& motion);

PointCloud warp(const PointCloud& cloud, const FlowField& flow);

// Per-point displacement induced by a rigid motion: s_i = R p_i + t - p_i.
FlowField flow_from_motion(const PointCloud& cloud, const RigidMotion& motion);

// Uniformly distributed random rotation (normalized quaternion).
Mat3 random_rotation(uint64_t seed);
Mat3 random_rotation(Rng& rng);

// Rotation about an axis through the origin.
Mat3 axis_angle_rotation(const Vec3& axis, double angle);

// Rotation by R about a pivot c plus translation t, expressed as one global motion.
RigidMotion motion_about_center(const Mat3& r, const Vec3& pivot, const Vec3& t);

// Conversions between geometry arrays and tensors (coordinates in meters).
template <typename T>
TensorT<T> cloud_to_tensor(const PointCloud& c, bool requires_grad = false) {
    std::vector<T> data;
    data.reserve(size_t(c.size()) * 3);
    for (const Vec3& p : c.points) {
        data.push_back(T(p.x));
        data.push_back(T(p.y));
        data.push_back(T(p.z));
    }
    return TensorT<T>::from_data({c.size(), 3}, std::move(data), requires_grad);
}

template <typename T>
TensorT<T> flow_to_tensor(const FlowField& f, bool requires_grad = false) {
    std::vector<T> data;
    data.reserve(size_t(f.size()) * 3);
    for (const Vec3& v : f.vectors) {
        data.push_back(T(v.x));
        data.push_back(T(v.y));
        data.push_back(T(v.z));
    }
    return TensorT<T>::from_data({f.size(), 3}, std::move(data), requires_grad);
}

template <typename T>
FlowField tensor_to_flow(const TensorT<T>& t) {
    if (t.ndim() != 2 || t.dim(1) != 3) throw DimensionError("tensor_to_flow: expected [N,3]");
    FlowField f;
    f.vectors.resize(size_t(t.dim(0)));
    const auto& v = t.value();
    for (int i = 0; i < t.dim(0); ++i)
        f.vectors[size_t(i)] = {double(v[size_t(i) * 3]), double(v[size_t(i) * 3 + 1]),
                                double(v[size_t(i) * 3 + 2])};
    return f;
}

template <typename T>
PointCloud tensor_to_cloud(const TensorT<T>& t) {
    if (t.ndim() != 2 || t.dim(1) != 3) throw DimensionError("tensor_to_cloud: expected [N,3]");
    PointCloud c;
    c.points.resize(size_t(t.dim(0)));
    const auto& v = t.value();
    for (int i = 0; i < t.dim(0); ++i)
        c.points[size_t(i)] = {double(v[size_t(i) * 3]), double(v[size_t(i) * 3 + 1]),
                               double(v[size_t(i) * 3 + 2])};
    return c;
}

}  // namespace wsaflow
