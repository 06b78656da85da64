#include "wsaflow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wsaflow {

double Vec3::norm() const { return std::sqrt(norm2()); }

Mat3 Mat3::mul(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double acc = 0;
            for (int k = 0; k < 3; ++k) acc += at(i, k) * o.at(k, j);
            r.at(i, j) = acc;
        }
    return r;
}

Mat3 Mat3::transpose() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.at(i, j) = at(j, i);
    return r;
}

double Mat3::det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

bool is_valid_rotation(const Mat3& r, double tol) {
    Mat3 rtr = r.transpose().mul(r);
    Mat3 id = Mat3::identity();
    for (int i = 0; i < 9; ++i)
        if (std::abs(rtr.m[i] - id.m[i]) > tol) return false;
    return std::abs(r.det() - 1.0) <= tol;
}

void validate_motion(const RigidMotion& m, double tol) {
    for (int i = 0; i < 9; ++i)
        if (!std::isfinite(m.R.m[i])) throw std::invalid_argument("rigid motion: non-finite rotation");
    if (!std::isfinite(m.t.x) || !std::isfinite(m.t.y) || !std::isfinite(m.t.z))
        throw std::invalid_argument("rigid motion: non-finite translation");
    if (!is_valid_rotation(m.R, tol))
        throw std::invalid_argument("rigid motion: R is not a proper rotation");
}

std::vector<int> farthest_point_sample(const PointCloud& cloud, int m, int start) {
    const int n = cloud.size();
    if (n < 1) throw std::invalid_argument("fps: empty cloud");
    if (m < 1 || m > n) throw std::invalid_argument("fps: need 1 <= M <= N");
    if (start < 0 || start >= n) throw std::invalid_argument("fps: bad start index");

    std::vector<int> picked;
    picked.reserve(size_t(m));
    picked.push_back(start);
    std::vector<double> min_d2(size_t(n), std::numeric_limits<double>::infinity());
    int last = start;
    for (int s = 1; s < m; ++s) {
        double best = -1.0;
        int best_i = -1;
        const Vec3& lp = cloud[last];
        for (int i = 0; i < n; ++i) {
            const double d2 = (cloud[i] - lp).norm2();
            if (d2 < min_d2[size_t(i)]) min_d2[size_t(i)] = d2;
            if (min_d2[size_t(i)] > best) {  // strict > keeps the lowest index on ties
                best = min_d2[size_t(i)];
                best_i = i;
            }
        }
        picked.push_back(best_i);
        last = best_i;
    }
    return picked;
}

NeighborTable knn(const PointCloud& query, const PointCloud& reference, int k) {
    const int n = query.size();
    const int m = reference.size();
    if (k < 1 || k > m) throw std::invalid_argument("knn: need 1 <= K <= reference size");

    NeighborTable out;
    out.rows = n;
    out.k = k;
    out.indices.resize(size_t(n) * k);
    out.distances.resize(size_t(n) * k);
    std::vector<std::pair<double, int>> cand;
    cand.resize(size_t(m));
    for (int i = 0; i < n; ++i) {
        const Vec3& q = query[i];
        for (int j = 0; j < m; ++j) cand[size_t(j)] = {(reference[j] - q).norm2(), j};
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
        for (int j = 0; j < k; ++j) {
            out.indices[size_t(i) * k + j] = cand[size_t(j)].second;
            out.distances[size_t(i) * k + j] = std::sqrt(cand[size_t(j)].first);
        }
    }
    return out;
}

NeighborTable knn_padded(const PointCloud& query, const PointCloud& reference, int k) {
    const int real = std::min(k, reference.size());
    NeighborTable t = knn(query, reference, real);
    if (real == k) return t;
    NeighborTable out;
    out.rows = t.rows;
    out.k = k;
    out.indices.resize(size_t(t.rows) * k);
    out.distances.resize(size_t(t.rows) * k);
    for (int i = 0; i < t.rows; ++i) {
        for (int j = 0; j < k; ++j) {
            const int src = std::min(j, real - 1);
            out.indices[size_t(i) * k + j] = t.index_at(i, src);
            out.distances[size_t(i) * k + j] = t.dist_at(i, src);
        }
    }
    return out;
}

PointCloud apply_rigid(const PointCloud& cloud, const RigidMotion& motion) {
    validate_motion(motion);
    PointCloud out;
    out.points.reserve(cloud.points.size());
    for (const Vec3& p : cloud.points) out.points.push_back(motion.R.apply(p) + motion.t);
    return out;
}

PointCloud warp(const PointCloud& cloud, const FlowField& flow) {
    if (cloud.size() != flow.size()) throw std::invalid_argument("warp: length mismatch");
    PointCloud out;
    out.points.reserve(cloud.points.size());
    for (int i = 0; i < cloud.size(); ++i) out.points.push_back(cloud[i] + flow[i]);
    return out;
}

FlowField flow_from_motion(const PointCloud& cloud, const RigidMotion& motion) {
    validate_motion(motion);
    FlowField f;
    f.vectors.reserve(cloud.points.size());
    for (const Vec3& p : cloud.points) f.vectors.push_back(motion.R.apply(p) + motion.t - p);
    return f;
}

Mat3 random_rotation(Rng& rng) {
    double q[4];
    double n2 = 0;
    do {
        n2 = 0;
        for (double& c : q) {
            c = rng.normal();
            n2 += c * c;
        }
    } while (n2 < 1e-12);
    const double inv = 1.0 / std::sqrt(n2);
    const double w = q[0] * inv, x = q[1] * inv, y = q[2] * inv, z = q[3] * inv;
    Mat3 r;
    r.m[0] = 1 - 2 * (y * y + z * z);
    r.m[1] = 2 * (x * y - w * z);
    r.m[2] = 2 * (x * z + w * y);
    r.m[3] = 2 * (x * y + w * z);
    r.m[4] = 1 - 2 * (x * x + z * z);
    r.m[5] = 2 * (y * z - w * x);
    r.m[6] = 2 * (x * z - w * y);
    r.m[7] = 2 * (y * z + w * x);
    r.m[8] = 1 - 2 * (x * x + y * y);
    return r;
}

Mat3 random_rotation(uint64_t seed) {
    Rng rng(seed);
    return random_rotation(rng);
}

Mat3 axis_angle_rotation(const Vec3& axis, double angle) {
    const double n = axis.norm();
    if (n <= 0) throw std::invalid_argument("axis_angle_rotation: zero axis");
    const double ux = axis.x / n, uy = axis.y / n, uz = axis.z / n;
    const double c = std::cos(angle), s = std::sin(angle), t = 1 - c;
    Mat3 r;
    r.m[0] = c + ux * ux * t;
    r.m[1] = ux * uy * t - uz * s;
    r.m[2] = ux * uz * t + uy * s;
    r.m[3] = uy * ux * t + uz * s;
    r.m[4] = c + uy * uy * t;
    r.m[5] = uy * uz * t - ux * s;
    r.m[6] = uz * ux * t - uy * s;
    r.m[7] = uz * uy * t + ux * s;
    r.m[8] = c + uz * uz * t;
    return r;
}

RigidMotion motion_about_center(const Mat3& r, const Vec3& pivot, const Vec3& t) {
    // R(p - c) + c + t  ==  R p + (c - R c + t)
    RigidMotion m;
    m.R = r;
    m.t = pivot - r.apply(pivot) + t;
    return m;
}

}  // namespace wsaflow
