#include "wsaflow/flownet.hpp"

#include <cmath>
#include <limits>

namespace wsaflow {

namespace {

struct PointScores {
    double epe;
    double rel;
};

PointScores score_point(const Vec3& pred, const Vec3& gt) {
    const double epe = (pred - gt).norm();
    const double gn = gt.norm();
    double rel;
    if (gn > 0)
        rel = epe / gn;
    else
        rel = epe == 0 ? 0.0 : std::numeric_limits<double>::infinity();
    return {epe, rel};
}

}  // namespace

FlowMetrics compute_metrics(const FlowField& pred, const FlowField& gt) {
    if (pred.size() != gt.size()) throw std::invalid_argument("metrics: length mismatch");
    if (pred.size() == 0) throw std::invalid_argument("metrics: empty flow");
    const int n = pred.size();
    double epe_sum = 0;
    int strict = 0, relax = 0, outl = 0;
    for (int i = 0; i < n; ++i) {
        const auto s = score_point(pred[i], gt[i]);
        epe_sum += s.epe;
        if (s.epe < 0.05 || s.rel < 0.05) ++strict;
        if (s.epe < 0.1 || s.rel < 0.1) ++relax;
        if (s.epe > 0.3 || s.rel > 0.1) ++outl;
    }
    FlowMetrics m;
    m.epe3d = epe_sum / n;
    m.acc3d_strict = double(strict) / n;
    m.acc3d_relax = double(relax) / n;
    m.outliers3d = double(outl) / n;
    return m;
}

std::vector<bool> acc3d_strict_flags(const FlowField& pred, const FlowField& gt) {
    if (pred.size() != gt.size()) throw std::invalid_argument("metrics: length mismatch");
    std::vector<bool> ok(size_t(pred.size()));
    for (int i = 0; i < pred.size(); ++i) {
        const auto s = score_point(pred[i], gt[i]);
        ok[size_t(i)] = s.epe < 0.05 || s.rel < 0.05;
    }
    return ok;
}

}  // namespace wsaflow
