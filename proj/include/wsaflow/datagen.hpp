#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wsaflow/geometry.hpp"

namespace wsaflow {

// Synthetic multi-object rigid scene recipe. Stands in for a captured dataset:
// box and ellipsoid shells over a ground plane, one rigid motion per object.
struct SceneConfig {
    int num_points = 512;
    int num_objects = 3;
    double object_extent = 0.4;       // max half-size, meters
    double rot_bound = 0.2;           // max rotation angle, radians
    double trans_bound = 0.25;        // per-axis translation bound, meters
    double background_fraction = 0.25;
    double jitter_sigma = 0.0;        // added to P after flow computation
    bool target_resample = false;     // independent sampling of the moved surfaces
    uint64_t seed = 1;

    void validate() const;
};

struct SamplePair {
    PointCloud p;                      // source cloud at t
    PointCloud q;                      // target cloud at t+1
    FlowField s_gt;                    // ground-truth flow on p
    std::vector<uint16_t> labels;      // 0 = background, 1..num_objects

    int size_p() const { return p.size(); }
    int size_q() const { return q.size(); }
};

// Deterministic in config.seed. Per object j: S_gt = R_j p + t_j - p with the
// rotation taken about the object's own center. Background keeps identity.
SamplePair generate_scene(const SceneConfig& config);

// "WSAF" container: magic, u32 version, u32 N1, u32 N2, f32 LE P/Q/S, u16 labels.
void write_sample(const SamplePair& sample, const std::string& path);
SamplePair read_sample(const std::string& path);

// ASCII point-list export with per-vertex color.
struct Rgb {
    uint8_t r = 0, g = 0, b = 0;
};

void export_ply(const PointCloud& cloud, const std::vector<Rgb>& colors, const std::string& path);

// Reads back x/y/z + r/g/b vertices written by export_ply.
std::pair<PointCloud, std::vector<Rgb>> read_ply(const std::string& path);

// Correctness coloring: green where the per-point strict-accuracy test passes,
// red otherwise (source points are conventionally blue).
std::vector<Rgb> accuracy_colors(const std::vector<bool>& strict_ok);

// Writes the whole file through a temp path and renames into place.
void atomic_write_text(const std::string& path, const std::string& content);

}  // namespace wsaflow
