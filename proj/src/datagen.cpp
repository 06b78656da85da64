#include "wsaflow/datagen.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wsaflow/errors.hpp"

namespace wsaflow {

void SceneConfig::validate() const {
    if (num_points < 1) throw std::invalid_argument("scene: num_points must be positive");
    if (num_objects < 0) throw std::invalid_argument("scene: num_objects must be nonnegative");
    if (object_extent <= 0) throw std::invalid_argument("scene: object_extent must be positive");
    if (rot_bound < 0 || trans_bound < 0 || jitter_sigma < 0)
        throw std::invalid_argument("scene: bounds must be nonnegative");
    if (background_fraction < 0 || background_fraction > 1)
        throw std::invalid_argument("scene: background_fraction must lie in [0,1]");
    const int bg = int(std::lround(num_points * background_fraction));
    if (num_objects > 0 && (num_points - bg) / num_objects < 4)
        throw std::invalid_argument("scene: objects exceed the point budget");
}

namespace {

Vec3 random_unit(Rng& rng) {
    Vec3 v;
    double n2;
    do {
        v = {rng.normal(), rng.normal(), rng.normal()};
        n2 = v.norm2();
    } while (n2 < 1e-12);
    return v * (1.0 / std::sqrt(n2));
}

// surface sample of an axis-aligned box with half-sizes h, centered at origin
Vec3 sample_box_surface(Rng& rng, const Vec3& h) {
    const double ax = h.y * h.z, ay = h.x * h.z, az = h.x * h.y;
    const double pick = rng.uniform() * (ax + ay + az);
    const double u = rng.uniform(-1, 1), v = rng.uniform(-1, 1);
    const double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
    if (pick < ax) return {side * h.x, u * h.y, v * h.z};
    if (pick < ax + ay) return {u * h.x, side * h.y, v * h.z};
    return {u * h.x, v * h.y, side * h.z};
}

Vec3 sample_ellipsoid_surface(Rng& rng, const Vec3& radii) {
    const Vec3 d = random_unit(rng);
    return {d.x * radii.x, d.y * radii.y, d.z * radii.z};
}

}  // namespace

SamplePair generate_scene(const SceneConfig& config) {
    config.validate();
    Rng rng(config.seed);
    SamplePair out;

    const int n_bg = int(std::lround(config.num_points * config.background_fraction));
    const int n_obj_total = config.num_points - n_bg;
    std::vector<int> obj_counts(size_t(std::max(config.num_objects, 0)), 0);
    for (int i = 0; i < n_obj_total && config.num_objects > 0; ++i)
        obj_counts[size_t(i % config.num_objects)]++;

    struct ObjectSpec {
        bool box;
        Vec3 half;    // half-sizes or radii
        Vec3 center;
        RigidMotion motion;  // already includes the pivot
    };
    std::vector<ObjectSpec> objects;
    for (int j = 0; j < config.num_objects; ++j) {
        ObjectSpec o;
        o.box = j % 2 == 0;
        const double e = config.object_extent;
        o.half = {rng.uniform(0.3 * e, e), rng.uniform(0.3 * e, e), rng.uniform(0.3 * e, e)};
        o.center = {rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(0.3, 1.2)};
        const Vec3 axis = random_unit(rng);
        const double angle = rng.uniform(0, config.rot_bound);
        const Vec3 t{rng.uniform(-config.trans_bound, config.trans_bound),
                     rng.uniform(-config.trans_bound, config.trans_bound),
                     rng.uniform(-config.trans_bound, config.trans_bound)};
        o.motion = motion_about_center(axis_angle_rotation(axis, angle), o.center, t);
        objects.push_back(o);
    }

    auto sample_surface_point = [&](const ObjectSpec& o) {
        const Vec3 local = o.box ? sample_box_surface(rng, o.half) : sample_ellipsoid_surface(rng, o.half);
        return o.center + local;
    };
    auto sample_background_point = [&] {
        return Vec3{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), 0.0};
    };

    // source cloud with exact per-object flow
    for (int i = 0; i < n_bg; ++i) {
        out.p.points.push_back(sample_background_point());
        out.s_gt.vectors.push_back({0, 0, 0});
        out.labels.push_back(0);
    }
    for (int j = 0; j < config.num_objects; ++j) {
        const auto& o = objects[size_t(j)];
        for (int i = 0; i < obj_counts[size_t(j)]; ++i) {
            const Vec3 p = sample_surface_point(o);
            out.p.points.push_back(p);
            out.s_gt.vectors.push_back(o.motion.R.apply(p) + o.motion.t - p);
            out.labels.push_back(uint16_t(j + 1));
        }
    }

    if (config.target_resample) {
        // fresh points on the moved surfaces; correspondences are lost on purpose
        for (int i = 0; i < n_bg; ++i) out.q.points.push_back(sample_background_point());
        for (int j = 0; j < config.num_objects; ++j) {
            const auto& o = objects[size_t(j)];
            for (int i = 0; i < obj_counts[size_t(j)]; ++i) {
                const Vec3 p = sample_surface_point(o);
                out.q.points.push_back(o.motion.R.apply(p) + o.motion.t);
            }
        }
    } else {
        out.q = warp(out.p, out.s_gt);
    }

    if (config.jitter_sigma > 0)
        for (auto& p : out.p.points)
            p += Vec3{rng.normal(0, config.jitter_sigma), rng.normal(0, config.jitter_sigma),
                      rng.normal(0, config.jitter_sigma)};
    return out;
}

// ---------------------------------------------------------------------------
// WSAF container
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'W', 'S', 'A', 'F'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

void put_vecs(std::string& buf, const std::vector<Vec3>& vs) {
    for (const Vec3& v : vs) {
        put_f32(buf, float(v.x));
        put_f32(buf, float(v.y));
        put_f32(buf, float(v.z));
    }
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    void need(size_t n, const char* what) const {
        if (pos + n > buf.size())
            throw FormatError(std::string("wsaf: truncated while reading ") + what,
                              (long long)pos);
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(buf[pos + size_t(i)])) << (8 * i);
        pos += 4;
        return v;
    }
    uint16_t u16(const char* what) {
        need(2, what);
        uint16_t v = uint16_t(uint8_t(buf[pos])) | uint16_t(uint16_t(uint8_t(buf[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    float f32(const char* what) {
        const uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::vector<Vec3> vecs(size_t n, const char* what) {
        std::vector<Vec3> out;
        out.reserve(n);
        for (size_t i = 0; i < n; ++i) {
            const double x = f32(what), y = f32(what), z = f32(what);
            out.push_back({x, y, z});
        }
        return out;
    }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void atomic_write_bytes(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out.write(content.data(), std::streamsize(content.size()));
        if (!out) throw std::runtime_error("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

void atomic_write_text(const std::string& path, const std::string& content) {
    atomic_write_bytes(path, content);
}

void write_sample(const SamplePair& sample, const std::string& path) {
    if (sample.s_gt.size() != sample.p.size() || int(sample.labels.size()) != sample.p.size())
        throw std::invalid_argument("wsaf: flow and labels must match the source cloud");
    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kVersion);
    put_u32(buf, uint32_t(sample.p.size()));
    put_u32(buf, uint32_t(sample.q.size()));
    put_vecs(buf, sample.p.points);
    put_vecs(buf, sample.q.points);
    put_vecs(buf, sample.s_gt.vectors);
    for (uint16_t l : sample.labels) {
        buf.push_back(char(l & 0xff));
        buf.push_back(char((l >> 8) & 0xff));
    }
    atomic_write_bytes(path, buf);
}

SamplePair read_sample(const std::string& path) {
    const std::string buf = read_file(path);
    if (buf.size() < 4)
        throw FormatError("wsaf: missing magic \"WSAF\"", 0);
    if (std::memcmp(buf.data(), kMagic, 4) != 0)
        throw FormatError("wsaf: bad magic, expected \"WSAF\"", 0);
    Reader r{buf, 4};
    const uint32_t version = r.u32("version");
    if (version != kVersion)
        throw FormatError("wsaf: unsupported version " + std::to_string(version), 4);
    const uint32_t n1 = r.u32("N1");
    const uint32_t n2 = r.u32("N2");
    SamplePair s;
    s.p.points = r.vecs(n1, "P");
    s.q.points = r.vecs(n2, "Q");
    s.s_gt.vectors = r.vecs(n1, "S");
    s.labels.reserve(n1);
    for (uint32_t i = 0; i < n1; ++i) s.labels.push_back(r.u16("labels"));
    if (r.pos != buf.size())
        throw FormatError("wsaf: trailing bytes after payload", (long long)r.pos);
    return s;
}

// ---------------------------------------------------------------------------
// Point-list export
// ---------------------------------------------------------------------------

void export_ply(const PointCloud& cloud, const std::vector<Rgb>& colors, const std::string& path) {
    if (int(colors.size()) != cloud.size())
        throw std::invalid_argument("export_ply: one color per point required");
    std::ostringstream out;
    out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
        << "\nproperty float x\nproperty float y\nproperty float z\n"
           "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
    char line[128];
    for (int i = 0; i < cloud.size(); ++i) {
        const Vec3& p = cloud[i];
        std::snprintf(line, sizeof line, "%.9g %.9g %.9g %d %d %d\n", p.x, p.y, p.z,
                      int(colors[size_t(i)].r), int(colors[size_t(i)].g), int(colors[size_t(i)].b));
        out << line;
    }
    atomic_write_bytes(path, out.str());
}

std::pair<PointCloud, std::vector<Rgb>> read_ply(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    int vertices = -1;
    while (std::getline(in, line)) {
        if (line.rfind("element vertex ", 0) == 0) vertices = std::stoi(line.substr(15));
        if (line == "end_header") break;
    }
    if (vertices < 0) throw FormatError("ply: missing vertex count", 0);
    PointCloud c;
    std::vector<Rgb> colors;
    for (int i = 0; i < vertices; ++i) {
        double x, y, z;
        int r, g, b;
        if (!(in >> x >> y >> z >> r >> g >> b))
            throw FormatError("ply: truncated vertex list", (long long)i);
        c.points.push_back({x, y, z});
        colors.push_back({uint8_t(r), uint8_t(g), uint8_t(b)});
    }
    return {c, colors};
}

std::vector<Rgb> accuracy_colors(const std::vector<bool>& strict_ok) {
    std::vector<Rgb> out;
    out.reserve(strict_ok.size());
    for (bool ok : strict_ok) out.push_back(ok ? Rgb{0, 200, 0} : Rgb{220, 0, 0});
    return out;
}

}  // namespace wsaflow
