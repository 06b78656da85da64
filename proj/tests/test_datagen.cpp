#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "wsaflow/datagen.hpp"

using namespace wsaflow;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("generation is a pure function of the config") {
    SceneConfig cfg;
    cfg.seed = 77;
    auto a = generate_scene(cfg);
    auto b = generate_scene(cfg);
    REQUIRE(a.size_p() == b.size_p());
    for (int i = 0; i < a.size_p(); ++i) {
        CHECK((a.p[i] - b.p[i]).norm() == 0);
        CHECK((a.s_gt[i] - b.s_gt[i]).norm() == 0);
    }
    CHECK(a.labels == b.labels);
}

TEST_CASE("per-object rigidity of the ground truth") {
    SceneConfig cfg;
    cfg.num_points = 400;
    cfg.num_objects = 4;
    cfg.seed = 3;
    auto s = generate_scene(cfg);
    auto moved = warp(s.p, s.s_gt);
    // all pairwise distances within one object are preserved
    for (int obj = 1; obj <= cfg.num_objects; ++obj) {
        std::vector<int> members;
        for (int i = 0; i < s.size_p(); ++i)
            if (s.labels[size_t(i)] == obj) members.push_back(i);
        REQUIRE(members.size() >= 4);
        for (size_t a = 0; a < members.size(); ++a)
            for (size_t b = a + 1; b < members.size(); ++b) {
                const double before = (s.p[members[a]] - s.p[members[b]]).norm();
                const double after = (moved[members[a]] - moved[members[b]]).norm();
                CHECK(std::abs(before - after) < 1e-9);
            }
    }
    // background does not move
    for (int i = 0; i < s.size_p(); ++i)
        if (s.labels[size_t(i)] == 0) CHECK(s.s_gt[i].norm() == 0);
}

TEST_CASE("zero motion bounds give a static scene") {
    SceneConfig cfg;
    cfg.rot_bound = 0;
    cfg.trans_bound = 0;
    cfg.seed = 5;
    auto s = generate_scene(cfg);
    for (int i = 0; i < s.size_p(); ++i) CHECK(s.s_gt[i].norm() == 0);
    REQUIRE(s.size_q() == s.size_p());
    for (int i = 0; i < s.size_p(); ++i) CHECK((s.q[i] - s.p[i]).norm() == 0);
}

TEST_CASE("without resampling Q is exactly P + S") {
    SceneConfig cfg;
    cfg.seed = 9;
    cfg.target_resample = false;
    auto s = generate_scene(cfg);
    auto moved = warp(s.p, s.s_gt);
    for (int i = 0; i < s.size_p(); ++i) CHECK((s.q[i] - moved[i]).norm() == 0);

    cfg.target_resample = true;
    auto r = generate_scene(cfg);
    CHECK(r.size_q() == r.size_p());  // same budget, independent draw
    double max_gap = 0;
    for (int i = 0; i < r.size_p(); ++i)
        max_gap = std::max(max_gap, (r.q[i] - r.p[i]).norm());
    CHECK(max_gap > 1e-3);  // correspondences are gone
}

TEST_CASE("jitter moves P but leaves the stored flow exact") {
    SceneConfig cfg;
    cfg.seed = 21;
    cfg.jitter_sigma = 0.01;
    auto noisy = generate_scene(cfg);
    cfg.jitter_sigma = 0;
    auto clean = generate_scene(cfg);
    REQUIRE(noisy.size_p() == clean.size_p());
    for (int i = 0; i < clean.size_p(); ++i)
        CHECK((noisy.s_gt[i] - clean.s_gt[i]).norm() == 0);
    double moved = 0;
    for (int i = 0; i < clean.size_p(); ++i) moved += (noisy.p[i] - clean.p[i]).norm();
    CHECK(moved > 0);
}

TEST_CASE("impossible configs are rejected") {
    SceneConfig cfg;
    cfg.num_points = 10;
    cfg.num_objects = 8;
    CHECK_THROWS_AS(generate_scene(cfg), std::invalid_argument);
    SceneConfig neg;
    neg.rot_bound = -1;
    CHECK_THROWS_AS(generate_scene(neg), std::invalid_argument);
}

TEST_CASE("wsaf files round-trip bit exactly") {
    SceneConfig cfg;
    cfg.num_points = 100;
    cfg.seed = 4;
    cfg.jitter_sigma = 0.004;
    auto s = generate_scene(cfg);
    const auto path = tmp_path("roundtrip.wsaf");
    write_sample(s, path);
    auto r = read_sample(path);
    REQUIRE(r.size_p() == s.size_p());
    REQUIRE(r.size_q() == s.size_q());
    CHECK(r.labels == s.labels);
    // storage is f32; compare against the f32-cast original
    for (int i = 0; i < s.size_p(); ++i) {
        CHECK(r.p[i].x == double(float(s.p[i].x)));
        CHECK(r.p[i].y == double(float(s.p[i].y)));
        CHECK(r.p[i].z == double(float(s.p[i].z)));
        CHECK(r.s_gt[i].x == double(float(s.s_gt[i].x)));
    }

    // a second write of the read-back sample is byte-identical
    const auto path2 = tmp_path("roundtrip2.wsaf");
    write_sample(r, path2);
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("malformed wsaf files fail with located errors") {
    const auto path = tmp_path("bad.wsaf");

    {
        std::ofstream out(path, std::ios::binary);
    }
    try {
        read_sample(path);
        FAIL("empty file accepted");
    } catch (const FormatError& e) {
        CHECK(e.offset == 0);
    }

    {
        std::ofstream out(path, std::ios::binary);
        out << "WSAX1234";
    }
    try {
        read_sample(path);
        FAIL("bad magic accepted");
    } catch (const FormatError& e) {
        CHECK(e.offset == 0);
        CHECK(std::string(e.what()).find("WSAF") != std::string::npos);
    }

    // valid header but truncated payload
    SceneConfig cfg;
    cfg.num_points = 50;
    auto s = generate_scene(cfg);
    write_sample(s, path);
    std::string full;
    {
        std::ifstream in(path, std::ios::binary);
        full.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }
    {
        std::ofstream out(path, std::ios::binary);
        out.write(full.data(), std::streamsize(full.size() / 2));
    }
    CHECK_THROWS_AS(read_sample(path), FormatError);
    std::remove(path.c_str());
}

TEST_CASE("ply export declares the count and round-trips coordinates") {
    PointCloud c(std::vector<Vec3>{{0.125, -2.5, 3.75}});
    const auto path = tmp_path("one.ply");
    export_ply(c, {Rgb{0, 200, 0}}, path);
    std::ifstream in(path);
    std::string header((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(header.find("element vertex 1") != std::string::npos);

    auto [cloud, colors] = read_ply(path);
    REQUIRE(cloud.size() == 1);
    CHECK(cloud[0].x == doctest::Approx(0.125).epsilon(1e-9));
    CHECK(cloud[0].y == doctest::Approx(-2.5).epsilon(1e-9));
    CHECK(cloud[0].z == doctest::Approx(3.75).epsilon(1e-9));
    CHECK(colors[0].g == 200);
    std::remove(path.c_str());
}

TEST_CASE("exact predictions color every point green") {
    std::vector<bool> ok{true, true, true};
    auto colors = accuracy_colors(ok);
    for (const auto& c : colors) {
        CHECK(c.g > 0);
        CHECK(c.r == 0);
    }
    auto mixed = accuracy_colors({true, false});
    CHECK(mixed[1].r > 0);
    CHECK(mixed[1].g == 0);
}
