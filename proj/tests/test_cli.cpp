#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wsaflow/datagen.hpp"

namespace fs = std::filesystem;

namespace {

#ifndef WSAFLOW_CLI_PATH
#error "WSAFLOW_CLI_PATH must point at the wsaflow binary"
#endif

const std::string kCli = WSAFLOW_CLI_PATH;

struct CmdResult {
    int exit_code;
    std::string output;
};

CmdResult run(const std::string& args) {
    const std::string out_file = (fs::temp_directory_path() / "wsaflow_cli_out.txt").string();
    const std::string cmd = kCli + " " + args + " > " + out_file + " 2>&1";
    const int rc = std::system(cmd.c_str());
    std::ifstream in(out_file);
    std::string output((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return {rc == 0 ? 0 : 1, output};
}

std::string sandbox(const std::string& name) {
    auto p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_tiny_config(const std::string& path, int points, int epochs) {
    std::ofstream out(path);
    out << "[scene]\nnum_points = " << points
        << "\nnum_objects = 1\nrot_bound = 0.1\ntrans_bound = 0.1\nseed = 3\n"
        << "[model]\npreset = tiny\n"
        << "[train]\nepochs = " << epochs << "\nbatch_size = 2\nseed = 4\n"
        << "[loss]\ngamma = 0.02, 0.04\n";
}

}  // namespace

TEST_CASE("gen writes count files plus a manifest, deterministically") {
    const auto dir_a = sandbox("cli_gen_a");
    const auto dir_b = sandbox("cli_gen_b");
    const auto cfg = (fs::temp_directory_path() / "cli_gen.ini").string();
    write_tiny_config(cfg, 64, 1);

    CHECK(run("gen --config " + cfg + " --out-dir " + dir_a + " --count 3 --seed 11").exit_code == 0);
    CHECK(fs::exists(dir_a + "/sample_000000.wsaf"));
    CHECK(fs::exists(dir_a + "/sample_000002.wsaf"));
    std::ifstream manifest(dir_a + "/manifest.tsv");
    int rows = 0;
    std::string line;
    while (std::getline(manifest, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 3);

    CHECK(run("gen --config " + cfg + " --out-dir " + dir_b + " --count 3 --seed 11").exit_code == 0);
    CHECK(file_bytes(dir_a + "/sample_000001.wsaf") == file_bytes(dir_b + "/sample_000001.wsaf"));
}

TEST_CASE("gen with count 0 writes an empty manifest and exits 0") {
    const auto dir = sandbox("cli_gen_zero");
    auto r = run("gen --out-dir " + dir + " --count 0");
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(dir + "/manifest.tsv"));
    CHECK(file_bytes(dir + "/manifest.tsv").empty());
}

TEST_CASE("malformed invocations exit nonzero with usage hints") {
    CHECK(run("eval --data /nonexistent").exit_code != 0);       // missing --ckpt
    CHECK(run("gen --out-dir /tmp/x --bogus-flag 1").exit_code != 0);
    CHECK(run("nonexistent-command").exit_code != 0);
    auto help = run("--help");
    CHECK(help.exit_code == 0);
    CHECK(help.output.find("gen") != std::string::npos);
    CHECK(help.output.find("verify") != std::string::npos);
    auto gen_help = run("gen --help");
    CHECK(gen_help.output.find("--out-dir") != std::string::npos);
    CHECK(gen_help.output.find("--count") != std::string::npos);
}

TEST_CASE("verify passes honestly and reports the violation algebra") {
    auto ok = run("verify --trials 500 --seed 5");
    CHECK(ok.exit_code == 0);
    CHECK(ok.output.find("PASS") != std::string::npos);
    CHECK(ok.output.find("max residual") != std::string::npos);

    auto violated = run("verify --trials 100 --seed 5 --violate-barycentric 0.05,-0.02,0.11");
    CHECK(violated.exit_code == 0);  // the algebra check itself passes
    CHECK(violated.output.find("PASS") != std::string::npos);

    CHECK(run("verify --trials 100 --violate-barycentric nonsense").exit_code != 0);
}

TEST_CASE("train, eval, infer, and re-eval agree end to end") {
    const auto data = sandbox("cli_pipeline_data");
    const auto out = sandbox("cli_pipeline_out");
    const auto cfg = (fs::temp_directory_path() / "cli_pipeline.ini").string();
    write_tiny_config(cfg, 48, 2);

    REQUIRE(run("gen --config " + cfg + " --out-dir " + data + " --count 2").exit_code == 0);
    REQUIRE(run("train --config " + cfg + " --data " + data + " --out " + out).exit_code == 0);
    REQUIRE(fs::exists(out + "/final.wsck"));
    REQUIRE(fs::exists(out + "/log.tsv"));
    {
        std::ifstream log(out + "/log.tsv");
        std::string header;
        std::getline(log, header);
        CHECK(header == "epoch\tlr\tL_S\tL_P\tL_DD\tL_total\tEPE3D");
    }

    auto ev = run("eval --config " + cfg + " --ckpt " + out + "/final.wsck --data " + data);
    CHECK(ev.exit_code == 0);
    CHECK(ev.output.find("EPE3D\tAcc3DS\tAcc3DR\tOutliers3D") != std::string::npos);
    CHECK(ev.output.find("mean\t") != std::string::npos);

    // infer writes a flow file whose metrics reproduce eval's per-sample row
    const auto sample = data + "/sample_000000.wsaf";
    const auto flow_file = out + "/pred.wsaf";
    const auto ply_file = out + "/pred.ply";
    auto inf = run("infer --config " + cfg + " --ckpt " + out + "/final.wsck --src " + sample +
                   " --tgt " + sample + " --out-flow " + flow_file + " --out-ply " + ply_file);
    CHECK(inf.exit_code == 0);
    REQUIRE(fs::exists(flow_file));
    REQUIRE(fs::exists(ply_file));

    const auto original = wsaflow::read_sample(sample);
    const auto predicted = wsaflow::read_sample(flow_file);
    const auto m = wsaflow::compute_metrics(predicted.s_gt, original.s_gt);
    std::ostringstream expected;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.4f\t%.4f\t%.4f\t%.4f", m.epe3d, m.acc3d_strict,
                  m.acc3d_relax, m.outliers3d);
    CHECK(ev.output.find(std::string("sample_000000.wsaf\t") + buf) != std::string::npos);

    // the exported point list parses and holds source + warped points
    auto [cloud, colors] = wsaflow::read_ply(ply_file);
    CHECK(cloud.size() == 2 * original.size_p());

    auto missing = run("eval --config " + cfg + " --ckpt " + out + "/nope.wsck --data " + data);
    CHECK(missing.exit_code != 0);
}

TEST_CASE("eval on an empty dataset prints only the header") {
    const auto empty = sandbox("cli_empty_data");
    auto r = run("eval --ckpt /nonexistent.wsck --data " + empty);
    CHECK(r.exit_code == 0);  // header only, checkpoint never touched
    CHECK(r.output.find("EPE3D") != std::string::npos);
    CHECK(r.output.find("mean") == std::string::npos);
}
