#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "wsaflow/config.hpp"
#include "wsaflow/grad_check.hpp"

namespace fs = std::filesystem;
using namespace wsaflow;

namespace {

RunConfig load_config(const std::string& path) {
    return path.empty() ? parse_config_text(default_config_text()) : parse_config_file(path);
}

std::string metric_header() { return "EPE3D\tAcc3DS\tAcc3DR\tOutliers3D"; }

std::string metric_row(const FlowMetrics& m) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.4f\t%.4f\t%.4f\t%.4f", m.epe3d, m.acc3d_strict,
                  m.acc3d_relax, m.outliers3d);
    return buf;
}

int cmd_gen(const std::string& config_path, const std::string& out_dir, int count,
            int64_t seed_override) {
    RunConfig cfg = load_config(config_path);
    if (seed_override >= 0) cfg.scene.seed = uint64_t(seed_override);
    fs::create_directories(out_dir);
    std::ostringstream manifest;
    for (int i = 0; i < count; ++i) {
        SceneConfig sc = cfg.scene;
        sc.seed = cfg.scene.seed + uint64_t(i);
        char name[64];
        std::snprintf(name, sizeof name, "sample_%06d.wsaf", i);
        const std::string path = (fs::path(out_dir) / name).string();
        write_sample(generate_scene(sc), path);
        manifest << name << "\t" << sc.seed << "\n";
    }
    atomic_write_text((fs::path(out_dir) / "manifest.tsv").string(), manifest.str());
    std::printf("wrote %d sample(s) to %s\n", count, out_dir.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, const std::string& resume_path) {
    RunConfig cfg = load_config(config_path);
    cfg.train.out_dir = out_dir;
    auto dataset = load_dataset(data_dir);
    std::printf("training on %zu sample(s), %d epoch(s)\n", dataset.size(), cfg.train.epochs);
    std::printf("%s\n", log_header().c_str());
    Checkpoint resume;
    const Checkpoint* resume_ptr = nullptr;
    if (!resume_path.empty()) {
        resume = load_checkpoint(resume_path);
        resume_ptr = &resume;
    }
    auto result = train(cfg.train, dataset, resume_ptr);
    for (const auto& e : result.log) std::printf("%s\n", format_log_line(e).c_str());
    std::printf("final checkpoint: %s\n", (fs::path(out_dir) / "final.wsck").string().c_str());
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt_path,
             const std::string& data_dir) {
    RunConfig cfg = load_config(config_path);
    auto files = list_wsaf_files(data_dir);
    std::printf("sample\t%s\n", metric_header().c_str());
    if (files.empty()) return 0;
    auto ckpt = load_checkpoint(ckpt_path);
    WsaFlowNet net(cfg.train.model, std::move(ckpt.params));
    std::vector<SamplePair> samples;
    std::vector<std::string> names;
    for (const auto& f : files) {
        samples.push_back(read_sample(f));
        names.push_back(fs::path(f).filename().string());
    }
    auto result = evaluate(net, samples, &names);
    for (const auto& row : result.rows)
        std::printf("%s\t%s\n", row.name.c_str(), metric_row(row.metrics).c_str());
    std::printf("mean\t%s\n", metric_row(result.mean).c_str());
    return 0;
}

int cmd_infer(const std::string& config_path, const std::string& ckpt_path,
              const std::string& src_path, const std::string& tgt_path,
              const std::string& out_flow, const std::string& out_ply) {
    RunConfig cfg = load_config(config_path);
    auto ckpt = load_checkpoint(ckpt_path);
    WsaFlowNet net(cfg.train.model, std::move(ckpt.params));
    auto src = read_sample(src_path);
    auto tgt = read_sample(tgt_path);

    auto fwd = net.forward(src.p, tgt.q);
    const FlowField pred = tensor_to_flow(fwd.flow_l0());

    SamplePair out;
    out.p = src.p;
    out.q = tgt.q;
    out.s_gt = pred;
    out.labels.assign(size_t(src.p.size()), 0);
    write_sample(out, out_flow);
    std::printf("flow written to %s\n", out_flow.c_str());

    if (!out_ply.empty()) {
        // blue source points, then warped points green/red by the strict test
        PointCloud combined = src.p;
        std::vector<Rgb> colors(size_t(src.p.size()), Rgb{30, 60, 220});
        const auto warped = warp(src.p, pred);
        const auto ok = acc3d_strict_flags(pred, src.s_gt);
        const auto verdicts = accuracy_colors(ok);
        for (int i = 0; i < warped.size(); ++i) {
            combined.points.push_back(warped[i]);
            colors.push_back(verdicts[size_t(i)]);
        }
        export_ply(combined, colors, out_ply);
        std::printf("colored point list written to %s\n", out_ply.c_str());
    }
    return 0;
}

int cmd_verify(int trials, uint64_t seed, const std::string& violate) {
    if (trials < 1) {
        std::fprintf(stderr, "verify: trials must be >= 1\n");
        return 2;
    }
    if (!violate.empty()) {
        Vec3 e;
        if (std::sscanf(violate.c_str(), "%lf,%lf,%lf", &e.x, &e.y, &e.z) != 3) {
            std::fprintf(stderr, "verify: --violate-barycentric expects \"x,y,z\"\n");
            return 2;
        }
        auto stats = run_rigidity_trials(trials, seed, &e);
        std::printf("trials: %d\n", stats.trials);
        std::printf("max residual: %.3e\n", stats.max_residual);
        std::printf("max |residual - ||(R-I)e||| : %.3e\n", stats.max_prediction_err);
        const bool ok = stats.max_prediction_err < 1e-9 && stats.max_residual > 0;
        std::printf("%s\n", ok ? "PASS" : "FAIL");
        return ok ? 0 : 1;
    }
    const auto t0 = std::chrono::steady_clock::now();
    auto stats = run_rigidity_trials(trials, seed);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("trials: %d\n", stats.trials);
    std::printf("max residual: %.3e  (%.2f s)\n", stats.max_residual, secs);
    const bool ok = stats.max_residual < 1e-10;
    std::printf("%s\n", ok ? "PASS" : "FAIL");
    return ok ? 0 : 1;
}

int cmd_gradcheck(const std::string& preset, uint64_t seed, int seeds_per_op) {
    bool all_ok = true;
    std::printf("%-14s %-14s %s\n", "op", "max rel err", "verdict");
    for (const auto& check : registered_op_checks()) {
        double worst = 0;
        for (int s = 1; s <= seeds_per_op; ++s)
            worst = std::max(worst, check.run(seed + uint64_t(s)));
        const bool ok = worst < 1e-4;
        all_ok = all_ok && ok;
        std::printf("%-14s %-14.3e %s\n", check.name.c_str(), worst, ok ? "ok" : "FAIL");
    }

    // end-to-end: every parameter of a small model against central differences
    ModelConfig mc = ModelConfig::preset(preset);
    Rng rng(seed);
    PointCloud p;
    for (int i = 0; i < 32; ++i)
        p.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    RigidMotion motion{random_rotation(rng), {0.08, -0.03, 0.12}};
    const auto gt = flow_from_motion(p, motion);
    const auto q = warp(p, gt);
    WsaFlowNetT<double> net(mc, seed + 101);
    LossWeights w;
    w.gamma.assign(size_t(mc.levels()), 0.0);
    for (int l = 0; l < mc.levels(); ++l) w.gamma[size_t(l)] = 0.02 * double(1 << l);
    std::vector<TensorD> inputs;
    for (auto& [name, t] : net.params()) inputs.push_back(t);
    std::vector<CostVolumeTables> cache;  // keep neighbor selections fixed across probes
    const double e2e = grad_check(
        [&] { return compute_losses(net.forward(p, q, &cache), gt, w).total; }, inputs, 1e-5, true);
    const bool e2e_ok = e2e < 1e-3;
    all_ok = all_ok && e2e_ok;
    std::printf("%-14s %-14.3e %s\n", "end-to-end", e2e, e2e_ok ? "ok" : "FAIL");
    std::printf("%s\n", all_ok ? "PASS" : "FAIL");
    return all_ok ? 0 : 1;
}

int cmd_ablate(const std::string& config_path, const std::string& data_dir,
               const std::string& heldout_dir, bool sequential) {
    RunConfig cfg = load_config(config_path);
    auto train_set = load_dataset(data_dir);
    auto heldout = load_dataset(heldout_dir);
    auto rows = run_ablation(cfg.train, train_set, heldout, !sequential);
    std::printf("%-10s\t%s\n", "variant", metric_header().c_str());
    for (const auto& row : rows)
        std::printf("%-10s\t%s\n", row.name.c_str(), metric_row(row.metrics).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"wsaflow: weight-sharing aggregation scene flow at desk scale"};
    app.require_subcommand(1);

    std::string config_path, out_dir, data_dir, heldout_dir, ckpt_path, resume_path;
    std::string src_path, tgt_path, out_flow, out_ply, violate, preset = "tiny";
    int count = 1, trials = 10000, seeds_per_op = 100;
    int64_t seed_override = -1;
    uint64_t seed = 1;
    bool sequential = false;

    auto* gen = app.add_subcommand("gen", "generate synthetic scenes");
    gen->add_option("--config", config_path, "config file (INI)");
    gen->add_option("--out-dir", out_dir, "output directory")->required();
    gen->add_option("--count", count, "number of samples");
    gen->add_option("--seed", seed_override, "base seed override");

    auto* tr = app.add_subcommand("train", "train a model");
    tr->add_option("--config", config_path, "config file (INI)");
    tr->add_option("--data", data_dir, "directory with .wsaf samples")->required();
    tr->add_option("--out", out_dir, "output directory for checkpoints and log")->required();
    tr->add_option("--resume", resume_path, "checkpoint to resume from");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    ev->add_option("--config", config_path, "config file (INI)");
    ev->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    ev->add_option("--data", data_dir, "directory with .wsaf samples")->required();

    auto* inf = app.add_subcommand("infer", "predict flow for one pair");
    inf->add_option("--config", config_path, "config file (INI)");
    inf->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    inf->add_option("--src", src_path, "wsaf file providing the source cloud (its P)")->required();
    inf->add_option("--tgt", tgt_path, "wsaf file providing the target cloud (its Q)")->required();
    inf->add_option("--out-flow", out_flow, "output wsaf file with predicted flow")->required();
    inf->add_option("--out-ply", out_ply, "optional colored point-list export");

    auto* ver = app.add_subcommand("verify", "check the rigidity identity numerically");
    ver->add_option("--trials", trials, "number of randomized trials");
    ver->add_option("--seed", seed, "rng seed");
    ver->add_option("--violate-barycentric", violate,
                    "offset \"x,y,z\" added to the barycenter; residual must equal ||(R-I)e||");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    gc->add_option("--preset", preset, "model preset for the end-to-end check");
    gc->add_option("--seed", seed, "rng seed");
    gc->add_option("--seeds-per-op", seeds_per_op, "random draws per op");

    auto* ab = app.add_subcommand("ablate", "train and compare module variants");
    ab->add_option("--config", config_path, "config file (INI)");
    ab->add_option("--data", data_dir, "training samples")->required();
    ab->add_option("--heldout", heldout_dir, "held-out samples")->required();
    ab->add_flag("--sequential", sequential, "disable parallel variant training");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(config_path, out_dir, count, seed_override);
        if (tr->parsed()) return cmd_train(config_path, data_dir, out_dir, resume_path);
        if (ev->parsed()) return cmd_eval(config_path, ckpt_path, data_dir);
        if (inf->parsed())
            return cmd_infer(config_path, ckpt_path, src_path, tgt_path, out_flow, out_ply);
        if (ver->parsed()) return cmd_verify(trials, seed, violate);
        if (gc->parsed()) return cmd_gradcheck(preset, seed, seeds_per_op);
        if (ab->parsed()) return cmd_ablate(config_path, data_dir, heldout_dir, sequential);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
