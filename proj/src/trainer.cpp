#include "wsaflow/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

namespace wsaflow {

void adam_step(ParamMap<float>& params, AdamState& state, const AdamConfig& cfg) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
    for (auto& [name, t] : params) {
        if (!t.has_grad()) continue;
        auto& value = t.raw_value();
        const auto& grad = t.grad();
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.size() != value.size()) m.assign(value.size(), 0.f);
        if (v.size() != value.size()) v.assign(value.size(), 0.f);
        for (size_t i = 0; i < value.size(); ++i) {
            if (cfg.weight_decay != 0)
                value[i] -= float(cfg.lr * cfg.weight_decay) * value[i];
            const double g = grad[i];
            m[i] = float(cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g);
            v[i] = float(cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g);
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            value[i] -= float(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

double lr_at(int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw ConfigError("lr_at: epoch must be nonnegative");
    return cfg.lr * std::pow(cfg.lr_decay, double(epoch / cfg.lr_decay_period));
}

std::string log_header() {
    return "epoch\tlr\tL_S\tL_P\tL_DD\tL_total\tEPE3D";
}

std::string format_log_line(const EpochLog& e) {
    char buf[256];
    if (e.has_coord) {
        std::snprintf(buf, sizeof buf, "%d\t%.6g\t%.6g\t%.6g\t%.6g\t%.6g\t%.6g", e.epoch, e.lr,
                      e.loss_s, e.loss_p, e.loss_dd, e.loss_total, e.epe3d);
    } else {
        std::snprintf(buf, sizeof buf, "%d\t%.6g\t%.6g\tn/a\t%.6g\t%.6g\t%.6g", e.epoch, e.lr,
                      e.loss_s, e.loss_dd, e.loss_total, e.epe3d);
    }
    return buf;
}

namespace {

void shuffle_indices(std::vector<int>& idx, Rng& rng) {
    for (int i = int(idx.size()) - 1; i > 0; --i) std::swap(idx[size_t(i)], idx[size_t(rng.uniform_int(i + 1))]);
}

void write_log_file(const std::string& out_dir, const std::vector<EpochLog>& log) {
    std::ostringstream ss;
    ss << log_header() << "\n";
    for (const auto& e : log) ss << format_log_line(e) << "\n";
    atomic_write_text((std::filesystem::path(out_dir) / "log.tsv").string(), ss.str());
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::vector<SamplePair>& dataset,
                  const Checkpoint* resume) {
    cfg.validate();
    cfg.loss.validate(cfg.model.levels());
    if (cfg.epochs > 0 && dataset.empty()) throw ConfigError("train: empty dataset");

    TrainResult out;
    out.model = cfg.model;
    WsaFlowNet net = resume ? WsaFlowNet(cfg.model, resume->params)
                            : WsaFlowNet(cfg.model, cfg.seed);
    AdamState opt;
    uint32_t start_epoch = 0;
    if (resume) {
        if (!resume->has_opt)
            throw ConfigError("train: checkpoint has no optimizer state to resume from");
        opt = resume->opt;
        start_epoch = resume->next_epoch;
    }

    if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);

    const int n = int(dataset.size());
    for (int epoch = int(start_epoch); epoch < cfg.epochs; ++epoch) {
        AdamConfig ac{lr_at(epoch, cfg), cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay};
        std::vector<int> order(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) order[size_t(i)] = i;
        Rng shuffle_rng(cfg.seed * 0x9e3779b97f4a7c15ull + uint64_t(epoch));
        shuffle_indices(order, shuffle_rng);

        EpochLog log;
        log.epoch = epoch;
        log.lr = ac.lr;
        log.has_coord = cfg.model.use_wsa;
        int coord_count = 0;

        for (int batch_start = 0; batch_start < n; batch_start += cfg.batch_size) {
            const int batch_end = std::min(n, batch_start + cfg.batch_size);
            const int batch_n = batch_end - batch_start;
            zero_param_grads(net.params());
            for (int bi = batch_start; bi < batch_end; ++bi) {
                const SamplePair& s = dataset[size_t(order[size_t(bi)])];
                auto fwd = net.forward(s.p, s.q);
                auto losses = compute_losses(fwd, s.s_gt, cfg.loss);
                const double total = losses.total.item();
                if (!std::isfinite(total))
                    throw NumericError("train: non-finite loss in batch " +
                                       std::to_string(batch_start / cfg.batch_size) + " of epoch " +
                                       std::to_string(epoch));
                backward(losses.total, /*accumulate=*/true);

                log.loss_s += losses.scene_flow.item();
                log.loss_p += losses.coordinate.item();
                log.loss_dd += losses.deformation.item();
                log.loss_total += total;
                const auto m = compute_metrics(tensor_to_flow(fwd.flow_l0()), s.s_gt);
                log.epe3d += m.epe3d;
                if (fwd.levels[0].coords_up.defined()) {
                    log.coord_res_l0 += losses.coord_residual_l0;
                    ++coord_count;
                }
            }
            if (batch_n > 1) {
                const float inv = 1.f / float(batch_n);
                for (auto& [name, t] : net.params())
                    if (t.has_grad())
                        for (auto& g : t.node()->grad) g *= inv;
            }
            adam_step(net.params(), opt, ac);
        }

        log.loss_s /= n;
        log.loss_p /= n;
        log.loss_dd /= n;
        log.loss_total /= n;
        log.epe3d /= n;
        if (coord_count > 0) log.coord_res_l0 /= coord_count;
        out.log.push_back(log);

        if (!cfg.out_dir.empty() && cfg.checkpoint_interval > 0 &&
            (epoch + 1) % cfg.checkpoint_interval == 0 && epoch + 1 < cfg.epochs) {
            Checkpoint c{uint32_t(epoch + 1), net.params(), true, opt};
            char name[64];
            std::snprintf(name, sizeof name, "ckpt_epoch%04d.wsck", epoch + 1);
            save_checkpoint(c, (std::filesystem::path(cfg.out_dir) / name).string());
        }
    }

    out.params = net.params();
    out.opt = opt;
    out.next_epoch = uint32_t(cfg.epochs);
    if (!cfg.out_dir.empty()) {
        Checkpoint c{uint32_t(cfg.epochs), out.params, true, out.opt};
        save_checkpoint(c, (std::filesystem::path(cfg.out_dir) / "final.wsck").string());
        write_log_file(cfg.out_dir, out.log);
    }
    return out;
}

EvalResult evaluate(const WsaFlowNet& net, const std::vector<SamplePair>& samples,
                    const std::vector<std::string>* names) {
    EvalResult out;
    for (size_t i = 0; i < samples.size(); ++i) {
        auto fwd = net.forward(samples[i].p, samples[i].q);
        EvalRow row;
        row.name = names && i < names->size() ? (*names)[i] : "sample_" + std::to_string(i);
        row.metrics = compute_metrics(tensor_to_flow(fwd.flow_l0()), samples[i].s_gt);
        out.mean.epe3d += row.metrics.epe3d;
        out.mean.acc3d_strict += row.metrics.acc3d_strict;
        out.mean.acc3d_relax += row.metrics.acc3d_relax;
        out.mean.outliers3d += row.metrics.outliers3d;
        out.rows.push_back(std::move(row));
    }
    if (!out.rows.empty()) {
        const double inv = 1.0 / double(out.rows.size());
        out.mean.epe3d *= inv;
        out.mean.acc3d_strict *= inv;
        out.mean.acc3d_relax *= inv;
        out.mean.outliers3d *= inv;
    }
    return out;
}

std::vector<std::string> list_wsaf_files(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".wsaf")
            files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<SamplePair> load_dataset(const std::string& dir) {
    std::vector<SamplePair> out;
    for (const auto& f : list_wsaf_files(dir)) out.push_back(read_sample(f));
    return out;
}

std::vector<AblationVariant> ablation_variants() {
    return {{"MN", false, false},
            {"MN+DD", true, false},
            {"MN+WSA", false, true},
            {"MN+DD+WSA", true, true}};
}

std::vector<AblationRow> run_ablation(const TrainConfig& base,
                                      const std::vector<SamplePair>& train_set,
                                      const std::vector<SamplePair>& heldout, bool parallel) {
    const auto variants = ablation_variants();
    auto run_variant = [&](const AblationVariant& v) {
        TrainConfig cfg = base;
        cfg.out_dir.clear();
        cfg.model.use_dd = v.use_dd;
        cfg.model.use_wsa = v.use_wsa;
        if (!v.use_dd) cfg.loss.alpha_dd = 0;
        if (!v.use_wsa) cfg.loss.alpha_p = 0;
        auto result = train(cfg, train_set);
        WsaFlowNet net(result.model, std::move(result.params));
        return AblationRow{v.name, evaluate(net, heldout).mean};
    };

    std::vector<AblationRow> rows(variants.size());
    if (parallel) {
        std::vector<std::future<AblationRow>> futs;
        for (const auto& v : variants)
            futs.push_back(std::async(std::launch::async, run_variant, v));
        for (size_t i = 0; i < futs.size(); ++i) rows[i] = futs[i].get();
    } else {
        for (size_t i = 0; i < variants.size(); ++i) rows[i] = run_variant(variants[i]);
    }
    return rows;
}

}  // namespace wsaflow
