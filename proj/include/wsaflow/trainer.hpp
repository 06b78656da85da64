#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wsaflow/checkpoint.hpp"
#include "wsaflow/datagen.hpp"
#include "wsaflow/flownet.hpp"

namespace wsaflow {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

// One optimizer step over every parameter with a populated gradient.
// Decoupled weight decay runs first: theta -= lr * wd * theta.
void adam_step(ParamMap<float>& params, AdamState& state, const AdamConfig& cfg);

struct TrainConfig {
    int epochs = 200;
    int batch_size = 2;
    double lr = 1e-3;
    double lr_decay = 0.7;
    int lr_decay_period = 20;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double weight_decay = 1e-4;
    double adam_eps = 1e-8;
    LossWeights loss;
    ModelConfig model;
    uint64_t seed = 1;
    int checkpoint_interval = 0;  // epochs between checkpoints; 0 = final only
    std::string out_dir;          // when set: checkpoints + log.tsv land here

    void validate() const {
        if (epochs < 0) throw ConfigError("train: epochs must be nonnegative");
        if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
        if (lr <= 0) throw ConfigError("train: lr must be positive");
        if (lr_decay <= 0 || lr_decay > 1) throw ConfigError("train: decay must lie in (0,1]");
        if (lr_decay_period < 1) throw ConfigError("train: decay period must be positive");
        if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
            throw ConfigError("train: betas must lie in (0,1)");
        if (weight_decay < 0) throw ConfigError("train: weight decay must be nonnegative");
    }
};

// Step-decay schedule: lr * decay^floor(epoch / period).
double lr_at(int epoch, const TrainConfig& cfg);

struct EpochLog {
    int epoch = 0;
    double lr = 0;
    double loss_s = 0;
    double loss_p = 0;
    double loss_dd = 0;
    double loss_total = 0;
    double epe3d = 0;           // train EPE at the finest level
    double coord_res_l0 = 0;    // mean ||p_hat - p|| at the finest level
    bool has_coord = false;     // false when weight sharing is off
};

std::string format_log_line(const EpochLog& e);
std::string log_header();

struct TrainResult {
    ModelConfig model;
    ParamMap<float> params;
    AdamState opt;
    std::vector<EpochLog> log;
    uint32_t next_epoch = 0;
};

// Seeded shuffles, gradients averaged over each batch, per-epoch log rows.
// Resuming from a checkpoint replays the remaining epochs bit-exactly.
TrainResult train(const TrainConfig& cfg, const std::vector<SamplePair>& dataset,
                  const Checkpoint* resume = nullptr);

struct EvalRow {
    std::string name;
    FlowMetrics metrics;
};

struct EvalResult {
    FlowMetrics mean;  // arithmetic mean of the per-sample metrics
    std::vector<EvalRow> rows;
};

EvalResult evaluate(const WsaFlowNet& net, const std::vector<SamplePair>& samples,
                    const std::vector<std::string>* names = nullptr);

// Dataset files, sorted by name for determinism.
std::vector<std::string> list_wsaf_files(const std::string& dir);
std::vector<SamplePair> load_dataset(const std::string& dir);

// Table 2-style module sweep: same data, seeds, and budget per variant.
struct AblationVariant {
    std::string name;
    bool use_dd = false;
    bool use_wsa = false;
};

struct AblationRow {
    std::string name;
    FlowMetrics metrics;
};

std::vector<AblationVariant> ablation_variants();

std::vector<AblationRow> run_ablation(const TrainConfig& base,
                                      const std::vector<SamplePair>& train_set,
                                      const std::vector<SamplePair>& heldout,
                                      bool parallel = true);

}  // namespace wsaflow
