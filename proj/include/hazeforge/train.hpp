#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hazeforge/ad/checkpoint.hpp"
#include "hazeforge/losses.hpp"
#include "hazeforge/model.hpp"
#include "hazeforge/synthgen.hpp"

namespace hazeforge::committee {

struct TrainConfig {
    int phase1_epochs = 30;
    int phase2_epochs = 70;
    int batch_size = 8;
    float learning_rate = 1e-3f;
    int average_last_k = 5;
    AblationMode mode = AblationMode::M4;
    uint64_t seed = 1;
    // Gaussian noise on the depth teacher as a fraction of the depth range;
    // drawn once per sample, 0 disables.
    float teacher_noise_sigma = 0.05f;
    LossWeights weights;
    CommitteeOptions options;
    model::NetworkConfig net;
    bool keep_epoch_checkpoints = true;

    int total_epochs() const { return phase1_epochs + phase2_epochs; }
};

void validate(const TrainConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct LossReport {
    int epoch = 0;
    int phase = 0;
    int batch = 0;
    double l_sc = 0.0, l_cc = 0.0, l_dc = 0.0, l_is = 0.0;
    double total = 0.0;
};

nlohmann::json to_json(const LossReport& r);
LossReport loss_report_from_json(const nlohmann::json& j);
std::vector<LossReport> read_history(const std::string& path);

struct TrainResult {
    std::vector<LossReport> history;
    std::string final_checkpoint_prefix;  // mean of the last average_last_k epochs
    std::string out_dir;
};

// Runs the two-phase schedule, logs one LossReport per batch to
// history.jsonl, saves per-epoch checkpoints epoch_NNN.{json,bin}, and writes
// the averaged final checkpoint. Throws NumericError naming epoch/batch if
// the loss goes non-finite.
TrainResult train(const TrainConfig& cfg, const synth::Dataset& ds, const std::string& out_dir,
                  std::ostream* progress = nullptr);

struct EvalScores {
    std::vector<double> psnr;  // per test sample, clean estimate vs J
    std::vector<double> ssim;
    double psnr_mean = 0.0;
    double ssim_mean = 0.0;
};

// One forward pass per image (the inference contract): runs the model on I_h
// and scores the clean estimate against the ideal clean J.
EvalScores evaluate_on_split(const model::NetworkConfig& net, const ad::Checkpoint& ck, const synth::Dataset& ds,
                             const std::string& split);

struct AblationRun {
    AblationMode mode;
    uint64_t seed;
    double psnr = 0.0, ssim = 0.0;
    std::string run_dir;
};

struct AblationResult {
    std::vector<AblationRun> runs;
    // medians across seeds, indexed by mode string
    std::map<std::string, double> median_psnr;
    std::map<std::string, double> median_ssim;
};

// Trains every requested mode with the identical seed list and data, scores
// each run on the held-out split, and writes ablation.json plus an aligned
// text table into out_dir.
AblationResult run_ablation(const TrainConfig& base, const std::vector<AblationMode>& modes,
                            const std::vector<uint64_t>& seeds, const synth::Dataset& ds,
                            const std::string& out_dir, std::ostream* progress = nullptr);

nlohmann::json to_json(const AblationResult& r);

}  // namespace hazeforge::committee
