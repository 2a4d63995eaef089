#include "hazeforge/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "hazeforge/ad/optimizer.hpp"
#include "hazeforge/metrics.hpp"
#include "hazeforge/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hazeforge::committee {

void validate(const TrainConfig& cfg) {
    if (cfg.phase1_epochs < 0 || cfg.phase2_epochs < 0) throw ConfigError("train config: phase counts must be >= 0");
    if (cfg.total_epochs() < 1) throw ConfigError("train config: need at least one epoch");
    if (cfg.batch_size < 1) throw ConfigError("train config: batch size must be >= 1");
    if (cfg.average_last_k < 1 || cfg.average_last_k > cfg.total_epochs())
        throw ConfigError("train config: average_last_k must be in [1, total epochs]");
    if (!(cfg.learning_rate > 0.0f)) throw ConfigError("train config: learning rate must be > 0");
    if (cfg.teacher_noise_sigma < 0.0f) throw ConfigError("train config: teacher noise sigma must be >= 0");
    if (cfg.weights.sc < 0 || cfg.weights.cc < 0 || cfg.weights.dc < 0 || cfg.weights.is < 0)
        throw ConfigError("train config: loss weights must be nonnegative");
    model::validate(cfg.net);
}

json to_json(const TrainConfig& cfg) {
    return json{{"phase1_epochs", cfg.phase1_epochs},
                {"phase2_epochs", cfg.phase2_epochs},
                {"batch_size", cfg.batch_size},
                {"learning_rate", cfg.learning_rate},
                {"average_last_k", cfg.average_last_k},
                {"mode", to_string(cfg.mode)},
                {"seed", cfg.seed},
                {"teacher_noise_sigma", cfg.teacher_noise_sigma},
                {"weights", {{"sc", cfg.weights.sc}, {"cc", cfg.weights.cc}, {"dc", cfg.weights.dc}, {"is", cfg.weights.is}}},
                {"options", {{"literal_sc", cfg.options.literal_sc}, {"kl_reverse", cfg.options.kl_reverse}}},
                {"network", model::to_json(cfg.net)},
                {"keep_epoch_checkpoints", cfg.keep_epoch_checkpoints}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.phase1_epochs = j.at("phase1_epochs").get<int>();
    cfg.phase2_epochs = j.at("phase2_epochs").get<int>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.learning_rate = j.at("learning_rate").get<float>();
    cfg.average_last_k = j.at("average_last_k").get<int>();
    cfg.mode = ablation_mode_from_string(j.at("mode").get<std::string>());
    cfg.seed = j.at("seed").get<uint64_t>();
    cfg.teacher_noise_sigma = j.at("teacher_noise_sigma").get<float>();
    const auto& w = j.at("weights");
    cfg.weights = {w.at("sc").get<float>(), w.at("cc").get<float>(), w.at("dc").get<float>(), w.at("is").get<float>()};
    const auto& o = j.at("options");
    cfg.options.literal_sc = o.at("literal_sc").get<bool>();
    cfg.options.kl_reverse = o.at("kl_reverse").get<bool>();
    cfg.net = model::network_config_from_json(j.at("network"));
    cfg.keep_epoch_checkpoints = j.value("keep_epoch_checkpoints", true);
    return cfg;
}

json to_json(const LossReport& r) {
    return json{{"epoch", r.epoch}, {"phase", r.phase},   {"batch", r.batch}, {"l_sc", r.l_sc},
                {"l_cc", r.l_cc},   {"l_dc", r.l_dc},     {"l_is", r.l_is},   {"total", r.total}};
}

LossReport loss_report_from_json(const json& j) {
    LossReport r;
    r.epoch = j.at("epoch").get<int>();
    r.phase = j.at("phase").get<int>();
    r.batch = j.at("batch").get<int>();
    r.l_sc = j.at("l_sc").get<double>();
    r.l_cc = j.at("l_cc").get<double>();
    r.l_dc = j.at("l_dc").get<double>();
    r.l_is = j.at("l_is").get<double>();
    r.total = j.at("total").get<double>();
    return r;
}

std::vector<LossReport> read_history(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("history: cannot open " + path);
    std::vector<LossReport> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        out.push_back(loss_report_from_json(json::parse(line)));
    }
    return out;
}

namespace {

std::string epoch_prefix(const std::string& dir, int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "epoch_%03d", epoch);
    return dir + "/" + buf;
}

// HWC float image -> one CHW block of a batch buffer.
void copy_chw(const Image& img, float* dst) {
    const size_t hw = img.pixel_count();
    for (int c = 0; c < 3; ++c)
        for (size_t i = 0; i < hw; ++i) dst[c * hw + i] = img.data[i * 3 + c];
}

struct BatchGraph {
    ad::GraphF graph;
    std::optional<model::DehazeModel<float>> net;
    std::optional<model::FeatureExtractor<float>> extractor;
    ad::TensorId hazy = -1;
    ad::TensorId teacher = -1;
    LossTerms terms;
    ad::TensorId total = -1;
    ActiveSet active;
};

// Appends the transient portion (inputs, stages, losses) for one phase.
void build_phase(BatchGraph& bg, const TrainConfig& cfg, int batch, int phase) {
    auto& g = bg.graph;
    const ad::Shape img_shape{batch, 3, cfg.net.input_height, cfg.net.input_width};
    const ad::Shape depth_shape{batch, 1, cfg.net.input_height, cfg.net.input_width};
    bg.hazy = g.leaf(img_shape, std::vector<float>(img_shape.count(), 0.0f));
    bg.teacher = g.leaf(depth_shape, std::vector<float>(depth_shape.count(), 1.0f));
    bg.active = active_losses(cfg.mode, phase);
    bg.terms = LossTerms{};

    const bool need_stage2 = bg.active.cc || bg.active.dc || bg.active.is || cfg.options.literal_sc;
    model::StageOutputs s1, s2;
    if (need_stage2) {
        auto [a, b] = bg.net->two_stage(bg.hazy);
        s1 = a;
        s2 = b;
    } else {
        s1 = bg.net->forward(bg.hazy);
    }

    if (bg.active.sc)
        bg.terms.sc = cfg.options.literal_sc ? loss_sc_literal(g, s1, s2, bg.hazy) : loss_sc(g, s1, bg.hazy);
    if (bg.active.cc) bg.terms.cc = loss_cc(g, s1, s2, bg.hazy);
    if (bg.active.dc) bg.terms.dc = loss_dc(g, s1, s2, bg.teacher);
    if (bg.active.is) bg.terms.is = loss_is(g, *bg.extractor, s2.clean, s1.clean, cfg.options.kl_reverse);
    bg.total = total_loss(g, bg.terms, cfg.weights, bg.active);
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const synth::Dataset& ds, const std::string& out_dir,
                  std::ostream* progress) {
    validate(cfg);
    std::vector<size_t> train_idx;
    for (size_t i = 0; i < ds.manifest.entries.size(); ++i)
        if (ds.manifest.entries[i].split == "train") train_idx.push_back(i);
    if (train_idx.empty()) throw ConfigError("train: dataset has no train split samples");
    if (static_cast<int>(train_idx.size()) < cfg.batch_size)
        throw ConfigError("train: fewer train samples than one batch");
    for (size_t i : train_idx) {
        const auto& s = ds.samples[i];
        if (s.synthetic_hazy.height != cfg.net.input_height || s.synthetic_hazy.width != cfg.net.input_width)
            throw ShapeError("train: dataset image dims do not match the network config");
    }

    fs::create_directories(out_dir);
    std::ofstream history_file(out_dir + "/history.jsonl");
    if (!history_file) throw IoError("train: cannot write history in " + out_dir);
    {
        std::ofstream cf(out_dir + "/run_config.json");
        cf << to_json(cfg).dump(2) << "\n";
    }

    // Teacher depths are fixed per sample across all epochs; the noise draw
    // depends only on (config seed, sample seed) so every mode sees the same
    // teacher.
    const float z_range = cfg.net.z_max - cfg.net.z_min;
    std::vector<std::vector<float>> teachers(ds.samples.size());
    for (size_t i : train_idx) {
        const auto& z = ds.samples[i].depth;
        auto& t = teachers[i];
        t.assign(z.data.begin(), z.data.end());
        if (cfg.teacher_noise_sigma > 0.0f) {
            Rng noise(cfg.seed ^ (ds.samples[i].seed * 0x9e3779b97f4a7c15ull));
            for (auto& v : t) {
                v += cfg.teacher_noise_sigma * z_range * static_cast<float>(noise.gauss());
                v = std::clamp(v, cfg.net.z_min, cfg.net.z_max);
            }
        }
    }

    BatchGraph bg;
    bg.net.emplace(bg.graph, cfg.net);
    bg.extractor.emplace(bg.graph, cfg.net.frozen_seed);

    ad::Adam<float> adam({.lr = cfg.learning_rate});

    const int batches = static_cast<int>(train_idx.size()) / cfg.batch_size;
    const size_t img_elems = static_cast<size_t>(3) * cfg.net.input_height * cfg.net.input_width;
    const size_t depth_elems = static_cast<size_t>(cfg.net.input_height) * cfg.net.input_width;
    std::vector<float> hazy_buf(static_cast<size_t>(cfg.batch_size) * img_elems);
    std::vector<float> teacher_buf(static_cast<size_t>(cfg.batch_size) * depth_elems);

    TrainResult result;
    result.out_dir = out_dir;
    int current_phase = 0;

    for (int epoch = 1; epoch <= cfg.total_epochs(); ++epoch) {
        const int phase = epoch <= cfg.phase1_epochs ? 1 : 2;
        if (phase != current_phase) {
            bg.graph.reset_tape();
            build_phase(bg, cfg, cfg.batch_size, phase);
            current_phase = phase;
        }

        std::vector<size_t> order = train_idx;
        Rng shuffle_rng(cfg.seed * 1000003ull + static_cast<uint64_t>(epoch));
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double ep_sc = 0, ep_cc = 0, ep_dc = 0, ep_is = 0, ep_total = 0;
        for (int b = 0; b < batches; ++b) {
            for (int k = 0; k < cfg.batch_size; ++k) {
                const size_t si = order[static_cast<size_t>(b) * cfg.batch_size + k];
                copy_chw(ds.samples[si].synthetic_hazy, hazy_buf.data() + k * img_elems);
                std::copy(teachers[si].begin(), teachers[si].end(), teacher_buf.data() + k * depth_elems);
            }
            bg.graph.set_leaf(bg.hazy, std::span<const float>(hazy_buf));
            bg.graph.set_leaf(bg.teacher, std::span<const float>(teacher_buf));

            try {
                bg.graph.recompute();
                bg.graph.zero_grads();
                bg.graph.backward(bg.total);
                adam.step(bg.graph);
            } catch (const NumericError& e) {
                throw NumericError("train aborted at epoch " + std::to_string(epoch) + " batch " +
                                   std::to_string(b) + ": " + e.what());
            }

            LossReport r;
            r.epoch = epoch;
            r.phase = phase;
            r.batch = b;
            r.l_sc = bg.active.sc ? bg.graph.scalar_value(bg.terms.sc) : 0.0;
            r.l_cc = bg.active.cc ? bg.graph.scalar_value(bg.terms.cc) : 0.0;
            r.l_dc = bg.active.dc ? bg.graph.scalar_value(bg.terms.dc) : 0.0;
            r.l_is = bg.active.is ? bg.graph.scalar_value(bg.terms.is) : 0.0;
            r.total = bg.graph.scalar_value(bg.total);
            history_file << to_json(r).dump() << "\n";
            result.history.push_back(r);
            ep_sc += r.l_sc;
            ep_cc += r.l_cc;
            ep_dc += r.l_dc;
            ep_is += r.l_is;
            ep_total += r.total;
        }

        save_checkpoint(bg.graph, epoch_prefix(out_dir, epoch), epoch,
                        json{{"network_config", model::to_json(cfg.net)}, {"epoch", epoch}});

        if (progress) {
            const double inv = 1.0 / batches;
            char line[256];
            std::snprintf(line, sizeof(line),
                          "epoch %3d/%d phase %d mode %s | sc %.5f cc %.5f dc %.5f is %.5f total %.5f", epoch,
                          cfg.total_epochs(), phase, to_string(cfg.mode).c_str(), ep_sc * inv, ep_cc * inv,
                          ep_dc * inv, ep_is * inv, ep_total * inv);
            (*progress) << line << std::endl;
        }
    }

    // Final parameters: float64 elementwise mean of the last average_last_k
    // per-epoch checkpoints.
    std::vector<ad::Checkpoint> lastk;
    for (int e = cfg.total_epochs() - cfg.average_last_k + 1; e <= cfg.total_epochs(); ++e)
        lastk.push_back(ad::load_checkpoint(epoch_prefix(out_dir, e)));
    ad::Checkpoint averaged = ad::average_checkpoints(lastk);
    averaged.extra = json{{"network_config", model::to_json(cfg.net)},
                          {"averaged_epochs", cfg.average_last_k},
                          {"total_epochs", cfg.total_epochs()}};
    save_checkpoint(averaged, out_dir + "/checkpoint");
    result.final_checkpoint_prefix = out_dir + "/checkpoint";

    if (!cfg.keep_epoch_checkpoints) {
        for (int e = 1; e <= cfg.total_epochs() - cfg.average_last_k; ++e) {
            fs::remove(epoch_prefix(out_dir, e) + ".json");
            fs::remove(epoch_prefix(out_dir, e) + ".bin");
        }
    }
    return result;
}

EvalScores evaluate_on_split(const model::NetworkConfig& net, const ad::Checkpoint& ck, const synth::Dataset& ds,
                             const std::string& split) {
    ad::GraphF g;
    model::DehazeModel<float> m(g, net);
    ad::apply_checkpoint(g, ck);
    const ad::Shape in_shape{1, 3, net.input_height, net.input_width};
    ad::TensorId input = g.leaf(in_shape, std::vector<float>(in_shape.count(), 0.0f));
    model::StageOutputs out = m.forward(input);

    EvalScores scores;
    const size_t hw = static_cast<size_t>(net.input_height) * net.input_width;
    std::vector<float> buf(in_shape.count());
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        if (ds.manifest.entries[i].split != split) continue;
        const auto& s = ds.samples[i];
        copy_chw(s.synthetic_hazy, buf.data());
        g.set_leaf(input, std::span<const float>(buf));
        g.recompute();
        const auto& clean = g.val(out.clean);
        Image est(net.input_height, net.input_width);
        for (int c = 0; c < 3; ++c)
            for (size_t p = 0; p < hw; ++p) est.data[p * 3 + c] = clean[c * hw + p];
        scores.psnr.push_back(eval::psnr(est, s.ideal_clean));
        scores.ssim.push_back(eval::ssim(est, s.ideal_clean));
    }
    if (scores.psnr.empty()) throw ConfigError("evaluate: no samples in split '" + split + "'");
    for (double v : scores.psnr) scores.psnr_mean += v;
    for (double v : scores.ssim) scores.ssim_mean += v;
    scores.psnr_mean /= static_cast<double>(scores.psnr.size());
    scores.ssim_mean /= static_cast<double>(scores.ssim.size());
    return scores;
}

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

AblationResult run_ablation(const TrainConfig& base, const std::vector<AblationMode>& modes,
                            const std::vector<uint64_t>& seeds, const synth::Dataset& ds,
                            const std::string& out_dir, std::ostream* progress) {
    if (modes.empty() || seeds.empty()) throw ConfigError("ablation: need at least one mode and one seed");
    fs::create_directories(out_dir);

    AblationResult result;
    for (AblationMode mode : modes) {
        std::vector<double> psnrs, ssims;
        for (uint64_t seed : seeds) {
            TrainConfig cfg = base;
            cfg.mode = mode;
            cfg.seed = seed;
            cfg.net.seed = seed;
            const std::string run_dir = out_dir + "/" + to_string(mode) + "_seed" + std::to_string(seed);
            if (progress) (*progress) << "=== ablation run " << to_string(mode) << " seed " << seed << std::endl;
            TrainResult tr = train(cfg, ds, run_dir, progress);
            const auto ck = ad::load_checkpoint(tr.final_checkpoint_prefix);
            const EvalScores scores = evaluate_on_split(cfg.net, ck, ds, "test");
            AblationRun run{mode, seed, scores.psnr_mean, scores.ssim_mean, run_dir};
            result.runs.push_back(run);
            psnrs.push_back(run.psnr);
            ssims.push_back(run.ssim);
            if (progress)
                (*progress) << to_string(mode) << " seed " << seed << ": psnr " << run.psnr << " ssim " << run.ssim
                            << std::endl;
        }
        result.median_psnr[to_string(mode)] = median(psnrs);
        result.median_ssim[to_string(mode)] = median(ssims);
    }

    {
        std::ofstream jf(out_dir + "/ablation.json");
        if (!jf) throw IoError("ablation: cannot write ablation.json");
        jf << to_json(result).dump(2) << "\n";
    }
    {
        std::ofstream tf(out_dir + "/ablation_table.txt");
        char line[160];
        std::snprintf(line, sizeof(line), "%-6s %12s %12s %8s", "mode", "PSNR(med)", "SSIM(med)", "runs");
        tf << line << "\n";
        for (AblationMode mode : modes) {
            const auto key = to_string(mode);
            int count = 0;
            for (const auto& r : result.runs)
                if (r.mode == mode) ++count;
            std::snprintf(line, sizeof(line), "%-6s %12.3f %12.4f %8d", key.c_str(), result.median_psnr.at(key),
                          result.median_ssim.at(key), count);
            tf << line << "\n";
        }
    }
    return result;
}

json to_json(const AblationResult& r) {
    json runs = json::array();
    for (const auto& run : r.runs)
        runs.push_back(json{{"mode", to_string(run.mode)},
                            {"seed", run.seed},
                            {"psnr", run.psnr},
                            {"ssim", run.ssim},
                            {"run_dir", run.run_dir}});
    return json{{"runs", runs}, {"median_psnr", r.median_psnr}, {"median_ssim", r.median_ssim}};
}

}  // namespace hazeforge::committee
