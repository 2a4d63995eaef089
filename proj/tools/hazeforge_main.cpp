#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hazeforge/gradsuite.hpp"
#include "hazeforge/hztr.hpp"
#include "hazeforge/metrics.hpp"
#include "hazeforge/niqe.hpp"
#include "hazeforge/parallel.hpp"
#include "hazeforge/png_io.hpp"
#include "hazeforge/synthgen.hpp"
#include "hazeforge/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hazeforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

uint64_t env_seed_or(uint64_t fallback) {
    if (const char* env = std::getenv("HAZEFORGE_SEED")) {
        try {
            return std::stoull(env);
        } catch (...) {
            throw ConfigError("HAZEFORGE_SEED is not a valid integer: " + std::string(env));
        }
    }
    return fallback;
}

// --config file contents; flags given on the command line take precedence.
json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config file parse error: ") + e.what());
    }
    return j;
}

template <typename T>
void cfg_override(const json& cfg, const char* key, T& value) {
    if (cfg.contains(key)) value = cfg.at(key).get<T>();
}

void write_run_config(const std::string& dir, const json& j) {
    fs::create_directories(dir);
    std::ofstream f(dir + "/run_config.json");
    if (!f) throw IoError("cannot write run_config.json in " + dir);
    f << j.dump(2) << "\n";
}

Image load_image_any(const std::string& path) {
    if (path.ends_with(".png")) return png::read_png(path);
    if (path.ends_with(".hztr")) {
        std::vector<uint32_t> dims;
        auto data = hztr::read(path, dims);
        if (dims.size() != 3 || dims[2] != 3) throw FormatError("expected HxWx3 raster: " + path);
        Image img(static_cast<int>(dims[0]), static_cast<int>(dims[1]));
        img.data = std::move(data);
        for (auto& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
        return img;
    }
    throw ConfigError("unsupported image extension (want .png or .hztr): " + path);
}

void save_image_both(const std::string& stem, const Image& img) {
    png::write_png(stem + ".png", img);
    hztr::write(stem + ".hztr", {static_cast<uint32_t>(img.height), static_cast<uint32_t>(img.width), 3u},
                img.data.data());
}

// ----------------------------------------------------------------------------

struct SynthArgs {
    std::string out;
    uint64_t seed = 7;
    int count = 512;
    int test_count = 64;
    int size = 64;
    synth::ParamRanges ranges;
};

int cmd_synth(const SynthArgs& a) {
    if (a.count < 1) throw ConfigError("synth: --count must be >= 1");
    if (a.test_count < 0) throw ConfigError("synth: --test-count must be >= 0");
    synth::GenConfig gc;
    gc.master_seed = a.seed;
    gc.height = gc.width = a.size;
    gc.train_count = a.count;
    gc.test_count = a.test_count;
    gc.ranges = a.ranges;
    synth::Dataset ds = synth::generate_dataset(gc);
    synth::write_dataset(ds, a.out);
    write_run_config(a.out, json{{"command", "synth"},
                                 {"seed", a.seed},
                                 {"train_count", a.count},
                                 {"test_count", a.test_count},
                                 {"size", a.size},
                                 {"beta_clean", {a.ranges.beta_clean_min, a.ranges.beta_clean_max}},
                                 {"beta_haze", {a.ranges.beta_haze_min, a.ranges.beta_haze_max}},
                                 {"atmosphere", {a.ranges.atmosphere_min, a.ranges.atmosphere_max}},
                                 {"depth", {a.ranges.z_min, a.ranges.z_max}}});
    std::cout << "wrote " << ds.samples.size() << " samples (" << a.count << " train, " << a.test_count
              << " test) to " << a.out << "\n";
    std::cout << "beta_c in [" << a.ranges.beta_clean_min << ", " << a.ranges.beta_clean_max << "], beta_h in ["
              << a.ranges.beta_haze_min << ", " << a.ranges.beta_haze_max << "], A in ["
              << a.ranges.atmosphere_min << ", " << a.ranges.atmosphere_max << "], z in [" << a.ranges.z_min
              << ", " << a.ranges.z_max << "]\n";
    return kExitOk;
}

committee::TrainConfig make_train_config(const synth::Dataset& ds, uint64_t seed, const std::string& mode,
                                         int phase1, int phase2, int batch, float lr, int avg_last_k,
                                         float teacher_noise, int base_channels, bool literal_sc, bool kl_reverse) {
    committee::TrainConfig cfg;
    cfg.phase1_epochs = phase1;
    cfg.phase2_epochs = phase2;
    cfg.batch_size = batch;
    cfg.learning_rate = lr;
    cfg.average_last_k = avg_last_k;
    cfg.mode = committee::ablation_mode_from_string(mode);
    cfg.seed = seed;
    cfg.teacher_noise_sigma = teacher_noise;
    cfg.options.literal_sc = literal_sc;
    cfg.options.kl_reverse = kl_reverse;
    cfg.net.base_channels = base_channels;
    cfg.net.seed = seed;
    cfg.net.input_height = ds.manifest.height;
    cfg.net.input_width = ds.manifest.width;
    cfg.net.z_min = ds.manifest.ranges.z_min;
    cfg.net.z_max = ds.manifest.ranges.z_max;
    return cfg;
}

// ----------------------------------------------------------------------------

int cmd_dehaze(const std::string& checkpoint, const std::vector<std::string>& inputs, const std::string& out,
               bool sidecar, bool resize) {
    ad::Checkpoint ck = ad::load_checkpoint(checkpoint);
    if (!ck.extra.contains("network_config"))
        throw FormatError("checkpoint has no embedded network_config: " + checkpoint);
    model::NetworkConfig net = model::network_config_from_json(ck.extra.at("network_config"));

    ad::GraphF g;
    model::DehazeModel<float> m(g, net);
    ad::apply_checkpoint(g, ck);
    const ad::Shape in_shape{1, 3, net.input_height, net.input_width};
    ad::TensorId input = g.leaf(in_shape, std::vector<float>(in_shape.count(), 0.0f));
    model::StageOutputs stage = m.forward(input);  // the one inference pass

    fs::create_directories(out);
    write_run_config(out, json{{"command", "dehaze"},
                               {"checkpoint", checkpoint},
                               {"inputs", inputs},
                               {"sidecar", sidecar},
                               {"resize", resize}});

    const size_t hw = static_cast<size_t>(net.input_height) * net.input_width;
    for (const auto& path : inputs) {
        Image img = load_image_any(path);
        const int orig_h = img.height, orig_w = img.width;
        if (img.height != net.input_height || img.width != net.input_width) {
            if (!resize)
                throw ConfigError("input dims " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                                  " do not match the model and --no-resize was given: " + path);
            img = synth::resize_bilinear(img, net.input_height, net.input_width);
        }
        std::vector<float> chw(in_shape.count());
        for (int c = 0; c < 3; ++c)
            for (size_t p = 0; p < hw; ++p) chw[c * hw + p] = img.data[p * 3 + c];
        g.set_leaf(input, std::span<const float>(chw));
        g.recompute();

        const auto& clean = g.val(stage.clean);
        Image result(net.input_height, net.input_width);
        for (int c = 0; c < 3; ++c)
            for (size_t p = 0; p < hw; ++p) result.data[p * 3 + c] = clean[c * hw + p];
        if (result.height != orig_h || result.width != orig_w)
            result = synth::resize_bilinear(result, orig_h, orig_w);

        const std::string stem = out + "/" + fs::path(path).stem().string() + "_dehazed";
        save_image_both(stem, result);
        if (sidecar) {
            const auto& zv = g.val(stage.depth);
            hztr::write(stem + "_z.hztr",
                        {static_cast<uint32_t>(net.input_height), static_cast<uint32_t>(net.input_width)},
                        zv.data());
            const auto& av = g.val(stage.atmosphere);
            json side{{"beta", g.val(stage.beta)[0]}, {"atmosphere", {av[0], av[1], av[2]}}};
            std::ofstream sf(stem + ".json");
            sf << side.dump(2) << "\n";
        }
        std::cout << path << " -> " << stem << ".png\n";
    }
    return kExitOk;
}

// ----------------------------------------------------------------------------

std::map<std::string, std::string> stem_index(const std::string& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext != ".png" && ext != ".hztr") continue;
        // prefer the lossless raster when both exist for a stem
        const std::string stem = entry.path().stem().string();
        auto it = out.find(stem);
        if (it == out.end() || ext == ".hztr") out[stem] = entry.path().string();
    }
    return out;
}

int cmd_eval(const std::string& test_dir, const std::string& ref_dir, const std::string& out,
             const std::string& niqe_model_path, const std::string& niqe_corpus_dir) {
    auto test_files = stem_index(test_dir);
    auto ref_files = stem_index(ref_dir);
    if (test_files.empty()) throw IoError("eval: no .png/.hztr images in " + test_dir);

    std::optional<eval::NiqeModel> niqe;
    if (!niqe_model_path.empty()) {
        niqe = eval::load_niqe_model(niqe_model_path);
    } else if (!niqe_corpus_dir.empty()) {
        std::vector<Image> corpus;
        for (const auto& [stem, path] : stem_index(niqe_corpus_dir)) corpus.push_back(load_image_any(path));
        niqe = eval::niqe_fit(corpus);
    }

    json per_image = json::array();
    double sum_psnr = 0, sum_ssim = 0, sum_de = 0, sum_niqe = 0;
    int count = 0;
    for (const auto& [stem, tpath] : test_files) {
        auto rit = ref_files.find(stem);
        if (rit == ref_files.end() && stem.ends_with("_dehazed"))
            rit = ref_files.find(stem.substr(0, stem.size() - 8));
        if (rit == ref_files.end()) continue;
        Image t = load_image_any(tpath);
        Image r = load_image_any(rit->second);
        const double p = eval::psnr(t, r);
        const double s = eval::ssim(t, r);
        const double de = eval::ciede2000(t, r);
        json rec{{"name", stem}, {"psnr", p}, {"ssim", s}, {"ciede2000", de}};
        if (niqe) {
            const double n = eval::niqe_score(*niqe, t);
            rec["niqe"] = n;
            sum_niqe += n;
        }
        per_image.push_back(rec);
        sum_psnr += p;
        sum_ssim += s;
        sum_de += de;
        ++count;
    }
    if (count == 0) throw ConfigError("eval: no filename-matched pairs between " + test_dir + " and " + ref_dir);

    json report{{"command", "eval"},
                {"test_dir", test_dir},
                {"ref_dir", ref_dir},
                {"count", count},
                {"mean", {{"psnr", sum_psnr / count}, {"ssim", sum_ssim / count}, {"ciede2000", sum_de / count}}},
                {"per_image", per_image}};
    if (niqe) report["mean"]["niqe"] = sum_niqe / count;

    fs::create_directories(out);
    {
        std::ofstream rf(out + "/report.json");
        if (!rf) throw IoError("eval: cannot write report.json in " + out);
        rf << report.dump(2) << "\n";
    }
    write_run_config(out, json{{"command", "eval"}, {"test_dir", test_dir}, {"ref_dir", ref_dir}});

    char line[160];
    std::snprintf(line, sizeof(line), "%-20s %10s %8s %8s %8s", "image", "PSNR^", "SSIM^", "CIEDEv", "NIQEv");
    std::string table = std::string(line) + "\n";
    for (const auto& rec : per_image) {
        std::snprintf(line, sizeof(line), "%-20s %10.3f %8.4f %8.3f %8s", rec.at("name").get<std::string>().c_str(),
                      rec.at("psnr").get<double>(), rec.at("ssim").get<double>(), rec.at("ciede2000").get<double>(),
                      rec.contains("niqe") ? std::to_string(rec.at("niqe").get<double>()).substr(0, 6).c_str() : "-");
        table += std::string(line) + "\n";
    }
    std::snprintf(line, sizeof(line), "%-20s %10.3f %8.4f %8.3f", "mean", sum_psnr / count, sum_ssim / count,
                  sum_de / count);
    table += std::string(line);
    if (niqe) {
        std::snprintf(line, sizeof(line), " %8.3f", sum_niqe / count);
        table += line;
    }
    table += "\n";
    std::cout << table;
    std::ofstream tf(out + "/table.txt");
    tf << table;
    return kExitOk;
}

int cmd_gradcheck() {
    gradsuite::SuiteReport ops = gradsuite::op_checks(20);
    std::cout << "op suite: " << ops.checked << " entries checked, " << ops.skipped_kinks
              << " skipped at kinks, max rel. error " << ops.max_rel_error << "\n";
    gradsuite::SuiteReport full = gradsuite::committee_graph_check(1, 24);
    std::cout << "two-stage committee graph: " << full.checked << " entries checked, " << full.skipped_kinks
              << " skipped at kinks, max rel. error " << full.max_rel_error << "\n";
    const bool ok = ops.max_rel_error <= 1e-4 && full.max_rel_error <= 1e-4;
    std::cout << (ok ? "gradcheck PASS" : "gradcheck FAIL") << " (threshold 1e-4)\n";
    return ok ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hazeforge: a self-contained non-ideal dehazing laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    int threads = 1;
    app.add_option("--config", config_path, "JSON config file; command-line flags override it");
    app.add_option("--threads", threads, "worker threads for synthesis/conv/eval kernels");

    // synth --------------------------------------------------------------
    SynthArgs sa;
    auto* synth_cmd = app.add_subcommand("synth", "generate a paired non-ideal dataset");
    synth_cmd->add_option("--out", sa.out, "output dataset directory")->required();
    auto* synth_seed = synth_cmd->add_option("--seed", sa.seed, "master seed (HAZEFORGE_SEED fallback)");
    synth_cmd->add_option("--count", sa.count, "train sample count");
    synth_cmd->add_option("--test-count", sa.test_count, "test sample count");
    synth_cmd->add_option("--size", sa.size, "square image size");
    synth_cmd->add_option("--beta-clean-min", sa.ranges.beta_clean_min);
    synth_cmd->add_option("--beta-clean-max", sa.ranges.beta_clean_max);
    synth_cmd->add_option("--beta-haze-min", sa.ranges.beta_haze_min);
    synth_cmd->add_option("--beta-haze-max", sa.ranges.beta_haze_max);
    synth_cmd->add_option("--atmo-min", sa.ranges.atmosphere_min);
    synth_cmd->add_option("--atmo-max", sa.ranges.atmosphere_max);
    synth_cmd->add_option("--zmin", sa.ranges.z_min);
    synth_cmd->add_option("--zmax", sa.ranges.z_max);

    // train / ablate shared options ---------------------------------------
    std::string data_dir, out_dir, mode = "m4", modes_list = "m1,m2,m3,m4";
    uint64_t seed = 1;
    int phase1 = 30, phase2 = 70, batch = 8, avg_last_k = 5, base_channels = 16, seed_count = 3;
    float lr = 1e-3f, teacher_noise = 0.05f;
    bool literal_sc = false, kl_reverse = false, drop_epoch_ckpts = false;

    auto add_train_opts = [&](CLI::App* cmd) {
        cmd->add_option("--data", data_dir, "dataset directory from `synth`")->required();
        cmd->add_option("--out", out_dir, "output directory")->required();
        cmd->add_option("--phase1-epochs", phase1);
        cmd->add_option("--phase2-epochs", phase2);
        cmd->add_option("--batch", batch);
        cmd->add_option("--lr", lr);
        cmd->add_option("--avg-last-k", avg_last_k, "epochs averaged into the final weights");
        cmd->add_option("--teacher-noise", teacher_noise, "depth-teacher noise sigma (fraction of range)");
        cmd->add_option("--base-channels", base_channels);
        cmd->add_flag("--literal-sc", literal_sc, "printed-form synthesis-consistency loss");
        cmd->add_flag("--kl-reverse", kl_reverse, "reverse KL direction");
        cmd->add_flag("--drop-epoch-checkpoints", drop_epoch_ckpts, "delete non-averaged epoch checkpoints");
        return cmd->add_option("--seed", seed, "training seed (HAZEFORGE_SEED fallback)");
    };

    auto* train_cmd = app.add_subcommand("train", "two-phase committee training");
    auto* train_seed = add_train_opts(train_cmd);
    train_cmd->add_option("--mode", mode, "ablation mode m1..m4");

    auto* ablate_cmd = app.add_subcommand("ablate", "train and score multiple ablation modes");
    auto* ablate_seed = add_train_opts(ablate_cmd);
    ablate_cmd->add_option("--modes", modes_list, "comma-separated mode list");
    ablate_cmd->add_option("--seeds", seed_count, "number of seeds (base seed, base+1, ...)");

    // dehaze ---------------------------------------------------------------
    std::string checkpoint;
    std::vector<std::string> inputs;
    std::string dehaze_out;
    bool sidecar = false, no_resize = false;
    auto* dehaze_cmd = app.add_subcommand("dehaze", "run one inference pass per image");
    dehaze_cmd->add_option("--checkpoint", checkpoint, "checkpoint prefix (no extension)")->required();
    dehaze_cmd->add_option("--input", inputs, "input images (.png or .hztr)")->required()->expected(-1);
    dehaze_cmd->add_option("--out", dehaze_out, "output directory")->required();
    dehaze_cmd->add_flag("--sidecar", sidecar, "also write beta/z/A estimates");
    dehaze_cmd->add_flag("--no-resize", no_resize, "refuse inputs whose dims differ from the model");

    // eval -----------------------------------------------------------------
    std::string eval_test, eval_ref, eval_out = "eval_out", niqe_model_path, niqe_corpus;
    auto* eval_cmd = app.add_subcommand("eval", "full-reference + NIQE report over paired directories");
    eval_cmd->add_option("--test", eval_test, "directory of images under test")->required();
    eval_cmd->add_option("--ref", eval_ref, "directory of reference images")->required();
    eval_cmd->add_option("--out", eval_out, "report output directory");
    eval_cmd->add_option("--niqe-model", niqe_model_path, "precomputed NIQE model json");
    eval_cmd->add_option("--niqe-corpus", niqe_corpus, "pristine image directory to fit NIQE on");

    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference autodiff verification");

    try {
        app.parse(argc, argv);

        const json cfg = load_config_file(config_path);
        set_threads(threads);

        if (*synth_cmd) {
            if (synth_seed->count() == 0) sa.seed = env_seed_or(cfg.value("seed", sa.seed));
            cfg_override(cfg, "count", sa.count);
            cfg_override(cfg, "test_count", sa.test_count);
            cfg_override(cfg, "size", sa.size);
            return cmd_synth(sa);
        }
        if (*train_cmd || *ablate_cmd) {
            cfg_override(cfg, "phase1_epochs", phase1);
            cfg_override(cfg, "phase2_epochs", phase2);
            cfg_override(cfg, "batch_size", batch);
            cfg_override(cfg, "learning_rate", lr);
            cfg_override(cfg, "average_last_k", avg_last_k);
            cfg_override(cfg, "teacher_noise_sigma", teacher_noise);
            cfg_override(cfg, "base_channels", base_channels);
            cfg_override(cfg, "mode", mode);
            if (*train_cmd && train_seed->count() == 0) seed = env_seed_or(cfg.value("seed", seed));
            if (*ablate_cmd && ablate_seed->count() == 0) seed = env_seed_or(cfg.value("seed", seed));

            synth::Dataset ds = synth::read_dataset(data_dir);
            committee::TrainConfig tc = make_train_config(ds, seed, mode, phase1, phase2, batch, lr, avg_last_k,
                                                          teacher_noise, base_channels, literal_sc, kl_reverse);
            tc.keep_epoch_checkpoints = !drop_epoch_ckpts;

            if (*train_cmd) {
                committee::TrainResult res = committee::train(tc, ds, out_dir, &std::cout);
                const auto ck = ad::load_checkpoint(res.final_checkpoint_prefix);
                const auto scores = committee::evaluate_on_split(tc.net, ck, ds, "test");
                std::cout << "final checkpoint: " << res.final_checkpoint_prefix << ".{json,bin}\n";
                std::cout << "test split: psnr " << scores.psnr_mean << " dB, ssim " << scores.ssim_mean << "\n";
                return kExitOk;
            }

            std::vector<committee::AblationMode> modes;
            std::string token;
            std::stringstream ss(modes_list);
            while (std::getline(ss, token, ','))
                if (!token.empty()) modes.push_back(committee::ablation_mode_from_string(token));
            std::vector<uint64_t> seeds;
            for (int i = 0; i < seed_count; ++i) seeds.push_back(seed + static_cast<uint64_t>(i));
            write_run_config(out_dir, json{{"command", "ablate"},
                                           {"modes", modes_list},
                                           {"seeds", seeds},
                                           {"train", committee::to_json(tc)}});
            committee::AblationResult res = committee::run_ablation(tc, modes, seeds, ds, out_dir, &std::cout);
            std::ifstream tf(out_dir + "/ablation_table.txt");
            std::cout << tf.rdbuf();
            return kExitOk;
        }
        if (*dehaze_cmd) return cmd_dehaze(checkpoint, inputs, dehaze_out, sidecar, !no_resize);
        if (*eval_cmd) return cmd_eval(eval_test, eval_ref, eval_out, niqe_model_path, niqe_corpus);
        if (*gradcheck_cmd) return cmd_gradcheck();
        return kExitConfig;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const InvalidInputError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ShapeError& e) {
        std::cerr << "shape error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitIo;
    } catch (const IntegrityError& e) {
        std::cerr << "integrity error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
}
