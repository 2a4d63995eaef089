// Acceptance suite: one pass/fail line per criterion.
//
// Criteria 5-7 train the full ablation grid (modes m1..m4 x 3 seeds, 100
// epochs each at the default 64x64 / 512-sample scale), which takes hours on
// one CPU. Set HAZEFORGE_ACCEPT_DIR to a persistent directory to reuse the
// trained runs across invocations; the config fingerprint is checked before
// anything is reused.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <vector>

#include "hazeforge/asm_model.hpp"
#include "hazeforge/gradsuite.hpp"
#include "hazeforge/losses.hpp"
#include "hazeforge/metrics.hpp"
#include "hazeforge/niqe.hpp"
#include "hazeforge/synthgen.hpp"
#include "hazeforge/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hazeforge;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": " << detail << std::endl;
    if (!pass) ++g_failures;
}

// --- criterion 1 -------------------------------------------------------------

void criterion_composition_identity() {
    Rng rng(20240501);
    float max32 = 0.0f;
    double max64 = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int h = 32, w = 32;
        Image j(h, w);
        for (auto& v : j.data) v = rng.uniform_f(0, 1);
        DepthMap z(h, w);
        for (auto& v : z.data) v = rng.uniform_f(0.5f, 3.0f);
        HazeParams cp{rng.uniform_f(0.02f, 0.15f), {rng.uniform_f(0.7f, 1.0f), rng.uniform_f(0.7f, 1.0f),
                                                    rng.uniform_f(0.7f, 1.0f)}};
        HazeParams sp{rng.uniform_f(0.4f, 1.6f), {rng.uniform_f(0.7f, 1.0f), rng.uniform_f(0.7f, 1.0f),
                                                  rng.uniform_f(0.7f, 1.0f)}};

        Image direct = atmo::apply_double_asm(j, z, cp, sp);
        Image nested = atmo::apply_asm(atmo::apply_asm(j, z, cp), z, sp);
        for (size_t i = 0; i < direct.data.size(); ++i)
            max32 = std::max(max32, std::abs(direct.data[i] - nested.data[i]));

        const size_t pixels = j.pixel_count();
        std::vector<double> jd(j.data.begin(), j.data.end()), zd(z.data.begin(), z.data.end());
        std::vector<double> d64(pixels * 3), step(pixels * 3), n64(pixels * 3);
        const double ac[3] = {cp.atmosphere[0], cp.atmosphere[1], cp.atmosphere[2]};
        const double ah[3] = {sp.atmosphere[0], sp.atmosphere[1], sp.atmosphere[2]};
        atmo::ref::apply_double_asm<double>(jd.data(), zd.data(), pixels, cp.beta, ac, sp.beta, ah, d64.data());
        atmo::ref::apply_asm<double>(jd.data(), zd.data(), pixels, cp.beta, ac, step.data());
        atmo::ref::apply_asm<double>(step.data(), zd.data(), pixels, sp.beta, ah, n64.data());
        for (size_t i = 0; i < d64.size(); ++i) max64 = std::max(max64, std::abs(d64[i] - n64[i]));
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "composition identity over 100 draws: max |direct-nested| = %.3g (float32, tol 1e-6), %.3g "
                  "(float64, tol 1e-12)",
                  static_cast<double>(max32), max64);
    report(1, max32 <= 1e-6f && max64 <= 1e-12, buf);
}

// --- criterion 2 -------------------------------------------------------------

ad::TensorId image_const(ad::GraphF& g, const Image& img) {
    const size_t hw = img.pixel_count();
    std::vector<float> chw(hw * 3);
    for (int c = 0; c < 3; ++c)
        for (size_t i = 0; i < hw; ++i) chw[c * hw + i] = img.data[i * 3 + c];
    return g.leaf(ad::Shape{1, 3, img.height, img.width}, std::move(chw));
}

model::StageOutputs gt_stage(ad::GraphF& g, const Image& clean, const DepthMap& z, const HazeParams& p) {
    model::StageOutputs s;
    s.clean = image_const(g, clean);
    s.depth = g.leaf(ad::Shape{1, 1, z.height, z.width}, std::vector<float>(z.data.begin(), z.data.end()));
    s.beta = g.leaf(ad::scalar_shape(), {p.beta});
    s.atmosphere = g.leaf(ad::Shape{1, 3, 1, 1}, {p.atmosphere[0], p.atmosphere[1], p.atmosphere[2]});
    return s;
}

void criterion_oracle_zero() {
    synth::GenConfig gc;
    gc.master_seed = 91;
    gc.height = gc.width = 64;
    gc.train_count = 64;
    gc.test_count = 0;
    synth::Dataset ds = synth::generate_dataset(gc);

    float worst_sc = 0.0f, worst_cc = 0.0f, worst_dc = 0.0f;
    for (const auto& s : ds.samples) {
        ad::GraphF g;
        model::StageOutputs s1 = gt_stage(g, s.nonideal_clean, s.depth, s.synth_params);
        model::StageOutputs s2 = gt_stage(g, s.ideal_clean, s.depth, s.clean_params);
        ad::TensorId hazy = image_const(g, s.synthetic_hazy);
        ad::TensorId teacher =
            g.leaf(ad::Shape{1, 1, s.depth.height, s.depth.width}, std::vector<float>(s.depth.data.begin(), s.depth.data.end()));
        worst_sc = std::max(worst_sc, g.scalar_value(committee::loss_sc(g, s1, hazy)));
        worst_cc = std::max(worst_cc, g.scalar_value(committee::loss_cc(g, s1, s2, hazy)));
        worst_dc = std::max(worst_dc, g.scalar_value(committee::loss_dc(g, s1, s2, teacher)));
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "oracle-zero over 64 samples: max L_sc %.3g (tol 1e-6), max L_cc %.3g (tol 1e-6), max L_dc %.3g "
                  "(exact 0)",
                  static_cast<double>(worst_sc), static_cast<double>(worst_cc), static_cast<double>(worst_dc));
    report(2, worst_sc <= 1e-6f && worst_cc <= 1e-6f && worst_dc == 0.0f, buf);
}

// --- criterion 3 -------------------------------------------------------------

void criterion_gradients() {
    gradsuite::SuiteReport ops = gradsuite::op_checks(20);
    gradsuite::SuiteReport full = gradsuite::committee_graph_check(1, 24);
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "gradient suite: per-op max rel err %.3g over %d entries, committee-graph max rel err %.3g over "
                  "%d entries (tol 1e-4)",
                  ops.max_rel_error, ops.checked, full.max_rel_error, full.checked);
    report(3, ops.max_rel_error <= 1e-4 && full.max_rel_error <= 1e-4 && ops.checked > 0 && full.checked > 0, buf);
}

// --- criterion 4 -------------------------------------------------------------

void criterion_ciede_goldens() {
    struct Case {
        double L1, a1, b1, L2, a2, b2, expected;
    };
    static const Case cases[] = {
        {50.0000, 2.6772, -79.7751, 50.0000, 0.0000, -82.7485, 2.0425},
        {50.0000, 3.1571, -77.2803, 50.0000, 0.0000, -82.7485, 2.8615},
        {50.0000, 2.8361, -74.0200, 50.0000, 0.0000, -82.7485, 3.4412},
        {50.0000, -1.3802, -84.2814, 50.0000, 0.0000, -82.7485, 1.0000},
        {50.0000, -1.1848, -84.8006, 50.0000, 0.0000, -82.7485, 1.0000},
        {50.0000, -0.9009, -85.5211, 50.0000, 0.0000, -82.7485, 1.0000},
        {50.0000, 0.0000, 0.0000, 50.0000, -1.0000, 2.0000, 2.3669},
        {50.0000, -1.0000, 2.0000, 50.0000, 0.0000, 0.0000, 2.3669},
        {50.0000, 2.4900, -0.0010, 50.0000, -2.4900, 0.0009, 7.1792},
        {50.0000, 2.4900, -0.0010, 50.0000, -2.4900, 0.0010, 7.1792},
        {50.0000, 2.4900, -0.0010, 50.0000, -2.4900, 0.0011, 7.2195},
        {50.0000, 2.4900, -0.0010, 50.0000, -2.4900, 0.0012, 7.2195},
        {50.0000, -0.0010, 2.4900, 50.0000, 0.0009, -2.4900, 4.8045},
        {50.0000, -0.0010, 2.4900, 50.0000, 0.0010, -2.4900, 4.8045},
        {50.0000, -0.0010, 2.4900, 50.0000, 0.0011, -2.4900, 4.7461},
        {50.0000, 2.5000, 0.0000, 50.0000, 0.0000, -2.5000, 4.3065},
        {50.0000, 2.5000, 0.0000, 73.0000, 25.0000, -18.0000, 27.1492},
        {50.0000, 2.5000, 0.0000, 61.0000, -5.0000, 29.0000, 22.8977},
        {50.0000, 2.5000, 0.0000, 56.0000, -27.0000, -3.0000, 31.9030},
        {50.0000, 2.5000, 0.0000, 58.0000, 24.0000, 15.0000, 19.4535},
        {50.0000, 2.5000, 0.0000, 50.0000, 3.1736, 0.5854, 1.0000},
        {50.0000, 2.5000, 0.0000, 50.0000, 3.2972, 0.0000, 1.0000},
        {50.0000, 2.5000, 0.0000, 50.0000, 1.8634, 0.5757, 1.0000},
        {50.0000, 2.5000, 0.0000, 50.0000, 3.2592, 0.3350, 1.0000},
        {60.2574, -34.0099, 36.2677, 60.4626, -34.1751, 39.4387, 1.2644},
        {63.0109, -31.0961, -5.8663, 62.8187, -29.7946, -4.0864, 1.2630},
        {61.2901, 3.7196, -5.3901, 61.4292, 2.2480, -4.9620, 1.8731},
        {35.0831, -44.1164, 3.7933, 35.0232, -40.0716, 1.5901, 1.8645},
        {22.7233, 20.0904, -46.6940, 23.0331, 14.9730, -42.5619, 2.0373},
        {36.4612, 47.8580, 18.3852, 36.2715, 50.5065, 21.2231, 1.4146},
        {90.8027, -2.0831, 1.4410, 91.1528, -1.6435, 0.0447, 1.4441},
        {90.9257, -0.5406, -0.9208, 88.6381, -0.8985, -0.7239, 1.5381},
        {6.7747, -0.2908, -2.4247, 5.8714, -0.0985, -2.2286, 0.6377},
        {2.0776, 0.0795, -1.1350, 0.9033, -0.0636, -0.5514, 0.9082},
    };
    double max_err = 0.0;
    for (const auto& c : cases) {
        const double got = eval::ciede2000_lab(eval::Lab{c.L1, c.a1, c.b1}, eval::Lab{c.L2, c.a2, c.b2});
        max_err = std::max(max_err, std::abs(got - c.expected));
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "CIEDE2000 reference pairs (34, incl. hue-rotation cases): max |err| = %.3g (tol 1e-4)",
                  max_err);
    report(4, max_err <= 1e-4, buf);
}

// --- criteria 5-8: the ablation grid -----------------------------------------

struct AblationArtifacts {
    committee::AblationResult result;
    std::string work_dir;
    committee::TrainConfig base;
};

json accept_fingerprint(const committee::TrainConfig& base) {
    return json{{"train", committee::to_json(base)}, {"modes", "m1,m2,m3,m4"}, {"seeds", {1, 2, 3}},
                {"dataset_seed", 7},  {"train_count", 512},   {"test_count", 64}};
}

AblationArtifacts run_or_load_ablation() {
    AblationArtifacts art;
    const char* env = std::getenv("HAZEFORGE_ACCEPT_DIR");
    art.work_dir = env ? env : (fs::temp_directory_path() / "hazeforge_acceptance").string();
    fs::create_directories(art.work_dir);

    art.base.phase1_epochs = 30;
    art.base.phase2_epochs = 70;
    art.base.batch_size = 8;
    art.base.average_last_k = 5;
    art.base.net.base_channels = 16;
    art.base.net.input_height = art.base.net.input_width = 64;

    const json fp = accept_fingerprint(art.base);
    const std::string fp_path = art.work_dir + "/accept_config.json";
    const std::string result_path = art.work_dir + "/ablation/ablation.json";
    if (fs::exists(fp_path) && fs::exists(result_path)) {
        std::ifstream f(fp_path);
        json old;
        f >> old;
        if (old == fp) {
            std::ifstream rf(result_path);
            json j;
            rf >> j;
            for (const auto& run : j.at("runs")) {
                committee::AblationRun r;
                r.mode = committee::ablation_mode_from_string(run.at("mode").get<std::string>());
                r.seed = run.at("seed").get<uint64_t>();
                r.psnr = run.at("psnr").get<double>();
                r.ssim = run.at("ssim").get<double>();
                r.run_dir = run.at("run_dir").get<std::string>();
                art.result.runs.push_back(r);
            }
            art.result.median_psnr = j.at("median_psnr").get<std::map<std::string, double>>();
            art.result.median_ssim = j.at("median_ssim").get<std::map<std::string, double>>();
            std::cout << "(reusing trained ablation runs from " << art.work_dir << ")" << std::endl;
            return art;
        }
    }

    std::cout << "training the ablation grid (4 modes x 3 seeds x 100 epochs); this takes a while..." << std::endl;
    const std::string data_dir = art.work_dir + "/dataset";
    synth::Dataset ds;
    if (fs::exists(data_dir + "/manifest.json")) {
        ds = synth::read_dataset(data_dir);
    } else {
        synth::GenConfig gc;  // defaults: 512/64 split at 64x64, master seed 7
        ds = synth::generate_dataset(gc);
        synth::write_dataset(ds, data_dir);
    }

    art.result = committee::run_ablation(art.base, {committee::AblationMode::M1, committee::AblationMode::M2,
                                                    committee::AblationMode::M3, committee::AblationMode::M4},
                                         {1, 2, 3}, ds, art.work_dir + "/ablation", &std::cout);
    std::ofstream f(fp_path);
    f << fp.dump(2) << "\n";
    return art;
}

void criterion_method_effect(const AblationArtifacts& art) {
    const double m1 = art.result.median_psnr.at("m1");
    const double m4 = art.result.median_psnr.at("m4");
    const double s1 = art.result.median_ssim.at("m1");
    const double s4 = art.result.median_ssim.at("m4");
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "method effect: median PSNR m4 %.3f vs m1 %.3f (gap %.3f dB, need >= 0.5), median SSIM m4 %.4f "
                  "vs m1 %.4f (need >=)",
                  m4, m1, m4 - m1, s4, s1);
    report(5, m4 - m1 >= 0.5 && s4 >= s1, buf);
}

void criterion_ablation_ordering(const AblationArtifacts& art) {
    const double m3 = art.result.median_psnr.at("m3");
    const double m4 = art.result.median_psnr.at("m4");
    const double m1 = art.result.median_psnr.at("m1");
    const double m2 = art.result.median_psnr.at("m2");
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "ablation ordering: median PSNR m4 %.3f >= m3 %.3f; m2 %.3f vs m1 %.3f reported (m2 unstable, "
                  "not asserted)",
                  m4, m3, m2, m1);
    report(6, m4 >= m3, buf);
}

void criterion_schedule_and_averaging(const AblationArtifacts& art) {
    // inspect the m4 seed-1 run
    std::string run_dir;
    for (const auto& r : art.result.runs)
        if (r.mode == committee::AblationMode::M4 && r.seed == 1) run_dir = r.run_dir;
    if (run_dir.empty()) {
        report(7, false, "schedule/averaging: m4 seed-1 run not found");
        return;
    }
    const auto history = committee::read_history(run_dir + "/history.jsonl");
    int first_cc = 0, first_dc = 0, first_is = 0;
    for (const auto& r : history) {
        if (first_cc == 0 && r.l_cc != 0.0) first_cc = r.epoch;
        if (first_dc == 0 && r.l_dc != 0.0) first_dc = r.epoch;
        if (first_is == 0 && r.l_is != 0.0) first_is = r.epoch;
    }
    const bool schedule_ok = first_cc == 31 && first_dc == 31 && first_is == 31;

    // final checkpoint must equal the float64 elementwise mean of the last 5
    std::vector<ad::Checkpoint> lastk;
    for (int e = 96; e <= 100; ++e) {
        char name[32];
        std::snprintf(name, sizeof(name), "/epoch_%03d", e);
        lastk.push_back(ad::load_checkpoint(run_dir + name));
    }
    ad::Checkpoint expect = ad::average_checkpoints(lastk);
    ad::Checkpoint final_ck = ad::load_checkpoint(run_dir + "/checkpoint");
    bool avg_ok = expect.params.size() == final_ck.params.size();
    for (size_t p = 0; avg_ok && p < expect.params.size(); ++p)
        avg_ok = expect.params[p].second == final_ck.params[p].second;

    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "schedule/averaging: committee terms first contribute at epoch %d/%d/%d (need 31); final == "
                  "float64 mean of last 5 checkpoints: %s",
                  first_cc, first_dc, first_is, avg_ok ? "exact" : "MISMATCH");
    report(7, schedule_ok && avg_ok, buf);
}

// Example-level regression (not a gating criterion): dehazing a sample that
// carries no synthetic haze must not degrade it by more than 0.5 dB.
void info_no_haze_regression(const AblationArtifacts& art) {
    std::string run_dir;
    for (const auto& r : art.result.runs)
        if (r.mode == committee::AblationMode::M4 && r.seed == 1) run_dir = r.run_dir;
    const ad::Checkpoint ck = ad::load_checkpoint(run_dir + "/checkpoint");
    const model::NetworkConfig net = model::network_config_from_json(ck.extra.at("network_config"));

    double worst_delta = 1e9;
    for (uint64_t seed = 300; seed < 308; ++seed) {
        synth::SceneSpec spec;
        spec.seed = seed;
        spec.height = net.input_height;
        spec.width = net.input_width;
        Image j = synth::gen_clean(spec);
        DepthMap z = synth::gen_depth(spec, net.z_min, net.z_max);
        HazeParams cp, sp;
        synth::sample_params(seed, synth::ParamRanges{}, cp, sp);
        sp.beta = 0.0f;  // no synthetic haze: I_h == I_c
        synth::PairedSample s = synth::make_pair(j, z, cp, sp);

        ad::GraphF g;
        model::DehazeModel<float> m(g, net);
        ad::apply_checkpoint(g, ck);
        const ad::Shape in_shape{1, 3, net.input_height, net.input_width};
        const size_t hw = static_cast<size_t>(net.input_height) * net.input_width;
        std::vector<float> chw(in_shape.count());
        for (int c = 0; c < 3; ++c)
            for (size_t p = 0; p < hw; ++p) chw[c * hw + p] = s.synthetic_hazy.data[p * 3 + c];
        ad::TensorId input = g.leaf(in_shape, std::move(chw));
        model::StageOutputs out = m.forward(input);
        const auto& clean = g.val(out.clean);
        Image est(net.input_height, net.input_width);
        for (int c = 0; c < 3; ++c)
            for (size_t p = 0; p < hw; ++p) est.data[p * 3 + c] = clean[c * hw + p];
        const double in_psnr = eval::psnr(s.synthetic_hazy, j);
        const double out_psnr = eval::psnr(est, j);
        worst_delta = std::min(worst_delta, out_psnr - in_psnr);
    }
    std::cout << "[info] no-haze regression (m4 seed 1): worst PSNR delta over 8 clean-input samples = "
              << worst_delta << " dB (example tolerance -0.5)" << std::endl;
}

void criterion_total_bookkeeping(const AblationArtifacts& art) {
    // arithmetic with unit losses and paper weights
    ad::GraphF g;
    committee::LossTerms terms;
    terms.sc = g.leaf(ad::scalar_shape(), {1.0f});
    terms.cc = g.leaf(ad::scalar_shape(), {1.0f});
    terms.dc = g.leaf(ad::scalar_shape(), {1.0f});
    terms.is = g.leaf(ad::scalar_shape(), {1.0f});
    const float total_unit = g.scalar_value(
        committee::total_loss(g, terms, committee::LossWeights{}, committee::ActiveSet{true, true, true, true}));
    const bool unit_ok = std::abs(total_unit - 0.95f) <= 1e-6f;

    // every logged batch of the m4 seed-1 run satisfies total = sum(alpha*L)
    std::string run_dir;
    for (const auto& r : art.result.runs)
        if (r.mode == committee::AblationMode::M4 && r.seed == 1) run_dir = r.run_dir;
    const auto history = committee::read_history(run_dir + "/history.jsonl");
    const committee::LossWeights w;
    double max_dev = 0.0;
    for (const auto& r : history) {
        const double expect = r.phase == 1 ? w.sc * r.l_sc
                                           : w.sc * r.l_sc + w.cc * r.l_cc + w.dc * r.l_dc + w.is * r.l_is;
        max_dev = std::max(max_dev, std::abs(r.total - expect));
    }
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "total-loss bookkeeping: unit-loss total = %.7f (expect 0.95); max |total - sum(alpha*L)| over "
                  "%zu batches = %.3g (tol 1e-6)",
                  static_cast<double>(total_unit), history.size(), max_dev);
    report(8, unit_ok && max_dev <= 1e-6 && !history.empty(), buf);
}

// --- criterion 9 -------------------------------------------------------------

void criterion_metric_sanity() {
    Rng rng(31337);
    Image a(32, 32), b(32, 32);
    for (auto& v : a.data) v = rng.uniform_f(0, 1);
    for (auto& v : b.data) v = rng.uniform_f(0, 1);
    Image zero(16, 16, 0.0f), half(16, 16, 0.0f), one(16, 16, 0.0f);
    for (auto& v : half.data) v = 0.5f;
    for (auto& v : one.data) v = 1.0f;

    const bool identity_ok = eval::psnr(a, a) == 100.0 && std::abs(eval::ssim(a, a) - 1.0) < 1e-12 &&
                             eval::ciede2000(a, a) < 1e-12;
    const bool symmetry_ok = eval::psnr(a, b) == eval::psnr(b, a) &&
                             std::abs(eval::ssim(a, b) - eval::ssim(b, a)) < 1e-12 &&
                             std::abs(eval::ciede2000(a, b) - eval::ciede2000(b, a)) < 1e-9;
    const bool halfgray_ok = std::abs(eval::psnr(zero, half) - 6.020599913) < 1e-6;

    // NIQE: clean vs beta_h = 1.6 haze over 64 test pairs
    std::vector<Image> corpus;
    std::vector<Image> test_clean;
    std::vector<DepthMap> test_depth;
    for (int i = 0; i < 64; ++i) {
        synth::SceneSpec spec;
        spec.seed = 40000 + static_cast<uint64_t>(i);
        spec.height = spec.width = 64;
        spec.content_kind =
            i % 3 == 0 ? synth::ContentKind::Gradients : (i % 3 == 1 ? synth::ContentKind::Shapes : synth::ContentKind::Textured);
        corpus.push_back(synth::gen_clean(spec));
    }
    for (int i = 0; i < 64; ++i) {
        synth::SceneSpec spec;
        spec.seed = 50000 + static_cast<uint64_t>(i);
        spec.height = spec.width = 64;
        spec.content_kind =
            i % 3 == 0 ? synth::ContentKind::Shapes : (i % 3 == 1 ? synth::ContentKind::Textured : synth::ContentKind::Gradients);
        test_clean.push_back(synth::gen_clean(spec));
        test_depth.push_back(synth::gen_depth(spec, 0.5f, 3.0f));
    }
    eval::NiqeModel model = eval::niqe_fit(corpus);
    int hazy_worse = 0;
    for (int i = 0; i < 64; ++i) {
        Image hazy = atmo::apply_asm(test_clean[i], test_depth[i], HazeParams{1.6f, {0.95f, 0.95f, 0.95f}});
        if (eval::niqe_score(model, hazy) > eval::niqe_score(model, test_clean[i])) ++hazy_worse;
    }
    const bool niqe_ok = hazy_worse >= 52;  // 80% of 64 = 51.2

    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "metric sanity: identity %s, symmetry %s, half-gray 6.0206 dB %s, NIQE ranks haze worse on "
                  "%d/64 pairs (need >= 52)",
                  identity_ok ? "ok" : "BAD", symmetry_ok ? "ok" : "BAD", halfgray_ok ? "ok" : "BAD", hazy_worse);
    report(9, identity_ok && symmetry_ok && halfgray_ok && niqe_ok, buf);
}

}  // namespace

int main() {
    std::cout << "hazeforge acceptance suite" << std::endl;
    criterion_composition_identity();
    criterion_oracle_zero();
    criterion_gradients();
    criterion_ciede_goldens();

    AblationArtifacts art = run_or_load_ablation();
    criterion_method_effect(art);
    criterion_ablation_ordering(art);
    criterion_schedule_and_averaging(art);
    criterion_total_bookkeeping(art);
    info_no_haze_regression(art);

    criterion_metric_sanity();

    std::cout << (g_failures == 0 ? "ALL CRITERIA PASSED" : std::to_string(g_failures) + " CRITERIA FAILED")
              << std::endl;
    return g_failures == 0 ? 0 : 1;
}
