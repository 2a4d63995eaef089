#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hazeforge/asm_model.hpp"
#include "hazeforge/hztr.hpp"
#include "hazeforge/synthgen.hpp"
#include "testutil.hpp"

using namespace hazeforge;
using namespace hazeforge::synth;

TEST_CASE("gen_clean determinism and content") {
    SceneSpec spec;
    spec.seed = 42;
    spec.height = spec.width = 64;

    SUBCASE("same spec twice is bit-identical") {
        for (ContentKind kind : {ContentKind::Gradients, ContentKind::Shapes, ContentKind::Textured}) {
            spec.content_kind = kind;
            Image a = gen_clean(spec);
            Image b = gen_clean(spec);
            CHECK(a.data == b.data);
        }
    }
    SUBCASE("gradients span a wide range") {
        spec.content_kind = ContentKind::Gradients;
        Image img = gen_clean(spec);
        float mn = 1.0f, mx = 0.0f;
        for (float v : img.data) {
            mn = std::min(mn, v);
            mx = std::max(mx, v);
        }
        CHECK(mn < 0.2f);
        CHECK(mx > 0.8f);
    }
    SUBCASE("per-channel standard deviation is non-degenerate") {
        for (ContentKind kind : {ContentKind::Gradients, ContentKind::Shapes, ContentKind::Textured}) {
            spec.content_kind = kind;
            Image img = gen_clean(spec);
            for (int c = 0; c < 3; ++c) {
                double sum = 0, sum2 = 0;
                for (size_t i = 0; i < img.pixel_count(); ++i) {
                    sum += img.data[i * 3 + c];
                    sum2 += img.data[i * 3 + c] * img.data[i * 3 + c];
                }
                const double n = static_cast<double>(img.pixel_count());
                const double sd = std::sqrt(std::max(0.0, sum2 / n - (sum / n) * (sum / n)));
                CHECK(sd >= 0.05 - 1e-6);
            }
        }
    }
    SUBCASE("different seeds differ") {
        spec.content_kind = ContentKind::Shapes;
        Image a = gen_clean(spec);
        spec.seed = 43;
        Image b = gen_clean(spec);
        double mad = 0.0;
        for (size_t i = 0; i < a.data.size(); ++i) mad += std::abs(a.data[i] - b.data[i]);
        mad /= static_cast<double>(a.data.size());
        CHECK(mad > 0.01);
    }
    SUBCASE("bad dims rejected") {
        spec.height = 30;
        CHECK_THROWS_AS(gen_clean(spec), InvalidInputError);
        spec.height = 66;  // not divisible by 4
        CHECK_THROWS_AS(gen_clean(spec), InvalidInputError);
    }
}

TEST_CASE("gen_depth") {
    SceneSpec spec;
    spec.seed = 7;
    spec.height = spec.width = 64;

    SUBCASE("ramp runs left to right") {
        spec.depth_kind = DepthKind::Ramp;
        DepthMap z = gen_depth(spec, 0.5f, 3.0f);
        for (int y = 0; y < z.height; ++y) {
            CHECK(z.at(y, 0) == doctest::Approx(0.5).epsilon(1e-6));
            CHECK(z.at(y, z.width - 1) == doctest::Approx(3.0).epsilon(1e-6));
            for (int x = 1; x < z.width; ++x) CHECK(z.at(y, x) >= z.at(y, x - 1));
        }
    }
    SUBCASE("radial center is the minimum") {
        spec.depth_kind = DepthKind::Radial;
        DepthMap z = gen_depth(spec, 0.5f, 3.0f);
        float mn = z.data[0];
        for (float v : z.data) mn = std::min(mn, v);
        // center of a 64x64 grid falls between pixels; check the 4 middle ones
        const float c = std::min(std::min(z.at(31, 31), z.at(31, 32)), std::min(z.at(32, 31), z.at(32, 32)));
        CHECK(c == doctest::Approx(mn).epsilon(1e-6));
    }
    SUBCASE("normalization spans [z_min, z_max] for every kind") {
        for (DepthKind kind : {DepthKind::Ramp, DepthKind::Radial, DepthKind::SmoothNoise}) {
            spec.depth_kind = kind;
            DepthMap z = gen_depth(spec, 0.7f, 2.5f);
            float mn = z.data[0], mx = z.data[0];
            for (float v : z.data) {
                mn = std::min(mn, v);
                mx = std::max(mx, v);
            }
            CHECK(mn == doctest::Approx(0.7).epsilon(1e-6));
            CHECK(mx == doctest::Approx(2.5).epsilon(1e-6));
        }
    }
    SUBCASE("smoothness: per-pixel step bounded by range/4") {
        for (DepthKind kind : {DepthKind::Ramp, DepthKind::Radial, DepthKind::SmoothNoise}) {
            spec.depth_kind = kind;
            DepthMap z = gen_depth(spec, 0.5f, 3.0f);
            const float bound = (3.0f - 0.5f) / 4.0f;
            for (int y = 0; y < z.height; ++y)
                for (int x = 1; x < z.width; ++x) CHECK(std::abs(z.at(y, x) - z.at(y, x - 1)) <= bound);
            for (int y = 1; y < z.height; ++y)
                for (int x = 0; x < z.width; ++x) CHECK(std::abs(z.at(y, x) - z.at(y - 1, x)) <= bound);
        }
    }
    SUBCASE("invalid range rejected") {
        CHECK_THROWS_AS(gen_depth(spec, 0.0f, 1.0f), InvalidInputError);
        CHECK_THROWS_AS(gen_depth(spec, 2.0f, 1.0f), InvalidInputError);
    }
}

TEST_CASE("sample_params") {
    ParamRanges ranges;

    SUBCASE("deterministic per seed") {
        HazeParams c1, s1, c2, s2;
        sample_params(123, ranges, c1, s1);
        sample_params(123, ranges, c2, s2);
        CHECK(c1.beta == c2.beta);
        CHECK(c1.atmosphere == c2.atmosphere);
        CHECK(s1.beta == s2.beta);
        CHECK(s1.atmosphere == s2.atmosphere);
    }
    SUBCASE("1000 draws stay inside the declared ranges") {
        float bc_min = 1e9f, bc_max = -1e9f, bh_min = 1e9f, bh_max = -1e9f;
        for (uint64_t seed = 0; seed < 1000; ++seed) {
            HazeParams c, s;
            sample_params(seed, ranges, c, s);
            bc_min = std::min(bc_min, c.beta);
            bc_max = std::max(bc_max, c.beta);
            bh_min = std::min(bh_min, s.beta);
            bh_max = std::max(bh_max, s.beta);
            for (float a : c.atmosphere) {
                CHECK(a >= 0.7f);
                CHECK(a <= 1.0f);
            }
        }
        CHECK(bc_min >= 0.02f);
        CHECK(bc_max <= 0.15f);
        CHECK(bh_min >= 0.4f);
        CHECK(bh_max <= 1.6f);
        // draws actually explore the range
        CHECK(bc_max - bc_min > 0.1f);
    }
    SUBCASE("point range collapses to the point") {
        ranges.beta_clean_min = ranges.beta_clean_max = 0.07f;
        HazeParams c, s;
        sample_params(5, ranges, c, s);
        CHECK(c.beta == 0.07f);
    }
    SUBCASE("inverted range rejected") {
        ranges.beta_haze_min = 2.0f;
        ranges.beta_haze_max = 1.0f;
        HazeParams c, s;
        CHECK_THROWS_AS(sample_params(5, ranges, c, s), InvalidInputError);
    }
}

TEST_CASE("make_pair invariants") {
    SceneSpec spec;
    spec.seed = 99;
    spec.height = spec.width = 32;
    Image j = gen_clean(spec);
    DepthMap z = gen_depth(spec, 0.5f, 3.0f);

    SUBCASE("stored images satisfy the construction equations exactly") {
        HazeParams cp{0.1f, {0.8f, 0.85f, 0.9f}};
        HazeParams sp{0.9f, {0.95f, 0.9f, 1.0f}};
        PairedSample s = make_pair(j, z, cp, sp);
        Image ic = atmo::apply_asm(j, z, cp);
        Image ih = atmo::apply_asm(ic, z, sp);
        CHECK(s.nonideal_clean.data == ic.data);
        CHECK(s.synthetic_hazy.data == ih.data);

        // and the double-composition path agrees within float32 tolerance
        Image composed = atmo::apply_double_asm(j, z, cp, sp);
        for (size_t i = 0; i < composed.data.size(); ++i)
            CHECK(composed.data[i] == doctest::Approx(s.synthetic_hazy.data[i]).epsilon(2e-6));
    }
    SUBCASE("beta_c = 0 keeps I_c equal to J bitwise") {
        PairedSample s = make_pair(j, z, HazeParams{0.0f, {0.9f, 0.9f, 0.9f}}, HazeParams{0.8f, {1, 1, 1}});
        CHECK(s.nonideal_clean.data == j.data);
    }
    SUBCASE("beta_h = 0 keeps I_h equal to I_c bitwise") {
        PairedSample s = make_pair(j, z, HazeParams{0.1f, {0.9f, 0.9f, 0.9f}}, HazeParams{0.0f, {1, 1, 1}});
        CHECK(s.synthetic_hazy.data == s.nonideal_clean.data);
    }
    SUBCASE("non-ideality touches nearly every pixel") {
        HazeParams cp{0.05f, {0.9f, 0.9f, 0.9f}};  // beta_c * z_min = 0.025 > 0.01
        PairedSample s = make_pair(j, z, cp, HazeParams{0.8f, {1, 1, 1}});
        size_t differing = 0;
        for (size_t i = 0; i < j.data.size(); ++i)
            if (s.nonideal_clean.data[i] != j.data[i]) ++differing;
        CHECK(static_cast<double>(differing) / static_cast<double>(j.data.size()) > 0.99);
    }
}

TEST_CASE("dataset generation and persistence") {
    GenConfig cfg;
    cfg.master_seed = 7;
    cfg.height = cfg.width = 32;
    cfg.train_count = 6;
    cfg.test_count = 2;

    SUBCASE("generation is a pure function of seed and config") {
        Dataset a = generate_dataset(cfg);
        Dataset b = generate_dataset(cfg);
        REQUIRE(a.samples.size() == 8);
        for (size_t i = 0; i < a.samples.size(); ++i) {
            CHECK(a.samples[i].synthetic_hazy.data == b.samples[i].synthetic_hazy.data);
            CHECK(a.samples[i].depth.data == b.samples[i].depth.data);
        }
    }
    SUBCASE("write/read round trip is bit exact") {
        test::TempDir dir("dataset");
        Dataset ds = generate_dataset(cfg);
        write_dataset(ds, dir.str());
        Dataset back = read_dataset(dir.str());
        REQUIRE(back.samples.size() == ds.samples.size());
        for (size_t i = 0; i < ds.samples.size(); ++i) {
            CHECK(back.samples[i].ideal_clean.data == ds.samples[i].ideal_clean.data);
            CHECK(back.samples[i].nonideal_clean.data == ds.samples[i].nonideal_clean.data);
            CHECK(back.samples[i].synthetic_hazy.data == ds.samples[i].synthetic_hazy.data);
            CHECK(back.samples[i].depth.data == ds.samples[i].depth.data);
            CHECK(back.samples[i].clean_params.beta == ds.samples[i].clean_params.beta);
            CHECK(back.manifest.entries[i].split == ds.manifest.entries[i].split);
        }
        // reloaded samples still satisfy their construction equations
        for (const auto& s : back.samples) {
            Image ic = atmo::apply_asm(s.ideal_clean, s.depth, s.clean_params);
            for (size_t i = 0; i < ic.data.size(); ++i)
                CHECK(std::abs(ic.data[i] - s.nonideal_clean.data[i]) <= 1e-6f);
        }
    }
    SUBCASE("truncated raster is an integrity error naming the file") {
        test::TempDir dir("trunc");
        Dataset ds = generate_dataset(cfg);
        write_dataset(ds, dir.str());
        const std::string victim = dir.str() + "/00003_Ih.hztr";
        std::filesystem::resize_file(victim, 40);
        CHECK_THROWS_WITH_AS(read_dataset(dir.str()), doctest::Contains("00003_Ih.hztr"), IntegrityError);
    }
    SUBCASE("corrupt magic is a format error") {
        test::TempDir dir("magic");
        Dataset ds = generate_dataset(cfg);
        write_dataset(ds, dir.str());
        {
            std::ofstream f(dir.str() + "/00001_J.hztr", std::ios::binary);
            f << "JUNKJUNKJUNK";
        }
        CHECK_THROWS_AS(read_dataset(dir.str()), FormatError);
    }
    SUBCASE("missing file is an integrity error") {
        test::TempDir dir("missing");
        Dataset ds = generate_dataset(cfg);
        write_dataset(ds, dir.str());
        std::filesystem::remove(dir.str() + "/00002_z.hztr");
        CHECK_THROWS_AS(read_dataset(dir.str()), IntegrityError);
    }
    SUBCASE("unknown manifest version refuses to load") {
        test::TempDir dir("version");
        Dataset ds = generate_dataset(cfg);
        write_dataset(ds, dir.str());
        std::ifstream in(dir.str() + "/manifest.json");
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        auto pos = text.find("\"format_version\": 1");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 19, "\"format_version\": 9");
        std::ofstream out(dir.str() + "/manifest.json");
        out << text;
        out.close();
        CHECK_THROWS_AS(read_dataset(dir.str()), FormatError);
    }
}

TEST_CASE("hztr raster format") {
    test::TempDir dir("hztr");
    SUBCASE("round trip") {
        std::vector<float> data = {1.5f, -2.25f, 0.0f, 3.75f, 100.0f, -0.001f};
        hztr::write(dir.str() + "/t.hztr", {2, 3}, data.data());
        std::vector<uint32_t> dims;
        auto back = hztr::read(dir.str() + "/t.hztr", dims);
        CHECK(dims == std::vector<uint32_t>{2, 3});
        CHECK(back == data);
    }
    SUBCASE("bad magic") {
        std::ofstream f(dir.str() + "/bad.hztr", std::ios::binary);
        f << "NOPE00000000";
        f.close();
        std::vector<uint32_t> dims;
        CHECK_THROWS_AS(hztr::read(dir.str() + "/bad.hztr", dims), FormatError);
    }
}

TEST_CASE("resize_bilinear") {
    Rng rng(21);
    Image img = test::random_image(rng, 16, 24);
    SUBCASE("identity when size is unchanged") {
        Image out = resize_bilinear(img, 16, 24);
        CHECK(out.data == img.data);
    }
    SUBCASE("constant image stays constant at any size") {
        Image c(12, 12, 0.0f);
        for (auto& v : c.data) v = 0.41f;
        Image out = resize_bilinear(c, 30, 17);
        for (float v : out.data) CHECK(v == doctest::Approx(0.41f).epsilon(1e-6));
    }
    SUBCASE("values stay within the source range") {
        Image out = resize_bilinear(img, 64, 64);
        for (float v : out.data) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }
}
