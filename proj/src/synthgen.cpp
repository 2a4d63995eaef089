#include "hazeforge/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "hazeforge/asm_model.hpp"
#include "hazeforge/hztr.hpp"
#include "hazeforge/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hazeforge::synth {

std::string to_string(DepthKind k) {
    switch (k) {
        case DepthKind::Ramp: return "ramp";
        case DepthKind::Radial: return "radial";
        default: return "smooth_noise";
    }
}

std::string to_string(ContentKind k) {
    switch (k) {
        case ContentKind::Gradients: return "gradients";
        case ContentKind::Shapes: return "shapes";
        default: return "textured";
    }
}

DepthKind depth_kind_from_string(const std::string& s) {
    if (s == "ramp") return DepthKind::Ramp;
    if (s == "radial") return DepthKind::Radial;
    if (s == "smooth_noise") return DepthKind::SmoothNoise;
    throw ConfigError("unknown depth kind: " + s);
}

ContentKind content_kind_from_string(const std::string& s) {
    if (s == "gradients") return ContentKind::Gradients;
    if (s == "shapes") return ContentKind::Shapes;
    if (s == "textured") return ContentKind::Textured;
    throw ConfigError("unknown content kind: " + s);
}

namespace {

void check_spec(const SceneSpec& spec) {
    if (spec.height < 32 || spec.width < 32 || spec.height % 4 != 0 || spec.width % 4 != 0)
        throw InvalidInputError("scene spec: dims must be >= 32 and divisible by 4");
}

// Band-limited value noise: bilinear interpolation of a seeded lattice.
void add_value_noise(std::vector<float>& buf, int h, int w, int cell, float amplitude, Rng& rng) {
    const int gh = h / cell + 2, gw = w / cell + 2;
    std::vector<float> lattice(static_cast<size_t>(gh) * gw);
    for (auto& v : lattice) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    for (int y = 0; y < h; ++y) {
        const float fy = static_cast<float>(y) / cell;
        const int y0 = static_cast<int>(fy);
        const float ty = fy - y0;
        for (int x = 0; x < w; ++x) {
            const float fx = static_cast<float>(x) / cell;
            const int x0 = static_cast<int>(fx);
            const float tx = fx - x0;
            const float v00 = lattice[y0 * gw + x0], v01 = lattice[y0 * gw + x0 + 1];
            const float v10 = lattice[(y0 + 1) * gw + x0], v11 = lattice[(y0 + 1) * gw + x0 + 1];
            const float v = (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
            buf[static_cast<size_t>(y) * w + x] += amplitude * v;
        }
    }
}

// Single linear gradient with a random direction and per-channel gains.
void add_gradient(Image& img, Rng& rng) {
    const float angle = static_cast<float>(rng.uniform(0.0, 6.283185307179586));
    const float dx = std::cos(angle), dy = std::sin(angle);
    float gain[3];
    for (auto& g : gain) g = static_cast<float>(rng.uniform(-0.5, 0.5));
    const float diag = std::sqrt(static_cast<float>(img.height * img.height + img.width * img.width));
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const float s = (dx * x + dy * y) / diag;
            for (int c = 0; c < 3; ++c) img.at(y, x, c) += gain[c] * s;
        }
    }
}

void add_rect(Image& img, Rng& rng) {
    const int w = img.width, h = img.height;
    const int x0 = static_cast<int>(rng.below(static_cast<uint64_t>(w - 4)));
    const int y0 = static_cast<int>(rng.below(static_cast<uint64_t>(h - 4)));
    const int rw = 4 + static_cast<int>(rng.below(static_cast<uint64_t>(w / 2)));
    const int rh = 4 + static_cast<int>(rng.below(static_cast<uint64_t>(h / 2)));
    float color[3];
    for (auto& c : color) c = static_cast<float>(rng.uniform(0.0, 1.0));
    const float blend = static_cast<float>(rng.uniform(0.4, 0.95));
    for (int y = y0; y < std::min(h, y0 + rh); ++y)
        for (int x = x0; x < std::min(w, x0 + rw); ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = (1 - blend) * img.at(y, x, c) + blend * color[c];
}

void add_ellipse(Image& img, Rng& rng) {
    const int w = img.width, h = img.height;
    const float cx = static_cast<float>(rng.uniform(0.1, 0.9)) * w;
    const float cy = static_cast<float>(rng.uniform(0.1, 0.9)) * h;
    const float rx = static_cast<float>(rng.uniform(0.06, 0.35)) * w;
    const float ry = static_cast<float>(rng.uniform(0.06, 0.35)) * h;
    float color[3];
    for (auto& c : color) c = static_cast<float>(rng.uniform(0.0, 1.0));
    const float blend = static_cast<float>(rng.uniform(0.4, 0.95));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const float u = (x - cx) / rx, v = (y - cy) / ry;
            if (u * u + v * v <= 1.0f)
                for (int c = 0; c < 3; ++c) img.at(y, x, c) = (1 - blend) * img.at(y, x, c) + blend * color[c];
        }
    }
}

// Affine map of all channels jointly so values span [lo, hi].
void normalize_span(Image& img, float lo, float hi) {
    float mn = img.data[0], mx = img.data[0];
    for (float v : img.data) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    const float scale = mx > mn ? (hi - lo) / (mx - mn) : 0.0f;
    for (auto& v : img.data) v = lo + (v - mn) * scale;
}

// Guarantee per-channel standard deviation >= floor by stretching around the mean.
void enforce_channel_stddev(Image& img, float floor) {
    const size_t n = img.pixel_count();
    for (int c = 0; c < 3; ++c) {
        double sum = 0.0, sum2 = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double v = img.data[i * 3 + c];
            sum += v;
            sum2 += v * v;
        }
        const double mean = sum / static_cast<double>(n);
        const double var = std::max(0.0, sum2 / static_cast<double>(n) - mean * mean);
        const double sd = std::sqrt(var);
        if (sd >= floor) continue;
        const double gain = sd > 1e-9 ? floor / sd : 0.0;
        for (size_t i = 0; i < n; ++i) {
            double v = mean + (img.data[i * 3 + c] - mean) * gain;
            if (gain == 0.0) v = (i % 2 == 0) ? mean + floor : mean - floor;  // degenerate flat channel
            img.data[i * 3 + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
}

}  // namespace

Image gen_clean(const SceneSpec& spec) {
    check_spec(spec);
    Rng rng(spec.seed ^ 0xc1ea11c0ull);
    Image img(spec.height, spec.width, 0.5f);

    switch (spec.content_kind) {
        case ContentKind::Gradients: {
            const int layers = 2 + static_cast<int>(rng.below(3));
            for (int i = 0; i < layers; ++i) add_gradient(img, rng);
            normalize_span(img, 0.05f, 0.95f);
            break;
        }
        case ContentKind::Shapes: {
            add_gradient(img, rng);
            normalize_span(img, 0.15f, 0.85f);
            const int count = 3 + static_cast<int>(rng.below(5));
            for (int i = 0; i < count; ++i) {
                if (rng.below(2) == 0)
                    add_rect(img, rng);
                else
                    add_ellipse(img, rng);
            }
            break;
        }
        case ContentKind::Textured: {
            std::vector<float> field(img.pixel_count(), 0.0f);
            add_value_noise(field, img.height, img.width, 16, 0.6f, rng);
            add_value_noise(field, img.height, img.width, 8, 0.3f, rng);
            add_value_noise(field, img.height, img.width, 4, 0.15f, rng);
            float tint[3];
            for (auto& t : tint) t = static_cast<float>(rng.uniform(0.6, 1.0));
            for (size_t i = 0; i < field.size(); ++i)
                for (int c = 0; c < 3; ++c) img.data[i * 3 + c] = 0.5f + 0.5f * field[i] * tint[c];
            add_gradient(img, rng);
            normalize_span(img, 0.05f, 0.95f);
            break;
        }
    }
    for (auto& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
    enforce_channel_stddev(img, 0.05f);
    return img;
}

DepthMap gen_depth(const SceneSpec& spec, float z_min, float z_max) {
    check_spec(spec);
    if (!(z_min > 0.0f) || !(z_min < z_max)) throw InvalidInputError("gen_depth: need 0 < z_min < z_max");
    Rng rng(spec.seed ^ 0xd3e90000ull);
    const int h = spec.height, w = spec.width;
    std::vector<float> field(static_cast<size_t>(h) * w, 0.0f);

    switch (spec.depth_kind) {
        case DepthKind::Ramp:
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) field[static_cast<size_t>(y) * w + x] = static_cast<float>(x);
            break;
        case DepthKind::Radial: {
            const float cx = (w - 1) * 0.5f, cy = (h - 1) * 0.5f;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    field[static_cast<size_t>(y) * w + x] = std::hypot(x - cx, y - cy);
            break;
        }
        case DepthKind::SmoothNoise: {
            add_value_noise(field, h, w, 16, 0.75f, rng);
            add_value_noise(field, h, w, 8, 0.25f, rng);
            // one light box-blur pass keeps per-pixel steps gentle
            std::vector<float> blurred(field.size());
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    float acc = 0.0f;
                    int cnt = 0;
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int yy = y + dy, xx = x + dx;
                            if (yy >= 0 && yy < h && xx >= 0 && xx < w) {
                                acc += field[static_cast<size_t>(yy) * w + xx];
                                ++cnt;
                            }
                        }
                    blurred[static_cast<size_t>(y) * w + x] = acc / cnt;
                }
            }
            field.swap(blurred);
            break;
        }
    }

    float mn = field[0], mx = field[0];
    for (float v : field) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    DepthMap z(h, w);
    const float scale = mx > mn ? (z_max - z_min) / (mx - mn) : 0.0f;
    for (size_t i = 0; i < field.size(); ++i) z.data[i] = z_min + (field[i] - mn) * scale;
    return z;
}

void sample_params(uint64_t seed, const ParamRanges& ranges, HazeParams& clean_out, HazeParams& synth_out) {
    auto check_range = [](float lo, float hi, const char* what) {
        if (!(lo <= hi)) throw InvalidInputError(std::string("sample_params: empty/inverted range for ") + what);
    };
    check_range(ranges.beta_clean_min, ranges.beta_clean_max, "beta_c");
    check_range(ranges.beta_haze_min, ranges.beta_haze_max, "beta_h");
    check_range(ranges.atmosphere_min, ranges.atmosphere_max, "A");
    Rng rng(seed ^ 0x9a2a11ull);
    clean_out.beta = rng.uniform_f(ranges.beta_clean_min, ranges.beta_clean_max);
    for (auto& a : clean_out.atmosphere) a = rng.uniform_f(ranges.atmosphere_min, ranges.atmosphere_max);
    synth_out.beta = rng.uniform_f(ranges.beta_haze_min, ranges.beta_haze_max);
    for (auto& a : synth_out.atmosphere) a = rng.uniform_f(ranges.atmosphere_min, ranges.atmosphere_max);
}

PairedSample make_pair(const Image& ideal_clean, const DepthMap& z, const HazeParams& clean_params,
                       const HazeParams& synth_params) {
    require_same_dims(ideal_clean.height, ideal_clean.width, z.height, z.width, "make_pair");
    PairedSample s;
    s.ideal_clean = ideal_clean;
    s.depth = z;
    s.clean_params = clean_params;
    s.synth_params = synth_params;
    s.nonideal_clean = atmo::apply_asm(ideal_clean, z, clean_params);
    s.synthetic_hazy = atmo::apply_asm(s.nonideal_clean, z, synth_params);
    return s;
}

Dataset generate_dataset(const GenConfig& cfg) {
    if (cfg.train_count < 1 || cfg.test_count < 0) throw ConfigError("generate_dataset: bad sample counts");
    {
        SceneSpec probe;
        probe.height = cfg.height;
        probe.width = cfg.width;
        check_spec(probe);
        if (!(cfg.ranges.z_min > 0.0f) || !(cfg.ranges.z_min < cfg.ranges.z_max))
            throw InvalidInputError("generate_dataset: need 0 < z_min < z_max");
        HazeParams cp, sp;
        sample_params(0, cfg.ranges, cp, sp);  // range validation
    }

    Dataset ds;
    ds.manifest.height = cfg.height;
    ds.manifest.width = cfg.width;
    ds.manifest.ranges = cfg.ranges;
    ds.manifest.master_seed = cfg.master_seed;
    const int total = cfg.train_count + cfg.test_count;
    ds.samples.resize(total);
    ds.manifest.entries.resize(total);

    Rng master(cfg.master_seed);
    std::vector<uint64_t> seeds(total);
    for (auto& s : seeds) s = master.next_u64();

    const DepthKind depth_kinds[] = {DepthKind::Ramp, DepthKind::Radial, DepthKind::SmoothNoise};
    const ContentKind content_kinds[] = {ContentKind::Gradients, ContentKind::Shapes, ContentKind::Textured};

    // inputs are validated above; nothing in the loop body throws
#pragma omp parallel for schedule(dynamic) if (threads() > 1)
    for (int i = 0; i < total; ++i) {
        const uint64_t seed = seeds[i];
        SceneSpec spec;
        spec.seed = seed;
        spec.height = cfg.height;
        spec.width = cfg.width;
        spec.depth_kind = depth_kinds[seed % 3];
        spec.content_kind = content_kinds[(seed >> 8) % 3];
        Image clean = gen_clean(spec);
        DepthMap z = gen_depth(spec, cfg.ranges.z_min, cfg.ranges.z_max);
        HazeParams cp, sp;
        sample_params(seed, cfg.ranges, cp, sp);
        PairedSample sample = make_pair(clean, z, cp, sp);
        sample.seed = seed;
        ds.samples[i] = std::move(sample);
        auto& e = ds.manifest.entries[i];
        e.seed = seed;
        e.clean_params = cp;
        e.synth_params = sp;
        e.split = i < cfg.train_count ? "train" : "test";
    }
    return ds;
}

namespace {

json params_to_json(const HazeParams& p) {
    return json{{"beta", p.beta}, {"A", {p.atmosphere[0], p.atmosphere[1], p.atmosphere[2]}}};
}

HazeParams params_from_json(const json& j) {
    HazeParams p;
    p.beta = j.at("beta").get<float>();
    const auto& a = j.at("A");
    for (int c = 0; c < 3; ++c) p.atmosphere[c] = a.at(c).get<float>();
    return p;
}

std::string sample_file(int index, const char* kind) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%05d_%s.hztr", index, kind);
    return buf;
}

void write_image(const std::string& dir, int index, const char* kind, const Image& img) {
    hztr::write(dir + "/" + sample_file(index, kind),
                {static_cast<uint32_t>(img.height), static_cast<uint32_t>(img.width), 3u}, img.data.data());
}

Image read_image(const std::string& path) {
    std::vector<uint32_t> dims;
    auto data = hztr::read(path, dims);
    if (dims.size() != 3 || dims[2] != 3) throw FormatError("dataset: expected HxWx3 raster in " + path);
    Image img(static_cast<int>(dims[0]), static_cast<int>(dims[1]));
    img.data = std::move(data);
    return img;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    json manifest;
    manifest["format_version"] = ds.manifest.format_version;
    manifest["height"] = ds.manifest.height;
    manifest["width"] = ds.manifest.width;
    manifest["master_seed"] = ds.manifest.master_seed;
    const auto& r = ds.manifest.ranges;
    manifest["ranges"] = {{"beta_clean", {r.beta_clean_min, r.beta_clean_max}},
                          {"beta_haze", {r.beta_haze_min, r.beta_haze_max}},
                          {"atmosphere", {r.atmosphere_min, r.atmosphere_max}},
                          {"depth", {r.z_min, r.z_max}}};
    json entries = json::array();
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& s = ds.samples[i];
        const auto& e = ds.manifest.entries[i];
        json rec;
        rec["seed"] = s.seed;
        rec["clean_params"] = params_to_json(s.clean_params);
        rec["synth_params"] = params_to_json(s.synth_params);
        rec["split"] = e.split;
        rec["files"] = {sample_file(static_cast<int>(i), "J"), sample_file(static_cast<int>(i), "Ic"),
                        sample_file(static_cast<int>(i), "Ih"), sample_file(static_cast<int>(i), "z")};
        entries.push_back(std::move(rec));
        write_image(dir, static_cast<int>(i), "J", s.ideal_clean);
        write_image(dir, static_cast<int>(i), "Ic", s.nonideal_clean);
        write_image(dir, static_cast<int>(i), "Ih", s.synthetic_hazy);
        hztr::write(dir + "/" + sample_file(static_cast<int>(i), "z"),
                    {static_cast<uint32_t>(s.depth.height), static_cast<uint32_t>(s.depth.width)},
                    s.depth.data.data());
    }
    manifest["samples"] = std::move(entries);
    std::ofstream f(dir + "/manifest.json");
    if (!f) throw IoError("dataset: cannot write manifest in " + dir);
    f << manifest.dump(2) << "\n";
}

Dataset read_dataset(const std::string& dir) {
    std::ifstream f(dir + "/manifest.json");
    if (!f) throw IoError("dataset: missing manifest.json in " + dir);
    json manifest;
    try {
        f >> manifest;
    } catch (const json::exception& e) {
        throw FormatError("dataset: manifest parse error in " + dir + ": " + e.what());
    }
    Dataset ds;
    ds.manifest.format_version = manifest.at("format_version").get<uint32_t>();
    if (ds.manifest.format_version != 1)
        throw FormatError("dataset: unsupported manifest version " + std::to_string(ds.manifest.format_version));
    ds.manifest.height = manifest.at("height").get<int>();
    ds.manifest.width = manifest.at("width").get<int>();
    ds.manifest.master_seed = manifest.at("master_seed").get<uint64_t>();
    const auto& r = manifest.at("ranges");
    auto& pr = ds.manifest.ranges;
    pr.beta_clean_min = r.at("beta_clean").at(0).get<float>();
    pr.beta_clean_max = r.at("beta_clean").at(1).get<float>();
    pr.beta_haze_min = r.at("beta_haze").at(0).get<float>();
    pr.beta_haze_max = r.at("beta_haze").at(1).get<float>();
    pr.atmosphere_min = r.at("atmosphere").at(0).get<float>();
    pr.atmosphere_max = r.at("atmosphere").at(1).get<float>();
    pr.z_min = r.at("depth").at(0).get<float>();
    pr.z_max = r.at("depth").at(1).get<float>();

    for (const auto& rec : manifest.at("samples")) {
        PairedSample s;
        s.seed = rec.at("seed").get<uint64_t>();
        s.clean_params = params_from_json(rec.at("clean_params"));
        s.synth_params = params_from_json(rec.at("synth_params"));
        const auto& files = rec.at("files");
        for (const auto& name : files) {
            const std::string path = dir + "/" + name.get<std::string>();
            if (!fs::exists(path)) throw IntegrityError("dataset: file listed in manifest is missing: " + path);
        }
        s.ideal_clean = read_image(dir + "/" + files.at(0).get<std::string>());
        s.nonideal_clean = read_image(dir + "/" + files.at(1).get<std::string>());
        s.synthetic_hazy = read_image(dir + "/" + files.at(2).get<std::string>());
        std::vector<uint32_t> zdims;
        auto zdata = hztr::read(dir + "/" + files.at(3).get<std::string>(), zdims);
        if (zdims.size() != 2) throw FormatError("dataset: expected HxW depth raster");
        s.depth = DepthMap(static_cast<int>(zdims[0]), static_cast<int>(zdims[1]));
        s.depth.data = std::move(zdata);

        DatasetManifest::Entry e;
        e.seed = s.seed;
        e.clean_params = s.clean_params;
        e.synth_params = s.synth_params;
        e.split = rec.at("split").get<std::string>();
        ds.manifest.entries.push_back(e);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

Image resize_bilinear(const Image& src, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw InvalidInputError("resize: output dims must be positive");
    if (out_h == src.height && out_w == src.width) return src;
    Image out(out_h, out_w);
    const float sy = static_cast<float>(src.height) / out_h;
    const float sx = static_cast<float>(src.width) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const float fy = std::max(0.0f, (y + 0.5f) * sy - 0.5f);
        const int y0 = std::min(static_cast<int>(fy), src.height - 1);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const float ty = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const float fx = std::max(0.0f, (x + 0.5f) * sx - 0.5f);
            const int x0 = std::min(static_cast<int>(fx), src.width - 1);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const float tx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const float top = (1 - tx) * src.at(y0, x0, c) + tx * src.at(y0, x1, c);
                const float bot = (1 - tx) * src.at(y1, x0, c) + tx * src.at(y1, x1, c);
                out.at(y, x, c) = (1 - ty) * top + ty * bot;
            }
        }
    }
    return out;
}

}  // namespace hazeforge::synth
