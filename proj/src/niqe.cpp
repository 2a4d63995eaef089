#include "hazeforge/niqe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "hazeforge/metrics.hpp"

using nlohmann::json;

namespace hazeforge::eval {

namespace {

struct Plane {
    int h = 0, w = 0;
    std::vector<double> v;
    double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

// Gamma-encoded BT.601 luma scaled to [0,255].
Plane luma255(const Image& img) {
    Plane p;
    p.h = img.height;
    p.w = img.width;
    p.v.resize(img.pixel_count());
    for (size_t i = 0; i < p.v.size(); ++i) {
        const double r = srgb_encode(img.data[i * 3]);
        const double g = srgb_encode(img.data[i * 3 + 1]);
        const double b = srgb_encode(img.data[i * 3 + 2]);
        p.v[i] = 255.0 * (0.299 * r + 0.587 * g + 0.114 * b);
    }
    return p;
}

// 7x7 Gaussian (sigma = 7/6), replicate border.
Plane gaussian_filter(const Plane& src) {
    constexpr int K = 7, R = 3;
    static const std::vector<double> win = [] {
        std::vector<double> w(K * K);
        const double sigma = 7.0 / 6.0;
        double total = 0.0;
        for (int y = -R; y <= R; ++y)
            for (int x = -R; x <= R; ++x) {
                const double v = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
                w[static_cast<size_t>(y + R) * K + (x + R)] = v;
                total += v;
            }
        for (auto& v : w) v /= total;
        return w;
    }();
    Plane out;
    out.h = src.h;
    out.w = src.w;
    out.v.resize(src.v.size());
    for (int y = 0; y < src.h; ++y) {
        for (int x = 0; x < src.w; ++x) {
            double acc = 0.0;
            for (int ky = -R; ky <= R; ++ky) {
                const int yy = std::clamp(y + ky, 0, src.h - 1);
                for (int kx = -R; kx <= R; ++kx) {
                    const int xx = std::clamp(x + kx, 0, src.w - 1);
                    acc += win[static_cast<size_t>(ky + R) * K + (kx + R)] * src.at(yy, xx);
                }
            }
            out.v[static_cast<size_t>(y) * src.w + x] = acc;
        }
    }
    return out;
}

struct MscnResult {
    Plane mscn;
    Plane sigma;  // local deviation field, used for patch sharpness
};

MscnResult mscn_coefficients(const Plane& im) {
    Plane mu = gaussian_filter(im);
    Plane imsq;
    imsq.h = im.h;
    imsq.w = im.w;
    imsq.v.resize(im.v.size());
    for (size_t i = 0; i < im.v.size(); ++i) imsq.v[i] = im.v[i] * im.v[i];
    Plane musq = gaussian_filter(imsq);

    MscnResult r;
    r.mscn.h = r.sigma.h = im.h;
    r.mscn.w = r.sigma.w = im.w;
    r.mscn.v.resize(im.v.size());
    r.sigma.v.resize(im.v.size());
    for (size_t i = 0; i < im.v.size(); ++i) {
        const double var = std::max(0.0, musq.v[i] - mu.v[i] * mu.v[i]);
        const double sd = std::sqrt(var);
        r.sigma.v[i] = sd;
        r.mscn.v[i] = (im.v[i] - mu.v[i]) / (sd + 1.0);
    }
    return r;
}

Plane downscale2(const Plane& src) {
    Plane out;
    out.h = src.h / 2;
    out.w = src.w / 2;
    out.v.resize(static_cast<size_t>(out.h) * out.w);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            out.v[static_cast<size_t>(y) * out.w + x] =
                0.25 * (src.at(2 * y, 2 * x) + src.at(2 * y, 2 * x + 1) + src.at(2 * y + 1, 2 * x) +
                        src.at(2 * y + 1, 2 * x + 1));
    return out;
}

// r(gamma) lookup shared by the GGD and AGGD moment-matching fits.
struct GammaTable {
    std::vector<double> gam, r_gam;
    GammaTable() {
        for (double g = 0.2; g < 10.0; g += 0.001) {
            gam.push_back(g);
            const double num = std::tgamma(2.0 / g) * std::tgamma(2.0 / g);
            const double den = std::tgamma(1.0 / g) * std::tgamma(3.0 / g);
            r_gam.push_back(num / den);
        }
    }
    double best(double rhat) const {
        size_t best_i = 0;
        double best_d = std::abs(r_gam[0] - rhat);
        for (size_t i = 1; i < gam.size(); ++i) {
            const double d = std::abs(r_gam[i] - rhat);
            if (d < best_d) {
                best_d = d;
                best_i = i;
            }
        }
        return gam[best_i];
    }
};

const GammaTable& gamma_table() {
    static const GammaTable t;
    return t;
}

// Generalized Gaussian fit -> (shape, variance).
void ggd_fit(const std::vector<double>& x, double& shape, double& variance) {
    double abs_sum = 0.0, sq_sum = 0.0;
    for (double v : x) {
        abs_sum += std::abs(v);
        sq_sum += v * v;
    }
    const double n = static_cast<double>(x.size());
    variance = sq_sum / n;
    const double mean_abs = abs_sum / n;
    const double rhat = variance > 0.0 ? (mean_abs * mean_abs) / variance : 1.0;
    shape = gamma_table().best(rhat);
}

// Asymmetric generalized Gaussian fit -> (shape, mean, left var, right var).
void aggd_fit(const std::vector<double>& x, double& shape, double& mean, double& lvar, double& rvar) {
    double neg_sq = 0.0, pos_sq = 0.0, abs_sum = 0.0;
    size_t neg_n = 0, pos_n = 0;
    for (double v : x) {
        if (v < 0) {
            neg_sq += v * v;
            ++neg_n;
        } else if (v > 0) {
            pos_sq += v * v;
            ++pos_n;
        }
        abs_sum += std::abs(v);
    }
    const double n = static_cast<double>(x.size());
    const double lsigma = neg_n ? std::sqrt(neg_sq / neg_n) : 0.0;
    const double rsigma = pos_n ? std::sqrt(pos_sq / pos_n) : 0.0;
    const double gammahat = rsigma > 0.0 ? lsigma / rsigma : 1.0;
    const double total_sq = (neg_sq + pos_sq) / n;
    const double rhat = total_sq > 0.0 ? std::pow(abs_sum / n, 2.0) / total_sq : 1.0;
    const double rhatnorm = rhat * (std::pow(gammahat, 3.0) + 1.0) * (gammahat + 1.0) /
                            std::pow(gammahat * gammahat + 1.0, 2.0);
    shape = gamma_table().best(rhatnorm);
    lvar = lsigma * lsigma;
    rvar = rsigma * rsigma;
    const double c = std::sqrt(std::tgamma(1.0 / shape) / std::tgamma(3.0 / shape));
    mean = (rsigma - lsigma) * (std::tgamma(2.0 / shape) / std::tgamma(1.0 / shape)) * c;
}

// 18 features of one MSCN patch: GGD(2) + 4 orientations x AGGD(4).
void patch_features(const Plane& mscn, int y0, int x0, int size, std::vector<double>& out) {
    std::vector<double> vals(static_cast<size_t>(size) * size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) vals[static_cast<size_t>(y) * size + x] = mscn.at(y0 + y, x0 + x);
    double shape, variance;
    ggd_fit(vals, shape, variance);
    out.push_back(shape);
    out.push_back(variance);

    constexpr int kShifts[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
    std::vector<double> prod;
    prod.reserve(vals.size());
    for (const auto& sh : kShifts) {
        prod.clear();
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const int yy = y + sh[0], xx = x + sh[1];
                if (yy < 0 || yy >= size || xx < 0 || xx >= size) continue;
                prod.push_back(mscn.at(y0 + y, x0 + x) * mscn.at(y0 + yy, x0 + xx));
            }
        }
        double a_shape, a_mean, lv, rv;
        aggd_fit(prod, a_shape, a_mean, lv, rv);
        out.push_back(a_shape);
        out.push_back(a_mean);
        out.push_back(lv);
        out.push_back(rv);
    }
}

struct ImageFeatures {
    std::vector<std::vector<double>> rows;      // one per patch, kNiqeFeatureDim wide
    std::vector<double> sharpness;              // per patch, scale-1 local deviation mean
};

ImageFeatures image_features(const Image& img, int patch_size) {
    if (img.height < 2 * patch_size || img.width < 2 * patch_size)
        throw InvalidInputError("niqe: image must be at least 2x the patch size");
    const Plane full = luma255(img);
    const MscnResult scale1 = mscn_coefficients(full);
    const Plane half = downscale2(full);
    const MscnResult scale2 = mscn_coefficients(half);

    ImageFeatures feats;
    const int ny = img.height / patch_size, nx = img.width / patch_size;
    const int half_patch = patch_size / 2;
    for (int py = 0; py < ny; ++py) {
        for (int px = 0; px < nx; ++px) {
            std::vector<double> row;
            row.reserve(kNiqeFeatureDim);
            patch_features(scale1.mscn, py * patch_size, px * patch_size, patch_size, row);
            patch_features(scale2.mscn, py * half_patch, px * half_patch, half_patch, row);
            feats.rows.push_back(std::move(row));
            double sharp = 0.0;
            for (int y = 0; y < patch_size; ++y)
                for (int x = 0; x < patch_size; ++x)
                    sharp += scale1.sigma.at(py * patch_size + y, px * patch_size + x);
            feats.sharpness.push_back(sharp / (patch_size * patch_size));
        }
    }
    return feats;
}

void mean_and_cov(const std::vector<std::vector<double>>& rows, std::vector<double>& mean,
                  std::vector<double>& cov) {
    const size_t d = kNiqeFeatureDim;
    const size_t n = rows.size();
    mean.assign(d, 0.0);
    for (const auto& r : rows)
        for (size_t j = 0; j < d; ++j) mean[j] += r[j];
    for (auto& m : mean) m /= static_cast<double>(n);
    cov.assign(d * d, 0.0);
    for (const auto& r : rows)
        for (size_t i = 0; i < d; ++i) {
            const double di = r[i] - mean[i];
            for (size_t j = i; j < d; ++j) cov[i * d + j] += di * (r[j] - mean[j]);
        }
    const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
    for (size_t i = 0; i < d; ++i)
        for (size_t j = i; j < d; ++j) {
            cov[i * d + j] /= denom;
            cov[j * d + i] = cov[i * d + j];
        }
}

// Gauss-Jordan inverse with partial pivoting; false on a singular pivot.
bool invert(std::vector<double> m, size_t d, std::vector<double>& inv) {
    inv.assign(d * d, 0.0);
    for (size_t i = 0; i < d; ++i) inv[i * d + i] = 1.0;
    for (size_t col = 0; col < d; ++col) {
        size_t piv = col;
        for (size_t r = col + 1; r < d; ++r)
            if (std::abs(m[r * d + col]) > std::abs(m[piv * d + col])) piv = r;
        if (std::abs(m[piv * d + col]) < 1e-12) return false;
        if (piv != col) {
            for (size_t j = 0; j < d; ++j) {
                std::swap(m[piv * d + j], m[col * d + j]);
                std::swap(inv[piv * d + j], inv[col * d + j]);
            }
        }
        const double p = m[col * d + col];
        for (size_t j = 0; j < d; ++j) {
            m[col * d + j] /= p;
            inv[col * d + j] /= p;
        }
        for (size_t r = 0; r < d; ++r) {
            if (r == col) continue;
            const double f = m[r * d + col];
            if (f == 0.0) continue;
            for (size_t j = 0; j < d; ++j) {
                m[r * d + j] -= f * m[col * d + j];
                inv[r * d + j] -= f * inv[col * d + j];
            }
        }
    }
    return true;
}

}  // namespace

std::vector<double> niqe_features(const Image& image, int patch_size) {
    const auto feats = image_features(image, patch_size);
    std::vector<double> mean, cov;
    mean_and_cov(feats.rows, mean, cov);
    return mean;
}

NiqeModel niqe_fit(const std::vector<Image>& pristine_corpus, int patch_size) {
    if (pristine_corpus.size() < 64) throw InvalidInputError("niqe_fit: need at least 64 pristine images");
    if (patch_size < 8 || patch_size % 2 != 0) throw InvalidInputError("niqe_fit: patch size must be even and >= 8");

    std::vector<std::vector<double>> rows;
    for (const auto& img : pristine_corpus) {
        auto feats = image_features(img, patch_size);
        double max_sharp = 0.0;
        for (double s : feats.sharpness) max_sharp = std::max(max_sharp, s);
        const double thresh = 0.75 * max_sharp;
        for (size_t i = 0; i < feats.rows.size(); ++i)
            if (feats.sharpness[i] >= thresh) rows.push_back(std::move(feats.rows[i]));
    }
    NiqeModel model;
    model.patch_size = patch_size;
    mean_and_cov(rows, model.mean, model.covariance);
    return model;
}

double niqe_score(const NiqeModel& model, const Image& image) {
    const auto feats = image_features(image, model.patch_size);
    std::vector<double> mean, cov;
    mean_and_cov(feats.rows, mean, cov);

    const size_t d = kNiqeFeatureDim;
    std::vector<double> pooled(d * d);
    for (size_t i = 0; i < d * d; ++i) pooled[i] = 0.5 * (model.covariance[i] + cov[i]);

    std::vector<double> inv;
    double reg = 1e-6;
    while (!invert(pooled, d, inv)) {
        std::fprintf(stderr, "niqe: singular pooled covariance, regularizing with %g*I\n", reg);
        for (size_t i = 0; i < d; ++i) pooled[i * d + i] += reg;
        reg *= 100.0;
        if (reg > 1.0) throw NumericError("niqe: covariance could not be regularized");
    }

    std::vector<double> diff(d);
    for (size_t i = 0; i < d; ++i) diff[i] = model.mean[i] - mean[i];
    double q = 0.0;
    for (size_t i = 0; i < d; ++i) {
        double acc = 0.0;
        for (size_t j = 0; j < d; ++j) acc += inv[i * d + j] * diff[j];
        q += diff[i] * acc;
    }
    return std::sqrt(std::max(0.0, q));
}

void save_niqe_model(const NiqeModel& model, const std::string& path) {
    json j;
    j["format_version"] = 1;
    j["patch_size"] = model.patch_size;
    j["mean"] = model.mean;
    j["covariance"] = model.covariance;
    std::ofstream f(path);
    if (!f) throw IoError("niqe: cannot write model to " + path);
    f << j.dump() << "\n";
}

NiqeModel load_niqe_model(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("niqe: cannot open model " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw FormatError("niqe: bad model json in " + path + ": " + e.what());
    }
    NiqeModel m;
    m.patch_size = j.at("patch_size").get<int>();
    m.mean = j.at("mean").get<std::vector<double>>();
    m.covariance = j.at("covariance").get<std::vector<double>>();
    if (m.mean.size() != kNiqeFeatureDim || m.covariance.size() != kNiqeFeatureDim * kNiqeFeatureDim)
        throw FormatError("niqe: model dimensions are wrong in " + path);
    return m;
}

}  // namespace hazeforge::eval
