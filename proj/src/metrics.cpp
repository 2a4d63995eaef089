#include "hazeforge/metrics.hpp"

#include <cmath>
#include <vector>

namespace hazeforge::eval {

double psnr(const Image& a, const Image& b) {
    require_same_dims(a.height, a.width, b.height, b.width, "psnr");
    double se = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.data.size());
    if (mse <= 0.0) return 100.0;
    const double v = 10.0 * std::log10(1.0 / mse);
    return v > 100.0 ? 100.0 : v;
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

std::vector<double> gaussian_window() {
    std::vector<double> w(static_cast<size_t>(kSsimWindow) * kSsimWindow);
    const int r = kSsimWindow / 2;
    double total = 0.0;
    for (int y = -r; y <= r; ++y)
        for (int x = -r; x <= r; ++x) {
            const double v = std::exp(-(x * x + y * y) / (2.0 * kSsimSigma * kSsimSigma));
            w[static_cast<size_t>(y + r) * kSsimWindow + (x + r)] = v;
            total += v;
        }
    for (auto& v : w) v /= total;
    return w;
}

std::vector<double> luminance(const Image& img) {
    std::vector<double> y(img.pixel_count());
    for (size_t i = 0; i < y.size(); ++i)
        y[i] = (static_cast<double>(img.data[i * 3]) + img.data[i * 3 + 1] + img.data[i * 3 + 2]) / 3.0;
    return y;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
    require_same_dims(a.height, a.width, b.height, b.width, "ssim");
    if (a.height < kSsimWindow || a.width < kSsimWindow)
        throw InvalidInputError("ssim: image smaller than the 11x11 window");
    static const std::vector<double> win = gaussian_window();
    const auto lx = luminance(a);
    const auto ly = luminance(b);
    const int W = a.width;
    constexpr double C1 = 0.01 * 0.01;
    constexpr double C2 = 0.03 * 0.03;

    double acc = 0.0;
    size_t count = 0;
    for (int oy = 0; oy + kSsimWindow <= a.height; ++oy) {
        for (int ox = 0; ox + kSsimWindow <= a.width; ++ox) {
            double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
            const double* wp = win.data();
            for (int wy = 0; wy < kSsimWindow; ++wy) {
                const double* px = lx.data() + static_cast<size_t>(oy + wy) * W + ox;
                const double* py = ly.data() + static_cast<size_t>(oy + wy) * W + ox;
                for (int wx = 0; wx < kSsimWindow; ++wx, ++wp) {
                    const double w = *wp;
                    mx += w * px[wx];
                    my += w * py[wx];
                    xx += w * px[wx] * px[wx];
                    yy += w * py[wx] * py[wx];
                    xy += w * px[wx] * py[wx];
                }
            }
            const double vx = xx - mx * mx;
            const double vy = yy - my * my;
            const double cxy = xy - mx * my;
            const double s = ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
            acc += s;
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

double srgb_encode(double linear) {
    if (linear <= 0.0031308) return 12.92 * linear;
    return 1.055 * std::pow(linear, 1.0 / 2.4) - 0.055;
}

Lab lab_from_linear_rgb(double r, double g, double b) {
    // sRGB primaries, D65 white
    const double X = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    const double Y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    const double Z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    const double xn = X / 0.95047, yn = Y / 1.0, zn = Z / 1.08883;
    auto f = [](double t) {
        constexpr double d3 = (6.0 / 29.0) * (6.0 / 29.0) * (6.0 / 29.0);
        return t > d3 ? std::cbrt(t) : t / (3.0 * (6.0 / 29.0) * (6.0 / 29.0)) + 4.0 / 29.0;
    };
    const double fx = f(xn), fy = f(yn), fz = f(zn);
    return Lab{116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

namespace {

constexpr double kPi = 3.14159265358979323846;
double deg2rad(double d) { return d * kPi / 180.0; }
double rad2deg(double r) { return r * 180.0 / kPi; }

}  // namespace

double ciede2000_lab(const Lab& x, const Lab& y) {
    // Sharma, Wu & Dalal formulation
    const double C1 = std::hypot(x.a, x.b);
    const double C2 = std::hypot(y.a, y.b);
    const double Cbar = (C1 + C2) / 2.0;
    const double Cbar7 = std::pow(Cbar, 7.0);
    const double G = 0.5 * (1.0 - std::sqrt(Cbar7 / (Cbar7 + std::pow(25.0, 7.0))));
    const double a1p = (1.0 + G) * x.a;
    const double a2p = (1.0 + G) * y.a;
    const double C1p = std::hypot(a1p, x.b);
    const double C2p = std::hypot(a2p, y.b);

    auto hue = [](double a, double b) {
        if (a == 0.0 && b == 0.0) return 0.0;
        double h = rad2deg(std::atan2(b, a));
        return h < 0.0 ? h + 360.0 : h;
    };
    const double h1p = hue(a1p, x.b);
    const double h2p = hue(a2p, y.b);

    const double dLp = y.L - x.L;
    const double dCp = C2p - C1p;

    double dhp = 0.0;
    if (C1p * C2p != 0.0) {
        dhp = h2p - h1p;
        if (dhp > 180.0)
            dhp -= 360.0;
        else if (dhp < -180.0)
            dhp += 360.0;
    }
    const double dHp = 2.0 * std::sqrt(C1p * C2p) * std::sin(deg2rad(dhp) / 2.0);

    const double Lbarp = (x.L + y.L) / 2.0;
    const double Cbarp = (C1p + C2p) / 2.0;

    double hbarp = h1p + h2p;
    if (C1p * C2p != 0.0) {
        if (std::abs(h1p - h2p) <= 180.0)
            hbarp = (h1p + h2p) / 2.0;
        else if (h1p + h2p < 360.0)
            hbarp = (h1p + h2p + 360.0) / 2.0;
        else
            hbarp = (h1p + h2p - 360.0) / 2.0;
    }

    const double Tt = 1.0 - 0.17 * std::cos(deg2rad(hbarp - 30.0)) + 0.24 * std::cos(deg2rad(2.0 * hbarp)) +
                      0.32 * std::cos(deg2rad(3.0 * hbarp + 6.0)) - 0.20 * std::cos(deg2rad(4.0 * hbarp - 63.0));
    const double dTheta = 30.0 * std::exp(-std::pow((hbarp - 275.0) / 25.0, 2.0));
    const double Cbarp7 = std::pow(Cbarp, 7.0);
    const double RC = 2.0 * std::sqrt(Cbarp7 / (Cbarp7 + std::pow(25.0, 7.0)));
    const double lb = (Lbarp - 50.0) * (Lbarp - 50.0);
    const double SL = 1.0 + 0.015 * lb / std::sqrt(20.0 + lb);
    const double SC = 1.0 + 0.045 * Cbarp;
    const double SH = 1.0 + 0.015 * Cbarp * Tt;
    const double RT = -std::sin(deg2rad(2.0 * dTheta)) * RC;

    const double tL = dLp / SL;
    const double tC = dCp / SC;
    const double tH = dHp / SH;
    return std::sqrt(tL * tL + tC * tC + tH * tH + RT * tC * tH);
}

double ciede2000(const Image& a, const Image& b) {
    require_same_dims(a.height, a.width, b.height, b.width, "ciede2000");
    double acc = 0.0;
    const size_t n = a.pixel_count();
    for (size_t i = 0; i < n; ++i) {
        const Lab la = lab_from_linear_rgb(a.data[i * 3], a.data[i * 3 + 1], a.data[i * 3 + 2]);
        const Lab lb = lab_from_linear_rgb(b.data[i * 3], b.data[i * 3 + 1], b.data[i * 3 + 2]);
        acc += ciede2000_lab(la, lb);
    }
    return acc / static_cast<double>(n);
}

}  // namespace hazeforge::eval
