#pragma once

#include <cmath>
#include <vector>

#include "privdfs/tensor.hpp"

namespace privdfs {

constexpr double kSsimC1 = 0.01 * 0.01;  // (K1 * L)^2 with L = 1
constexpr double kSsimC2 = 0.03 * 0.03;
constexpr double kPsnrCap = 99.0;

inline double mse(const FeatureMap& x, const FeatureMap& y) {
    require(x.same_shape(y), "mse: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x.data[i]) - y.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(x.size());
}

inline double psnr(const FeatureMap& x, const FeatureMap& y, double peak = 1.0) {
    require(peak > 0.0, "psnr: peak must be > 0");
    const double m = mse(x, y);
    if (m == 0.0) return kPsnrCap;
    const double v = 10.0 * std::log10(peak * peak / m);
    return v > kPsnrCap ? kPsnrCap : v;
}

// Global-statistics SSIM over the whole tensor (single window). This is the
// differentiable variant used inside training losses.
inline double ssim_global(const FeatureMap& x, const FeatureMap& y) {
    require(x.same_shape(y), "ssim_global: shape mismatch");
    const double n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double a = x.data[i], b = y.data[i];
        sx += a;
        sy += b;
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    const double mx = sx / n, my = sy / n;
    const double vx = sxx / n - mx * mx;
    const double vy = syy / n - my * my;
    const double cov = sxy / n - mx * my;
    const double a1 = 2.0 * mx * my + kSsimC1;
    const double a2 = 2.0 * cov + kSsimC2;
    const double b1 = mx * mx + my * my + kSsimC1;
    const double b2 = vx + vy + kSsimC2;
    return (a1 * a2) / (b1 * b2);
}

// d ssim_global(x, y) / d y, analytic.
inline std::vector<float> ssim_global_grad_y(const FeatureMap& x,
                                             const FeatureMap& y) {
    require(x.same_shape(y), "ssim_global_grad_y: shape mismatch");
    const double n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double a = x.data[i], b = y.data[i];
        sx += a;
        sy += b;
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    const double mx = sx / n, my = sy / n;
    const double vx = sxx / n - mx * mx;
    const double vy = syy / n - my * my;
    const double cov = sxy / n - mx * my;
    const double a1 = 2.0 * mx * my + kSsimC1;
    const double a2 = 2.0 * cov + kSsimC2;
    const double b1 = mx * mx + my * my + kSsimC1;
    const double b2 = vx + vy + kSsimC2;
    const double s = (a1 * a2) / (b1 * b2);

    std::vector<float> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x.data[i], yi = y.data[i];
        const double da1 = 2.0 * mx / n;
        const double da2 = 2.0 * (xi - mx) / n;
        const double db1 = 2.0 * my / n;
        const double db2 = 2.0 * (yi - my) / n;
        const double ds = (da1 * a2 + a1 * da2) / (b1 * b2) -
                          s * (db1 / b1 + db2 / b2);
        g[i] = static_cast<float>(ds);
    }
    return g;
}

namespace detail {
inline const std::vector<double>& gauss_window11() {
    static const std::vector<double> w = [] {
        constexpr int n = 11;
        constexpr double sigma = 1.5;
        std::vector<double> v(n * n);
        double sum = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double dy = i - (n - 1) / 2.0;
                const double dx = j - (n - 1) / 2.0;
                v[i * n + j] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
                sum += v[i * n + j];
            }
        for (auto& e : v) e /= sum;
        return v;
    }();
    return w;
}
}  // namespace detail

// Standard windowed SSIM: 11x11 Gaussian window (std 1.5), mean over valid
// window positions and channels. Images smaller than the window fall back to
// the global-statistics variant.
inline double ssim(const FeatureMap& x, const FeatureMap& y) {
    require(x.same_shape(y), "ssim: shape mismatch");
    constexpr int win = 11;
    if (x.height < win || x.width < win) return ssim_global(x, y);
    const auto& w = detail::gauss_window11();
    double total = 0.0;
    std::size_t count = 0;
    for (int c = 0; c < x.channels; ++c) {
        for (int y0 = 0; y0 + win <= x.height; ++y0) {
            for (int x0 = 0; x0 + win <= x.width; ++x0) {
                double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
                for (int i = 0; i < win; ++i)
                    for (int j = 0; j < win; ++j) {
                        const double wi = w[i * win + j];
                        const double a = x.at(c, y0 + i, x0 + j);
                        const double b = y.at(c, y0 + i, x0 + j);
                        mx += wi * a;
                        my += wi * b;
                        sxx += wi * a * a;
                        syy += wi * b * b;
                        sxy += wi * a * b;
                    }
                const double vx = sxx - mx * mx;
                const double vy = syy - my * my;
                const double cov = sxy - mx * my;
                const double num = (2 * mx * my + kSsimC1) * (2 * cov + kSsimC2);
                const double den =
                    (mx * mx + my * my + kSsimC1) * (vx + vy + kSsimC2);
                total += num / den;
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

}  // namespace privdfs
