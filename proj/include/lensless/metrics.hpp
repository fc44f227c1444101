#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "lensless/operator.hpp"
#include "lensless/tensor.hpp"

namespace lensless {

inline double mse(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ConfigError("mse shape mismatch");
    double s = 0;
    for (size_t k = 0; k < a.size(); ++k) {
        double d = a[k] - b[k];
        s += d * d;
    }
    return s / (double)a.size();
}

// peak = 1.0; mse of 0 maps to +infinity (serialized as "inf").
inline double psnr(const Tensor& a, const Tensor& b) {
    double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / m);
}

// SSIM with the standard 11x11 Gaussian window (sigma 1.5), k1=0.01, k2=0.03,
// peak 1.0. Only fully interior (valid) windows are scored; channels are
// averaged.
inline double ssim(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ConfigError("ssim shape mismatch");
    constexpr int R = 5; // 11x11
    const int H = a.height(), W = a.width(), C = a.channels();
    if (H < 2 * R + 1 || W < 2 * R + 1)
        throw ConfigError("image too small for 11x11 SSIM window");
    double win[2 * R + 1][2 * R + 1];
    double wsum = 0;
    for (int di = -R; di <= R; ++di)
        for (int dj = -R; dj <= R; ++dj) {
            double w = std::exp(-(di * di + dj * dj) / (2.0 * 1.5 * 1.5));
            win[di + R][dj + R] = w;
            wsum += w;
        }
    for (auto& row : win)
        for (double& w : row) w /= wsum;

    const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
    double total = 0;
    for (int c = 0; c < C; ++c) {
        double acc = 0;
        int count = 0;
        for (int i = R; i < H - R; ++i)
            for (int j = R; j < W - R; ++j) {
                double mx = 0, my = 0;
                for (int di = -R; di <= R; ++di)
                    for (int dj = -R; dj <= R; ++dj) {
                        double w = win[di + R][dj + R];
                        mx += w * a(i + di, j + dj, c);
                        my += w * b(i + di, j + dj, c);
                    }
                double vx = 0, vy = 0, cov = 0;
                for (int di = -R; di <= R; ++di)
                    for (int dj = -R; dj <= R; ++dj) {
                        double w = win[di + R][dj + R];
                        double da = a(i + di, j + dj, c) - mx;
                        double db = b(i + di, j + dj, c) - my;
                        vx += w * da * da;
                        vy += w * db * db;
                        cov += w * da * db;
                    }
                double num = (2 * mx * my + C1) * (2 * cov + C2);
                double den = (mx * mx + my * my + C1) * (vx + vy + C2);
                acc += num / den;
                ++count;
            }
        total += acc / count;
    }
    return total / C;
}

// Measurement-consistency metric ||A x_hat - y||_2.
inline double data_residual(const ConvolutionOperator& op, const Tensor& x_hat, const Tensor& y) {
    Tensor r = op.apply(x_hat);
    r -= y;
    return norm2(r);
}

} // namespace lensless
