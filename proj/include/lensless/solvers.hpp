#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lensless/operator.hpp"
#include "lensless/tensor.hpp"

namespace lensless {

// Wiener deconvolution: spectral gain conj(H)/(|H|^2 + lambda_w).
inline Tensor wiener_reconstruct(const ConvolutionOperator& op, const Tensor& y,
                                 double lambda_w) {
    if (lambda_w <= 0)
        throw ConfigError("wiener lambda_w must be positive (use spectral mode for exact inversion)");
    op.check_dims(y);
    PinvConfig cfg;
    cfg.mode = PinvMode::wiener;
    cfg.lambda_w = lambda_w;
    PseudoInverse pinv(op, cfg);
    return pinv.apply(op, y);
}

struct AdmmConfig {
    double tau = 1e-2;  // TV weight
    double rho = 1.0;   // penalty
    int iters = 100;
    double tol = 0.0;   // primal residual stop; 0 disables
};

struct AdmmIterRecord {
    int iter;
    double objective;       // ||y - A x||^2 + tau*TV(x) at the clamped iterate
    double primal_residual;
};

struct AdmmResult {
    Tensor x;
    std::vector<AdmmIterRecord> trace;
};

namespace detail {
// anisotropic TV with circular forward differences
inline double tv_aniso(const Tensor& x) {
    double s = 0;
    for (int c = 0; c < x.channels(); ++c)
        for (int i = 0; i < x.height(); ++i)
            for (int j = 0; j < x.width(); ++j) {
                int i1 = i + 1 == x.height() ? 0 : i + 1;
                int j1 = j + 1 == x.width() ? 0 : j + 1;
                s += std::fabs(x(i1, j, c) - x(i, j, c));
                s += std::fabs(x(i, j1, c) - x(i, j, c));
            }
    return s;
}
} // namespace detail

inline double admm_objective(const ConvolutionOperator& op, const Tensor& y, const Tensor& x,
                             double tau) {
    Tensor r = op.apply(x);
    r -= y;
    return dot(r, r) + tau * detail::tv_aniso(x);
}

// ADMM on  min_x ||y - Ax||^2 + tau*TV(x)  s.t. x >= 0
// with the stacked splitting K = [Dx; Dy; I], scaled duals, single penalty rho.
// The x-update is closed-form per DFT bin; TV blocks are soft-thresholded and
// the nonnegativity block is clamped.
inline AdmmResult admm_tv_reconstruct(const ConvolutionOperator& op, const Tensor& y,
                                      const AdmmConfig& cfg) {
    if (cfg.iters < 1) throw ConfigError("admm iters must be >= 1");
    if (cfg.rho <= 0) throw ConfigError("admm rho must be positive");
    if (cfg.tau < 0) throw ConfigError("admm tau must be nonnegative");
    op.check_dims(y);
    const int H = op.height(), W = op.width(), C = op.channels();
    const Fft2D& fft = op.fft();
    const size_t nb = fft.bins();

    // spectra of circular forward differences
    Tensor dxk(H, W, 1), dyk(H, W, 1);
    dxk(0, 0, 0) = -1; dxk(H - 1, 0, 0) = 1;
    dyk(0, 0, 0) = -1; dyk(0, W - 1, 0) = 1;
    Spectrum Dx = fft.forward_channel(dxk, 0);
    Spectrum Dy = fft.forward_channel(dyk, 0);

    // per-channel denominators and A^T y spectra
    std::vector<Spectrum> denom(C), AtyF(C);
    for (int c = 0; c < C; ++c) {
        const Spectrum& Hc = op.transfer()[c];
        denom[c].resize(nb);
        for (size_t k = 0; k < nb; ++k)
            denom[c][k] = 2.0 * std::norm(Hc[k]) +
                          cfg.rho * (std::norm(Dx[k]) + std::norm(Dy[k]) + 1.0);
        Spectrum Yf = fft.forward_channel(y, c);
        AtyF[c].resize(nb);
        for (size_t k = 0; k < nb; ++k) AtyF[c][k] = std::conj(Hc[k]) * Yf[k];
    }

    auto diff_apply = [&](const Tensor& v, const Spectrum& D) {
        Tensor out(H, W, C);
        for (int c = 0; c < C; ++c) {
            Spectrum s = fft.forward_channel(v, c);
            for (size_t k = 0; k < nb; ++k) s[k] *= D[k];
            fft.inverse_channel(s, out, c);
        }
        return out;
    };

    Tensor x(H, W, C);
    Tensor zx(H, W, C), zy(H, W, C), zw(H, W, C);
    Tensor ux(H, W, C), uy(H, W, C), uw(H, W, C);
    AdmmResult res;
    res.trace.reserve(cfg.iters);
    double initial_obj = 0;
    const double thr = cfg.tau / cfg.rho;

    for (int it = 0; it < cfg.iters; ++it) {
        // x-update: (2 A^T A + rho K^T K) x = 2 A^T y + rho K^T (z - u)
        Tensor vx = zx - ux, vy = zy - uy, vw = zw - uw;
        for (int c = 0; c < C; ++c) {
            Spectrum sx = fft.forward_channel(vx, c);
            Spectrum sy = fft.forward_channel(vy, c);
            Spectrum sw = fft.forward_channel(vw, c);
            Spectrum rhs(nb);
            for (size_t k = 0; k < nb; ++k) {
                rhs[k] = 2.0 * AtyF[c][k] +
                         cfg.rho * (std::conj(Dx[k]) * sx[k] + std::conj(Dy[k]) * sy[k] + sw[k]);
                rhs[k] /= denom[c][k];
            }
            fft.inverse_channel(rhs, x, c);
        }
        Tensor gx = diff_apply(x, Dx), gy = diff_apply(x, Dy);
        // z-updates: soft threshold for TV blocks, clamp for the nonneg block
        double pr2 = 0;
        for (size_t k = 0; k < x.size(); ++k) {
            double ax = gx[k] + ux[k];
            zx[k] = ax > thr ? ax - thr : (ax < -thr ? ax + thr : 0.0);
            double ay = gy[k] + uy[k];
            zy[k] = ay > thr ? ay - thr : (ay < -thr ? ay + thr : 0.0);
            double aw = x[k] + uw[k];
            zw[k] = aw > 0 ? aw : 0.0;
            ux[k] += gx[k] - zx[k];
            uy[k] += gy[k] - zy[k];
            uw[k] += x[k] - zw[k];
            double rx = gx[k] - zx[k], ry = gy[k] - zy[k], rw = x[k] - zw[k];
            pr2 += rx * rx + ry * ry + rw * rw;
        }
        double obj = admm_objective(op, y, clamp_nonneg(x), cfg.tau);
        if (it == 0) initial_obj = obj;
        else if (initial_obj > 0 && obj > 1e6 * initial_obj)
            throw NumericError("ADMM diverged at iteration " + std::to_string(it) +
                               " (objective " + std::to_string(obj) + ")");
        res.trace.push_back({it + 1, obj, std::sqrt(pr2)});
        if (cfg.tol > 0 && std::sqrt(pr2) < cfg.tol) break;
    }
    res.x = clamp_nonneg(x);
    return res;
}

} // namespace lensless
