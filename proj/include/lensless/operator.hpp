#pragma once

#include <complex>
#include <memory>
#include <vector>

#include "lensless/errors.hpp"
#include "lensless/fft.hpp"
#include "lensless/psf.hpp"
#include "lensless/tensor.hpp"

namespace lensless {

enum class PinvMode { spectral, wiener };

struct PinvConfig {
    PinvMode mode = PinvMode::wiener;
    double eps_rel = 1e-6;    // spectral: bins with |H| <= eps_rel*max|H| are null space
    double lambda_w = 1e-2;   // wiener: Tikhonov weight
    bool approximate_projectors = false; // must be set to use projectors in wiener mode
};

// Circular convolution with a PSF, diagonal in the 2D DFT basis, one transfer
// function per channel. Immutable after construction; all apply paths are
// thread-safe.
class ConvolutionOperator {
public:
    ConvolutionOperator(const Psf& psf, int H, int W)
        : h_(H), w_(W), c_(psf.kernel.channels()), fft_(std::make_shared<Fft2D>(H, W)) {
        Tensor k = pad_kernel(psf.kernel, H, W);
        kernel_ = k;
        transfer_.resize(c_);
        for (int c = 0; c < c_; ++c) transfer_[c] = fft_->forward_channel(k, c);
    }

    int height() const { return h_; }
    int width() const { return w_; }
    int channels() const { return c_; }
    const Tensor& kernel() const { return kernel_; }
    const std::vector<Spectrum>& transfer() const { return transfer_; }
    const Fft2D& fft() const { return *fft_; }

    void check_dims(const Tensor& x) const {
        if (x.height() != h_ || x.width() != w_ || x.channels() != c_)
            throw ConfigError("tensor dims do not match operator");
    }

    Tensor apply(const Tensor& x) const {
        check_dims(x);
        return spectral_multiply(x, [this](int c, size_t k) { return transfer_[c][k]; });
    }

    Tensor adjoint(const Tensor& y) const {
        check_dims(y);
        return spectral_multiply(y, [this](int c, size_t k) { return std::conj(transfer_[c][k]); });
    }

    template <class GainFn>
    Tensor spectral_multiply(const Tensor& x, GainFn gain) const {
        Tensor out(h_, w_, c_);
        for (int c = 0; c < c_; ++c) {
            Spectrum s = fft_->forward_channel(x, c);
            for (size_t k = 0; k < s.size(); ++k) s[k] *= gain(c, k);
            fft_->inverse_channel(s, out, c);
        }
        return out;
    }

private:
    int h_, w_, c_;
    std::shared_ptr<Fft2D> fft_;
    Tensor kernel_;
    std::vector<Spectrum> transfer_;
};

// Pseudo-inverse gains for a ConvolutionOperator. Spectral mode zeroes bins
// below the threshold (exact Moore-Penrose on the circulant); wiener mode is
// the usual regularized approximation.
class PseudoInverse {
public:
    PseudoInverse(const ConvolutionOperator& op, const PinvConfig& cfg)
        : cfg_(cfg) {
        if (cfg.mode == PinvMode::wiener && cfg.lambda_w <= 0.0)
            throw ConfigError("wiener lambda_w must be positive");
        if (cfg.mode == PinvMode::spectral && cfg.eps_rel <= 0.0)
            throw ConfigError("spectral eps must be positive");
        gains_.resize(op.channels());
        range_mask_.resize(op.channels());
        for (int c = 0; c < op.channels(); ++c) {
            const Spectrum& H = op.transfer()[c];
            double hmax = 0;
            for (const auto& v : H) hmax = std::max(hmax, std::abs(v));
            double eps = cfg.eps_rel * hmax;
            gains_[c].resize(H.size());
            range_mask_[c].assign(H.size(), 1);
            for (size_t k = 0; k < H.size(); ++k) {
                double m2 = std::norm(H[k]);
                if (cfg.mode == PinvMode::spectral) {
                    if (std::abs(H[k]) > eps) {
                        gains_[c][k] = std::conj(H[k]) / m2;
                    } else {
                        gains_[c][k] = 0.0;
                        range_mask_[c][k] = 0;
                    }
                } else {
                    gains_[c][k] = std::conj(H[k]) / (m2 + cfg.lambda_w);
                }
            }
        }
    }

    const PinvConfig& config() const { return cfg_; }

    Tensor apply(const ConvolutionOperator& op, const Tensor& y) const {
        op.check_dims(y);
        return op.spectral_multiply(y, [this](int c, size_t k) { return gains_[c][k]; });
    }

    // Projector onto range(A) = A A† (spectral: exact 0/1 bin mask).
    Tensor range_project(const ConvolutionOperator& op, const Tensor& x) const {
        require_projectable();
        if (cfg_.mode == PinvMode::spectral)
            return op.spectral_multiply(x, [this](int c, size_t k) {
                return std::complex<double>(range_mask_[c][k] ? 1.0 : 0.0, 0.0);
            });
        return op.spectral_multiply(x, [this, &op](int c, size_t k) {
            return op.transfer()[c][k] * gains_[c][k];
        });
    }

    // Projector onto null(A) = I - A† A.
    Tensor null_project(const ConvolutionOperator& op, const Tensor& x) const {
        require_projectable();
        if (cfg_.mode == PinvMode::spectral)
            return op.spectral_multiply(x, [this](int c, size_t k) {
                return std::complex<double>(range_mask_[c][k] ? 0.0 : 1.0, 0.0);
            });
        return op.spectral_multiply(x, [this, &op](int c, size_t k) {
            return std::complex<double>(1.0, 0.0) - gains_[c][k] * op.transfer()[c][k];
        });
    }

    // RMS amplification of white measurement noise through A†: white noise of
    // std s in y becomes per-pixel std s*rms_gain() in A†y. Used to map a
    // measurement-domain sigma_y onto the x0 domain when requested.
    double rms_gain() const {
        double acc = 0.0;
        size_t n = 0;
        for (const auto& g : gains_) {
            for (const auto& v : g) acc += std::norm(v);
            n += g.size();
        }
        return std::sqrt(acc / (double)n);
    }

    // Count of zeroed DFT bins (null-space dimension per channel, spectral mode).
    size_t null_bin_count(int c) const {
        size_t n = 0;
        for (char m : range_mask_[c])
            if (!m) ++n;
        return n;
    }

private:
    void require_projectable() const {
        if (cfg_.mode == PinvMode::wiener && !cfg_.approximate_projectors)
            throw ConfigError("projectors with wiener pseudo-inverse require the "
                              "approximate-projectors flag");
    }

    PinvConfig cfg_;
    std::vector<Spectrum> gains_;
    std::vector<std::vector<char>> range_mask_;
};

// Measurement synthesis: y = A x + noise, sigma >= 0.
inline Tensor gaussian_noise(SeededRng& rng, int H, int W, int C, double sigma) {
    if (H <= 0 || W <= 0 || C <= 0) throw ConfigError("noise dims must be positive");
    if (sigma < 0) throw ConfigError("noise sigma must be nonnegative");
    Tensor n(H, W, C);
    if (sigma > 0)
        for (size_t k = 0; k < n.size(); ++k) n[k] = rng.normal() * sigma;
    return n;
}

inline Tensor simulate_measurement(const ConvolutionOperator& op, const Tensor& scene,
                                   double noise_sigma, SeededRng& rng) {
    Tensor y = op.apply(scene);
    if (noise_sigma > 0) {
        Tensor n = gaussian_noise(rng, y.height(), y.width(), y.channels(), noise_sigma);
        y += n;
    }
    return y;
}

} // namespace lensless
