#pragma once

#include <cmath>
#include <string>

#include "lensless/errors.hpp"
#include "lensless/rng.hpp"
#include "lensless/tensor.hpp"

namespace lensless {

// Point spread function: nonnegative kernel, optionally normalized so each
// channel sums to one.
struct Psf {
    Tensor kernel;
    bool normalized = false;

    static Psf from_kernel(Tensor k, bool normalize) {
        for (size_t i = 0; i < k.size(); ++i)
            if (k[i] < 0.0) throw ConfigError("PSF entries must be nonnegative");
        if (normalize) {
            for (int c = 0; c < k.channels(); ++c) {
                double s = 0;
                for (int i = 0; i < k.height(); ++i)
                    for (int j = 0; j < k.width(); ++j) s += k(i, j, c);
                if (s <= 0.0) throw ConfigError("PSF channel sums to zero, cannot normalize");
                for (int i = 0; i < k.height(); ++i)
                    for (int j = 0; j < k.width(); ++j) k(i, j, c) /= s;
            }
        }
        return Psf{std::move(k), normalize};
    }
};

// Circular shift so the kernel centroid lands at index (0,0). Centroid is the
// intensity-weighted mean position over all channels, rounded to the nearest
// pixel.
inline Tensor center_kernel(const Tensor& k) {
    double total = 0, ci = 0, cj = 0;
    for (int i = 0; i < k.height(); ++i)
        for (int j = 0; j < k.width(); ++j)
            for (int c = 0; c < k.channels(); ++c) {
                double v = k(i, j, c);
                total += v;
                ci += v * i;
                cj += v * j;
            }
    int si = 0, sj = 0;
    if (total > 0) {
        si = (int)std::lround(ci / total);
        sj = (int)std::lround(cj / total);
    }
    Tensor out(k.height(), k.width(), k.channels());
    for (int i = 0; i < k.height(); ++i)
        for (int j = 0; j < k.width(); ++j)
            for (int c = 0; c < k.channels(); ++c) {
                int ii = ((i - si) % k.height() + k.height()) % k.height();
                int jj = ((j - sj) % k.width() + k.width()) % k.width();
                out(ii, jj, c) = k(i, j, c);
            }
    return out;
}

// Pad a smaller kernel into (H, W) with the kernel's top-left at (0,0), then
// centroid-center it. Kernel larger than the image is a dimension error.
inline Tensor pad_kernel(const Tensor& k, int H, int W) {
    if (k.height() > H || k.width() > W)
        throw ConfigError("PSF kernel larger than image dims");
    if (k.height() == H && k.width() == W) return center_kernel(k);
    Tensor padded(H, W, k.channels());
    for (int i = 0; i < k.height(); ++i)
        for (int j = 0; j < k.width(); ++j)
            for (int c = 0; c < k.channels(); ++c)
                padded(i, j, c) = k(i, j, c);
    return center_kernel(padded);
}

enum class MaskKind { random_binary, radial_rings, gaussian_blob };

inline MaskKind mask_kind_from_string(const std::string& s) {
    if (s == "random_binary") return MaskKind::random_binary;
    if (s == "radial_rings") return MaskKind::radial_rings;
    if (s == "gaussian_blob") return MaskKind::gaussian_blob;
    throw ConfigError("unknown PSF kind: " + s);
}

struct MaskParams {
    double fill = 0.5;      // random_binary: fraction of open pixels
    double ring_period = 4; // radial_rings: radial period in pixels
    double width = 1.5;     // gaussian_blob: standard deviation in pixels
};

// Synthetic coded-mask PSFs, normalized per channel.
inline Psf synth_mask_psf(MaskKind kind, SeededRng& rng, int H, int W, int C,
                          const MaskParams& p = {}) {
    Tensor k(H, W, C);
    switch (kind) {
    case MaskKind::random_binary: {
        if (p.fill <= 0.0 || p.fill > 1.0)
            throw ConfigError("random_binary fill must be in (0,1]");
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j)
                    k(i, j, c) = rng.uniform() < p.fill ? 1.0 : 0.0;
        // guarantee at least one open pixel per channel
        for (int c = 0; c < C; ++c) {
            double s = 0;
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) s += k(i, j, c);
            if (s == 0.0) k(H / 2, W / 2, c) = 1.0;
        }
        break;
    }
    case MaskKind::radial_rings: {
        if (p.ring_period <= 0.0) throw ConfigError("ring_period must be positive");
        double ci = (H - 1) / 2.0, cj = (W - 1) / 2.0;
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    double r = std::sqrt((i - ci) * (i - ci) + (j - cj) * (j - cj));
                    k(i, j, c) = 0.5 * (1.0 + std::cos(2.0 * M_PI * r / p.ring_period));
                }
        break;
    }
    case MaskKind::gaussian_blob: {
        if (p.width <= 0.0) throw ConfigError("gaussian width must be positive");
        double ci = (H - 1) / 2.0, cj = (W - 1) / 2.0;
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    double d2 = (i - ci) * (i - ci) + (j - cj) * (j - cj);
                    k(i, j, c) = std::exp(-d2 / (2.0 * p.width * p.width));
                }
        break;
    }
    }
    return Psf::from_kernel(std::move(k), true);
}

} // namespace lensless
