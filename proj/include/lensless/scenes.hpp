#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lensless/rng.hpp"
#include "lensless/tensor.hpp"

namespace lensless {

enum class SceneKind { piecewise_constant, smooth_gradients, sparse_dots, checkerboard };

inline SceneKind scene_kind_from_string(const std::string& s) {
    if (s == "piecewise_constant") return SceneKind::piecewise_constant;
    if (s == "smooth_gradients") return SceneKind::smooth_gradients;
    if (s == "sparse_dots") return SceneKind::sparse_dots;
    if (s == "checkerboard") return SceneKind::checkerboard;
    throw ConfigError("unknown scene kind: " + s);
}

struct SceneParams {
    double dot_density = 0.05; // sparse_dots
};

inline Tensor make_scene(SceneKind kind, SeededRng& rng, int H, int W, int C,
                         const SceneParams& p = {}) {
    Tensor x(H, W, C);
    switch (kind) {
    case SceneKind::piecewise_constant: {
        int nrect = rng.uniform_int(2, 4);
        for (int c = 0; c < C; ++c)
            for (int r = 0; r < nrect; ++r) {
                int h = rng.uniform_int(H / 4, (3 * H) / 4);
                int w = rng.uniform_int(W / 4, (3 * W) / 4);
                int i0 = rng.uniform_int(0, H - 2);
                int j0 = rng.uniform_int(0, W - 2);
                double v = rng.uniform();
                for (int i = i0; i < std::min(i0 + h, H); ++i)
                    for (int j = j0; j < std::min(j0 + w, W); ++j) x(i, j, c) = v;
            }
        break;
    }
    case SceneKind::smooth_gradients: {
        for (int c = 0; c < C; ++c) {
            double fx = rng.uniform() * 2.0, fy = rng.uniform() * 2.0;
            double ph = rng.uniform() * 2.0 * M_PI;
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    double v = 0.5 + 0.5 * std::sin(2.0 * M_PI * (fx * i / H + fy * j / W) + ph);
                    x(i, j, c) = v;
                }
        }
        break;
    }
    case SceneKind::sparse_dots: {
        if (p.dot_density < 0 || p.dot_density > 1)
            throw ConfigError("dot density must be in [0,1]");
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j)
                    if (rng.uniform() < p.dot_density) x(i, j, c) = 0.2 + 0.8 * rng.uniform();
        break;
    }
    case SceneKind::checkerboard: {
        int cell = rng.uniform_int(2, 4);
        int pi = rng.uniform_int(0, cell - 1), pj = rng.uniform_int(0, cell - 1);
        double lo = 0.2 * rng.uniform(), hi = 0.8 + 0.2 * rng.uniform();
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    bool on = (((i + pi) / cell) + ((j + pj) / cell)) % 2 == 0;
                    x(i, j, c) = on ? hi : lo;
                }
        break;
    }
    }
    return clamp01(std::move(x));
}

inline std::vector<Tensor> synth_scenes(SceneKind kind, int n, SeededRng& rng, int H, int W,
                                        int C, const SceneParams& p = {}) {
    if (n < 1) throw ConfigError("scene count must be >= 1");
    std::vector<Tensor> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        SeededRng child = rng.derive("scene", (uint64_t)i);
        out.push_back(make_scene(kind, child, H, W, C, p));
    }
    return out;
}

} // namespace lensless
