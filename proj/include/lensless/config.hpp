#pragma once

// Experiment configuration: one JSON file fully determines a run (scenes,
// psf, noise, solvers, metrics, seeds, output locations).

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "lensless/errors.hpp"
#include "lensless/io.hpp"
#include "lensless/operator.hpp"
#include "lensless/psf.hpp"
#include "lensless/rng.hpp"
#include "lensless/scenes.hpp"
#include "lensless/solvers.hpp"
#include "lensless/tensor.hpp"

namespace lensless {

struct ImageSpec {
    int height = 16, width = 16, channels = 1;
};

struct SceneSpec {
    SceneKind kind = SceneKind::piecewise_constant;
    int count = 20;
    SceneParams params;
};

struct PsfSpec {
    std::string file;                        // TensorFile kernel; overrides synthesis
    MaskKind kind = MaskKind::random_binary; // synthetic mask
    MaskParams params;
    int height = 0, width = 0; // 0: use image dims
    int blur = 0;              // 3x3 box-blur passes applied to the mask
};

struct ScheduleSpec {
    int steps = 100;
    double beta_min = 1e-4, beta_max = 0.02;
};

// sigma_y scale: "raw" uses the value as-is (the sweep convention);
// "pinv_gain" multiplies by the pseudo-inverse RMS noise gain, mapping a
// measurement-domain sigma onto the x0 domain.
inline double scaled_sigma_y(double sigma_y, const std::string& scale,
                             const PseudoInverse& pinv) {
    if (scale == "raw") return sigma_y;
    if (scale == "pinv_gain") return sigma_y * pinv.rms_gain();
    throw ConfigError("sigma_y_scale must be raw or pinv_gain, got " + scale);
}

struct SolverSpec {
    std::string name; // wiener | admm | dps | ddnm | ddnm+ | student
    double lambda_w = 1e-2;
    AdmmConfig admm;
    double zeta = 0.3;
    bool stop_gradient = false;
    double sigma_y = 0.6;
    std::string sigma_y_scale = "raw";
    int steps = 0; // 0: schedule default
    std::string checkpoint = "student";
};

struct DenoiserSpec {
    std::string checkpoint = "denoiser";
    int epochs = 60;
    int batch = 8;
    double lr = 1e-3;
};

struct DistillSpec {
    std::string cache_root = "cache";
    double sigma_y = 0.6;
    std::string sigma_y_scale = "raw";
    int epochs = 40;
    int batch = 8;
    double lr = 1e-3;
    std::string t_fix = "high";
    bool project_null = false;
    std::string student_checkpoint = "student";
};

struct SweepSpec {
    std::string solver; // solver name the axis belongs to
    std::string param;  // zeta (dps) or sigma_y (ddnm+)
    int points = 5;
    double lo = 0.0, hi = 1.0;
};

struct ExperimentConfig {
    uint64_t seed = 42;
    std::string output_dir = "out";
    ImageSpec image;
    SceneSpec scenes;
    PsfSpec psf;
    double noise_sigma = 0.01;
    PinvConfig pinv;
    ScheduleSpec schedule;
    std::vector<SolverSpec> solvers;
    std::vector<std::string> metrics{"mse", "psnr", "ssim", "residual"};
    DenoiserSpec denoiser;
    DistillSpec distill;
    SweepSpec sweep;
    int workers = 0;
    nlohmann::json raw; // verbatim config, echoed into run manifests
};

namespace detail {

template <class T>
inline T get_or(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config value for '") + key + "': " + e.what());
    }
}

} // namespace detail

inline PinvConfig parse_pinv(const nlohmann::json& j) {
    PinvConfig p;
    std::string mode = detail::get_or<std::string>(j, "mode", "wiener");
    if (mode == "spectral")
        p.mode = PinvMode::spectral;
    else if (mode == "wiener")
        p.mode = PinvMode::wiener;
    else
        throw ConfigError("pinv mode must be spectral or wiener, got " + mode);
    p.eps_rel = detail::get_or<double>(j, "eps_rel", p.eps_rel);
    p.lambda_w = detail::get_or<double>(j, "lambda_w", p.lambda_w);
    p.approximate_projectors =
        detail::get_or<bool>(j, "approximate_projectors", p.approximate_projectors);
    return p;
}

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    ExperimentConfig c;
    c.raw = j;
    c.seed = detail::get_or<uint64_t>(j, "seed", c.seed);
    c.output_dir = detail::get_or<std::string>(j, "output_dir", c.output_dir);
    c.workers = detail::get_or<int>(j, "workers", c.workers);
    c.noise_sigma = detail::get_or<double>(j, "noise_sigma", c.noise_sigma);
    if (c.noise_sigma < 0) throw ConfigError("noise_sigma must be nonnegative");

    if (j.contains("image")) {
        const auto& ji = j.at("image");
        c.image.height = detail::get_or<int>(ji, "height", c.image.height);
        c.image.width = detail::get_or<int>(ji, "width", c.image.width);
        c.image.channels = detail::get_or<int>(ji, "channels", c.image.channels);
        if (c.image.height < 1 || c.image.width < 1 || c.image.channels < 1)
            throw ConfigError("image dims must be positive");
    }
    if (j.contains("scenes")) {
        const auto& js = j.at("scenes");
        c.scenes.kind =
            scene_kind_from_string(detail::get_or<std::string>(js, "kind", "piecewise_constant"));
        c.scenes.count = detail::get_or<int>(js, "count", c.scenes.count);
        c.scenes.params.dot_density =
            detail::get_or<double>(js, "dot_density", c.scenes.params.dot_density);
        if (c.scenes.count < 1) throw ConfigError("scene count must be >= 1");
    }
    if (j.contains("psf")) {
        const auto& jp = j.at("psf");
        c.psf.file = detail::get_or<std::string>(jp, "file", "");
        c.psf.kind = mask_kind_from_string(
            detail::get_or<std::string>(jp, "kind", "random_binary"));
        c.psf.params.fill = detail::get_or<double>(jp, "fill", c.psf.params.fill);
        c.psf.params.ring_period =
            detail::get_or<double>(jp, "ring_period", c.psf.params.ring_period);
        c.psf.params.width = detail::get_or<double>(jp, "width", c.psf.params.width);
        c.psf.height = detail::get_or<int>(jp, "height", 0);
        c.psf.width = detail::get_or<int>(jp, "width", 0);
        c.psf.blur = detail::get_or<int>(jp, "blur", 0);
        if (c.psf.blur < 0) throw ConfigError("psf blur passes must be nonnegative");
    }
    if (j.contains("pinv")) c.pinv = parse_pinv(j.at("pinv"));
    if (j.contains("schedule")) {
        const auto& js = j.at("schedule");
        c.schedule.steps = detail::get_or<int>(js, "steps", c.schedule.steps);
        c.schedule.beta_min = detail::get_or<double>(js, "beta_min", c.schedule.beta_min);
        c.schedule.beta_max = detail::get_or<double>(js, "beta_max", c.schedule.beta_max);
    }
    if (j.contains("solvers")) {
        for (const auto& js : j.at("solvers")) {
            SolverSpec s;
            s.name = detail::get_or<std::string>(js, "name", "");
            if (s.name != "wiener" && s.name != "admm" && s.name != "dps" &&
                s.name != "ddnm" && s.name != "ddnm+" && s.name != "student")
                throw ConfigError("unknown solver: " + s.name);
            s.lambda_w = detail::get_or<double>(js, "lambda_w", s.lambda_w);
            s.admm.tau = detail::get_or<double>(js, "tau", s.admm.tau);
            s.admm.rho = detail::get_or<double>(js, "rho", s.admm.rho);
            s.admm.iters = detail::get_or<int>(js, "iters", s.admm.iters);
            s.admm.tol = detail::get_or<double>(js, "tol", s.admm.tol);
            s.zeta = detail::get_or<double>(js, "zeta", s.zeta);
            s.stop_gradient = detail::get_or<bool>(js, "stop_gradient", s.stop_gradient);
            s.sigma_y = detail::get_or<double>(js, "sigma_y", s.sigma_y);
            s.sigma_y_scale = detail::get_or<std::string>(js, "sigma_y_scale", s.sigma_y_scale);
            s.steps = detail::get_or<int>(js, "steps", s.steps);
            s.checkpoint = detail::get_or<std::string>(js, "checkpoint", s.checkpoint);
            c.solvers.push_back(std::move(s));
        }
    }
    if (j.contains("metrics")) c.metrics = j.at("metrics").get<std::vector<std::string>>();
    for (const auto& mname : c.metrics)
        if (mname != "mse" && mname != "psnr" && mname != "ssim" && mname != "residual")
            throw ConfigError("unknown metric: " + mname);
    if (j.contains("denoiser")) {
        const auto& jd = j.at("denoiser");
        c.denoiser.checkpoint = detail::get_or<std::string>(jd, "checkpoint", c.denoiser.checkpoint);
        c.denoiser.epochs = detail::get_or<int>(jd, "epochs", c.denoiser.epochs);
        c.denoiser.batch = detail::get_or<int>(jd, "batch", c.denoiser.batch);
        c.denoiser.lr = detail::get_or<double>(jd, "lr", c.denoiser.lr);
    }
    if (j.contains("distill")) {
        const auto& jd = j.at("distill");
        c.distill.cache_root = detail::get_or<std::string>(jd, "cache_root", c.distill.cache_root);
        c.distill.sigma_y = detail::get_or<double>(jd, "sigma_y", c.distill.sigma_y);
        c.distill.sigma_y_scale =
            detail::get_or<std::string>(jd, "sigma_y_scale", c.distill.sigma_y_scale);
        c.distill.epochs = detail::get_or<int>(jd, "epochs", c.distill.epochs);
        c.distill.batch = detail::get_or<int>(jd, "batch", c.distill.batch);
        c.distill.lr = detail::get_or<double>(jd, "lr", c.distill.lr);
        c.distill.t_fix = detail::get_or<std::string>(jd, "t_fix", c.distill.t_fix);
        c.distill.project_null = detail::get_or<bool>(jd, "project_null", c.distill.project_null);
        c.distill.student_checkpoint =
            detail::get_or<std::string>(jd, "student_checkpoint", c.distill.student_checkpoint);
    }
    if (j.contains("sweep")) {
        const auto& js = j.at("sweep");
        c.sweep.solver = detail::get_or<std::string>(js, "solver", "");
        c.sweep.param = detail::get_or<std::string>(js, "param", "");
        c.sweep.points = detail::get_or<int>(js, "points", c.sweep.points);
        c.sweep.lo = detail::get_or<double>(js, "min", c.sweep.lo);
        c.sweep.hi = detail::get_or<double>(js, "max", c.sweep.hi);
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return parse_config(j);
}

// Materializes the PSF for the configured image size. Synthetic masks draw
// from a derived child stream so scene and psf synthesis are independent.
inline Psf build_psf(const ExperimentConfig& c, const SeededRng& base) {
    if (!c.psf.file.empty())
        return Psf::from_kernel(read_tensor(c.psf.file), true);
    int H = c.psf.height > 0 ? c.psf.height : c.image.height;
    int W = c.psf.width > 0 ? c.psf.width : c.image.width;
    SeededRng rng = base.derive("psf");
    Psf p = synth_mask_psf(c.psf.kind, rng, H, W, c.image.channels, c.psf.params);
    for (int pass = 0; pass < c.psf.blur; ++pass) {
        Tensor& k = p.kernel;
        Tensor b(k.height(), k.width(), k.channels());
        for (int i = 0; i < k.height(); ++i)
            for (int j = 0; j < k.width(); ++j)
                for (int ch = 0; ch < k.channels(); ++ch) {
                    double s = 0;
                    for (int di = -1; di <= 1; ++di)
                        for (int dj = -1; dj <= 1; ++dj) {
                            int ii = (i + di + k.height()) % k.height();
                            int jj = (j + dj + k.width()) % k.width();
                            s += k(ii, jj, ch);
                        }
                    b(i, j, ch) = s / 9.0;
                }
        p.kernel = std::move(b);
    }
    return Psf::from_kernel(std::move(p.kernel), true);
}

inline std::vector<Tensor> build_scenes(const ExperimentConfig& c, const SeededRng& base) {
    SeededRng rng = base.derive("scenes");
    return synth_scenes(c.scenes.kind, c.scenes.count, rng, c.image.height, c.image.width,
                        c.image.channels, c.scenes.params);
}

} // namespace lensless
