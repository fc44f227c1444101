#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lensless/operator.hpp"
#include "lensless/prior.hpp"
#include "lensless/rng.hpp"
#include "lensless/schedule.hpp"
#include "lensless/tensor.hpp"

namespace lensless {

struct GuidanceRecord {
    int t;
    double residual; // ||A x0_corrected - y||_2 at this step (DPS: at x0_hat)
    double lambda_t;
    double phi_t;
};

using GuidanceTrace = std::vector<GuidanceRecord>;

// One reverse step: x_{t-1} = a_t * x0_hat + c_t * x_t + sqrt(phi) * eps.
// phi < 0 is a parameter error; noise is drawn only when phi > 0, so a
// phi == 0 step is deterministic.
inline Tensor ancestral_step(const NoiseSchedule& s, const Tensor& xt, const Tensor& x0,
                             int t, SeededRng& rng, double phi) {
    if (phi < 0) throw ConfigError("ancestral step variance must be nonnegative");
    if (t < 1 || t > s.T) throw ConfigError("step index out of range");
    Tensor out = x0 * s.a[t] + xt * s.c[t];
    if (phi > 0) {
        double sd = std::sqrt(phi);
        for (size_t k = 0; k < out.size(); ++k) out[k] += sd * rng.normal();
    }
    return out;
}

// Default reverse-step variance (the DDPM posterior variance).
inline double default_step_variance(const NoiseSchedule& s, int t) {
    return s.step_sigma[t] * s.step_sigma[t];
}

// Noise-matched gain pair for the relaxed range correction:
//   lambda = 1                 if sigma_t >= a_t*sigma_y (incl. a_t*sigma_y == 0)
//   lambda = sigma_t/(a_t*sigma_y)  otherwise
//   phi    = sigma_t^2 - (a_t*lambda*sigma_y)^2   (0 exactly in the second branch)
struct DdnmGain {
    double lambda;
    double phi;
};

inline DdnmGain ddnm_gain(double sigma_t, double a_t, double sigma_y) {
    double ay = a_t * sigma_y;
    if (sigma_t >= ay) return {1.0, sigma_t * sigma_t - ay * ay};
    // lambda cancels the correction noise term, so phi vanishes identically;
    // substituting it back numerically would leave roundoff, so pin the zero
    return {sigma_t / ay, 0.0};
}

// Exact range-space replacement: x0' = A+ y + (I - A+ A) x0.
// Implemented as the sigma_y = 0 case of the relaxed correction so exact and
// relaxed modes share one code path (their trajectories must agree bit-for-bit
// at sigma_y = 0).
inline Tensor ddnm_correct(const PseudoInverse& pinv, const ConvolutionOperator& op,
                           const Tensor& x0, const Tensor& y, double lambda) {
    Tensor r = op.apply(x0);
    r -= y;
    Tensor corr = pinv.apply(op, r);
    return x0 - corr * lambda;
}

inline Tensor ddnm_update(const PseudoInverse& pinv, const ConvolutionOperator& op,
                          const Tensor& x0, const Tensor& y) {
    return ddnm_correct(pinv, op, x0, y, 1.0);
}

struct DdnmPlusResult {
    Tensor x0_corrected;
    double lambda;
    double phi;
};

inline DdnmPlusResult ddnm_plus_update(const PseudoInverse& pinv, const ConvolutionOperator& op,
                                       const NoiseSchedule& s, const Tensor& x0, const Tensor& y,
                                       int t, double sigma_y) {
    if (sigma_y < 0) throw ConfigError("sigma_y must be nonnegative");
    DdnmGain g = ddnm_gain(s.step_sigma[t], s.a[t], sigma_y);
    return {ddnm_correct(pinv, op, x0, y, g.lambda), g.lambda, g.phi};
}

enum class DdnmMode { exact, relaxed };

struct DdnmConfig {
    double sigma_y = 0.6;
    DdnmMode mode = DdnmMode::relaxed;
    int steps = 0; // 0: use schedule T
};

struct DpsConfig {
    double zeta = 0.3;
    int steps = 0;
    bool stop_gradient = false; // replace the prior Jacobian by (1/sqrt(ab)) I
};

struct SampleResult {
    Tensor x;
    GuidanceTrace trace;
};

inline Tensor draw_initial_noise(const NoiseSchedule&, int H, int W, int C, SeededRng& rng) {
    Tensor x(H, W, C);
    for (size_t k = 0; k < x.size(); ++k) x[k] = rng.normal();
    return x;
}

// Unconditional ancestral sampling from the prior.
inline Tensor sample_unconditional(const ConvolutionOperator& op, DenoiserPrior& prior,
                                   const NoiseSchedule& s, SeededRng& rng) {
    Tensor x = draw_initial_noise(s, op.height(), op.width(), op.channels(), rng);
    for (int t = s.T; t >= 1; --t) {
        Tensor x0 = prior.posterior_mean(s, x, t);
        x = ancestral_step(s, x, x0, t, rng, default_step_variance(s, t));
    }
    return x;
}

// Range-null guided sampling (exact or noise-relaxed). Exact mode runs the
// relaxed kernel with sigma_y = 0, which reduces lambda to 1 and phi to the
// default step variance.
inline SampleResult ddnm_reconstruct(const ConvolutionOperator& op, const PseudoInverse& pinv,
                                     DenoiserPrior& prior, const NoiseSchedule& s, const Tensor& y,
                                     const DdnmConfig& cfg, SeededRng& rng) {
    op.check_dims(y);
    double sigma_y = cfg.mode == DdnmMode::exact ? 0.0 : cfg.sigma_y;
    Tensor x = draw_initial_noise(s, op.height(), op.width(), op.channels(), rng);
    GuidanceTrace trace;
    trace.reserve(s.T);
    for (int t = s.T; t >= 1; --t) {
        Tensor x0 = prior.posterior_mean(s, x, t);
        DdnmPlusResult u = ddnm_plus_update(pinv, op, s, x0, y, t, sigma_y);
        Tensor diff = op.apply(u.x0_corrected);
        diff -= y;
        trace.push_back({t, norm2(diff), u.lambda, u.phi});
        x = ancestral_step(s, x, u.x0_corrected, t, rng, u.phi);
    }
    return {std::move(x), std::move(trace)};
}

// Likelihood-gradient guided sampling: per step, form x0_hat, take the
// ancestral step, then subtract zeta * grad_{x_t} ||y - A x0_hat(x_t)||^2.
inline SampleResult dps_reconstruct(const ConvolutionOperator& op, const PseudoInverse&,
                                    DenoiserPrior& prior, const NoiseSchedule& s, const Tensor& y,
                                    const DpsConfig& cfg, SeededRng& rng) {
    op.check_dims(y);
    if (cfg.zeta < 0) throw ConfigError("zeta must be nonnegative");
    Tensor x = draw_initial_noise(s, op.height(), op.width(), op.channels(), rng);
    GuidanceTrace trace;
    trace.reserve(s.T);
    for (int t = s.T; t >= 1; --t) {
        Tensor x0 = prior.posterior_mean(s, x, t);
        Tensor r = op.apply(x0);
        r -= y;
        double res = norm2(r);
        double phi = default_step_variance(s, t);
        Tensor xnext = ancestral_step(s, x, x0, t, rng, phi);
        if (cfg.zeta > 0) {
            Tensor cot = op.adjoint(r) * 2.0;
            Tensor g = cfg.stop_gradient ? cot * (1.0 / std::sqrt(s.alpha_bar[t]))
                                         : prior.vjp(cot);
            for (size_t k = 0; k < g.size(); ++k) {
                if (std::isnan(g[k]))
                    throw NumericError("NaN in guidance gradient at step " + std::to_string(t));
            }
            xnext -= g * cfg.zeta;
        }
        trace.push_back({t, res, 0.0, phi});
        x = std::move(xnext);
    }
    return {std::move(x), std::move(trace)};
}

// Exact gradient of ||y - A x0_hat(x_t)||^2 w.r.t. x_t at the given x_t;
// exposed separately so tests can compare it against finite differences.
inline Tensor dps_gradient(const ConvolutionOperator& op, DenoiserPrior& prior,
                           const NoiseSchedule& s, const Tensor& xt, const Tensor& y, int t) {
    Tensor x0 = prior.posterior_mean(s, xt, t);
    Tensor r = op.apply(x0);
    r -= y;
    return prior.vjp(op.adjoint(r) * 2.0);
}

} // namespace lensless
