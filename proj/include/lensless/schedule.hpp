#pragma once

#include <cmath>
#include <vector>

#include "lensless/errors.hpp"

namespace lensless {

// Discrete DDPM schedule. Arrays are indexed 0..T; index 0 is the sentinel
// alpha_bar[0] = 1 (no noise), beta[0]/alpha[0] are unused. With that sentinel
// the usual identities give a[1] = 1, c[1] = 0 and step_sigma[1] = 0, so the
// final sampling step is deterministic.
//
// Two noise scales live here and they are different quantities:
//   sigma[t]      = sqrt(1 - alpha_bar[t]), the total forward-noising scale at
//                   step t; used to condition the learned denoiser.
//   step_sigma[t] = sqrt((1 - alpha_bar[t-1])/(1 - alpha_bar[t]) * beta[t]),
//                   the ancestral (posterior) noise scale of one reverse step;
//                   used for sampling noise and for the noise-matching algebra
//                   of the relaxed range correction.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta, alpha, alpha_bar, sigma, step_sigma, a, c;

    // posterior mean coefficients: mu_t = a[t] * x0_hat + c[t] * x_t
    double posterior_a(int t) const { return a[t]; }
    double posterior_c(int t) const { return c[t]; }
};

inline NoiseSchedule make_schedule(int T, double beta_min = 1e-4, double beta_max = 0.02) {
    if (T < 1) throw ConfigError("schedule T must be >= 1");
    if (!(0.0 < beta_min && beta_min <= beta_max && beta_max < 1.0))
        throw ConfigError("require 0 < beta_min <= beta_max < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.assign(T + 1, 0.0);
    s.alpha.assign(T + 1, 1.0);
    s.alpha_bar.assign(T + 1, 1.0);
    s.sigma.assign(T + 1, 0.0);
    s.step_sigma.assign(T + 1, 0.0);
    s.a.assign(T + 1, 0.0);
    s.c.assign(T + 1, 0.0);
    for (int t = 1; t <= T; ++t) {
        double b = T == 1 ? beta_min
                          : beta_min + (beta_max - beta_min) * (double)(t - 1) / (double)(T - 1);
        s.beta[t] = b;
        s.alpha[t] = 1.0 - b;
        s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
        if (s.alpha_bar[t] >= s.alpha_bar[t - 1])
            throw NumericError("alpha_bar must be strictly decreasing");
        s.sigma[t] = std::sqrt(1.0 - s.alpha_bar[t]);
        double om = 1.0 - s.alpha_bar[t];
        s.a[t] = std::sqrt(s.alpha_bar[t - 1]) * b / om;
        s.c[t] = std::sqrt(s.alpha[t]) * (1.0 - s.alpha_bar[t - 1]) / om;
        s.step_sigma[t] = std::sqrt((1.0 - s.alpha_bar[t - 1]) * b / om);
    }
    return s;
}

} // namespace lensless
