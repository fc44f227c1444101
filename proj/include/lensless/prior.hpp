#pragma once

#include <cmath>
#include <memory>

#include "lensless/micro_net.hpp"
#include "lensless/schedule.hpp"
#include "lensless/tensor.hpp"

namespace lensless {

// Denoiser prior interface. Implementations provide the posterior-mean map
// x0_hat(x_t, t); score and posterior mean are interchangeable through
//   x0_hat = (x_t + (1 - alpha_bar_t) * score) / sqrt(alpha_bar_t).
// vjp() backpropagates a cotangent through the x0_hat map of the most recent
// posterior_mean() call (needed by likelihood-gradient guidance).
class DenoiserPrior {
public:
    virtual ~DenoiserPrior() = default;

    virtual Tensor posterior_mean(const NoiseSchedule& s, const Tensor& xt, int t) = 0;

    virtual Tensor score(const NoiseSchedule& s, const Tensor& xt, int t) {
        Tensor x0 = posterior_mean(s, xt, t);
        double ab = s.alpha_bar[t];
        Tensor out = x0;
        for (size_t k = 0; k < out.size(); ++k)
            out[k] = (std::sqrt(ab) * x0[k] - xt[k]) / (1.0 - ab);
        return out;
    }

    virtual Tensor vjp(const Tensor& cotangent) = 0;
};

// Isotropic Gaussian prior x0 ~ N(mu0, v0 I). Marginal at step t is
// N(sqrt(ab)*mu0, (ab*v0 + 1 - ab) I); conditional mean and its Jacobian are
// closed form, which makes every diffusion identity exactly checkable.
class GaussianPrior : public DenoiserPrior {
public:
    GaussianPrior(Tensor mu0, double v0) : mu0_(std::move(mu0)), v0_(v0) {
        if (v0 < 0) throw ConfigError("prior variance must be nonnegative");
    }

    Tensor posterior_mean(const NoiseSchedule& s, const Tensor& xt, int t) override {
        double ab = s.alpha_bar[t];
        double st = ab * v0_ + (1.0 - ab);
        double k = std::sqrt(ab) * v0_ / st;
        last_k_ = k;
        Tensor out = xt;
        for (size_t i = 0; i < out.size(); ++i)
            out[i] = k * xt[i] + (1.0 - ab) / st * mu0_[i];
        return out;
    }

    Tensor score(const NoiseSchedule& s, const Tensor& xt, int t) override {
        double ab = s.alpha_bar[t];
        double st = ab * v0_ + (1.0 - ab);
        Tensor out = xt;
        for (size_t i = 0; i < out.size(); ++i)
            out[i] = -(xt[i] - std::sqrt(ab) * mu0_[i]) / st;
        return out;
    }

    Tensor vjp(const Tensor& cotangent) override {
        return cotangent * last_k_;
    }

    double jacobian_scalar(const NoiseSchedule& s, int t) const {
        double ab = s.alpha_bar[t];
        return std::sqrt(ab) * v0_ / (ab * v0_ + (1.0 - ab));
    }

private:
    Tensor mu0_;
    double v0_;
    double last_k_ = 0.0;
};

// Learned denoiser: a micro-net mapping concat(x_t, per-pixel sigma_t plane)
// directly to the x0_hat prediction.
class LearnedDenoiser : public DenoiserPrior {
public:
    explicit LearnedDenoiser(Network net) : net_(std::move(net)) {}

    Network& network() { return net_; }

    Tensor posterior_mean(const NoiseSchedule& s, const Tensor& xt, int t) override {
        Tensor plane(xt.height(), xt.width(), 1, s.sigma[t]);
        channels_ = xt.channels();
        return net_.forward(concat_channels(xt, plane));
    }

    Tensor vjp(const Tensor& cotangent) override {
        net_.zero_grad();
        Tensor gin = net_.backward(cotangent);
        // drop the gradient of the sigma conditioning plane
        Tensor gx(gin.height(), gin.width(), channels_);
        for (int i = 0; i < gin.height(); ++i)
            for (int j = 0; j < gin.width(); ++j)
                for (int c = 0; c < channels_; ++c)
                    gx(i, j, c) = gin(i, j, c);
        return gx;
    }

private:
    Network net_;
    int channels_ = 1;
};

} // namespace lensless
