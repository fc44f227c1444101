#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

#include "lensless/errors.hpp"

namespace lensless {

// Dense H x W x C image tensor, row-major with channel fastest, float64 storage.
// Index: (i, j, c) -> ((i * w + j) * ch + c).
class Tensor {
public:
    Tensor() = default;
    Tensor(int h, int w, int c, double fill = 0.0)
        : h_(h), w_(w), c_(c), data_((size_t)h * w * c, fill) {
        if (h <= 0 || w <= 0 || c <= 0)
            throw ConfigError("tensor dims must be positive");
    }

    int height() const { return h_; }
    int width() const { return w_; }
    int channels() const { return c_; }
    size_t size() const { return data_.size(); }

    double& operator()(int i, int j, int c) {
        return data_[((size_t)i * w_ + j) * c_ + c];
    }
    const double& operator()(int i, int j, int c) const {
        return data_[((size_t)i * w_ + j) * c_ + c];
    }
    double& operator[](size_t k) { return data_[k]; }
    double operator[](size_t k) const { return data_[k]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_shape(const Tensor& o) const {
        return h_ == o.h_ && w_ == o.w_ && c_ == o.c_;
    }

    Tensor& operator+=(const Tensor& o) {
        assert(same_shape(o));
        for (size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        assert(same_shape(o));
        for (size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
        return *this;
    }
    Tensor& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend Tensor operator+(Tensor a, const Tensor& b) { a += b; return a; }
    friend Tensor operator-(Tensor a, const Tensor& b) { a -= b; return a; }
    friend Tensor operator*(Tensor a, double s) { a *= s; return a; }
    friend Tensor operator*(double s, Tensor a) { a *= s; return a; }

private:
    int h_ = 0, w_ = 0, c_ = 0;
    std::vector<double> data_;
};

inline double dot(const Tensor& a, const Tensor& b) {
    assert(a.same_shape(b));
    double s = 0;
    for (size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

inline double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

inline double max_abs(const Tensor& a) {
    double m = 0;
    for (size_t k = 0; k < a.size(); ++k) m = std::max(m, std::fabs(a[k]));
    return m;
}

inline Tensor clamp01(Tensor x) {
    for (size_t k = 0; k < x.size(); ++k)
        x[k] = x[k] < 0.0 ? 0.0 : (x[k] > 1.0 ? 1.0 : x[k]);
    return x;
}

inline Tensor clamp_nonneg(Tensor x) {
    for (size_t k = 0; k < x.size(); ++k)
        if (x[k] < 0.0) x[k] = 0.0;
    return x;
}

// Channel-concatenate a and b (same H, W).
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    assert(a.height() == b.height() && a.width() == b.width());
    Tensor out(a.height(), a.width(), a.channels() + b.channels());
    for (int i = 0; i < a.height(); ++i)
        for (int j = 0; j < a.width(); ++j) {
            for (int c = 0; c < a.channels(); ++c) out(i, j, c) = a(i, j, c);
            for (int c = 0; c < b.channels(); ++c) out(i, j, a.channels() + c) = b(i, j, c);
        }
    return out;
}

} // namespace lensless
