#pragma once

#include <complex>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "lensless/tensor.hpp"

namespace lensless {

using Spectrum = std::vector<std::complex<double>>; // H*W bins, row-major

namespace detail {
// FFTW's planner is not thread-safe; plan creation/destruction is serialized.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}
} // namespace detail

// Complex 2D FFT plans for a fixed (H, W). Plans are created once and executed
// on caller-provided buffers (new-array execute), so a const Fft2D is safe to
// share across threads.
class Fft2D {
public:
    Fft2D(int h, int w) : h_(h), w_(w) {
        std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
        // plans must be out-of-place: they are executed on distinct new arrays
        scratch_in_ = fftw_alloc_complex((size_t)h * w);
        scratch_out_ = fftw_alloc_complex((size_t)h * w);
        fwd_ = fftw_plan_dft_2d(h, w, scratch_in_, scratch_out_, FFTW_FORWARD,
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
        bwd_ = fftw_plan_dft_2d(h, w, scratch_in_, scratch_out_, FFTW_BACKWARD,
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    ~Fft2D() {
        std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(scratch_in_);
        fftw_free(scratch_out_);
    }
    Fft2D(const Fft2D&) = delete;
    Fft2D& operator=(const Fft2D&) = delete;

    int height() const { return h_; }
    int width() const { return w_; }
    size_t bins() const { return (size_t)h_ * w_; }

    // Forward DFT of one channel plane of x (no normalization).
    Spectrum forward_channel(const Tensor& x, int c) const {
        std::vector<std::complex<double>> buf(bins());
        for (int i = 0; i < h_; ++i)
            for (int j = 0; j < w_; ++j)
                buf[(size_t)i * w_ + j] = {x(i, j, c), 0.0};
        Spectrum out(bins());
        fftw_execute_dft(fwd_, reinterpret_cast<fftw_complex*>(buf.data()),
                         reinterpret_cast<fftw_complex*>(out.data()));
        return out;
    }

    // Inverse DFT into channel c of x (normalized by 1/(H*W), real part).
    void inverse_channel(const Spectrum& s, Tensor& x, int c) const {
        std::vector<std::complex<double>> out(bins());
        std::vector<std::complex<double>> in(s);
        fftw_execute_dft(bwd_, reinterpret_cast<fftw_complex*>(in.data()),
                         reinterpret_cast<fftw_complex*>(out.data()));
        double inv = 1.0 / (double)bins();
        for (int i = 0; i < h_; ++i)
            for (int j = 0; j < w_; ++j)
                x(i, j, c) = out[(size_t)i * w_ + j].real() * inv;
    }

private:
    int h_, w_;
    fftw_complex* scratch_in_;
    fftw_complex* scratch_out_;
    fftw_plan fwd_, bwd_;
};

} // namespace lensless
