#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "lensless/fft.hpp"
#include "lensless/operator.hpp"
#include "lensless/psf.hpp"
#include "lensless/rng.hpp"
#include "oracles.hpp"

using namespace lensless;

static Tensor random_tensor(int H, int W, int C, SeededRng& rng) {
    Tensor t(H, W, C);
    for (size_t k = 0; k < t.size(); ++k) t[k] = rng.normal();
    return t;
}

// PSF whose transfer function has exactly known zeros: a 2-point kernel along
// one row gives H(u,v) ~ 1 + exp(-2 pi i v k / W), zero when the phase hits pi.
static Psf two_point_psf(int H, int W) {
    Tensor k(H, W, 1);
    k(0, 0, 0) = 0.5;
    k(0, W / 2, 0) = 0.5;
    return Psf::from_kernel(std::move(k), true);
}

TEST_CASE("fft matches the direct DFT and round-trips") {
    SeededRng rng(11);
    int H = 6, W = 5;
    Fft2D fft(H, W);
    Tensor x = random_tensor(H, W, 1, rng);
    Spectrum s = fft.forward_channel(x, 0);
    std::vector<double> flat(x.size());
    for (size_t k = 0; k < x.size(); ++k) flat[k] = x[k];
    auto ref = oracle::dft2(flat, H, W);
    REQUIRE(s.size() == ref.size());
    for (size_t k = 0; k < s.size(); ++k) {
        REQUIRE(s[k].real() == Catch::Approx(ref[k].real()).margin(1e-9));
        REQUIRE(s[k].imag() == Catch::Approx(ref[k].imag()).margin(1e-9));
    }
}

TEST_CASE("convolution matches brute-force circular convolution") {
    SeededRng rng(21);
    for (int trial = 0; trial < 3; ++trial) {
        int H = 7 + trial, W = 9 - trial, C = trial == 2 ? 2 : 1;
        Tensor kr(H, W, C);
        for (size_t k = 0; k < kr.size(); ++k) kr[k] = rng.uniform();
        Psf psf = Psf::from_kernel(kr, true);
        ConvolutionOperator op(psf, H, W);
        Tensor x = random_tensor(H, W, C, rng);
        Tensor got = op.apply(x);
        Tensor want = oracle::conv_brute(op.kernel(), x);
        for (size_t k = 0; k < got.size(); ++k)
            REQUIRE(got[k] == Catch::Approx(want[k]).margin(1e-10));
    }
}

TEST_CASE("delta psf is the identity operator") {
    Tensor k(8, 8, 1);
    k(0, 0, 0) = 1.0;
    ConvolutionOperator op(Psf::from_kernel(k, false), 8, 8);
    SeededRng rng(3);
    Tensor x = random_tensor(8, 8, 1, rng);
    Tensor y = op.apply(x);
    for (size_t i = 0; i < x.size(); ++i) REQUIRE(y[i] == Catch::Approx(x[i]).margin(1e-12));
}

TEST_CASE("adjoint test <A x, y> == <x, A* y>") {
    SeededRng rng(31);
    MaskParams mp;
    for (MaskKind kind :
         {MaskKind::random_binary, MaskKind::radial_rings, MaskKind::gaussian_blob}) {
        Psf psf = synth_mask_psf(kind, rng, 12, 12, 1, mp);
        ConvolutionOperator op(psf, 12, 12);
        Tensor x = random_tensor(12, 12, 1, rng);
        Tensor y = random_tensor(12, 12, 1, rng);
        double lhs = dot(op.apply(x), y);
        double rhs = dot(x, op.adjoint(y));
        REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-8));
    }
}

TEST_CASE("kernel centering by intensity centroid") {
    // off-center blob: operator must act like the centered version
    Tensor k(9, 9, 1);
    k(4, 6, 0) = 1.0; // single off-center spike
    Tensor centered = center_kernel(k);
    REQUIRE(centered(0, 0, 0) == 1.0);

    // centering removes the translation entirely
    ConvolutionOperator op(Psf::from_kernel(k, true), 9, 9);
    SeededRng rng(5);
    Tensor x = random_tensor(9, 9, 1, rng);
    Tensor y = op.apply(x);
    for (size_t i = 0; i < x.size(); ++i) REQUIRE(y[i] == Catch::Approx(x[i]).margin(1e-12));
}

TEST_CASE("smaller kernels pad, larger kernels error") {
    Tensor small(3, 3, 1);
    small(1, 1, 0) = 1.0;
    Psf psf = Psf::from_kernel(small, true);
    ConvolutionOperator op(psf, 8, 8); // pads to 8x8, centers the spike
    SeededRng rng(6);
    Tensor x = random_tensor(8, 8, 1, rng);
    Tensor y = op.apply(x);
    for (size_t i = 0; i < x.size(); ++i) REQUIRE(y[i] == Catch::Approx(x[i]).margin(1e-12));

    Tensor big(10, 10, 1, 0.01);
    REQUIRE_THROWS_AS(ConvolutionOperator(Psf::from_kernel(big, true), 8, 8), ConfigError);
}

TEST_CASE("psf validation") {
    Tensor neg(2, 2, 1);
    neg(0, 0, 0) = -0.1;
    REQUIRE_THROWS_AS(Psf::from_kernel(neg, false), ConfigError);
    Tensor zero(2, 2, 1);
    REQUIRE_THROWS_AS(Psf::from_kernel(zero, true), ConfigError);
}

TEST_CASE("moore-penrose identities, spectral mode, across psf families") {
    SeededRng rng(41);
    PinvConfig cfg;
    cfg.mode = PinvMode::spectral;
    cfg.eps_rel = 1e-10; // cutoff far below the identity tolerance: bins in the
                         // truncation band would otherwise dominate A A+ A - A
    int checked_null = 0;
    MaskParams mp;

    std::vector<Psf> psfs;
    psfs.push_back(synth_mask_psf(MaskKind::random_binary, rng, 16, 16, 1, mp));
    psfs.push_back(synth_mask_psf(MaskKind::radial_rings, rng, 16, 16, 1, mp));
    psfs.push_back(synth_mask_psf(MaskKind::gaussian_blob, rng, 16, 16, 1, mp));
    psfs.push_back(two_point_psf(16, 16));
    {
        Tensor k(16, 16, 1, 1.0 / 256.0); // averaging kernel: huge null space
        psfs.push_back(Psf::from_kernel(std::move(k), true));
    }

    for (const Psf& psf : psfs) {
        ConvolutionOperator op(psf, 16, 16);
        PseudoInverse pinv(op, cfg);
        Tensor x = random_tensor(16, 16, 1, rng);
        Tensor y = random_tensor(16, 16, 1, rng);

        // A A† A = A
        Tensor lhs = op.apply(pinv.apply(op, op.apply(x)));
        Tensor rhs = op.apply(x);
        REQUIRE(norm2(lhs - rhs) <= 1e-8 * std::max(1.0, norm2(rhs)));

        // A† A A† = A†
        Tensor l2 = pinv.apply(op, op.apply(pinv.apply(op, y)));
        Tensor r2 = pinv.apply(op, y);
        REQUIRE(norm2(l2 - r2) <= 1e-8 * std::max(1.0, norm2(r2)));

        // projector algebra
        Tensor n1 = pinv.null_project(op, x);
        Tensor n2 = pinv.null_project(op, n1);
        REQUIRE(norm2(n2 - n1) <= 1e-10 * std::max(1.0, norm2(n1)));
        Tensor sum = pinv.range_project(op, x) + n1;
        REQUIRE(norm2(sum - x) <= 1e-10 * std::max(1.0, norm2(x)));
        // A annihilates the null component
        REQUIRE(norm2(op.apply(n1)) <= 1e-8 * std::max(1.0, norm2(x)));

        if (pinv.null_bin_count(0) >= 4) ++checked_null;
    }
    REQUIRE(checked_null >= 1); // at least one psf exercises a real null space
}

TEST_CASE("two-point psf has the predicted null bins") {
    ConvolutionOperator op(two_point_psf(8, 8), 8, 8);
    PinvConfig cfg;
    cfg.mode = PinvMode::spectral;
    PseudoInverse pinv(op, cfg);
    // H(u,v) = (1 + (-1)^v)/2: odd v columns vanish -> half the bins are null
    REQUIRE(pinv.null_bin_count(0) == 32);
}

TEST_CASE("wiener pseudo-inverse behavior") {
    SeededRng rng(51);
    Psf psf = synth_mask_psf(MaskKind::random_binary, rng, 10, 10, 1);
    ConvolutionOperator op(psf, 10, 10);

    PinvConfig w;
    w.mode = PinvMode::wiener;
    w.lambda_w = 1e-2;
    PseudoInverse pw(op, w);
    Tensor x = random_tensor(10, 10, 1, rng);
    REQUIRE_THROWS_AS(pw.null_project(op, x), ConfigError);
    REQUIRE_THROWS_AS(pw.range_project(op, x), ConfigError);

    w.approximate_projectors = true;
    PseudoInverse pa(op, w);
    REQUIRE_NOTHROW(pa.null_project(op, x));
    // approximate null projector is self-adjoint (real spectrum)
    Tensor u = random_tensor(10, 10, 1, rng);
    Tensor v = random_tensor(10, 10, 1, rng);
    REQUIRE(dot(pa.null_project(op, u), v) ==
            Catch::Approx(dot(u, pa.null_project(op, v))).epsilon(1e-10));

    // smaller lambda approaches the exact inverse on the range
    w.lambda_w = 1e-10;
    PseudoInverse tight(op, w);
    Tensor y = op.apply(x);
    Tensor back = tight.apply(op, y);
    PinvConfig s;
    s.mode = PinvMode::spectral;
    PseudoInverse ps(op, s);
    Tensor exact = ps.apply(op, y);
    REQUIRE(norm2(back - exact) <= 1e-5 * std::max(1.0, norm2(exact)));

    PinvConfig bad;
    bad.mode = PinvMode::wiener;
    bad.lambda_w = 0.0;
    REQUIRE_THROWS_AS(PseudoInverse(op, bad), ConfigError);
    PinvConfig bad2;
    bad2.mode = PinvMode::spectral;
    bad2.eps_rel = 0.0;
    REQUIRE_THROWS_AS(PseudoInverse(op, bad2), ConfigError);
}

TEST_CASE("pinv recovers the scene on noiseless full-rank systems") {
    SeededRng rng(61);
    Psf psf = synth_mask_psf(MaskKind::random_binary, rng, 12, 12, 1);
    ConvolutionOperator op(psf, 12, 12);
    PinvConfig cfg;
    cfg.mode = PinvMode::spectral;
    PseudoInverse pinv(op, cfg);
    if (pinv.null_bin_count(0) == 0) {
        Tensor x = random_tensor(12, 12, 1, rng);
        Tensor rec = pinv.apply(op, op.apply(x));
        REQUIRE(norm2(rec - x) <= 1e-8 * norm2(x));
    }
    // with a null space, pinv returns the range component only
    ConvolutionOperator op2(two_point_psf(12, 12), 12, 12);
    PseudoInverse pinv2(op2, cfg);
    Tensor x = random_tensor(12, 12, 1, rng);
    Tensor rec = pinv2.apply(op2, op2.apply(x));
    Tensor range_x = pinv2.range_project(op2, x);
    REQUIRE(norm2(rec - range_x) <= 1e-8 * std::max(1.0, norm2(range_x)));
}

TEST_CASE("simulate_measurement noise statistics") {
    SeededRng rng(71);
    Psf psf = synth_mask_psf(MaskKind::gaussian_blob, rng, 8, 8, 1);
    ConvolutionOperator op(psf, 8, 8);
    Tensor x = random_tensor(8, 8, 1, rng);

    SeededRng r0(100);
    Tensor clean = simulate_measurement(op, x, 0.0, r0);
    Tensor ax = op.apply(x);
    REQUIRE(norm2(clean - ax) == 0.0);

    // Monte-Carlo: E||y - Ax||^2 / N = sigma^2 within 3 SE
    double sigma = 0.05;
    const int trials = 2000;
    double acc = 0;
    size_t N = x.size();
    for (int s = 0; s < trials; ++s) {
        SeededRng r(1000 + s);
        Tensor y = simulate_measurement(op, x, sigma, r);
        Tensor d = y - ax;
        acc += dot(d, d) / (double)N;
    }
    double mean = acc / trials;
    // var of (chi^2_N * s^2/N) is 2 s^4 / N, averaged over trials
    double se = sigma * sigma * std::sqrt(2.0 / (double)N / trials);
    REQUIRE(std::fabs(mean - sigma * sigma) <= 3 * se);
}

TEST_CASE("rms_gain maps white measurement noise to x0-domain std") {
    SeededRng rng(81);
    Psf psf = synth_mask_psf(MaskKind::random_binary, rng, 8, 8, 1);
    ConvolutionOperator op(psf, 8, 8);
    PinvConfig cfg;
    cfg.mode = PinvMode::wiener;
    cfg.lambda_w = 1e-2;
    PseudoInverse pinv(op, cfg);

    double sigma = 0.3;
    const int trials = 3000;
    double acc = 0;
    size_t N = 64;
    for (int s = 0; s < trials; ++s) {
        SeededRng r(500 + s);
        Tensor n = gaussian_noise(r, 8, 8, 1, sigma);
        Tensor an = pinv.apply(op, n);
        acc += dot(an, an) / (double)N;
    }
    double got = std::sqrt(acc / trials);
    double want = sigma * pinv.rms_gain();
    REQUIRE(got == Catch::Approx(want).epsilon(0.05));
}

TEST_CASE("operator rejects mismatched dims") {
    SeededRng rng(91);
    Psf psf = synth_mask_psf(MaskKind::random_binary, rng, 8, 8, 1);
    ConvolutionOperator op(psf, 8, 8);
    Tensor wrong(4, 4, 1);
    REQUIRE_THROWS_AS(op.apply(wrong), ConfigError);
    Tensor wrong_c(8, 8, 2);
    REQUIRE_THROWS_AS(op.apply(wrong_c), ConfigError);
}
