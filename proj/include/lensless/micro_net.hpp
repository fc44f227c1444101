#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "lensless/errors.hpp"
#include "lensless/io.hpp"
#include "lensless/rng.hpp"
#include "lensless/tensor.hpp"

namespace lensless {

// Minimal layer set with explicit forward/backward. Layers cache whatever the
// backward pass needs; Network owns the chain and handles skip connections.

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x) = 0;
    virtual Tensor backward(const Tensor& gout) = 0; // accumulates param grads, returns input grad
    virtual std::vector<std::vector<double>*> params() { return {}; }
    virtual std::vector<std::vector<double>*> grads() { return {}; }
    virtual std::string spec() const = 0;
};

// 3x3 convolution with circular padding. Weights W[(k*cin + c)*cout + o] for
// tap k in row-major (di,dj) order over {-1,0,1}^2, bias per output channel.
class Conv3x3 : public Layer {
public:
    Conv3x3(int cin, int cout) : cin_(cin), cout_(cout), W_(9 * cin * cout, 0.0), b_(cout, 0.0),
                                 gW_(W_.size(), 0.0), gb_(b_.size(), 0.0) {
        if (cin < 1 || cout < 1) throw ConfigError("conv channel counts must be positive");
    }

    // He-style init; zero_init leaves weights and bias at zero.
    void init(SeededRng& rng, bool zero_init = false) {
        if (zero_init) return;
        double s = std::sqrt(2.0 / (9.0 * cin_));
        for (double& w : W_) w = rng.normal() * s;
    }

    Tensor forward(const Tensor& x) override {
        if (x.channels() != cin_)
            throw ConfigError("conv input channels " + std::to_string(x.channels()) +
                              " != " + std::to_string(cin_));
        x_ = x;
        int H = x.height(), W = x.width();
        Tensor out(H, W, cout_);
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < W; ++j) {
                double* orow = &out(i, j, 0);
                for (int o = 0; o < cout_; ++o) orow[o] = b_[o];
                int k = 0;
                for (int di = -1; di <= 1; ++di) {
                    int ii = i + di;
                    ii = ii < 0 ? ii + H : (ii >= H ? ii - H : ii);
                    for (int dj = -1; dj <= 1; ++dj, ++k) {
                        int jj = j + dj;
                        jj = jj < 0 ? jj + W : (jj >= W ? jj - W : jj);
                        const double* xrow = &x(ii, jj, 0);
                        const double* wk = &W_[(size_t)k * cin_ * cout_];
                        for (int c = 0; c < cin_; ++c) {
                            double xv = xrow[c];
                            const double* wrow = wk + (size_t)c * cout_;
                            for (int o = 0; o < cout_; ++o) orow[o] += xv * wrow[o];
                        }
                    }
                }
            }
        }
        return out;
    }

    Tensor backward(const Tensor& g) override {
        int H = g.height(), W = g.width();
        if (x_.height() != H || x_.width() != W)
            throw NumericError("conv backward without matching forward cache");
        Tensor gx(H, W, cin_);
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < W; ++j) {
                const double* grow = &g(i, j, 0);
                for (int o = 0; o < cout_; ++o) gb_[o] += grow[o];
                int k = 0;
                for (int di = -1; di <= 1; ++di) {
                    int ii = i + di;
                    ii = ii < 0 ? ii + H : (ii >= H ? ii - H : ii);
                    for (int dj = -1; dj <= 1; ++dj, ++k) {
                        int jj = j + dj;
                        jj = jj < 0 ? jj + W : (jj >= W ? jj - W : jj);
                        const double* xrow = &x_(ii, jj, 0);
                        double* gxrow = &gx(ii, jj, 0);
                        double* gwk = &gW_[(size_t)k * cin_ * cout_];
                        const double* wk = &W_[(size_t)k * cin_ * cout_];
                        for (int c = 0; c < cin_; ++c) {
                            double xv = xrow[c];
                            double acc = 0;
                            const double* wrow = wk + (size_t)c * cout_;
                            double* gwrow = gwk + (size_t)c * cout_;
                            for (int o = 0; o < cout_; ++o) {
                                gwrow[o] += xv * grow[o];
                                acc += wrow[o] * grow[o];
                            }
                            gxrow[c] += acc;
                        }
                    }
                }
            }
        }
        return gx;
    }

    std::vector<std::vector<double>*> params() override { return {&W_, &b_}; }
    std::vector<std::vector<double>*> grads() override { return {&gW_, &gb_}; }
    std::string spec() const override {
        return "conv3x3 " + std::to_string(cin_) + " " + std::to_string(cout_);
    }

    std::vector<double>& weights() { return W_; }
    std::vector<double>& bias() { return b_; }
    int in_channels() const { return cin_; }
    int out_channels() const { return cout_; }

private:
    int cin_, cout_;
    std::vector<double> W_, b_, gW_, gb_;
    Tensor x_;
};

class ReLULayer : public Layer {
public:
    Tensor forward(const Tensor& x) override {
        mask_ = x;
        Tensor out = x;
        for (size_t k = 0; k < out.size(); ++k)
            if (out[k] < 0) out[k] = 0;
        return out;
    }
    Tensor backward(const Tensor& g) override {
        Tensor gx = g;
        for (size_t k = 0; k < gx.size(); ++k)
            if (mask_[k] <= 0) gx[k] = 0;
        return gx;
    }
    std::string spec() const override { return "relu"; }

private:
    Tensor mask_;
};

// 2x average-pool downsample.
class AvgDown2 : public Layer {
public:
    Tensor forward(const Tensor& x) override {
        if (x.height() % 2 || x.width() % 2)
            throw ConfigError("down2 requires even spatial dims");
        h_ = x.height(); w_ = x.width();
        Tensor out(h_ / 2, w_ / 2, x.channels());
        for (int i = 0; i < h_ / 2; ++i)
            for (int j = 0; j < w_ / 2; ++j)
                for (int c = 0; c < x.channels(); ++c)
                    out(i, j, c) = 0.25 * (x(2 * i, 2 * j, c) + x(2 * i + 1, 2 * j, c) +
                                           x(2 * i, 2 * j + 1, c) + x(2 * i + 1, 2 * j + 1, c));
        return out;
    }
    Tensor backward(const Tensor& g) override {
        Tensor gx(h_, w_, g.channels());
        for (int i = 0; i < g.height(); ++i)
            for (int j = 0; j < g.width(); ++j)
                for (int c = 0; c < g.channels(); ++c) {
                    double v = 0.25 * g(i, j, c);
                    gx(2 * i, 2 * j, c) = v;
                    gx(2 * i + 1, 2 * j, c) = v;
                    gx(2 * i, 2 * j + 1, c) = v;
                    gx(2 * i + 1, 2 * j + 1, c) = v;
                }
        return gx;
    }
    std::string spec() const override { return "down2"; }

private:
    int h_ = 0, w_ = 0;
};

// 2x nearest-neighbor upsample.
class NearestUp2 : public Layer {
public:
    Tensor forward(const Tensor& x) override {
        Tensor out(x.height() * 2, x.width() * 2, x.channels());
        for (int i = 0; i < out.height(); ++i)
            for (int j = 0; j < out.width(); ++j)
                for (int c = 0; c < x.channels(); ++c)
                    out(i, j, c) = x(i / 2, j / 2, c);
        return out;
    }
    Tensor backward(const Tensor& g) override {
        Tensor gx(g.height() / 2, g.width() / 2, g.channels());
        for (int i = 0; i < g.height(); ++i)
            for (int j = 0; j < g.width(); ++j)
                for (int c = 0; c < g.channels(); ++c)
                    gx(i / 2, j / 2, c) += g(i, j, c);
        return gx;
    }
    std::string spec() const override { return "up2"; }
};

// Adds one learned scalar to every element. Stands in for a timestep
// embedding when the timestep is fixed per model: the scalar rides on top of
// the first conv's per-channel bias.
class ScalarBias : public Layer {
public:
    explicit ScalarBias(double b0 = 0.0) : b_{b0}, gb_{0.0} {}
    Tensor forward(const Tensor& x) override {
        Tensor out = x;
        for (size_t k = 0; k < out.size(); ++k) out[k] += b_[0];
        return out;
    }
    Tensor backward(const Tensor& g) override {
        double s = 0.0;
        for (size_t k = 0; k < g.size(); ++k) s += g[k];
        gb_[0] += s;
        return g;
    }
    std::vector<std::vector<double>*> params() override { return {&b_}; }
    std::vector<std::vector<double>*> grads() override { return {&gb_}; }
    std::string spec() const override { return "bias"; }
    double value() const { return b_[0]; }
    void set(double v) { b_[0] = v; }

private:
    std::vector<double> b_, gb_;
};

// Adds the cached output of an earlier layer (by index) to the incoming
// tensor. The backward contribution to the tagged layer is handled by Network.
class SkipAdd : public Layer {
public:
    explicit SkipAdd(int tag) : tag_(tag) {}
    Tensor forward(const Tensor&) override {
        throw NumericError("SkipAdd must be driven by Network");
    }
    Tensor forward2(const Tensor& x, const Tensor& skip) {
        if (!x.same_shape(skip)) throw ConfigError("skip-add shape mismatch");
        return x + skip;
    }
    Tensor backward(const Tensor& g) override { return g; }
    std::string spec() const override { return "skipadd " + std::to_string(tag_); }
    int tag() const { return tag_; }

private:
    int tag_;
};

class Network {
public:
    Network() = default;

    Network& add(std::unique_ptr<Layer> l) {
        layers_.push_back(std::move(l));
        return *this;
    }

    size_t layer_count() const { return layers_.size(); }
    Layer& layer(size_t i) { return *layers_[i]; }

    Tensor forward(const Tensor& x) {
        outs_.clear();
        outs_.reserve(layers_.size());
        Tensor cur = x;
        for (size_t i = 0; i < layers_.size(); ++i) {
            try {
                if (auto* sk = dynamic_cast<SkipAdd*>(layers_[i].get())) {
                    int tag = sk->tag();
                    if (tag < 0 || (size_t)tag >= i)
                        throw ConfigError("skip tag must reference an earlier layer");
                    cur = sk->forward2(cur, outs_[tag]);
                } else {
                    cur = layers_[i]->forward(cur);
                }
            } catch (const ConfigError& e) {
                throw ConfigError("layer " + std::to_string(i) + ": " + e.what());
            }
            outs_.push_back(cur);
        }
        return cur;
    }

    // Backward through the chain; returns gradient w.r.t. the network input.
    // Skip connections fan gradients out to their tagged layer.
    Tensor backward(const Tensor& gout) {
        if (outs_.size() != layers_.size())
            throw NumericError("backward without forward cache");
        size_t n = layers_.size();
        std::vector<Tensor> gbuf(n + 1); // gbuf[i]: grad wrt output of layer i-1
        std::vector<bool> has(n + 1, false);
        gbuf[n] = gout;
        has[n] = true;
        for (size_t i = n; i-- > 0;) {
            if (!has[i + 1]) continue;
            Tensor gx = layers_[i]->backward(gbuf[i + 1]);
            if (has[i]) gbuf[i] += gx;
            else { gbuf[i] = std::move(gx); has[i] = true; }
            if (auto* sk = dynamic_cast<SkipAdd*>(layers_[i].get())) {
                size_t t = (size_t)sk->tag() + 1;
                if (has[t]) gbuf[t] += gbuf[i + 1];
                else { gbuf[t] = gbuf[i + 1]; has[t] = true; }
            }
        }
        return gbuf[0];
    }

    void zero_grad() {
        for (auto& l : layers_)
            for (auto* g : l->grads())
                std::fill(g->begin(), g->end(), 0.0);
    }

    std::vector<std::vector<double>*> params() {
        std::vector<std::vector<double>*> out;
        for (auto& l : layers_)
            for (auto* p : l->params()) out.push_back(p);
        return out;
    }
    std::vector<std::vector<double>*> grads() {
        std::vector<std::vector<double>*> out;
        for (auto& l : layers_)
            for (auto* g : l->grads()) out.push_back(g);
        return out;
    }

    size_t param_count() {
        size_t n = 0;
        for (auto* p : params()) n += p->size();
        return n;
    }

    std::vector<std::string> layer_specs() const {
        std::vector<std::string> s;
        for (const auto& l : layers_) s.push_back(l->spec());
        return s;
    }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<Tensor> outs_;
};

inline std::unique_ptr<Layer> layer_from_spec(const std::string& spec) {
    std::istringstream ss(spec);
    std::string kind;
    ss >> kind;
    if (kind == "conv3x3") {
        int cin, cout;
        if (!(ss >> cin >> cout)) throw FormatError("bad conv3x3 spec: " + spec);
        return std::make_unique<Conv3x3>(cin, cout);
    }
    if (kind == "relu") return std::make_unique<ReLULayer>();
    if (kind == "bias") return std::make_unique<ScalarBias>();
    if (kind == "down2") return std::make_unique<AvgDown2>();
    if (kind == "up2") return std::make_unique<NearestUp2>();
    if (kind == "skipadd") {
        int tag;
        if (!(ss >> tag)) throw FormatError("bad skipadd spec: " + spec);
        return std::make_unique<SkipAdd>(tag);
    }
    throw FormatError("unknown layer spec: " + spec);
}

// Structural copy with identical parameters. Layers cache forward state, so
// Network is not copyable; cloning gives each thread its own activation
// buffers while sharing nothing.
inline Network clone_network(Network& net) {
    Network out;
    for (const auto& s : net.layer_specs()) out.add(layer_from_spec(s));
    auto src = net.params();
    auto dst = out.params();
    for (size_t i = 0; i < src.size(); ++i) *dst[i] = *src[i];
    return out;
}

// Checkpoint: <prefix>.net is a text manifest (one layer spec per line),
// <prefix>.tf holds all parameters concatenated in layer order as an (N,1,1)
// float64 TensorFile. Round trip is bit-exact.
inline void save_network(Network& net, const std::string& prefix) {
    std::ofstream mf(prefix + ".net");
    if (!mf) throw FormatError("cannot write manifest: " + prefix + ".net");
    for (const auto& s : net.layer_specs()) mf << s << "\n";
    mf.close();
    size_t n = net.param_count();
    Tensor flat((int)std::max<size_t>(n, 1), 1, 1);
    size_t k = 0;
    for (auto* p : net.params())
        for (double v : *p) flat[k++] = v;
    write_tensor(prefix + ".tf", flat);
}

inline Network load_network(const std::string& prefix) {
    std::ifstream mf(prefix + ".net");
    if (!mf) throw FormatError("cannot read manifest: " + prefix + ".net");
    Network net;
    std::string line;
    while (std::getline(mf, line)) {
        if (line.empty()) continue;
        net.add(layer_from_spec(line));
    }
    Tensor flat = read_tensor(prefix + ".tf");
    size_t n = net.param_count();
    if (n > 0 && flat.size() < n)
        throw FormatError("checkpoint parameter count mismatch: have " +
                          std::to_string(flat.size()) + ", need " + std::to_string(n));
    size_t k = 0;
    for (auto* p : net.params())
        for (double& v : *p) v = flat[k++];
    return net;
}

// Bias-corrected Adam over a set of parameter vectors.
class Adam {
public:
    Adam(std::vector<std::vector<double>*> params, double lr, double beta1 = 0.9,
         double beta2 = 0.999, double eps = 1e-8)
        : p_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
        if (lr <= 0) throw ConfigError("adam lr must be positive");
        if (!(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1))
            throw ConfigError("adam betas must be in (0,1)");
        for (auto* p : p_) {
            m_.emplace_back(p->size(), 0.0);
            v_.emplace_back(p->size(), 0.0);
        }
    }

    void step(const std::vector<std::vector<double>*>& grads) {
        if (grads.size() != p_.size()) throw ConfigError("adam param/grad count mismatch");
        ++t_;
        double bc1 = 1.0 - std::pow(b1_, t_);
        double bc2 = 1.0 - std::pow(b2_, t_);
        for (size_t i = 0; i < p_.size(); ++i) {
            auto& p = *p_[i];
            const auto& g = *grads[i];
            if (p.size() != g.size()) throw ConfigError("adam grad length mismatch");
            for (size_t k = 0; k < p.size(); ++k) {
                if (std::isnan(g[k]))
                    throw NumericError("NaN gradient in adam step " + std::to_string(t_));
                m_[i][k] = b1_ * m_[i][k] + (1 - b1_) * g[k];
                v_[i][k] = b2_ * v_[i][k] + (1 - b2_) * g[k] * g[k];
                double mh = m_[i][k] / bc1;
                double vh = v_[i][k] / bc2;
                p[k] -= lr_ * mh / (std::sqrt(vh) + eps_);
            }
        }
    }

    int64_t step_count() const { return t_; }

private:
    std::vector<std::vector<double>*> p_;
    double lr_, b1_, b2_, eps_;
    std::vector<std::vector<double>> m_, v_;
    int64_t t_ = 0;
};

// Fixed recipes used by the denoiser prior and the distillation student.

// 2-level UNet: conv-relu, avgpool, conv-relu, conv-relu, upsample, additive
// skip from the pre-pool activation, output conv.
inline Network make_backbone(int cin, int cout, SeededRng& rng, bool zero_output = false) {
    Network net;
    auto c0 = std::make_unique<Conv3x3>(cin, 16); c0->init(rng);
    auto c1 = std::make_unique<Conv3x3>(16, 32);  c1->init(rng);
    auto c2 = std::make_unique<Conv3x3>(32, 16);  c2->init(rng);
    auto c3 = std::make_unique<Conv3x3>(16, cout); c3->init(rng, zero_output);
    net.add(std::move(c0));                       // 0
    net.add(std::make_unique<ReLULayer>());       // 1
    net.add(std::make_unique<AvgDown2>());        // 2
    net.add(std::move(c1));                       // 3
    net.add(std::make_unique<ReLULayer>());       // 4
    net.add(std::move(c2));                       // 5
    net.add(std::make_unique<ReLULayer>());       // 6
    net.add(std::make_unique<NearestUp2>());      // 7
    net.add(std::make_unique<SkipAdd>(1));        // 8
    net.add(std::move(c3));                       // 9
    return net;
}

// Channel reducer: conv-relu-conv-relu-conv.
inline Network make_reducer(int cin, int cout, SeededRng& rng) {
    Network net;
    auto c0 = std::make_unique<Conv3x3>(cin, 16); c0->init(rng);
    auto c1 = std::make_unique<Conv3x3>(16, 16);  c1->init(rng);
    auto c2 = std::make_unique<Conv3x3>(16, cout); c2->init(rng);
    net.add(std::move(c0));
    net.add(std::make_unique<ReLULayer>());
    net.add(std::move(c1));
    net.add(std::make_unique<ReLULayer>());
    net.add(std::move(c2));
    return net;
}

} // namespace lensless
