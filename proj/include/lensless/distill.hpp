#pragma once

// Distillation pipeline: denoiser-prior training, offline fixed-seed teacher
// target generation (range-null guided sampler), and the single-pass student
// composed as pseudo-inverse anchor plus a learned null-space residual.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "lensless/csv.hpp"
#include "lensless/errors.hpp"
#include "lensless/hash.hpp"
#include "lensless/io.hpp"
#include "lensless/metrics.hpp"
#include "lensless/micro_net.hpp"
#include "lensless/operator.hpp"
#include "lensless/parallel.hpp"
#include "lensless/prior.hpp"
#include "lensless/psf.hpp"
#include "lensless/rng.hpp"
#include "lensless/sampler.hpp"
#include "lensless/schedule.hpp"
#include "lensless/tensor.hpp"

namespace lensless {

// ---------------------------------------------------------------------------
// Denoiser training: fit the x0 predictor net(concat(x_t, sigma_t plane)).

struct DenoiserTrainConfig {
    int epochs = 60;
    int batch = 8;
    double lr = 1e-3;
    std::string loss_csv; // per-epoch loss log, empty disables
};

// Trains in place; returns the last epoch's mean training loss.
inline double train_denoiser(Network& net, const std::vector<Tensor>& scenes,
                             const NoiseSchedule& sched, SeededRng& rng,
                             const DenoiserTrainConfig& cfg = {}) {
    if (scenes.empty()) throw ConfigError("denoiser training needs a nonempty dataset");
    if (cfg.batch < 1) throw ConfigError("batch size must be >= 1");
    std::unique_ptr<CsvWriter> csv;
    if (!cfg.loss_csv.empty()) {
        csv = std::make_unique<CsvWriter>(cfg.loss_csv);
        csv->header({"epoch", "train_mse"});
    }
    const int n = (int)scenes.size();
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    Adam opt(net.params(), cfg.lr);
    double epoch_loss = 0.0;
    for (int ep = 1; ep <= cfg.epochs; ++ep) {
        shuffle(idx, rng);
        double tot = 0.0;
        for (int bs = 0; bs < n; bs += cfg.batch) {
            int be = std::min(n, bs + cfg.batch);
            net.zero_grad();
            for (int k = bs; k < be; ++k) {
                const Tensor& x0 = scenes[(size_t)idx[k]];
                int t = rng.uniform_int(1, sched.T);
                double root_ab = std::sqrt(sched.alpha_bar[t]);
                Tensor xt(x0.height(), x0.width(), x0.channels());
                for (size_t q = 0; q < xt.size(); ++q)
                    xt[q] = root_ab * x0[q] + sched.sigma[t] * rng.normal();
                Tensor plane(x0.height(), x0.width(), 1, sched.sigma[t]);
                Tensor d = net.forward(concat_channels(xt, plane));
                d -= x0;
                tot += dot(d, d) / (double)d.size();
                net.backward(d * (2.0 / ((double)d.size() * (be - bs))));
            }
            opt.step(net.grads());
        }
        epoch_loss = tot / n;
        if (!std::isfinite(epoch_loss))
            throw NumericError("denoiser training diverged at epoch " + std::to_string(ep));
        if (csv) csv->row_strings({std::to_string(ep), csv_double(epoch_loss)});
    }
    return epoch_loss;
}

// ---------------------------------------------------------------------------
// Teacher cache: precomputed guided reconstructions under a pinned config.

struct TeacherSetup {
    int T = 100;
    double beta_min = 1e-4;
    double beta_max = 0.02;
    double sigma_y = 0.6; // teacher noise assumption, measurement scale
    PinvConfig pinv{};    // conditioning operator shared with the student
};

inline uint64_t psf_content_hash(const Psf& psf) {
    const Tensor& k = psf.kernel;
    int dims[3] = {k.height(), k.width(), k.channels()};
    uint64_t h = fnv1a(dims, sizeof(dims));
    return fnv1a(k.data(), k.size() * sizeof(double), h);
}

inline uint64_t network_param_hash(Network& net) {
    uint64_t h = fnv1a("params", 6);
    for (auto* p : net.params()) h = fnv1a(p->data(), p->size() * sizeof(double), h);
    return h;
}

inline uint64_t teacher_config_hash(const TeacherSetup& s, const Psf& psf, int img_h,
                                    int img_w, uint64_t denoiser_hash) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "T=%d;beta=%.17g,%.17g;sigma_y=%.17g;pinv=%d;eps_rel=%.17g;"
                  "lambda_w=%.17g;proj=%d;img=%dx%d",
                  s.T, s.beta_min, s.beta_max, s.sigma_y, (int)s.pinv.mode, s.pinv.eps_rel,
                  s.pinv.lambda_w, s.pinv.approximate_projectors ? 1 : 0, img_h, img_w);
    uint64_t h = fnv1a(buf, std::strlen(buf));
    uint64_t ph = psf_content_hash(psf);
    h = fnv1a(&ph, sizeof(ph), h);
    return fnv1a(&denoiser_hash, sizeof(denoiser_hash), h);
}

struct TeacherCacheItem {
    std::string id;
    uint64_t seed = 0;
    std::string y_file, target_file;
};

struct TeacherCache {
    std::string dir;
    uint64_t config_hash = 0;
    uint64_t psf_hash = 0;
    uint64_t denoiser_hash = 0;
    uint64_t base_seed = 0;
    TeacherSetup setup;
    int img_h = 0, img_w = 0, img_c = 0;
    int batch = 8;                    // training default recorded with the data
    std::string augmentation = "none";
    std::vector<TeacherCacheItem> items;
};

inline std::string teacher_cache_dir(const std::string& root, uint64_t config_hash) {
    return root + "/" + hex64(config_hash);
}

namespace detail {

inline uint64_t parse_hex64(const std::string& s) {
    return (uint64_t)std::stoull(s, nullptr, 16);
}

inline bool dir_has_tensor_files(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::exists(dir)) return false;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".tf") return true;
    return false;
}

inline void check_id(const std::string& id) {
    if (id.empty()) throw ConfigError("empty measurement id");
    for (char c : id)
        if (!std::isalnum((unsigned char)c) && c != '_' && c != '-' && c != '.')
            throw ConfigError("measurement id must be filesystem-safe: " + id);
}

} // namespace detail

inline void write_cache_manifest(const TeacherCache& c) {
    nlohmann::json m;
    m["augmentation"] = c.augmentation;
    m["base_seed"] = hex64(c.base_seed);
    m["batch"] = c.batch;
    m["beta_max"] = c.setup.beta_max;
    m["beta_min"] = c.setup.beta_min;
    m["config_hash"] = hex64(c.config_hash);
    m["denoiser_hash"] = hex64(c.denoiser_hash);
    m["image"] = {c.img_h, c.img_w, c.img_c};
    nlohmann::json items = nlohmann::json::array();
    for (const auto& it : c.items) {
        items.push_back({{"id", it.id},
                         {"seed", hex64(it.seed)},
                         {"target", it.target_file},
                         {"y", it.y_file}});
    }
    m["items"] = items;
    m["pinv_approximate_projectors"] = c.setup.pinv.approximate_projectors;
    m["pinv_eps_rel"] = c.setup.pinv.eps_rel;
    m["pinv_lambda_w"] = c.setup.pinv.lambda_w;
    m["pinv_mode"] = c.setup.pinv.mode == PinvMode::spectral ? "spectral" : "wiener";
    m["psf_hash"] = hex64(c.psf_hash);
    m["sigma_y"] = c.setup.sigma_y;
    m["steps"] = c.setup.T;
    std::ofstream f(c.dir + "/manifest.json");
    if (!f) throw FormatError("cannot write " + c.dir + "/manifest.json");
    f << m.dump(2) << "\n";
}

inline TeacherCache load_teacher_cache(const std::string& dir) {
    namespace fs = std::filesystem;
    std::string mpath = dir + "/manifest.json";
    if (!fs::exists(mpath)) {
        if (detail::dir_has_tensor_files(dir))
            throw StaleCacheError("cache has item files but no manifest: " + dir);
        throw ConfigError("no cache manifest at " + mpath);
    }
    nlohmann::json m;
    try {
        std::ifstream f(mpath);
        f >> m;
    } catch (const std::exception& e) {
        throw StaleCacheError("unreadable cache manifest " + mpath + ": " + e.what());
    }
    TeacherCache c;
    c.dir = dir;
    try {
        c.config_hash = detail::parse_hex64(m.at("config_hash").get<std::string>());
        c.psf_hash = detail::parse_hex64(m.at("psf_hash").get<std::string>());
        c.denoiser_hash = detail::parse_hex64(m.at("denoiser_hash").get<std::string>());
        c.base_seed = detail::parse_hex64(m.at("base_seed").get<std::string>());
        c.setup.T = m.at("steps").get<int>();
        c.setup.beta_min = m.at("beta_min").get<double>();
        c.setup.beta_max = m.at("beta_max").get<double>();
        c.setup.sigma_y = m.at("sigma_y").get<double>();
        c.setup.pinv.mode = m.at("pinv_mode").get<std::string>() == "spectral"
                                ? PinvMode::spectral
                                : PinvMode::wiener;
        c.setup.pinv.eps_rel = m.at("pinv_eps_rel").get<double>();
        c.setup.pinv.lambda_w = m.at("pinv_lambda_w").get<double>();
        c.setup.pinv.approximate_projectors = m.at("pinv_approximate_projectors").get<bool>();
        c.img_h = m.at("image").at(0).get<int>();
        c.img_w = m.at("image").at(1).get<int>();
        c.img_c = m.at("image").at(2).get<int>();
        c.batch = m.at("batch").get<int>();
        c.augmentation = m.at("augmentation").get<std::string>();
        for (const auto& it : m.at("items")) {
            TeacherCacheItem t;
            t.id = it.at("id").get<std::string>();
            t.seed = detail::parse_hex64(it.at("seed").get<std::string>());
            t.y_file = it.at("y").get<std::string>();
            t.target_file = it.at("target").get<std::string>();
            c.items.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw StaleCacheError("malformed cache manifest " + mpath + ": " + e.what());
    }
    for (const auto& it : c.items) {
        if (!fs::exists(c.dir + "/" + it.y_file) || !fs::exists(c.dir + "/" + it.target_file))
            throw StaleCacheError("cache item files missing for id " + it.id + " in " + dir);
    }
    return c;
}

// Generates one fixed-seed guided reconstruction per measurement. Every item
// records the same derived seed: the teacher is conditioned on one shared
// initial noise draw (and noise stream), which is what makes the targets a
// learnable function of y. Rebuilds are bit-exact; a directory whose manifest
// carries a different config hash is refused rather than silently mixed.
inline TeacherCache build_teacher_cache(const std::string& root,
                                        const std::vector<std::string>& ids,
                                        const std::vector<Tensor>& ys, const Psf& psf,
                                        const TeacherSetup& setup, Network& denoiser,
                                        uint64_t base_seed, int workers = 0) {
    namespace fs = std::filesystem;
    if (ids.empty() || ids.size() != ys.size())
        throw ConfigError("teacher cache needs a nonempty id-matched dataset");
    for (const auto& id : ids) detail::check_id(id);
    const int H = ys[0].height(), W = ys[0].width(), C = ys[0].channels();
    for (const auto& y : ys)
        if (y.height() != H || y.width() != W || y.channels() != C)
            throw ConfigError("all measurements must share dimensions");
    if (psf.kernel.channels() != C)
        throw ConfigError("psf channels do not match measurements");

    TeacherCache c;
    c.setup = setup;
    c.img_h = H;
    c.img_w = W;
    c.img_c = C;
    c.base_seed = base_seed;
    c.psf_hash = psf_content_hash(psf);
    c.denoiser_hash = network_param_hash(denoiser);
    c.config_hash = teacher_config_hash(setup, psf, H, W, c.denoiser_hash);
    c.dir = teacher_cache_dir(root, c.config_hash);

    fs::create_directories(c.dir);
    if (fs::exists(c.dir + "/manifest.json")) {
        TeacherCache old = load_teacher_cache(c.dir);
        if (old.config_hash != c.config_hash)
            throw StaleCacheError("cache at " + c.dir + " was built under config hash " +
                                  hex64(old.config_hash) + ", refusing to mix with " +
                                  hex64(c.config_hash));
    } else if (detail::dir_has_tensor_files(c.dir)) {
        throw StaleCacheError("partial cache without manifest: " + c.dir);
    }

    uint64_t shared_seed = SeededRng(base_seed).derive("teacher").seed();
    c.items.resize(ids.size());
    for (size_t i = 0; i < ids.size(); ++i)
        c.items[i] = {ids[i], shared_seed, ids[i] + "_y.tf", ids[i] + "_t.tf"};

    NoiseSchedule sched = make_schedule(setup.T, setup.beta_min, setup.beta_max);
    int w = resolve_workers(workers, ids.size());
    struct Ctx {
        std::unique_ptr<ConvolutionOperator> op;
        std::unique_ptr<PseudoInverse> pinv;
        std::unique_ptr<LearnedDenoiser> prior;
    };
    std::vector<Ctx> ctxs((size_t)w);
    for (auto& ctx : ctxs) {
        ctx.op = std::make_unique<ConvolutionOperator>(psf, H, W);
        ctx.pinv = std::make_unique<PseudoInverse>(*ctx.op, setup.pinv);
        ctx.prior = std::make_unique<LearnedDenoiser>(clone_network(denoiser));
    }
    DdnmConfig dc;
    dc.sigma_y = setup.sigma_y;
    dc.mode = DdnmMode::relaxed;
    parallel_for(ids.size(), w, [&](int slot, size_t i) {
        Ctx& ctx = ctxs[(size_t)slot];
        SeededRng item_rng(c.items[i].seed);
        SampleResult r =
            ddnm_reconstruct(*ctx.op, *ctx.pinv, *ctx.prior, sched, ys[i], dc, item_rng);
        write_tensor(c.dir + "/" + c.items[i].y_file, ys[i]);
        write_tensor(c.dir + "/" + c.items[i].target_file, r.x);
    });
    write_cache_manifest(c);
    return c;
}

struct TeacherData {
    std::vector<std::string> ids;
    std::vector<Tensor> ys, targets;
};

inline TeacherData load_cache_tensors(const TeacherCache& c) {
    TeacherData d;
    d.ids.reserve(c.items.size());
    for (const auto& it : c.items) {
        d.ids.push_back(it.id);
        d.ys.push_back(read_tensor(c.dir + "/" + it.y_file));
        d.targets.push_back(read_tensor(c.dir + "/" + it.target_file));
        const Tensor& y = d.ys.back();
        if (y.height() != c.img_h || y.width() != c.img_w || y.channels() != c.img_c)
            throw StaleCacheError("cache item " + it.id + " does not match manifest dims");
    }
    return d;
}

// ---------------------------------------------------------------------------
// Student: x_hat = A†y + backbone(reducer(concat(y, A†y))).

enum class TFix { high, low };

inline const char* tfix_name(TFix f) { return f == TFix::high ? "high" : "low"; }

inline TFix tfix_from_string(const std::string& s) {
    if (s == "high") return TFix::high;
    if (s == "low") return TFix::low;
    throw ConfigError("t_fix must be high or low, got " + s);
}

// high pins the conditioning scalar at the last schedule step, low at 6% of
// the schedule (floor 1).
inline int tfix_timestep(TFix f, int T) {
    return f == TFix::high ? T : std::max(1, (int)std::lround(0.06 * T));
}

struct StudentModel {
    Network reducer;  // 2C -> C
    Network backbone; // C -> C, scalar bias after the first conv, zero-init output
    int channels = 1;
    TFix t_fix = TFix::high;
    bool project_null = false;
};

// Backbone variant carrying the fixed-timestep scalar bias; the output conv
// starts at zero so the composed student begins exactly at the anchor.
inline Network make_student_backbone(int cin, int cout, SeededRng& rng, double t_bias) {
    Network net;
    auto c0 = std::make_unique<Conv3x3>(cin, 16);
    c0->init(rng);
    auto c1 = std::make_unique<Conv3x3>(16, 32);
    c1->init(rng);
    auto c2 = std::make_unique<Conv3x3>(32, 16);
    c2->init(rng);
    auto c3 = std::make_unique<Conv3x3>(16, cout);
    c3->init(rng, /*zero_init=*/true);
    net.add(std::move(c0));                            // 0
    net.add(std::make_unique<ScalarBias>(t_bias));     // 1
    net.add(std::make_unique<ReLULayer>());            // 2
    net.add(std::make_unique<AvgDown2>());             // 3
    net.add(std::move(c1));                            // 4
    net.add(std::make_unique<ReLULayer>());            // 5
    net.add(std::move(c2));                            // 6
    net.add(std::make_unique<ReLULayer>());            // 7
    net.add(std::make_unique<NearestUp2>());           // 8
    net.add(std::make_unique<SkipAdd>(2));             // 9
    net.add(std::move(c3));                            // 10
    return net;
}

inline StudentModel make_student(int channels, const NoiseSchedule& sched, TFix t_fix,
                                 SeededRng& rng, bool project_null = false) {
    StudentModel m;
    m.channels = channels;
    m.t_fix = t_fix;
    m.project_null = project_null;
    m.reducer = make_reducer(2 * channels, channels, rng);
    m.backbone = make_student_backbone(channels, channels, rng,
                                       sched.sigma[tfix_timestep(t_fix, sched.T)]);
    return m;
}

inline StudentModel clone_student(StudentModel& m) {
    StudentModel out;
    out.channels = m.channels;
    out.t_fix = m.t_fix;
    out.project_null = m.project_null;
    out.reducer = clone_network(m.reducer);
    out.backbone = clone_network(m.backbone);
    return out;
}

struct StudentOutput {
    Tensor x_hat;  // anchor + residual
    Tensor x_null; // residual alone
};

inline StudentOutput student_forward(StudentModel& m, const ConvolutionOperator& op,
                                     const PseudoInverse& pinv, const Tensor& y) {
    op.check_dims(y);
    Tensor anchor = pinv.apply(op, y);
    Tensor r = m.reducer.forward(concat_channels(y, anchor));
    Tensor xn = m.backbone.forward(r);
    if (m.project_null) xn = pinv.null_project(op, xn);
    return {anchor + xn, std::move(xn)};
}

inline void save_student(StudentModel& m, const std::string& prefix) {
    save_network(m.reducer, prefix + ".reducer");
    save_network(m.backbone, prefix + ".backbone");
    std::ofstream f(prefix + ".student");
    if (!f) throw FormatError("cannot write " + prefix + ".student");
    f << "channels " << m.channels << "\n";
    f << "tfix " << tfix_name(m.t_fix) << "\n";
    f << "project_null " << (m.project_null ? 1 : 0) << "\n";
}

inline StudentModel load_student(const std::string& prefix) {
    std::ifstream f(prefix + ".student");
    if (!f) throw FormatError("cannot read " + prefix + ".student");
    StudentModel m;
    std::string key;
    while (f >> key) {
        if (key == "channels") {
            if (!(f >> m.channels)) throw FormatError("bad channels in " + prefix + ".student");
        } else if (key == "tfix") {
            std::string v;
            f >> v;
            m.t_fix = tfix_from_string(v);
        } else if (key == "project_null") {
            int v = 0;
            if (!(f >> v)) throw FormatError("bad project_null in " + prefix + ".student");
            m.project_null = v != 0;
        } else {
            throw FormatError("unknown student manifest key: " + key);
        }
    }
    m.reducer = load_network(prefix + ".reducer");
    m.backbone = load_network(prefix + ".backbone");
    return m;
}

// ---------------------------------------------------------------------------
// Student training against cached teacher targets.

// Deterministic 90/10 split on the measurement id.
inline bool is_test_id(const std::string& id) { return fnv1a(id) % 10 == 0; }

struct StudentTrainConfig {
    int epochs = 40;
    int batch = 8;
    double lr = 1e-3;
    std::string loss_csv; // columns: epoch, train_mse, test_mse
};

struct EpochLoss {
    int epoch;
    double train_mse;
    double test_mse; // NaN when the test split is empty
};

struct StudentTrainResult {
    std::vector<EpochLoss> curve; // row 0 is the pre-training evaluation
    std::vector<size_t> train_idx, test_idx;
};

// The cache pins the conditioning operator; training refuses an operator or
// pseudo-inverse different from the one the targets were generated with.
inline void require_cache_matches(const TeacherCache& c, const Psf& psf,
                                  const PinvConfig& pinv) {
    if (psf_content_hash(psf) != c.psf_hash)
        throw ConfigError("cache/operator mismatch: psf differs from the cached one");
    const PinvConfig& p = c.setup.pinv;
    if (pinv.mode != p.mode || pinv.eps_rel != p.eps_rel || pinv.lambda_w != p.lambda_w ||
        pinv.approximate_projectors != p.approximate_projectors)
        throw ConfigError("cache/operator mismatch: pseudo-inverse config differs "
                          "from the cached one");
}

inline StudentTrainResult train_student(StudentModel& m, const TeacherCache& cache,
                                        const TeacherData& data, const Psf& psf,
                                        const PinvConfig& pinv_cfg,
                                        const StudentTrainConfig& cfg, SeededRng& rng) {
    require_cache_matches(cache, psf, pinv_cfg);
    if (data.ys.empty()) throw ConfigError("student training needs a nonempty cache");
    if (cfg.batch < 1) throw ConfigError("batch size must be >= 1");
    ConvolutionOperator op(psf, cache.img_h, cache.img_w);
    PseudoInverse pinv(op, pinv_cfg);

    const size_t n = data.ys.size();
    std::vector<Tensor> anchors(n);
    for (size_t i = 0; i < n; ++i) anchors[i] = pinv.apply(op, data.ys[i]);

    StudentTrainResult res;
    for (size_t i = 0; i < n; ++i)
        (is_test_id(data.ids[i]) ? res.test_idx : res.train_idx).push_back(i);
    if (res.train_idx.empty()) throw ConfigError("empty training split");

    auto eval_item = [&](size_t i) {
        Tensor r = m.reducer.forward(concat_channels(data.ys[i], anchors[i]));
        Tensor xn = m.backbone.forward(r);
        if (m.project_null) xn = pinv.null_project(op, xn);
        return mse(anchors[i] + xn, data.targets[i]);
    };
    auto eval_set = [&](const std::vector<size_t>& idx) {
        if (idx.empty()) return std::nan("");
        double s = 0;
        for (size_t i : idx) s += eval_item(i);
        return s / (double)idx.size();
    };

    std::unique_ptr<CsvWriter> csv;
    if (!cfg.loss_csv.empty()) {
        csv = std::make_unique<CsvWriter>(cfg.loss_csv);
        csv->header({"epoch", "train_mse", "test_mse"});
    }
    auto log_row = [&](int ep, double tr, double te) {
        res.curve.push_back({ep, tr, te});
        if (csv) csv->row_strings({std::to_string(ep), csv_double(tr), csv_double(te)});
    };
    log_row(0, eval_set(res.train_idx), eval_set(res.test_idx));

    std::vector<std::vector<double>*> params = m.reducer.params();
    for (auto* p : m.backbone.params()) params.push_back(p);
    Adam opt(params, cfg.lr);
    std::vector<size_t> order = res.train_idx;
    for (int ep = 1; ep <= cfg.epochs; ++ep) {
        shuffle(order, rng);
        double tot = 0.0;
        for (size_t bs = 0; bs < order.size(); bs += (size_t)cfg.batch) {
            size_t be = std::min(order.size(), bs + (size_t)cfg.batch);
            m.reducer.zero_grad();
            m.backbone.zero_grad();
            for (size_t k = bs; k < be; ++k) {
                size_t i = order[k];
                Tensor r = m.reducer.forward(concat_channels(data.ys[i], anchors[i]));
                Tensor xn = m.backbone.forward(r);
                if (m.project_null) xn = pinv.null_project(op, xn);
                Tensor d = (anchors[i] + xn) - data.targets[i];
                tot += dot(d, d) / (double)d.size();
                Tensor gout = d * (2.0 / ((double)d.size() * (double)(be - bs)));
                if (m.project_null) gout = pinv.null_project(op, gout);
                m.reducer.backward(m.backbone.backward(gout));
            }
            std::vector<std::vector<double>*> grads = m.reducer.grads();
            for (auto* g : m.backbone.grads()) grads.push_back(g);
            opt.step(grads);
        }
        double train_mse = tot / (double)order.size();
        if (!std::isfinite(train_mse))
            throw NumericError("student training diverged at epoch " + std::to_string(ep));
        log_row(ep, train_mse, eval_set(res.test_idx));
    }
    return res;
}

// ---------------------------------------------------------------------------
// Single-pass inference; per-image timing covers compute only, never I/O.

inline std::vector<Tensor> student_infer_batch(StudentModel& m, const ConvolutionOperator& op,
                                               const PseudoInverse& pinv,
                                               const std::vector<Tensor>& ys,
                                               std::vector<double>* seconds = nullptr) {
    std::vector<Tensor> out(ys.size());
    if (seconds) seconds->assign(ys.size(), 0.0);
    for (size_t i = 0; i < ys.size(); ++i) {
        auto t0 = std::chrono::steady_clock::now();
        StudentOutput so = student_forward(m, op, pinv, ys[i]);
        auto t1 = std::chrono::steady_clock::now();
        out[i] = std::move(so.x_hat);
        if (seconds) (*seconds)[i] = std::chrono::duration<double>(t1 - t0).count();
    }
    return out;
}

} // namespace lensless
