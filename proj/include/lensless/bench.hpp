#pragma once

// Experiment driver: capture simulation, per-solver reconstruction records,
// parameter sweeps, and the quality-versus-time table with ordering checks.
// Jobs fan out to a bounded pool and are reduced in job order, so outputs are
// byte-stable across runs except for the measured seconds columns.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "lensless/config.hpp"
#include "lensless/csv.hpp"
#include "lensless/distill.hpp"
#include "lensless/errors.hpp"
#include "lensless/hash.hpp"
#include "lensless/metrics.hpp"
#include "lensless/operator.hpp"
#include "lensless/parallel.hpp"
#include "lensless/prior.hpp"
#include "lensless/sampler.hpp"
#include "lensless/scenes.hpp"
#include "lensless/solvers.hpp"

namespace lensless {

struct BenchmarkRecord {
    std::string id, solver, params;
    double mse_v = 0, psnr_v = 0, ssim_v = 0, residual_v = 0, seconds = 0;
};

struct MetricSet {
    bool want_mse = true, want_psnr = true, want_ssim = true, want_residual = true;
};

inline MetricSet metric_set(const std::vector<std::string>& names) {
    MetricSet m{false, false, false, false};
    for (const auto& n : names) {
        if (n == "mse") m.want_mse = true;
        else if (n == "psnr") m.want_psnr = true;
        else if (n == "ssim") m.want_ssim = true;
        else if (n == "residual") m.want_residual = true;
        else throw ConfigError("unknown metric: " + n);
    }
    return m;
}

inline void fill_metrics(BenchmarkRecord& r, const MetricSet& m, const Tensor& x_hat,
                         const Tensor& reference, const ConvolutionOperator& op,
                         const Tensor& y) {
    r.mse_v = m.want_mse || m.want_psnr ? mse(x_hat, reference) : 0.0;
    r.psnr_v = m.want_psnr ? psnr(x_hat, reference) : 0.0;
    r.ssim_v = m.want_ssim ? ssim(x_hat, reference) : 0.0;
    r.residual_v = m.want_residual ? data_residual(op, x_hat, y) : 0.0;
}

// The perceptual column is reserved for full-scale runs; desk scale leaves it
// empty (no pretrained perceptual network).
inline std::vector<std::string> record_header() {
    return {"id", "solver", "params", "mse", "psnr", "ssim", "perceptual", "residual", "seconds"};
}

inline std::vector<std::string> record_row(const BenchmarkRecord& r, const MetricSet& m) {
    return {r.id,
            r.solver,
            r.params,
            m.want_mse ? csv_double(r.mse_v) : "",
            m.want_psnr ? csv_double(r.psnr_v) : "",
            m.want_ssim ? csv_double(r.ssim_v) : "",
            "",
            m.want_residual ? csv_double(r.residual_v) : "",
            csv_double(r.seconds)};
}

// ---------------------------------------------------------------------------
// Shared run state: operator, schedule, scenes, simulated captures.

struct BenchData {
    Psf psf;
    std::unique_ptr<ConvolutionOperator> op;
    std::unique_ptr<PseudoInverse> pinv;
    NoiseSchedule sched;
    std::vector<std::string> ids;
    std::vector<Tensor> scenes, ys;
};

inline std::string scene_id(size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%03d", (int)i);
    return buf;
}

inline BenchData prepare_bench_data(const ExperimentConfig& cfg) {
    BenchData d;
    SeededRng base(cfg.seed);
    d.psf = build_psf(cfg, base);
    d.op = std::make_unique<ConvolutionOperator>(d.psf, cfg.image.height, cfg.image.width);
    d.pinv = std::make_unique<PseudoInverse>(*d.op, cfg.pinv);
    d.sched = make_schedule(cfg.schedule.steps, cfg.schedule.beta_min, cfg.schedule.beta_max);
    d.scenes = build_scenes(cfg, base);
    d.ids.reserve(d.scenes.size());
    d.ys.reserve(d.scenes.size());
    for (size_t i = 0; i < d.scenes.size(); ++i) {
        d.ids.push_back(scene_id(i));
        SeededRng nrng = base.derive("noise", (uint64_t)i);
        d.ys.push_back(simulate_measurement(*d.op, d.scenes[i], cfg.noise_sigma, nrng));
    }
    return d;
}

// Artifact paths in configs are relative to the output directory.
inline std::string resolve_path(const ExperimentConfig& cfg, const std::string& p) {
    if (!p.empty() && p[0] == '/') return p;
    return cfg.output_dir + "/" + p;
}

// ---------------------------------------------------------------------------
// Solver dispatch. Checkpoint-backed solvers get per-worker network clones so
// the pool never shares mutable forward caches.

struct SolverAssets {
    std::unique_ptr<Network> denoiser; // loaded once, cloned per worker
    std::map<std::string, std::unique_ptr<StudentModel>> students;
};

inline bool solver_needs_denoiser(const std::string& name) {
    return name == "dps" || name == "ddnm" || name == "ddnm+";
}

inline SolverAssets load_solver_assets(const ExperimentConfig& cfg,
                                       const std::vector<SolverSpec>& solvers) {
    SolverAssets a;
    for (const auto& s : solvers) {
        if (solver_needs_denoiser(s.name) && !a.denoiser) {
            a.denoiser = std::make_unique<Network>(
                load_network(resolve_path(cfg, cfg.denoiser.checkpoint)));
        }
        if (s.name == "student" && !a.students.count(s.checkpoint)) {
            a.students[s.checkpoint] = std::make_unique<StudentModel>(
                load_student(resolve_path(cfg, s.checkpoint)));
        }
    }
    return a;
}

struct WorkerState {
    std::unique_ptr<LearnedDenoiser> prior;
    std::map<std::string, std::unique_ptr<StudentModel>> students;
};

inline std::vector<WorkerState> make_worker_states(const SolverAssets& a, int workers) {
    std::vector<WorkerState> ws((size_t)workers);
    for (auto& w : ws) {
        if (a.denoiser)
            w.prior = std::make_unique<LearnedDenoiser>(clone_network(*a.denoiser));
        for (auto& [name, proto] : a.students)
            w.students[name] = std::make_unique<StudentModel>(clone_student(*proto));
    }
    return ws;
}

inline std::string solver_params_string(const SolverSpec& s, const BenchData& d) {
    int steps = s.steps > 0 ? s.steps : d.sched.T;
    if (s.name == "wiener") return "lambda_w=" + csv_double(s.lambda_w);
    if (s.name == "admm")
        return "tau=" + csv_double(s.admm.tau) + ";rho=" + csv_double(s.admm.rho) +
               ";iters=" + std::to_string(s.admm.iters);
    if (s.name == "dps")
        return "zeta=" + csv_double(s.zeta) + ";steps=" + std::to_string(steps);
    if (s.name == "ddnm") return "mode=exact;steps=" + std::to_string(steps);
    if (s.name == "ddnm+")
        return "sigma_y=" + csv_double(s.sigma_y) + ";scale=" + s.sigma_y_scale +
               ";steps=" + std::to_string(steps);
    if (s.name == "student") return "checkpoint=" + s.checkpoint;
    throw ConfigError("unknown solver: " + s.name);
}

inline void set_solver_param(SolverSpec& s, const std::string& param, double v) {
    if (s.name == "dps" && param == "zeta") { s.zeta = v; return; }
    if (s.name == "ddnm+" && param == "sigma_y") { s.sigma_y = v; return; }
    if (s.name == "admm" && param == "tau") { s.admm.tau = v; return; }
    if (s.name == "admm" && param == "rho") { s.admm.rho = v; return; }
    if (s.name == "wiener" && param == "lambda_w") { s.lambda_w = v; return; }
    throw ConfigError("sweep parameter '" + param + "' does not belong to solver '" +
                      s.name + "'");
}

struct SolveResult {
    Tensor x;
    GuidanceTrace trace;
    double seconds = 0;
    std::string params;
};

// Runs one solver on one measurement. The timed region covers solver compute
// only: schedules, seeds, and checkpoints are prepared outside it.
inline SolveResult run_solver(const SolverSpec& s, const ExperimentConfig& cfg,
                              const BenchData& d, WorkerState& w, size_t img) {
    SolveResult out;
    out.params = solver_params_string(s, d);
    const Tensor& y = d.ys[img];
    NoiseSchedule local;
    const NoiseSchedule* sched = &d.sched;
    if (s.steps > 0 && s.steps != d.sched.T) {
        local = make_schedule(s.steps, cfg.schedule.beta_min, cfg.schedule.beta_max);
        sched = &local;
    }
    SeededRng rng =
        SeededRng(cfg.seed).derive("solve:" + s.name + ":" + out.params + ":" + d.ids[img]);
    if (solver_needs_denoiser(s.name) && !w.prior)
        throw ConfigError("solver " + s.name + " needs a denoiser checkpoint");

    auto t0 = std::chrono::steady_clock::now();
    if (s.name == "wiener") {
        out.x = wiener_reconstruct(*d.op, y, s.lambda_w);
    } else if (s.name == "admm") {
        out.x = admm_tv_reconstruct(*d.op, y, s.admm).x;
    } else if (s.name == "dps") {
        DpsConfig dc;
        dc.zeta = s.zeta;
        dc.stop_gradient = s.stop_gradient;
        SampleResult r = dps_reconstruct(*d.op, *d.pinv, *w.prior, *sched, y, dc, rng);
        out.x = std::move(r.x);
        out.trace = std::move(r.trace);
    } else if (s.name == "ddnm" || s.name == "ddnm+") {
        DdnmConfig dc;
        dc.mode = s.name == "ddnm" ? DdnmMode::exact : DdnmMode::relaxed;
        dc.sigma_y = scaled_sigma_y(s.sigma_y, s.sigma_y_scale, *d.pinv);
        SampleResult r = ddnm_reconstruct(*d.op, *d.pinv, *w.prior, *sched, y, dc, rng);
        out.x = std::move(r.x);
        out.trace = std::move(r.trace);
    } else if (s.name == "student") {
        auto it = w.students.find(s.checkpoint);
        if (it == w.students.end())
            throw ConfigError("student checkpoint not loaded: " + s.checkpoint);
        out.x = student_forward(*it->second, *d.op, *d.pinv, y).x_hat;
    } else {
        throw ConfigError("unknown solver: " + s.name);
    }
    auto t1 = std::chrono::steady_clock::now();
    out.seconds = std::chrono::duration<double>(t1 - t0).count();
    return out;
}

// ---------------------------------------------------------------------------
// Run manifest: config + seeds + content hash of the inputs, no timestamps.

inline uint64_t content_hash(const ExperimentConfig& cfg, const BenchData& d) {
    std::string c = cfg.raw.dump();
    uint64_t h = fnv1a(c.data(), c.size());
    h = fnv1a(d.psf.kernel.data(), d.psf.kernel.size() * sizeof(double), h);
    for (const auto& s : d.scenes) h = fnv1a(s.data(), s.size() * sizeof(double), h);
    for (const auto& y : d.ys) h = fnv1a(y.data(), y.size() * sizeof(double), h);
    return h;
}

inline void write_run_manifest(const ExperimentConfig& cfg, const BenchData& d,
                               const std::string& verb, std::vector<std::string> outputs,
                               const std::string& path) {
    std::sort(outputs.begin(), outputs.end());
    nlohmann::json m;
    m["command"] = verb;
    m["config"] = cfg.raw;
    m["content_hash"] = hex64(content_hash(cfg, d));
    m["image"] = {cfg.image.height, cfg.image.width, cfg.image.channels};
    m["outputs"] = outputs;
    m["scene_count"] = d.scenes.size();
    m["seed"] = hex64(cfg.seed);
    std::ofstream f(path);
    if (!f) throw FormatError("cannot write manifest: " + path);
    f << m.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Bench: one record per (solver, image); summary row per solver.

struct SummaryRow {
    std::string solver, params;
    double mean_mse = 0, mean_psnr = 0, mean_ssim = 0, mean_residual = 0, mean_seconds = 0;
};

inline std::vector<std::string> summary_header() {
    return {"solver",    "params",          "mean_mse",      "mean_psnr",
            "mean_ssim", "mean_perceptual", "mean_residual", "mean_seconds"};
}

inline std::vector<std::string> summary_row(const SummaryRow& r, const MetricSet& m) {
    return {r.solver,
            r.params,
            m.want_mse ? csv_double(r.mean_mse) : "",
            m.want_psnr ? csv_double(r.mean_psnr) : "",
            m.want_ssim ? csv_double(r.mean_ssim) : "",
            "",
            m.want_residual ? csv_double(r.mean_residual) : "",
            csv_double(r.mean_seconds)};
}

struct BenchOutput {
    std::vector<BenchmarkRecord> records; // solver-major, image-minor
    std::vector<SummaryRow> summary;
};

inline BenchOutput run_bench(const ExperimentConfig& cfg, const BenchData& d) {
    if (cfg.solvers.empty()) throw ConfigError("bench needs at least one solver");
    MetricSet ms = metric_set(cfg.metrics);
    SolverAssets assets = load_solver_assets(cfg, cfg.solvers);
    size_t n_jobs = cfg.solvers.size() * d.ys.size();
    int workers = resolve_workers(cfg.workers, n_jobs);
    std::vector<WorkerState> ws = make_worker_states(assets, workers);

    BenchOutput out;
    out.records.resize(n_jobs);
    parallel_for(n_jobs, workers, [&](int slot, size_t j) {
        size_t si = j / d.ys.size(), ii = j % d.ys.size();
        SolveResult r = run_solver(cfg.solvers[si], cfg, d, ws[(size_t)slot], ii);
        BenchmarkRecord rec;
        rec.id = d.ids[ii];
        rec.solver = cfg.solvers[si].name;
        rec.params = r.params;
        rec.seconds = r.seconds;
        fill_metrics(rec, ms, r.x, d.scenes[ii], *d.op, d.ys[ii]);
        out.records[j] = std::move(rec);
    });

    for (size_t si = 0; si < cfg.solvers.size(); ++si) {
        SummaryRow s;
        s.solver = cfg.solvers[si].name;
        s.params = out.records[si * d.ys.size()].params;
        for (size_t ii = 0; ii < d.ys.size(); ++ii) {
            const BenchmarkRecord& r = out.records[si * d.ys.size() + ii];
            s.mean_mse += r.mse_v;
            s.mean_psnr += r.psnr_v;
            s.mean_ssim += r.ssim_v;
            s.mean_residual += r.residual_v;
            s.mean_seconds += r.seconds;
        }
        double n = (double)d.ys.size();
        s.mean_mse /= n;
        s.mean_psnr /= n;
        s.mean_ssim /= n;
        s.mean_residual /= n;
        s.mean_seconds /= n;
        out.summary.push_back(std::move(s));
    }
    return out;
}

// Ordinal assertions for the speed/quality table. Checks that need solvers
// absent from the run are skipped; absolute latencies are never asserted.
struct OrderingCheck {
    std::string name;
    bool pass;
    std::string detail;
};

inline const SummaryRow* find_row(const std::vector<SummaryRow>& rows, const std::string& name) {
    for (const auto& r : rows)
        if (r.solver == name) return &r;
    return nullptr;
}

inline std::vector<OrderingCheck> check_speed_quality(const std::vector<SummaryRow>& rows) {
    std::vector<OrderingCheck> checks;
    if (rows.size() < 2) return checks;
    const SummaryRow* wiener = find_row(rows, "wiener");
    const SummaryRow* student = find_row(rows, "student");
    const SummaryRow* teacher = find_row(rows, "ddnm+");
    const SummaryRow* dps = find_row(rows, "dps");

    std::vector<const SummaryRow*> by_time;
    for (const auto& r : rows) by_time.push_back(&r);
    std::sort(by_time.begin(), by_time.end(),
              [](const SummaryRow* a, const SummaryRow* b) {
                  return a->mean_seconds < b->mean_seconds;
              });
    auto times = [&] {
        std::string s;
        for (const auto* r : by_time)
            s += r->solver + "=" + csv_double(r->mean_seconds) + "s ";
        return s;
    }();

    if (wiener)
        checks.push_back({"runtime: wiener fastest", by_time.front() == wiener, times});
    if (student && rows.size() >= 3)
        checks.push_back({"runtime: student second fastest", by_time[1] == student, times});
    if (teacher && student)
        checks.push_back({"runtime: teacher >= 10x student",
                          teacher->mean_seconds >= 10.0 * student->mean_seconds, times});
    if (dps)
        checks.push_back({"runtime: dps slowest", by_time.back() == dps, times});
    if (teacher && student && dps) {
        std::string q = "mse ddnm+=" + csv_double(teacher->mean_mse) +
                        " student=" + csv_double(student->mean_mse) +
                        " dps=" + csv_double(dps->mean_mse);
        checks.push_back({"quality: teacher <= student <= dps (mse)",
                          teacher->mean_mse <= student->mean_mse &&
                              student->mean_mse <= dps->mean_mse,
                          q});
    }
    return checks;
}

// ---------------------------------------------------------------------------
// Sweep: grid over one solver parameter; per-point records plus a mean row.

struct SweepOutput {
    std::vector<double> grid;
    std::vector<BenchmarkRecord> records; // grid-major, image-minor
    std::vector<SummaryRow> summary;      // one per grid point
};

inline std::vector<double> sweep_grid(const SweepSpec& s) {
    if (s.points < 1) throw ConfigError("sweep grid must have at least one point");
    std::vector<double> g;
    if (s.points == 1) {
        g.push_back(s.lo);
        return g;
    }
    for (int i = 0; i < s.points; ++i)
        g.push_back(s.lo + (s.hi - s.lo) * (double)i / (double)(s.points - 1));
    return g;
}

inline SweepOutput run_sweep(const ExperimentConfig& cfg, const BenchData& d) {
    const SolverSpec* base = nullptr;
    for (const auto& s : cfg.solvers)
        if (s.name == cfg.sweep.solver) base = &s;
    if (!base) throw ConfigError("sweep solver '" + cfg.sweep.solver + "' is not configured");

    SweepOutput out;
    out.grid = sweep_grid(cfg.sweep);
    std::vector<SolverSpec> specs;
    for (double v : out.grid) {
        SolverSpec s = *base;
        set_solver_param(s, cfg.sweep.param, v);
        specs.push_back(std::move(s));
    }
    MetricSet ms = metric_set(cfg.metrics);
    SolverAssets assets = load_solver_assets(cfg, specs);
    size_t n_jobs = specs.size() * d.ys.size();
    int workers = resolve_workers(cfg.workers, n_jobs);
    std::vector<WorkerState> ws = make_worker_states(assets, workers);

    out.records.resize(n_jobs);
    parallel_for(n_jobs, workers, [&](int slot, size_t j) {
        size_t gi = j / d.ys.size(), ii = j % d.ys.size();
        SolveResult r = run_solver(specs[gi], cfg, d, ws[(size_t)slot], ii);
        BenchmarkRecord rec;
        rec.id = d.ids[ii];
        rec.solver = specs[gi].name;
        rec.params = r.params;
        rec.seconds = r.seconds;
        fill_metrics(rec, ms, r.x, d.scenes[ii], *d.op, d.ys[ii]);
        out.records[j] = std::move(rec);
    });

    for (size_t gi = 0; gi < specs.size(); ++gi) {
        SummaryRow s;
        s.solver = specs[gi].name;
        s.params = out.records[gi * d.ys.size()].params;
        for (size_t ii = 0; ii < d.ys.size(); ++ii) {
            const BenchmarkRecord& r = out.records[gi * d.ys.size() + ii];
            s.mean_mse += r.mse_v;
            s.mean_psnr += r.psnr_v;
            s.mean_ssim += r.ssim_v;
            s.mean_residual += r.residual_v;
            s.mean_seconds += r.seconds;
        }
        double n = (double)d.ys.size();
        s.mean_mse /= n;
        s.mean_psnr /= n;
        s.mean_ssim /= n;
        s.mean_residual /= n;
        s.mean_seconds /= n;
        out.summary.push_back(std::move(s));
    }
    return out;
}

} // namespace lensless
