// Experiment driver for the lensless reconstruction library.
//
// Verbs: simulate, reconstruct, sweep, bench, distill {build-cache,train,infer},
// metrics. Every verb is driven by one config file and a base seed; outputs are
// TensorFiles, CSVs, and a per-verb run manifest. Exit codes: 0 ok, 1 failed
// check assertions, 2 config error, 3 numeric error, 4 stale cache.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "lensless/bench.hpp"
#include "lensless/io.hpp"

namespace fs = std::filesystem;
using namespace lensless;

static void ensure_dir(const std::string& p) {
    if (!p.empty()) fs::create_directories(p);
}

// Manifests list outputs relative to the output dir so two runs of the same
// config into different dirs produce identical manifests.
static std::string rel_to_out(const ExperimentConfig& cfg, const std::string& path) {
    std::string prefix = cfg.output_dir + "/";
    if (path.rfind(prefix, 0) == 0) return path.substr(prefix.size());
    return path;
}

// Loads the denoiser checkpoint, training and saving it first if absent. All
// sampling-based solvers and the teacher share this prior.
static Network ensure_denoiser(const ExperimentConfig& cfg, const BenchData& d) {
    std::string prefix = resolve_path(cfg, cfg.denoiser.checkpoint);
    if (fs::exists(prefix + ".net")) return load_network(prefix);
    int C = cfg.image.channels;
    SeededRng init = SeededRng(cfg.seed).derive("denoiser-init");
    Network net = make_backbone(C + 1, C, init);
    DenoiserTrainConfig tc;
    tc.epochs = cfg.denoiser.epochs;
    tc.batch = cfg.denoiser.batch;
    tc.lr = cfg.denoiser.lr;
    tc.loss_csv = resolve_path(cfg, "denoiser_loss.csv");
    SeededRng trng = SeededRng(cfg.seed).derive("denoiser-train");
    std::printf("denoiser checkpoint missing, training %d epochs -> %s\n",
                tc.epochs, prefix.c_str());
    double last = train_denoiser(net, d.scenes, d.sched, trng, tc);
    save_network(net, prefix);
    std::printf("denoiser trained, final train mse %s\n", csv_double(last).c_str());
    return net;
}

static bool config_needs_denoiser(const std::vector<SolverSpec>& solvers) {
    for (const auto& s : solvers)
        if (solver_needs_denoiser(s.name)) return true;
    return false;
}

static bool known_solver(const std::string& n) {
    return n == "wiener" || n == "admm" || n == "dps" || n == "ddnm" || n == "ddnm+" ||
           n == "student";
}

// ---------------------------------------------------------------------------

static int verb_simulate(const ExperimentConfig& cfg) {
    BenchData d = prepare_bench_data(cfg);
    std::string ddir = cfg.output_dir + "/data";
    ensure_dir(ddir);
    std::vector<std::string> outputs;
    write_tensor(ddir + "/psf.tf", d.psf.kernel);
    outputs.push_back("data/psf.tf");
    for (size_t i = 0; i < d.scenes.size(); ++i) {
        write_tensor(ddir + "/" + d.ids[i] + "_scene.tf", d.scenes[i]);
        write_tensor(ddir + "/" + d.ids[i] + "_y.tf", d.ys[i]);
        outputs.push_back("data/" + d.ids[i] + "_scene.tf");
        outputs.push_back("data/" + d.ids[i] + "_y.tf");
    }
    write_run_manifest(cfg, d, "simulate", outputs,
                       cfg.output_dir + "/manifest_simulate.json");
    std::printf("simulate: %zu scenes, psf %dx%d -> %s\n", d.scenes.size(),
                d.psf.kernel.height(), d.psf.kernel.width(), ddir.c_str());
    return 0;
}

static int verb_reconstruct(const ExperimentConfig& cfg, const SolverSpec& spec) {
    BenchData d = prepare_bench_data(cfg);
    if (solver_needs_denoiser(spec.name)) ensure_denoiser(cfg, d);
    if (spec.name == "student" &&
        !fs::exists(resolve_path(cfg, spec.checkpoint) + ".student"))
        throw ConfigError("student checkpoint missing: run 'distill train' first");

    std::vector<SolverSpec> specs{spec};
    SolverAssets assets = load_solver_assets(cfg, specs);
    int workers = resolve_workers(cfg.workers, d.ys.size());
    std::vector<WorkerState> ws = make_worker_states(assets, workers);
    std::vector<SolveResult> results(d.ys.size());
    parallel_for(d.ys.size(), workers, [&](int slot, size_t i) {
        results[i] = run_solver(spec, cfg, d, ws[(size_t)slot], i);
    });

    std::string rdir = cfg.output_dir + "/recon/" + spec.name;
    ensure_dir(rdir);
    std::vector<std::string> outputs;
    for (size_t i = 0; i < results.size(); ++i) {
        std::string xrel = "recon/" + spec.name + "/" + d.ids[i] + ".tf";
        write_tensor(cfg.output_dir + "/" + xrel, results[i].x);
        outputs.push_back(xrel);
        if (!results[i].trace.empty()) {
            std::string trel = "recon/" + spec.name + "/" + d.ids[i] + "_trace.csv";
            CsvWriter w(cfg.output_dir + "/" + trel);
            w.header({"t", "residual", "lambda_t", "phi_t"});
            for (const auto& r : results[i].trace)
                w.row_strings({std::to_string(r.t), csv_double(r.residual),
                               csv_double(r.lambda_t), csv_double(r.phi_t)});
            outputs.push_back(trel);
        }
    }
    write_run_manifest(cfg, d, "reconstruct --solver " + spec.name, outputs,
                       cfg.output_dir + "/manifest_reconstruct_" + spec.name + ".json");
    std::printf("reconstruct %s: %zu images (%s) -> %s\n", spec.name.c_str(),
                results.size(), results[0].params.c_str(), rdir.c_str());
    return 0;
}

static int verb_bench(const ExperimentConfig& cfg, bool check) {
    BenchData d = prepare_bench_data(cfg);
    if (config_needs_denoiser(cfg.solvers)) ensure_denoiser(cfg, d);
    BenchOutput out = run_bench(cfg, d);
    MetricSet ms = metric_set(cfg.metrics);

    ensure_dir(cfg.output_dir);
    {
        CsvWriter w(cfg.output_dir + "/records.csv");
        w.header(record_header());
        for (const auto& r : out.records) w.row_strings(record_row(r, ms));
    }
    {
        CsvWriter w(cfg.output_dir + "/summary.csv");
        w.header(summary_header());
        for (const auto& r : out.summary) w.row_strings(summary_row(r, ms));
    }
    write_run_manifest(cfg, d, "bench", {"records.csv", "summary.csv"},
                       cfg.output_dir + "/manifest_bench.json");
    for (const auto& s : out.summary)
        std::printf("bench %-8s mean_mse=%-12s mean_seconds=%s\n", s.solver.c_str(),
                    csv_double(s.mean_mse).c_str(), csv_double(s.mean_seconds).c_str());

    if (check) {
        std::vector<OrderingCheck> checks = check_speed_quality(out.summary);
        bool all = true;
        for (const auto& c : checks) {
            std::printf("check %s: %s (%s)\n", c.pass ? "PASS" : "FAIL",
                        c.name.c_str(), c.detail.c_str());
            all = all && c.pass;
        }
        if (checks.empty()) std::printf("check: fewer than two solvers, nothing to assert\n");
        if (!all) return 1;
    }
    return 0;
}

static int verb_sweep(const ExperimentConfig& cfg) {
    BenchData d = prepare_bench_data(cfg);
    if (cfg.sweep.solver.empty())
        throw ConfigError("sweep needs a 'sweep' config section with solver and param");
    if (solver_needs_denoiser(cfg.sweep.solver)) ensure_denoiser(cfg, d);
    SweepOutput out = run_sweep(cfg, d);
    MetricSet ms = metric_set(cfg.metrics);

    ensure_dir(cfg.output_dir);
    size_t per = d.ys.size();
    {
        CsvWriter w(cfg.output_dir + "/sweep_records.csv");
        w.header({"solver", "param", "value", "id", "params", "mse", "psnr", "ssim",
                  "perceptual", "residual", "seconds"});
        for (size_t j = 0; j < out.records.size(); ++j) {
            const BenchmarkRecord& r = out.records[j];
            double v = out.grid[j / per];
            w.row_strings({r.solver, cfg.sweep.param, csv_double(v), r.id, r.params,
                           ms.want_mse ? csv_double(r.mse_v) : "",
                           ms.want_psnr ? csv_double(r.psnr_v) : "",
                           ms.want_ssim ? csv_double(r.ssim_v) : "", "",
                           ms.want_residual ? csv_double(r.residual_v) : "",
                           csv_double(r.seconds)});
        }
    }
    {
        CsvWriter w(cfg.output_dir + "/sweep_summary.csv");
        w.header({"solver", "param", "value", "params", "mean_mse", "mean_psnr",
                  "mean_ssim", "mean_perceptual", "mean_residual", "mean_seconds"});
        for (size_t g = 0; g < out.summary.size(); ++g) {
            const SummaryRow& s = out.summary[g];
            w.row_strings({s.solver, cfg.sweep.param, csv_double(out.grid[g]), s.params,
                           ms.want_mse ? csv_double(s.mean_mse) : "",
                           ms.want_psnr ? csv_double(s.mean_psnr) : "",
                           ms.want_ssim ? csv_double(s.mean_ssim) : "", "",
                           ms.want_residual ? csv_double(s.mean_residual) : "",
                           csv_double(s.mean_seconds)});
        }
    }
    write_run_manifest(cfg, d, "sweep", {"sweep_records.csv", "sweep_summary.csv"},
                       cfg.output_dir + "/manifest_sweep.json");
    std::printf("sweep %s.%s over [%s, %s], %zu points x %zu images\n",
                cfg.sweep.solver.c_str(), cfg.sweep.param.c_str(),
                csv_double(cfg.sweep.lo).c_str(), csv_double(cfg.sweep.hi).c_str(),
                out.grid.size(), per);
    return 0;
}

static int verb_metrics(const ExperimentConfig& cfg) {
    BenchData d = prepare_bench_data(cfg);
    MetricSet ms = metric_set(cfg.metrics);
    std::string rroot = cfg.output_dir + "/recon";
    if (!fs::exists(rroot))
        throw ConfigError("no reconstructions under " + rroot +
                          ": run reconstruct or distill infer first");
    std::vector<std::string> solver_dirs;
    for (const auto& e : fs::directory_iterator(rroot))
        if (e.is_directory()) solver_dirs.push_back(e.path().filename().string());
    std::sort(solver_dirs.begin(), solver_dirs.end());

    std::vector<BenchmarkRecord> records;
    for (const auto& sname : solver_dirs) {
        for (size_t i = 0; i < d.ids.size(); ++i) {
            std::string xpath = rroot + "/" + sname + "/" + d.ids[i] + ".tf";
            if (!fs::exists(xpath)) continue;
            Tensor x = read_tensor(xpath);
            BenchmarkRecord r;
            r.id = d.ids[i];
            r.solver = sname;
            fill_metrics(r, ms, x, d.scenes[i], *d.op, d.ys[i]);
            records.push_back(std::move(r));
        }
    }
    if (records.empty())
        throw ConfigError("no stored reconstructions match the configured scene ids");
    CsvWriter w(cfg.output_dir + "/metrics.csv");
    w.header(record_header());
    for (const auto& r : records) {
        std::vector<std::string> row = record_row(r, ms);
        row.back() = ""; // seconds are measured at solve time, not here
        w.row_strings(row);
    }
    write_run_manifest(cfg, d, "metrics", {"metrics.csv"},
                       cfg.output_dir + "/manifest_metrics.json");
    std::printf("metrics: %zu records -> %s/metrics.csv\n", records.size(),
                cfg.output_dir.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// distill verbs

static TeacherSetup teacher_setup(const ExperimentConfig& cfg, const PseudoInverse& pinv) {
    TeacherSetup ts;
    ts.T = cfg.schedule.steps;
    ts.beta_min = cfg.schedule.beta_min;
    ts.beta_max = cfg.schedule.beta_max;
    ts.sigma_y = scaled_sigma_y(cfg.distill.sigma_y, cfg.distill.sigma_y_scale, pinv);
    ts.pinv = cfg.pinv;
    return ts;
}

static int verb_distill_build_cache(const ExperimentConfig& cfg) {
    BenchData d = prepare_bench_data(cfg);
    Network den = ensure_denoiser(cfg, d);
    TeacherSetup ts = teacher_setup(cfg, *d.pinv);
    std::string root = resolve_path(cfg, cfg.distill.cache_root);
    ensure_dir(root);
    TeacherCache c =
        build_teacher_cache(root, d.ids, d.ys, d.psf, ts, den, cfg.seed, cfg.workers);
    write_run_manifest(cfg, d, "distill build-cache",
                       {rel_to_out(cfg, c.dir + "/manifest.json")},
                       cfg.output_dir + "/manifest_distill_build_cache.json");
    std::printf("teacher cache: %s (%zu items, sigma_y=%s, T=%d)\n", c.dir.c_str(),
                c.items.size(), csv_double(ts.sigma_y).c_str(), ts.T);
    return 0;
}

static int verb_distill_train(const ExperimentConfig& cfg) {
    BenchData d = prepare_bench_data(cfg);
    Network den = ensure_denoiser(cfg, d);
    TeacherSetup ts = teacher_setup(cfg, *d.pinv);
    uint64_t h = teacher_config_hash(ts, d.psf, cfg.image.height, cfg.image.width,
                                     network_param_hash(den));
    std::string dir = teacher_cache_dir(resolve_path(cfg, cfg.distill.cache_root), h);
    if (!fs::exists(dir + "/manifest.json"))
        throw ConfigError("teacher cache not found at " + dir +
                          ": run 'distill build-cache' first");
    TeacherCache cache = load_teacher_cache(dir);
    TeacherData data = load_cache_tensors(cache);

    SeededRng init = SeededRng(cfg.seed).derive("student-init");
    StudentModel m = make_student(cfg.image.channels, d.sched,
                                  tfix_from_string(cfg.distill.t_fix), init,
                                  cfg.distill.project_null);
    StudentTrainConfig sc;
    sc.epochs = cfg.distill.epochs;
    sc.batch = cfg.distill.batch;
    sc.lr = cfg.distill.lr;
    sc.loss_csv = resolve_path(cfg, "student_loss.csv");
    SeededRng trng = SeededRng(cfg.seed).derive("student-train");
    StudentTrainResult r = train_student(m, cache, data, d.psf, cfg.pinv, sc, trng);
    std::string prefix = resolve_path(cfg, cfg.distill.student_checkpoint);
    save_student(m, prefix);

    const EpochLoss& first = r.curve.front();
    const EpochLoss& last = r.curve.back();
    std::printf("student trained: %zu train / %zu test items, t_fix=%s\n",
                r.train_idx.size(), r.test_idx.size(), cfg.distill.t_fix.c_str());
    std::printf("  epoch 0: train %s test %s\n", csv_double(first.train_mse).c_str(),
                csv_double(first.test_mse).c_str());
    std::printf("  epoch %d: train %s test %s\n", last.epoch,
                csv_double(last.train_mse).c_str(), csv_double(last.test_mse).c_str());
    write_run_manifest(cfg, d, "distill train",
                       {"student_loss.csv", rel_to_out(cfg, prefix + ".student"),
                        rel_to_out(cfg, prefix + ".reducer.net"),
                        rel_to_out(cfg, prefix + ".reducer.tf"),
                        rel_to_out(cfg, prefix + ".backbone.net"),
                        rel_to_out(cfg, prefix + ".backbone.tf")},
                       cfg.output_dir + "/manifest_distill_train.json");
    return 0;
}

static int verb_distill_infer(const ExperimentConfig& cfg) {
    std::string prefix = resolve_path(cfg, cfg.distill.student_checkpoint);
    if (!fs::exists(prefix + ".student"))
        throw ConfigError("student checkpoint missing: run 'distill train' first");
    StudentModel m = load_student(prefix);
    BenchData d = prepare_bench_data(cfg);
    std::vector<double> secs;
    std::vector<Tensor> xs = student_infer_batch(m, *d.op, *d.pinv, d.ys, &secs);

    std::string rdir = cfg.output_dir + "/recon/student";
    ensure_dir(rdir);
    std::vector<std::string> outputs;
    for (size_t i = 0; i < xs.size(); ++i) {
        std::string rel = "recon/student/" + d.ids[i] + ".tf";
        write_tensor(cfg.output_dir + "/" + rel, xs[i]);
        outputs.push_back(rel);
    }
    {
        CsvWriter w(rdir + "/timing.csv");
        w.header({"id", "seconds"});
        for (size_t i = 0; i < secs.size(); ++i)
            w.row_strings({d.ids[i], csv_double(secs[i])});
    }
    outputs.push_back("recon/student/timing.csv");
    write_run_manifest(cfg, d, "distill infer", outputs,
                       cfg.output_dir + "/manifest_distill_infer.json");
    double total = 0;
    for (double s : secs) total += s;
    std::printf("student inference: %zu images, mean %s s -> %s\n", xs.size(),
                csv_double(xs.empty() ? 0.0 : total / (double)xs.size()).c_str(),
                rdir.c_str());
    return 0;
}

// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
    CLI::App app{"lensless imaging reconstruction bench"};
    app.require_subcommand(1);
    app.fallthrough(); // accept -c/-o/--workers after the verb as well

    std::string config_path;
    std::string output_override;
    int workers_override = 0;
    app.add_option("-c,--config", config_path, "experiment config (json)")->required();
    app.add_option("-o,--output", output_override, "override config output dir");
    app.add_option("--workers", workers_override, "override worker count");

    CLI::App* sim = app.add_subcommand("simulate", "synthesize scenes, psf, measurements");

    CLI::App* rec = app.add_subcommand("reconstruct", "run one solver over all scenes");
    std::string solver_name;
    double zeta = 0, sigma_y = 0, lambda_w = 0;
    int steps = 0;
    rec->add_option("--solver", solver_name,
                    "wiener | admm | dps | ddnm | ddnm+ | student")
        ->required();
    CLI::Option* o_zeta = rec->add_option("--zeta", zeta, "dps guidance scale");
    CLI::Option* o_sy = rec->add_option("--sigma-y", sigma_y, "ddnm+ noise assumption");
    CLI::Option* o_steps = rec->add_option("--steps", steps, "sampler step count");
    CLI::Option* o_lw = rec->add_option("--lambda-w", lambda_w, "wiener regularizer");

    CLI::App* swp = app.add_subcommand("sweep", "grid over one solver parameter");

    CLI::App* ben = app.add_subcommand("bench", "all solvers x all scenes, with timing");
    bool check = false;
    ben->add_flag("--check", check, "assert speed/quality orderings (exit 1 on failure)");

    CLI::App* dis = app.add_subcommand("distill", "teacher cache / student training");
    dis->require_subcommand(1);
    CLI::App* dbc = dis->add_subcommand("build-cache", "precompute teacher targets");
    CLI::App* dtr = dis->add_subcommand("train", "train the student on the cache");
    CLI::App* din = dis->add_subcommand("infer", "single-pass student reconstruction");

    CLI::App* met = app.add_subcommand("metrics", "recompute metrics for stored outputs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : ConfigError::exit_code;
    }

    try {
        ExperimentConfig cfg = load_config(config_path);
        if (!output_override.empty()) cfg.output_dir = output_override;
        if (workers_override > 0) cfg.workers = workers_override;
        ensure_dir(cfg.output_dir);

        if (sim->parsed()) return verb_simulate(cfg);
        if (rec->parsed()) {
            SolverSpec spec;
            spec.name = solver_name;
            bool found = false;
            for (const auto& s : cfg.solvers)
                if (s.name == solver_name) {
                    spec = s;
                    found = true;
                    break;
                }
            if (!found && !known_solver(solver_name))
                throw ConfigError("unknown solver: " + solver_name);
            if (o_zeta->count()) spec.zeta = zeta;
            if (o_sy->count()) spec.sigma_y = sigma_y;
            if (o_steps->count()) spec.steps = steps;
            if (o_lw->count()) spec.lambda_w = lambda_w;
            return verb_reconstruct(cfg, spec);
        }
        if (swp->parsed()) return verb_sweep(cfg);
        if (ben->parsed()) return verb_bench(cfg, check);
        if (dis->parsed()) {
            if (dbc->parsed()) return verb_distill_build_cache(cfg);
            if (dtr->parsed()) return verb_distill_train(cfg);
            if (din->parsed()) return verb_distill_infer(cfg);
        }
        if (met->parsed()) return verb_metrics(cfg);
        throw ConfigError("no verb given");
    } catch (const StaleCacheError& e) {
        std::fprintf(stderr, "stale cache: %s\n", e.what());
        return StaleCacheError::exit_code;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return NumericError::exit_code;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return ConfigError::exit_code;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return FormatError::exit_code;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return ConfigError::exit_code;
    }
}
