// SPDX-License-Identifier: Apache-2.0
//
// Command-line front door: simulate plant runs, build windowed datasets,
// generate cross-domain and interpolated samples, train and evaluate the
// classifier, run whole experiments, and summarize reports.
//
// Every artifact-producing subcommand accepts --check: the artifacts are
// re-derived into <out>.check-tmp and byte-compared against the existing
// output directory.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <mutex>
#include <thread>

#include "tsasan/csvio.hpp"
#include "tsasan/gradcheck.hpp"
#include "tsasan/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tsasan;

namespace {

json load_json_file(const std::string& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
}

// --set trainer.epochs=5 style overrides; values parse as JSON when they can,
// otherwise as strings.
void apply_overrides(json& config, const std::vector<std::string>& sets) {
    for (const auto& s : sets) {
        auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw UsageError("--set expects key.path=value, got '" + s + "'");
        }
        std::string key = s.substr(0, eq);
        std::string value = s.substr(eq + 1);
        std::string pointer = "/";
        for (char ch : key) pointer += ch == '.' ? '/' : ch;
        json parsed = json::parse(value, nullptr, false);
        if (parsed.is_discarded()) parsed = value;
        config[json::json_pointer(pointer)] = parsed;
    }
}

void print_eval_summary(const EvalReport& report) {
    std::printf("ACC %.4f\n", report.acc);
    std::printf("%-6s %10s %10s\n", "class", "FDR", "FPR");
    for (size_t i = 0; i < report.classes.size(); ++i) {
        const double fdr = report.fdr[i], fpr = report.fpr[i];
        std::printf("%-6s %10.4f %10.4f\n", report.classes[i].c_str(),
                    std::isnan(fdr) ? -1.0 : fdr, std::isnan(fpr) ? -1.0 : fpr);
    }
}

// Runs `produce(dir)` either directly against out_dir or, under --check,
// into a scratch directory whose artifacts must byte-match the existing ones.
using Producer = std::function<std::vector<std::string>(const std::string&)>;

int run_checked(const std::string& out_dir, bool check, const Producer& produce) {
    if (!check) {
        produce(out_dir);
        return 0;
    }
    if (!fs::is_directory(out_dir)) {
        throw DataError("--check: output directory '" + out_dir + "' does not exist yet");
    }
    const std::string tmp = out_dir + ".check-tmp";
    fs::remove_all(tmp);
    std::vector<std::string> files;
    try {
        files = produce(tmp);
        for (const auto& rel : files) {
            if (!file_exists(out_dir + "/" + rel)) {
                throw DataError("--check: artifact '" + rel + "' missing from " + out_dir);
            }
            if (read_text_file(out_dir + "/" + rel) != read_text_file(tmp + "/" + rel)) {
                throw DataError("--check: artifact mismatch at " + rel);
            }
        }
    } catch (...) {
        fs::remove_all(tmp);
        throw;
    }
    fs::remove_all(tmp);
    std::printf("check passed: %zu artifact(s) reproduce byte-identically\n", files.size());
    return 0;
}

RunRegistry load_registry(const std::string& train_dir, const std::string& test_dir) {
    RunRegistry reg;
    auto scan = [&](const std::string& dir, RunRole role) {
        if (dir.empty()) return;
        if (!fs::is_directory(dir)) throw DataError("run directory '" + dir + "' does not exist");
        std::vector<std::string> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.path().extension() == ".csv") files.push_back(entry.path().string());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            SimRun run = load_run(f);
            RunRecord rec = RunRecord::from_sim(run, role);
            rec.source_path = f;
            reg.add(std::move(rec));
        }
    };
    scan(train_dir, RunRole::train);
    scan(test_dir, RunRole::test);
    return reg;
}

std::vector<std::string> produce_simulate(const std::string& config_path,
                                          const std::string& mode_id, const std::string& fault_id,
                                          std::vector<uint64_t> seeds, long jobs,
                                          const std::string& out_dir) {
    CstrParams params;
    if (!config_path.empty()) params = cstr_params_from_json(load_json_file(config_path));
    params.validate();
    ModeSpec mode = ModeSpec::by_id(mode_id, params);
    FaultSpec fault = FaultSpec::by_id(fault_id);
    if (seeds.empty()) seeds.push_back(0);
    jobs = std::max(1L, std::min<long>(jobs, static_cast<long>(seeds.size())));

    std::vector<std::string> written(seeds.size());
    std::exception_ptr failure;
    std::mutex mu;
    auto worker = [&](size_t begin, size_t step) {
        for (size_t i = begin; i < seeds.size(); i += step) {
            try {
                SimRun run = simulate(params, mode, fault, seeds[i]);
                const std::string rel =
                    mode_id + "_" + fault_id + "_s" + std::to_string(seeds[i]) + ".csv";
                export_run(run, out_dir + "/" + rel);
                written[i] = rel;
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    if (jobs == 1) {
        worker(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (long j = 0; j < jobs; ++j) pool.emplace_back(worker, static_cast<size_t>(j), jobs);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    std::vector<std::string> artifacts;
    for (const auto& rel : written) {
        std::printf("wrote %s/%s\n", out_dir.c_str(), rel.c_str());
        artifacts.push_back(rel);
        artifacts.push_back(rel.substr(0, rel.size() - 4) + ".json");
    }
    return artifacts;
}

std::vector<std::string> produce_build(const std::string& task_id, const std::string& train_dir,
                                       const std::string& test_dir, long stride, uint64_t seed,
                                       const std::string& out_dir) {
    TaskConfig task = TaskConfig::by_id(task_id);
    RunRegistry reg = load_registry(train_dir, test_dir);
    TaskDataset ds = build_task(task, reg, stride, seed);
    write_windows_csv(out_dir + "/windows.csv", ds.train);
    write_windows_csv(out_dir + "/test_windows.csv", ds.test);
    write_text_file(out_dir + "/manifest.json", ds.manifest.dump(2) + "\n");
    std::printf("built %s: %zu training windows, %zu test windows\n", task_id.c_str(),
                ds.train.size(), ds.test.size());
    return {"windows.csv", "test_windows.csv", "manifest.json"};
}

std::vector<std::string> produce_generate(const std::string& dir, bool no_dasg, bool no_iss,
                                          double iss_fraction, int iss_alpha, uint64_t seed) {
    json manifest = load_json_file(dir + "/manifest.json");
    TaskConfig task = TaskConfig::by_id(manifest.at("task_id"));
    auto windows = read_windows_csv(dir + "/windows.csv");

    std::vector<WindowSample> real;
    for (const auto& w : windows) {
        if (w.source == WindowSource::real) real.push_back(w);
    }
    std::map<std::string, DomainStats> stats;
    for (const auto& mode : task.modes) {
        std::vector<WindowSample> healthy;
        for (const auto& w : real) {
            if (w.domain_id == mode && w.label == "H") healthy.push_back(w);
        }
        stats[mode] = fit_domain_stats(healthy, mode);
    }

    std::vector<WindowSample> out = real;
    size_t n_dasg = 0, n_iss = 0;
    if (!no_dasg) {
        auto generated = dasg_expand(real, task, stats);
        n_dasg = generated.size();
        for (auto& g : generated) out.push_back(std::move(g));
    }
    if (!no_iss) {
        for (const auto& mode : task.modes) {
            std::vector<WindowSample> healthy_latent;
            for (const auto& w : out) {
                if (w.domain_id == mode && w.label == "H") {
                    WindowSample l = w;
                    l.features = to_latent(w.features, stats.at(mode));
                    healthy_latent.push_back(std::move(l));
                }
            }
            for (const auto& cat : task.categories) {
                if (cat == "H") continue;
                std::vector<WindowSample> fault_latent;
                for (const auto& w : out) {
                    if (w.domain_id == mode && w.label == cat && w.source != WindowSource::iss) {
                        WindowSample l = w;
                        l.features = to_latent(w.features, stats.at(mode));
                        fault_latent.push_back(std::move(l));
                    }
                }
                if (fault_latent.empty()) continue;
                const size_t count = static_cast<size_t>(
                    std::llround(iss_fraction * static_cast<double>(fault_latent.size())));
                if (count == 0) continue;
                auto mixes = iss_synthesize(fault_latent, healthy_latent, count, iss_alpha,
                                            splitmix64_mix(seed, "iss/" + mode + "/" + cat));
                for (const auto& m : mixes) {
                    WindowSample w;
                    w.features = from_latent(m.features, stats.at(mode));
                    w.label = m.label;
                    w.domain_id = m.domain_id;
                    w.source = WindowSource::iss;
                    out.push_back(std::move(w));
                    ++n_iss;
                }
            }
        }
    }
    write_windows_csv(dir + "/windows.csv", out);
    write_domain_stats(dir + "/domain_stats.json", stats);
    manifest["generated"] = json{{"dasg", n_dasg}, {"iss", n_iss}, {"seed", seed}};
    write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
    std::printf("generated %zu dasg + %zu iss windows (total %zu)\n", n_dasg, n_iss, out.size());
    return {"windows.csv", "domain_stats.json", "manifest.json"};
}

struct ScaledData {
    std::vector<ModelInput> inputs;
    long v = 0;
};

ScaledData scale_windows(const std::vector<WindowSample>& windows, const DomainStats& scaler,
                         const std::vector<std::string>& categories) {
    std::map<std::string, int> index;
    for (size_t i = 0; i < categories.size(); ++i) index[categories[i]] = static_cast<int>(i);
    ScaledData out;
    if (!windows.empty()) out.v = static_cast<long>(windows[0].features.rows);
    for (const auto& w : windows) {
        ModelInput in;
        in.features = to_latent(w.features, scaler).data;
        in.label = index.at(w.label);
        in.domain_id = w.domain_id;
        in.category = w.label;
        out.inputs.push_back(std::move(in));
    }
    return out;
}

std::vector<std::string> produce_train(const std::string& data_dir, const std::string& out_dir,
                                       long epochs, long batch_size, double base_lr,
                                       uint64_t seed, const std::string& sain_mode,
                                       bool no_tsam) {
    json manifest = load_json_file(data_dir + "/manifest.json");
    TaskConfig task = TaskConfig::by_id(manifest.at("task_id"));
    auto windows = read_windows_csv(data_dir + "/windows.csv");
    if (windows.empty()) throw DataError("train: no windows in " + data_dir);

    std::vector<WindowSample> healthy;
    for (const auto& w : windows) {
        if (w.label == "H" && w.source == WindowSource::real) healthy.push_back(w);
    }
    DomainStats scaler = fit_input_scaler(healthy);
    ScaledData data = scale_windows(windows, scaler, task.categories);

    ArchConfig arch;
    arch.v = data.v;
    arch.window = kWindowLength;
    arch.n_classes = static_cast<long>(task.categories.size());
    arch.sain_mode = sain_mode_from_string(sain_mode);
    arch.use_tsam = !no_tsam;
    TsaSan model(arch, splitmix64_mix(seed, "model-init"));

    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.base_lr = base_lr;
    cfg.seed = splitmix64_mix(seed, "train");
    TrainResult result = train(model, data.inputs, cfg);

    Matrix curve(result.epoch_loss.size(), 3);
    for (size_t e = 0; e < result.epoch_loss.size(); ++e) {
        curve.at(e, 0) = static_cast<double>(e);
        curve.at(e, 1) = result.epoch_loss[e];
        curve.at(e, 2) = result.epoch_lr[e];
    }
    write_numeric_csv(out_dir + "/loss_curve.csv", {"epoch", "mean_loss", "lr"}, curve);
    json ckpt_manifest{{"task", task.task_id},
                       {"seed", seed},
                       {"epochs", epochs},
                       {"categories", task.categories},
                       {"input_scaler", json{{"mu", scaler.mu},
                                             {"sigma", scaler.sigma},
                                             {"n_windows", scaler.n_windows}}}};
    save_checkpoint(model, ckpt_manifest, out_dir + "/checkpoint.json");
    std::printf("trained %ld epochs, final loss %s\n", epochs,
                result.epoch_loss.empty() ? "n/a" : fmt17(result.epoch_loss.back()).c_str());
    return {"loss_curve.csv", "checkpoint.json"};
}

std::vector<std::string> produce_evaluate(const std::string& checkpoint_path,
                                          const std::string& data_dir, const std::string& split,
                                          const std::string& out_dir) {
    auto [model, manifest] = load_checkpoint(checkpoint_path);
    const std::vector<std::string> categories =
        manifest.at("categories").get<std::vector<std::string>>();
    DomainStats scaler;
    scaler.mu = manifest.at("input_scaler").at("mu").get<std::vector<double>>();
    scaler.sigma = manifest.at("input_scaler").at("sigma").get<std::vector<double>>();

    const std::string file = split == "train" ? "/windows.csv" : "/test_windows.csv";
    auto windows = read_windows_csv(data_dir + file);
    ScaledData data = scale_windows(windows, scaler, categories);
    EvalReport report = evaluate(model, data.inputs, categories, 512);

    write_text_file(out_dir + "/metrics.json", report.to_json().dump(2) + "\n");
    print_eval_summary(report);
    return {"metrics.json"};
}

// full-directory comparison for experiment --check (catches extra or missing
// files, including the cached runs)
bool dirs_identical(const std::string& a, const std::string& b, std::string& first_diff) {
    auto list = [](const std::string& root) {
        std::vector<std::string> rel;
        for (const auto& entry : fs::recursive_directory_iterator(root)) {
            if (entry.is_regular_file()) {
                rel.push_back(fs::relative(entry.path(), root).string());
            }
        }
        std::sort(rel.begin(), rel.end());
        return rel;
    };
    auto la = list(a), lb = list(b);
    if (la != lb) {
        first_diff = "file lists differ";
        return false;
    }
    for (const auto& rel : la) {
        if (read_text_file(a + "/" + rel) != read_text_file(b + "/" + rel)) {
            first_diff = rel;
            return false;
        }
    }
    return true;
}

int cmd_selfcheck() {
    int failures = 0;
    auto report = [&](const char* name, bool ok, double value) {
        std::printf("%s %s (%.3g)\n", ok ? "PASS" : "FAIL", name, value);
        if (!ok) ++failures;
    };

    Rng rng(1);
    {
        Tensor x = Tensor::uniform({3, 4}, -1, 1, rng);
        Tensor w = Tensor::uniform({4, 3}, -1, 1, rng);
        Tensor b = Tensor::uniform({3}, -1, 1, rng);
        double err = finite_difference_check(
            [&](const Tensor& t) { return sum(affine(x, t, b)); }, w, 1e-4);
        report("affine gradient", err < 1e-6, err);
    }
    {
        Tensor x = Tensor::uniform({2, 12}, -1, 1, rng);
        Tensor k = Tensor::uniform({2, 3}, -1, 1, rng);
        Tensor b = Tensor::uniform({2}, -1, 1, rng);
        double err = finite_difference_check(
            [&](const Tensor& t) { return sum(depthwise_conv1d(x, t, b)); }, k, 1e-4);
        report("depthwise conv gradient", err < 1e-6, err);
    }
    {
        GruParams p = GruParams::init(3, 2, rng);
        Tensor x = Tensor::uniform({3, 3}, -1, 1, rng);
        double err = finite_difference_check(
            [&](const Tensor& t) { return sum(gru_forward(t, p, Tensor::zeros({2}))); }, x, 1e-4);
        report("gru gradient", err < 1e-4, err);
    }
    {
        Tensor p = softmax(Tensor::uniform({8, 5}, -3, 3, rng));
        double worst = 0.0;
        for (long i = 0; i < 8; ++i) {
            double s = 0.0;
            for (long j = 0; j < 5; ++j) s += p.value()[i * 5 + j];
            worst = std::max(worst, std::fabs(s - 1.0));
        }
        report("softmax row normalization", worst < 1e-12, worst);
    }
    {
        Tensor param = Tensor::from_data({3}, {1.0, 2.0, 3.0}, true);
        param.zero_grad();
        std::vector<std::pair<std::string, Tensor>> params = {{"p", param}};
        AdamState state;
        adam_step(params, state, 0.1);
        bool ok = param.value() == std::vector<double>{1.0, 2.0, 3.0};
        report("adam zero-gradient identity", ok, 0.0);
    }
    {
        WindowSample f, h;
        f.domain_id = h.domain_id = "M1";
        f.label = "F1";
        h.label = "H";
        f.features = Matrix(1, 2, 1.0);
        h.features = Matrix(1, 2, 0.0);
        auto mixes = iss_synthesize({f}, {h}, 20000, 2, 7);
        double lo = 1.0, hi = 0.0, mean = 0.0;
        for (const auto& m : mixes) {
            lo = std::min(lo, m.lambda);
            hi = std::max(hi, m.lambda);
            mean += m.lambda;
        }
        mean /= static_cast<double>(mixes.size());
        report("iss lambda bounds", lo >= 0.2 && hi <= 1.0, lo);
        report("iss lambda mean", std::fabs(mean - 0.6) < 0.02, mean);
    }
    return failures == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multimode fault-diagnosis workbench"};
    app.require_subcommand(1);

    // simulate ---------------------------------------------------------------
    auto* sim = app.add_subcommand("simulate", "integrate plant runs and export CSV + manifest");
    std::string sim_config, sim_mode = "M1", sim_fault = "H", sim_out = ".";
    std::vector<uint64_t> sim_seeds;
    long sim_jobs = 1;
    bool sim_check = false;
    sim->add_option("--config", sim_config, "plant parameter JSON");
    sim->add_option("--mode", sim_mode, "operating mode (M1, M2, M3)");
    sim->add_option("--fault", sim_fault, "health state (H, F1..F9)");
    sim->add_option("--seed,--seeds", sim_seeds, "one or more run seeds");
    sim->add_option("--jobs", sim_jobs, "parallel workers for independent seeds");
    sim->add_option("--out", sim_out, "output directory");
    sim->add_flag("--check", sim_check, "re-derive and byte-compare artifacts");

    // build ------------------------------------------------------------------
    auto* build = app.add_subcommand("build", "window runs into a labeled task dataset");
    std::string build_task_id = "T4", build_train_dir, build_test_dir, build_out = ".";
    long build_stride = 4;
    uint64_t build_seed = 0;
    bool build_check = false;
    build->add_option("--task", build_task_id, "task id (T1..T9)");
    build->add_option("--train-runs", build_train_dir, "directory of training runs")->required();
    build->add_option("--test-runs", build_test_dir, "directory of test runs")->required();
    build->add_option("--stride", build_stride, "window stride");
    build->add_option("--seed", build_seed, "split seed recorded in the manifest");
    build->add_option("--out", build_out, "dataset output directory");
    build->add_flag("--check", build_check, "re-derive and byte-compare artifacts");

    // generate ----------------------------------------------------------------
    auto* gen = app.add_subcommand("generate", "expand a dataset with dasg/iss windows");
    std::string gen_data;
    bool gen_no_dasg = false, gen_no_iss = false, gen_check = false;
    double gen_iss_fraction = 0.5;
    int gen_iss_alpha = 2;
    uint64_t gen_seed = 0;
    gen->add_option("--data", gen_data, "dataset directory")->required();
    gen->add_flag("--no-dasg", gen_no_dasg, "skip cross-domain generation");
    gen->add_flag("--no-iss", gen_no_iss, "skip interpolation synthesis");
    gen->add_option("--iss-fraction", gen_iss_fraction, "synthesized fraction per fault cell");
    gen->add_option("--iss-alpha", gen_iss_alpha, "Beta(alpha, alpha) shape");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_flag("--check", gen_check, "re-derive and byte-compare artifacts");

    // train --------------------------------------------------------------------
    auto* tr = app.add_subcommand("train", "train a classifier on a dataset directory");
    std::string tr_data, tr_out = ".", tr_sain = "adaptive";
    long tr_epochs = 10, tr_batch = 512;
    double tr_lr = 0.01;
    uint64_t tr_seed = 0;
    bool tr_no_tsam = false, tr_check = false;
    tr->add_option("--data", tr_data, "dataset directory")->required();
    tr->add_option("--out", tr_out, "output directory");
    tr->add_option("--epochs", tr_epochs, "training epochs");
    tr->add_option("--batch-size", tr_batch, "mini-batch size");
    tr->add_option("--lr", tr_lr, "base learning rate");
    tr->add_option("--seed", tr_seed, "training seed");
    tr->add_option("--sain", tr_sain, "normalization mode (adaptive, plain_in, none)");
    tr->add_flag("--no-tsam", tr_no_tsam, "replace attention by a plain time sum");
    tr->add_flag("--check", tr_check, "re-derive and byte-compare artifacts");

    // evaluate -------------------------------------------------------------------
    auto* ev = app.add_subcommand("evaluate", "score a checkpoint on a dataset");
    std::string ev_ckpt, ev_data, ev_split = "test", ev_out = ".";
    bool ev_check = false;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint.json path")->required();
    ev->add_option("--data", ev_data, "dataset directory")->required();
    ev->add_option("--split", ev_split, "test or train windows");
    ev->add_option("--out", ev_out, "output directory");
    ev->add_flag("--check", ev_check, "re-derive and byte-compare artifacts");

    // experiment ---------------------------------------------------------------
    auto* ex = app.add_subcommand("experiment", "full pipeline for one task");
    std::string ex_task = "T4", ex_profile = "desk", ex_ablation = "full", ex_out, ex_config;
    uint64_t ex_seed = 1;
    bool ex_check = false;
    std::vector<std::string> ex_sets;
    ex->add_option("--task", ex_task, "task id (T1..T9)");
    ex->add_option("--profile", ex_profile, "desk or paper");
    ex->add_option("--ablation", ex_ablation, "full or A1..A5");
    ex->add_option("--seed", ex_seed, "experiment seed");
    ex->add_option("--out", ex_out, "experiment directory")->required();
    ex->add_option("--config", ex_config, "experiment config JSON");
    ex->add_option("--set", ex_sets, "dotted-path config overrides (a.b=1)");
    ex->add_flag("--check", ex_check, "re-derive artifacts and byte-compare with --out");

    // report -----------------------------------------------------------------------
    auto* rep = app.add_subcommand("report", "summarize metrics.json files");
    std::vector<std::string> rep_inputs;
    std::string rep_out;
    bool rep_check = false;
    rep->add_option("--inputs", rep_inputs, "metrics.json files in task order")->required();
    rep->add_option("--out", rep_out, "summary CSV path");
    rep->add_flag("--check", rep_check, "re-derive and byte-compare the summary");

    auto* self = app.add_subcommand("selfcheck", "run the gradient and invariant quick suite");

    try {
        app.parse(argc, argv);

        if (sim->parsed()) {
            return run_checked(sim_out, sim_check, [&](const std::string& dir) {
                return produce_simulate(sim_config, sim_mode, sim_fault, sim_seeds, sim_jobs, dir);
            });
        }
        if (build->parsed()) {
            return run_checked(build_out, build_check, [&](const std::string& dir) {
                return produce_build(build_task_id, build_train_dir, build_test_dir, build_stride,
                                     build_seed, dir);
            });
        }
        if (gen->parsed()) {
            return run_checked(gen_data, gen_check, [&](const std::string& dir) {
                if (dir != gen_data) {
                    // --check scratch dataset: regeneration starts from the
                    // same persisted inputs
                    ensure_parent_dir(dir + "/x");
                    fs::copy_file(gen_data + "/windows.csv", dir + "/windows.csv");
                    fs::copy_file(gen_data + "/manifest.json", dir + "/manifest.json");
                }
                return produce_generate(dir, gen_no_dasg, gen_no_iss, gen_iss_fraction,
                                        gen_iss_alpha, gen_seed);
            });
        }
        if (tr->parsed()) {
            return run_checked(tr_out, tr_check, [&](const std::string& dir) {
                return produce_train(tr_data, dir, tr_epochs, tr_batch, tr_lr, tr_seed, tr_sain,
                                     tr_no_tsam);
            });
        }
        if (ev->parsed()) {
            return run_checked(ev_out, ev_check, [&](const std::string& dir) {
                return produce_evaluate(ev_ckpt, ev_data, ev_split, dir);
            });
        }
        if (ex->parsed()) {
            json cfg_json = ExperimentConfig::make(ex_task, ex_profile, ex_ablation, ex_seed,
                                                   ex_out).to_json();
            if (!ex_config.empty()) {
                cfg_json.update(load_json_file(ex_config), true);
                // explicit flags keep precedence over the config file
                cfg_json["task"] = ex_task;
                cfg_json["profile"] = ex_profile;
                cfg_json["ablation"] = ex_ablation;
                cfg_json["seed"] = ex_seed;
            }
            apply_overrides(cfg_json, ex_sets);
            ExperimentConfig cfg = ExperimentConfig::from_json(cfg_json);
            cfg.out_dir = ex_out;
            if (!ex_check) {
                ExperimentResult result = run_experiment(cfg);
                print_eval_summary(result.report);
                return file_exists(cfg.out_dir + "/metrics.json") ? 0 : 2;
            }
            if (!fs::is_directory(ex_out)) {
                throw DataError("--check: experiment directory '" + ex_out + "' does not exist");
            }
            ExperimentConfig rederive = cfg;
            rederive.out_dir = ex_out + ".check-tmp";
            fs::remove_all(rederive.out_dir);
            run_experiment(rederive);
            std::string diff;
            const bool same = dirs_identical(ex_out, rederive.out_dir, diff);
            fs::remove_all(rederive.out_dir);
            if (!same) throw DataError("--check: artifact mismatch at " + diff);
            std::printf("check passed: artifacts reproduce byte-identically\n");
            return 0;
        }
        if (rep->parsed()) {
            if (rep_check && rep_out.empty()) throw UsageError("report --check requires --out");
            std::vector<std::pair<std::string, double>> rows;
            for (const auto& path : rep_inputs) {
                json metrics = load_json_file(path);
                rows.emplace_back(metrics.value("task", path), metrics.at("acc").get<double>());
            }
            std::string csv = compare_reports(rows);
            if (rep_check) {
                if (read_text_file(rep_out) != csv) {
                    throw DataError("--check: summary differs from " + rep_out);
                }
                std::printf("check passed: summary reproduces byte-identically\n");
                return 0;
            }
            if (!rep_out.empty()) write_text_file(rep_out, csv);
            std::fputs(csv.c_str(), stdout);
            return 0;
        }
        if (self->parsed()) return cmd_selfcheck();
        return 1;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const GenerationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
