// SPDX-License-Identifier: Apache-2.0
#include "tsasan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tsasan/csvio.hpp"

namespace tsasan {

using nlohmann::json;

const std::vector<std::string>& Ablation::all_ids() {
    static const std::vector<std::string> ids = {"full", "A1", "A2", "A3", "A4", "A5"};
    return ids;
}

Ablation Ablation::by_id(const std::string& id) {
    Ablation a;
    if (id == "full" || id.empty()) return a;
    if (id == "A1") { a.dasg = false; return a; }
    if (id == "A2") { a.iss = false; return a; }
    if (id == "A3") { a.sain = ArchConfig::SainMode::none; return a; }
    if (id == "A4") { a.sain = ArchConfig::SainMode::plain_in; return a; }
    if (id == "A5") { a.tsam = false; return a; }
    std::string msg = "unknown ablation '" + id + "'; valid ids:";
    for (const auto& s : all_ids()) msg += " " + s;
    throw UsageError(msg);
}

std::string Ablation::id() const {
    if (!dasg) return "A1";
    if (!iss) return "A2";
    if (sain == ArchConfig::SainMode::none) return "A3";
    if (sain == ArchConfig::SainMode::plain_in) return "A4";
    if (!tsam) return "A5";
    return "full";
}

json TrainConfig::to_json() const {
    return json{{"batch_size", batch_size}, {"base_lr", base_lr},   {"lr_decay", lr_decay},
                {"decay_every", decay_every}, {"epochs", epochs},   {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    c.batch_size = j.at("batch_size");
    c.base_lr = j.at("base_lr");
    c.lr_decay = j.at("lr_decay");
    c.decay_every = j.at("decay_every");
    c.epochs = j.at("epochs");
    c.seed = j.at("seed");
    return c;
}

double lr_at(const TrainConfig& cfg, long epoch) {
    if (epoch < 0) throw ConfigError("lr_at: negative epoch");
    long steps = epoch / cfg.decay_every;
    double lr = cfg.base_lr;
    for (long i = 0; i < steps; ++i) lr *= cfg.lr_decay;
    return lr;
}

namespace {

Tensor batch_tensor(const std::vector<ModelInput>& data, const std::vector<size_t>& idx,
                    size_t begin, size_t end, long v, long window) {
    const size_t n = end - begin;
    std::vector<double> values;
    values.reserve(n * static_cast<size_t>(v * window));
    for (size_t i = begin; i < end; ++i) {
        const auto& f = data[idx[i]].features;
        if (f.size() != static_cast<size_t>(v * window)) {
            throw ShapeError("batch: window has " + std::to_string(f.size()) +
                             " values, expected " + std::to_string(v * window));
        }
        values.insert(values.end(), f.begin(), f.end());
    }
    return Tensor::from_data({static_cast<long>(n), v, window}, std::move(values));
}

}  // namespace

TrainResult train(TsaSan& model, const std::vector<ModelInput>& data, const TrainConfig& cfg) {
    if (data.empty()) throw TrainingError("train: empty training set");
    if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    const long v = model.arch().v;
    const long window = model.arch().window;

    TrainResult result;
    AdamState adam;
    Rng shuffle_rng = Rng::derive(cfg.seed, "shuffle");
    std::vector<size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);

    for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(idx);
        const double lr = lr_at(cfg, epoch);
        double loss_sum = 0.0;
        long batch_index = 0;
        for (size_t begin = 0; begin < idx.size(); begin += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(idx.size(), begin + static_cast<size_t>(cfg.batch_size));
            Tensor x = batch_tensor(data, idx, begin, end, v, window);
            std::vector<int> labels;
            labels.reserve(end - begin);
            for (size_t i = begin; i < end; ++i) labels.push_back(data[idx[i]].label);
            Tensor loss = model.train_loss(x, labels);
            const double value = loss.item();
            if (!std::isfinite(value)) {
                throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(batch_index));
            }
            model.zero_grad();
            loss.backward();
            adam_step(model.params(), adam, lr);
            loss_sum += value * static_cast<double>(end - begin);
            ++batch_index;
        }
        result.epoch_loss.push_back(loss_sum / static_cast<double>(data.size()));
        result.epoch_lr.push_back(lr);
    }
    return result;
}

EvalReport metrics_from_predictions(const std::vector<int>& predictions,
                                    const std::vector<int>& labels,
                                    const std::vector<std::string>& classes) {
    if (predictions.size() != labels.size()) {
        throw ShapeError("metrics: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(labels.size()) + " labels");
    }
    if (predictions.empty()) throw DataError("metrics: empty prediction vector");
    const long k = static_cast<long>(classes.size());
    EvalReport report;
    report.classes = classes;
    report.confusion = Matrix(static_cast<size_t>(k), static_cast<size_t>(k));
    for (size_t i = 0; i < predictions.size(); ++i) {
        const int y = labels[i], p = predictions[i];
        if (y < 0 || y >= k) throw IndexError("metrics: label " + std::to_string(y) + " out of range");
        if (p < 0 || p >= k) throw IndexError("metrics: prediction " + std::to_string(p) + " out of range");
        report.confusion.at(static_cast<size_t>(y), static_cast<size_t>(p)) += 1.0;
    }
    const double n = static_cast<double>(predictions.size());
    double correct = 0.0;
    for (long l = 0; l < k; ++l) correct += report.confusion.at(l, l);
    report.acc = correct / n;
    report.fdr.assign(static_cast<size_t>(k), std::nan(""));
    report.fpr.assign(static_cast<size_t>(k), std::nan(""));
    for (long l = 0; l < k; ++l) {
        double row_sum = 0.0, col_sum = 0.0;
        for (long j = 0; j < k; ++j) {
            row_sum += report.confusion.at(l, j);
            col_sum += report.confusion.at(j, l);
        }
        const double tp = report.confusion.at(l, l);
        if (row_sum > 0.0) report.fdr[static_cast<size_t>(l)] = tp / row_sum;
        const double fp = col_sum - tp;
        const double neg = n - row_sum;  // FP + TN
        if (neg > 0.0) report.fpr[static_cast<size_t>(l)] = fp / neg;
    }
    return report;
}

EvalReport evaluate(const TsaSan& model, const std::vector<ModelInput>& test,
                    const std::vector<std::string>& classes, long batch_size) {
    if (test.empty()) throw DataError("evaluate: empty test set");
    const long k = static_cast<long>(classes.size());
    const long v = model.arch().v;
    const long window = model.arch().window;

    std::vector<int> predictions(test.size()), labels(test.size());
    NoGradGuard ng;
    std::vector<size_t> idx(test.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (size_t begin = 0; begin < test.size(); begin += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(test.size(), begin + static_cast<size_t>(batch_size));
        Tensor probs = model.forward(batch_tensor(test, idx, begin, end, v, window));
        const auto& pv = probs.value();
        for (size_t i = begin; i < end; ++i) {
            const double* row = &pv[(i - begin) * static_cast<size_t>(k)];
            long pred = 0;
            for (long j = 1; j < k; ++j) {
                if (row[j] > row[pred]) pred = j;  // ties resolve to the lowest index
            }
            predictions[i] = static_cast<int>(pred);
            labels[i] = test[i].label;
        }
    }
    EvalReport report = metrics_from_predictions(predictions, labels, classes);
    for (size_t i = 0; i < test.size(); ++i) {
        auto& cell = report.cells[{test[i].domain_id, test[i].category}];
        cell.second += 1;
        if (predictions[i] == labels[i]) cell.first += 1;
    }
    return report;
}

json EvalReport::to_json() const {
    json fdr_j = json::array(), fpr_j = json::array();
    for (double x : fdr) fdr_j.push_back(std::isnan(x) ? json(nullptr) : json(x));
    for (double x : fpr) fpr_j.push_back(std::isnan(x) ? json(nullptr) : json(x));
    json cells_j = json::object();
    for (const auto& [key, val] : cells) {
        cells_j[key.first + "/" + key.second] =
            json{{"correct", val.first},
                 {"total", val.second},
                 {"accuracy", static_cast<double>(val.first) / static_cast<double>(val.second)}};
    }
    size_t total = 0;
    for (double c : confusion.data) total += static_cast<size_t>(c);
    return json{{"classes", classes}, {"acc", acc},   {"fdr", fdr_j},
                {"fpr", fpr_j},       {"cells", cells_j}, {"n_test", total}};
}

DomainStats fit_input_scaler(const std::vector<WindowSample>& healthy_windows) {
    if (healthy_windows.size() < 2) {
        throw GenerationError("fit_input_scaler: need at least 2 healthy windows");
    }
    const size_t v = healthy_windows[0].features.rows;
    const size_t t = healthy_windows[0].features.cols;
    DomainStats stats;
    stats.domain_id = "pooled";
    stats.n_windows = healthy_windows.size();
    stats.mu.assign(v, 0.0);
    stats.sigma.assign(v, 0.0);
    std::vector<double> sq(v, 0.0);
    for (const auto& w : healthy_windows) {
        if (w.label != "H") {
            throw GenerationError("fit_input_scaler: non-healthy window in the pool");
        }
        if (w.features.rows != v || w.features.cols != t) {
            throw ShapeError("fit_input_scaler: inconsistent window shapes");
        }
        for (size_t c = 0; c < v; ++c) {
            for (size_t ti = 0; ti < t; ++ti) {
                const double x = w.features.at(c, ti);
                stats.mu[c] += x;
                sq[c] += x * x;
            }
        }
    }
    const double n = static_cast<double>(healthy_windows.size() * t);
    for (size_t c = 0; c < v; ++c) {
        stats.mu[c] /= n;
        const double ex2 = sq[c] / n;
        const double var = std::max(ex2 - stats.mu[c] * stats.mu[c], 0.0);
        stats.sigma[c] = std::max(std::sqrt(var), DomainStats::sigma_floor(std::sqrt(ex2)));
    }
    return stats;
}

uint64_t derive_run_seed(uint64_t base, const std::string& mode, const std::string& category,
                         RunRole role, long rep) {
    uint64_t s = base;
    splitmix64(s);
    uint64_t h = fnv1a(mode + "/" + category + "/" +
                       (role == RunRole::train ? "train" : "test") + "/" + std::to_string(rep));
    uint64_t mixed = s ^ h;
    return splitmix64(mixed);
}

ExperimentConfig ExperimentConfig::make(const std::string& task_id, const std::string& profile,
                                        const std::string& ablation_id, uint64_t seed,
                                        const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.task_id = task_id;
    cfg.profile = profile;
    cfg.seed = seed;
    cfg.ablation = Ablation::by_id(ablation_id);
    cfg.out_dir = out_dir;
    if (profile == "desk") {
        cfg.trainer.epochs = 10;
        cfg.train_runs_per_cell = 2;
        cfg.test_runs_per_cell = 1;
    } else if (profile == "paper") {
        cfg.trainer.epochs = 30;
        cfg.train_runs_per_cell = 4;
        cfg.test_runs_per_cell = 2;
    } else {
        throw UsageError("unknown profile '" + profile + "'; valid profiles: desk, paper");
    }
    return cfg;
}

json ExperimentConfig::to_json() const {
    return json{{"task", task_id},
                {"profile", profile},
                {"seed", seed},
                {"stride", stride},
                {"train_runs_per_cell", train_runs_per_cell},
                {"test_runs_per_cell", test_runs_per_cell},
                {"iss_fraction", iss_fraction},
                {"iss_alpha", iss_alpha},
                {"ablation", ablation.id()},
                {"plant", cstr_params_to_json(plant)},
                {"trainer", trainer.to_json()}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig cfg;
    cfg.task_id = j.at("task");
    cfg.profile = j.value("profile", "desk");
    cfg.seed = j.at("seed");
    cfg.stride = j.at("stride");
    cfg.train_runs_per_cell = j.at("train_runs_per_cell");
    cfg.test_runs_per_cell = j.at("test_runs_per_cell");
    cfg.iss_fraction = j.at("iss_fraction");
    cfg.iss_alpha = j.at("iss_alpha");
    cfg.ablation = Ablation::by_id(j.at("ablation"));
    cfg.trainer = TrainConfig::from_json(j.at("trainer"));
    cfg.plant = cstr_params_from_json(j.at("plant"));
    return cfg;
}

namespace {

std::string run_file_name(const std::string& mode, const std::string& cat, RunRole role, long rep,
                          uint64_t seed) {
    return mode + "_" + cat + "_" + (role == RunRole::train ? "train" : "test") +
           std::to_string(rep) + "_s" + std::to_string(seed) + ".csv";
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    if (cfg.out_dir.empty()) throw ConfigError("run_experiment: out_dir is required");
    cfg.plant.validate();
    const TaskConfig task = TaskConfig::by_id(cfg.task_id);

    // 1. gather runs (cached on disk under out_dir/runs)
    RunRegistry registry;
    auto obtain = [&](const std::string& mode, const std::string& cat, RunRole role, long rep) {
        const uint64_t seed = derive_run_seed(cfg.seed, mode, cat, role, rep);
        const std::string rel = "runs/" + run_file_name(mode, cat, role, rep, seed);
        const std::string path = cfg.out_dir + "/" + rel;
        RunRecord rec;
        if (cfg.reuse_cached_runs && file_exists(path)) {
            rec = RunRecord::from_sim(load_run(path), role);
        } else {
            SimRun run = simulate(cfg.plant, ModeSpec::by_id(mode, cfg.plant),
                                  FaultSpec::by_id(cat), seed);
            export_run(run, path);
            rec = RunRecord::from_sim(run, role);
        }
        // manifests record the path relative to the experiment directory
        rec.source_path = rel;
        registry.add(std::move(rec));
    };
    for (const auto& mode : task.modes) {
        for (const auto& cat : task.categories) {
            if (task.train_categories.at(mode).count(cat)) {
                for (long rep = 0; rep < cfg.train_runs_per_cell; ++rep) {
                    obtain(mode, cat, RunRole::train, rep);
                }
            }
            for (long rep = 0; rep < cfg.test_runs_per_cell; ++rep) {
                obtain(mode, cat, RunRole::test, rep);
            }
        }
    }

    // 2. windows
    TaskDataset ds = build_task(task, registry, cfg.stride, cfg.seed);

    // 3. per-domain healthy stats
    std::map<std::string, DomainStats> stats;
    for (const auto& mode : task.modes) {
        std::vector<WindowSample> healthy;
        for (const auto& w : ds.train) {
            if (w.domain_id == mode && w.label == "H") healthy.push_back(w);
        }
        stats[mode] = fit_domain_stats(healthy, mode);
    }

    // 4. generation
    size_t n_real = ds.train.size(), n_dasg = 0, n_iss = 0;
    if (cfg.ablation.dasg) {
        auto generated = dasg_expand(ds.train, task, stats);
        n_dasg = generated.size();
        for (auto& g : generated) ds.train.push_back(std::move(g));
    }
    if (cfg.ablation.iss) {
        std::vector<WindowSample> synthesized;
        for (const auto& mode : task.modes) {
            std::vector<WindowSample> healthy_latent;
            for (const auto& w : ds.train) {
                if (w.domain_id == mode && w.label == "H") {
                    WindowSample l = w;
                    l.features = to_latent(w.features, stats.at(mode));
                    healthy_latent.push_back(std::move(l));
                }
            }
            for (const auto& cat : task.categories) {
                if (cat == "H") continue;
                std::vector<WindowSample> fault_latent;
                for (const auto& w : ds.train) {
                    if (w.domain_id == mode && w.label == cat) {
                        WindowSample l = w;
                        l.features = to_latent(w.features, stats.at(mode));
                        fault_latent.push_back(std::move(l));
                    }
                }
                if (fault_latent.empty()) continue;
                const size_t count = static_cast<size_t>(
                    std::llround(cfg.iss_fraction * static_cast<double>(fault_latent.size())));
                if (count == 0) continue;
                const uint64_t seed = splitmix64_mix(cfg.seed, "iss/" + mode + "/" + cat);
                auto mixes = iss_synthesize(fault_latent, healthy_latent, count, cfg.iss_alpha,
                                            seed);
                for (const auto& m : mixes) {
                    WindowSample w;
                    w.features = from_latent(m.features, stats.at(mode));
                    w.label = m.label;
                    w.domain_id = m.domain_id;
                    w.source = WindowSource::iss;
                    synthesized.push_back(std::move(w));
                }
            }
        }
        n_iss = synthesized.size();
        for (auto& s : synthesized) ds.train.push_back(std::move(s));
    }

    // 5. single input scaler from real healthy training windows of all domains
    std::vector<WindowSample> healthy_pool;
    for (const auto& w : ds.train) {
        if (w.label == "H" && w.source == WindowSource::real) healthy_pool.push_back(w);
    }
    DomainStats scaler = fit_input_scaler(healthy_pool);

    // 6. model-space datasets
    std::map<std::string, int> label_index;
    for (size_t i = 0; i < task.categories.size(); ++i) {
        label_index[task.categories[i]] = static_cast<int>(i);
    }
    auto to_inputs = [&](const std::vector<WindowSample>& windows) {
        std::vector<ModelInput> out;
        out.reserve(windows.size());
        for (const auto& w : windows) {
            ModelInput in;
            in.features = to_latent(w.features, scaler).data;
            in.label = label_index.at(w.label);
            in.domain_id = w.domain_id;
            in.category = w.label;
            out.push_back(std::move(in));
        }
        return out;
    };
    std::vector<ModelInput> train_inputs = to_inputs(ds.train);
    std::vector<ModelInput> test_inputs = to_inputs(ds.test);

    // 7. model
    ArchConfig arch;
    arch.v = static_cast<long>(healthy_pool[0].features.rows);
    arch.window = kWindowLength;
    arch.n_classes = static_cast<long>(task.categories.size());
    arch.sain_mode = cfg.ablation.sain;
    arch.use_tsam = cfg.ablation.tsam;
    TsaSan model(arch, splitmix64_mix(cfg.seed, "model-init"));

    // 8. train + evaluate
    TrainConfig tc = cfg.trainer;
    // trainer.seed = 0 means "derive from the experiment seed"
    if (tc.seed == 0) tc.seed = splitmix64_mix(cfg.seed, "train");
    TrainResult training = train(model, train_inputs, tc);
    EvalReport report = evaluate(model, test_inputs, task.categories, tc.batch_size);

    // 9. artifacts
    json config_j = cfg.to_json();
    write_text_file(cfg.out_dir + "/config.json", config_j.dump(2) + "\n");

    json scaler_j{{"mu", scaler.mu}, {"sigma", scaler.sigma}, {"n_windows", scaler.n_windows}};
    json manifest{{"schema_version", 1},
                  {"task", cfg.task_id},
                  {"ablation", cfg.ablation.id()},
                  {"seed", cfg.seed},
                  {"config_hash", fnv1a(config_j.dump())},
                  {"dataset", ds.manifest},
                  {"train_windows", json{{"real", n_real}, {"dasg", n_dasg}, {"iss", n_iss}}},
                  {"test_windows", ds.test.size()},
                  {"input_scaler", scaler_j},
                  {"final_acc", report.acc}};
    write_text_file(cfg.out_dir + "/manifest.json", manifest.dump(2) + "\n");

    Matrix curve(training.epoch_loss.size(), 3);
    for (size_t e = 0; e < training.epoch_loss.size(); ++e) {
        curve.at(e, 0) = static_cast<double>(e);
        curve.at(e, 1) = training.epoch_loss[e];
        curve.at(e, 2) = training.epoch_lr[e];
    }
    write_numeric_csv(cfg.out_dir + "/loss_curve.csv", {"epoch", "mean_loss", "lr"}, curve);

    {
        std::string confusion_csv = "true_class";
        for (const auto& c : report.classes) confusion_csv += "," + c;
        confusion_csv += "\n";
        for (size_t r = 0; r < report.confusion.rows; ++r) {
            confusion_csv += report.classes[r];
            for (size_t c = 0; c < report.confusion.cols; ++c) {
                confusion_csv += "," + std::to_string(static_cast<long>(report.confusion.at(r, c)));
            }
            confusion_csv += "\n";
        }
        write_text_file(cfg.out_dir + "/confusion.csv", confusion_csv);
    }

    json metrics = report.to_json();
    metrics["task"] = cfg.task_id;
    metrics["ablation"] = cfg.ablation.id();
    metrics["seed"] = cfg.seed;
    write_text_file(cfg.out_dir + "/metrics.json", metrics.dump(2) + "\n");

    json ckpt_manifest{{"task", cfg.task_id},
                       {"ablation", cfg.ablation.id()},
                       {"seed", cfg.seed},
                       {"epochs", cfg.trainer.epochs},
                       {"final_acc", report.acc},
                       {"categories", task.categories},
                       {"input_scaler", scaler_j}};
    save_checkpoint(model, ckpt_manifest, cfg.out_dir + "/checkpoint.json");
    write_domain_stats(cfg.out_dir + "/domain_stats.json", stats);

    ExperimentResult result;
    result.report = std::move(report);
    result.training = std::move(training);
    result.manifest = std::move(manifest);
    result.out_dir = cfg.out_dir;
    return result;
}

std::string compare_reports(const std::vector<std::pair<std::string, double>>& task_accuracy) {
    if (task_accuracy.empty()) throw DataError("compare_reports: no reports");
    std::string header = "metric";
    std::string row = "acc";
    double sum = 0.0;
    for (const auto& [task, acc] : task_accuracy) {
        header += "," + task;
        row += "," + fmt17(acc);
        sum += acc;
    }
    header += ",average";
    row += "," + fmt17(sum / static_cast<double>(task_accuracy.size()));
    return header + "\n" + row + "\n";
}

}  // namespace tsasan
