// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "tsasan/adam.hpp"
#include "tsasan/cstr.hpp"
#include "tsasan/dataset.hpp"
#include "tsasan/network.hpp"
#include "tsasan/samplegen.hpp"

namespace tsasan {

struct Ablation {
    bool dasg = true;
    bool iss = true;
    ArchConfig::SainMode sain = ArchConfig::SainMode::adaptive;
    bool tsam = true;

    // "full" plus the five single-component switches: A1 drops the
    // cross-domain generation, A2 drops interpolation synthesis, A3 removes
    // normalization, A4 falls back to plain instance norm, A5 drops the
    // attention block.
    static Ablation by_id(const std::string& id);
    static const std::vector<std::string>& all_ids();
    std::string id() const;
};

struct TrainConfig {
    long batch_size = 512;
    double base_lr = 0.01;
    double lr_decay = 0.3;
    long decay_every = 3;
    long epochs = 30;
    uint64_t seed = 0;

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

// base_lr * decay^(epoch // decay_every), zero-based epoch index
double lr_at(const TrainConfig& cfg, long epoch);

struct ModelInput {
    std::vector<double> features;  // v * window, row-major (variable, time)
    int label = 0;
    std::string domain_id;
    std::string category;
};

struct TrainResult {
    std::vector<double> epoch_loss;
    std::vector<double> epoch_lr;
};

TrainResult train(TsaSan& model, const std::vector<ModelInput>& data, const TrainConfig& cfg);

struct EvalReport {
    std::vector<std::string> classes;
    Matrix confusion;           // rows = true class, cols = predicted class
    double acc = 0.0;
    std::vector<double> fdr;    // NaN for classes absent from the test set
    std::vector<double> fpr;
    // (domain, category) -> (correct, total)
    std::map<std::pair<std::string, std::string>, std::pair<size_t, size_t>> cells;

    nlohmann::json to_json() const;
};

// Confusion counts and ACC/FDR/FPR from plain prediction/label vectors; the
// single metric implementation behind evaluate().
EvalReport metrics_from_predictions(const std::vector<int>& predictions,
                                    const std::vector<int>& labels,
                                    const std::vector<std::string>& classes);

EvalReport evaluate(const TsaSan& model, const std::vector<ModelInput>& test,
                    const std::vector<std::string>& classes, long batch_size);

// Pooled healthy-window moments across every training domain; the single
// input standardization applied to all model inputs.
DomainStats fit_input_scaler(const std::vector<WindowSample>& healthy_windows);

struct ExperimentConfig {
    std::string task_id = "T4";
    std::string profile = "desk";  // desk | paper
    uint64_t seed = 1;
    long stride = 4;
    long train_runs_per_cell = 2;
    long test_runs_per_cell = 1;
    double iss_fraction = 0.5;
    int iss_alpha = 2;
    Ablation ablation;
    CstrParams plant;
    TrainConfig trainer;
    std::string out_dir;
    bool reuse_cached_runs = true;

    // applies profile defaults (desk: 10 epochs, 2 train runs per cell)
    static ExperimentConfig make(const std::string& task_id, const std::string& profile,
                                 const std::string& ablation_id, uint64_t seed,
                                 const std::string& out_dir);
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
};

struct ExperimentResult {
    EvalReport report;
    TrainResult training;
    nlohmann::json manifest;
    std::string out_dir;
};

// End-to-end pipeline: simulate (or load cached) runs, window them, fit
// per-domain stats, expand the training set per the ablation switches, fit
// the input scaler, train, evaluate, and persist config.json, manifest.json,
// loss_curve.csv, confusion.csv, metrics.json, checkpoint.json and
// domain_stats.json under out_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Per-task accuracy row with a trailing average column, as CSV text.
std::string compare_reports(const std::vector<std::pair<std::string, double>>& task_accuracy);

uint64_t derive_run_seed(uint64_t base, const std::string& mode, const std::string& category,
                         RunRole role, long rep);

}  // namespace tsasan
