// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsasan/cstr.hpp"
#include "tsasan/common.hpp"

namespace tsasan {

inline constexpr long kWindowLength = 64;

enum class WindowSource { real, dasg, iss };

const char* to_string(WindowSource s);
WindowSource window_source_from_string(const std::string& s);

struct WindowSample {
    Matrix features;        // v x 64
    std::string label;      // health state category
    std::string domain_id;  // operating mode
    WindowSource source = WindowSource::real;
    long start_index = 0;   // first sample index within the source run
    uint64_t run_seed = 0;
};

struct TaskConfig {
    std::string task_id;
    std::vector<std::string> modes;
    std::vector<std::string> categories;  // ordered label set
    std::map<std::string, std::set<std::string>> train_categories;
    std::map<std::string, std::set<std::string>> test_categories;

    void validate() const;  // union covers all categories, healthy class everywhere
    static TaskConfig by_id(const std::string& task_id);  // built-in task table
    static const std::vector<std::string>& all_ids();
};

enum class RunRole { train, test };

struct RunRecord {
    std::string mode_id;
    std::string category;  // fault id of the run
    RunRole role = RunRole::train;
    uint64_t seed = 0;
    long onset_index = 0;
    Matrix measurements;
    std::string source_path;  // empty for in-memory runs

    static RunRecord from_sim(const SimRun& run, RunRole role);
};

class RunRegistry {
public:
    void add(RunRecord record);
    std::vector<const RunRecord*> find(const std::string& mode, const std::string& category,
                                       RunRole role) const;
    size_t size() const { return records_.size(); }
    const std::vector<RunRecord>& records() const { return records_; }

private:
    std::vector<RunRecord> records_;
};

// Slides a length-64 window at the given stride. Windows entirely before the
// fault onset are labeled healthy, windows entirely at-or-after onset carry
// the run's fault id, and windows straddling the onset are dropped.
std::vector<WindowSample> window_run(const RunRecord& run, long stride);

struct TaskDataset {
    std::vector<WindowSample> train;
    std::vector<WindowSample> test;
    nlohmann::json manifest;
};

TaskDataset build_task(const TaskConfig& config, const RunRegistry& runs, long stride,
                       uint64_t seed);

// External time series in the run CSV layout (time_min + variable columns).
RunRecord import_external_csv(const std::string& path, const std::string& domain_id,
                              const std::string& label, long onset_index);

std::map<std::pair<std::string, std::string>, size_t> class_balance_report(
    const std::vector<WindowSample>& set);

// Dataset directory format: one row per window (domain_id, label, source,
// then v*64 feature values in row-major order).
void write_windows_csv(const std::string& path, const std::vector<WindowSample>& windows);
std::vector<WindowSample> read_windows_csv(const std::string& path);

}  // namespace tsasan
