// SPDX-License-Identifier: Apache-2.0
#include "tsasan/dataset.hpp"

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>

#include "tsasan/csvio.hpp"

namespace tsasan {

using nlohmann::json;

const char* to_string(WindowSource s) {
    switch (s) {
        case WindowSource::real: return "real";
        case WindowSource::dasg: return "dasg";
        case WindowSource::iss: return "iss";
    }
    return "real";
}

WindowSource window_source_from_string(const std::string& s) {
    if (s == "real") return WindowSource::real;
    if (s == "dasg") return WindowSource::dasg;
    if (s == "iss") return WindowSource::iss;
    throw ParseError("unknown window source '" + s + "'");
}

void TaskConfig::validate() const {
    if (modes.empty()) throw ConfigError("task " + task_id + ": no modes");
    std::set<std::string> covered;
    for (const auto& mode : modes) {
        auto it = train_categories.find(mode);
        if (it == train_categories.end()) {
            throw ConfigError("task " + task_id + ": no training categories for " + mode);
        }
        if (!it->second.count("H")) {
            throw ConfigError("task " + task_id + ": training set for " + mode +
                              " must contain the healthy class");
        }
        covered.insert(it->second.begin(), it->second.end());
    }
    for (const auto& cat : categories) {
        if (!covered.count(cat)) {
            throw ConfigError("task " + task_id + ": category " + cat +
                              " is not covered by any training domain");
        }
    }
}

namespace {

std::set<std::string> cats(std::initializer_list<const char*> ids) {
    std::set<std::string> out;
    for (const char* id : ids) out.insert(id);
    return out;
}

std::set<std::string> all_cats() {
    return cats({"H", "F1", "F2", "F3", "F4", "F5", "F6", "F7", "F8", "F9"});
}

TaskConfig make_task(const std::string& id, std::vector<std::string> modes,
                     std::map<std::string, std::set<std::string>> train) {
    TaskConfig t;
    t.task_id = id;
    t.modes = std::move(modes);
    t.categories = {"H", "F1", "F2", "F3", "F4", "F5", "F6", "F7", "F8", "F9"};
    t.train_categories = std::move(train);
    for (const auto& mode : t.modes) t.test_categories[mode] = all_cats();
    t.validate();
    return t;
}

}  // namespace

const std::vector<std::string>& TaskConfig::all_ids() {
    static const std::vector<std::string> ids = {"T1", "T2", "T3", "T4", "T5",
                                                 "T6", "T7", "T8", "T9"};
    return ids;
}

TaskConfig TaskConfig::by_id(const std::string& task_id) {
    if (task_id == "T1") {
        return make_task("T1", {"M1", "M2"},
                         {{"M1", cats({"H", "F1", "F2", "F3", "F4", "F5", "F6", "F7", "F8"})},
                          {"M2", cats({"H", "F1", "F2", "F3", "F4", "F5", "F6", "F7", "F9"})}});
    }
    if (task_id == "T2") {
        return make_task("T2", {"M1", "M3"},
                         {{"M1", cats({"H", "F1", "F2", "F3", "F4", "F5", "F6", "F7", "F9"})},
                          {"M3", cats({"H", "F3", "F4", "F6", "F7", "F8"})}});
    }
    if (task_id == "T3") {
        return make_task("T3", {"M2", "M3"},
                         {{"M2", cats({"H", "F1", "F3", "F9"})},
                          {"M3", cats({"H", "F1", "F2", "F4", "F5", "F6", "F7", "F8"})}});
    }
    if (task_id == "T4") {
        return make_task("T4", {"M1", "M2"},
                         {{"M1", cats({"H", "F1", "F2", "F3", "F4"})},
                          {"M2", cats({"H", "F5", "F6", "F7", "F8", "F9"})}});
    }
    if (task_id == "T5") {
        return make_task("T5", {"M1", "M3"},
                         {{"M1", cats({"H", "F1", "F2", "F3", "F4"})},
                          {"M3", cats({"H", "F5", "F6", "F7", "F8", "F9"})}});
    }
    if (task_id == "T6") {
        return make_task("T6", {"M2", "M3"},
                         {{"M2", cats({"H", "F1", "F2", "F3", "F4"})},
                          {"M3", cats({"H", "F5", "F6", "F7", "F8", "F9"})}});
    }
    if (task_id == "T7") {
        return make_task("T7", {"M1", "M2", "M3"},
                         {{"M1", cats({"H", "F1", "F2", "F3", "F4"})},
                          {"M2", cats({"H", "F5", "F6", "F7", "F8", "F9"})},
                          {"M3", cats({"H"})}});
    }
    if (task_id == "T8") {
        return make_task("T8", {"M1", "M2", "M3"},
                         {{"M1", cats({"H", "F1", "F2", "F3", "F4"})},
                          {"M3", cats({"H", "F5", "F6", "F7", "F8", "F9"})},
                          {"M2", cats({"H"})}});
    }
    if (task_id == "T9") {
        return make_task("T9", {"M1", "M2", "M3"},
                         {{"M2", cats({"H", "F1", "F2", "F3", "F4"})},
                          {"M3", cats({"H", "F5", "F6", "F7", "F8", "F9"})},
                          {"M1", cats({"H"})}});
    }
    std::string msg = "unknown task '" + task_id + "'; valid tasks:";
    for (const auto& t : all_ids()) msg += " " + t;
    throw UsageError(msg);
}

RunRecord RunRecord::from_sim(const SimRun& run, RunRole role) {
    RunRecord r;
    r.mode_id = run.mode_id;
    r.category = run.fault_id;
    r.role = role;
    r.seed = run.seed;
    r.onset_index = run.onset_index;
    r.measurements = run.measurements;
    return r;
}

void RunRegistry::add(RunRecord record) { records_.push_back(std::move(record)); }

std::vector<const RunRecord*> RunRegistry::find(const std::string& mode,
                                                const std::string& category, RunRole role) const {
    std::vector<const RunRecord*> out;
    for (const auto& r : records_) {
        if (r.mode_id == mode && r.category == category && r.role == role) out.push_back(&r);
    }
    return out;
}

std::vector<WindowSample> window_run(const RunRecord& run, long stride) {
    if (stride < 1) throw ConfigError("window_run: stride must be >= 1");
    const long n = static_cast<long>(run.measurements.rows);
    const long v = static_cast<long>(run.measurements.cols);
    if (n < kWindowLength) {
        throw DataError("window_run: run has " + std::to_string(n) + " samples, need at least " +
                        std::to_string(kWindowLength));
    }
    const bool healthy_run = run.category == "H";
    std::vector<WindowSample> out;
    for (long start = 0; start + kWindowLength <= n; start += stride) {
        const long end = start + kWindowLength;  // exclusive
        std::string label;
        if (healthy_run || end <= run.onset_index) {
            label = "H";
        } else if (start >= run.onset_index) {
            label = run.category;
        } else {
            continue;  // straddles the onset
        }
        WindowSample w;
        w.features = Matrix(static_cast<size_t>(v), static_cast<size_t>(kWindowLength));
        for (long c = 0; c < v; ++c) {
            for (long t = 0; t < kWindowLength; ++t) {
                w.features.at(static_cast<size_t>(c), static_cast<size_t>(t)) =
                    run.measurements.at(static_cast<size_t>(start + t), static_cast<size_t>(c));
            }
        }
        w.label = std::move(label);
        w.domain_id = run.mode_id;
        w.source = WindowSource::real;
        w.start_index = start;
        w.run_seed = run.seed;
        out.push_back(std::move(w));
    }
    return out;
}

TaskDataset build_task(const TaskConfig& config, const RunRegistry& runs, long stride,
                       uint64_t seed) {
    config.validate();
    TaskDataset ds;
    std::vector<std::string> gaps;
    std::set<uint64_t> train_seeds, test_seeds;
    json train_cells = json::object();
    json test_cells = json::object();
    long var_count = -1;

    auto check_vars = [&](const RunRecord& r) {
        const long v = static_cast<long>(r.measurements.cols);
        if (var_count == -1) var_count = v;
        if (v != var_count) {
            throw DataError("build_task: run " + r.mode_id + "/" + r.category + " has " +
                            std::to_string(v) + " variables, expected " +
                            std::to_string(var_count));
        }
    };

    auto collect = [&](const std::string& mode, const std::string& cat, RunRole role,
                       const std::set<std::string>& keep, std::vector<WindowSample>& sink,
                       json& cells, std::set<uint64_t>& seeds) {
        auto found = runs.find(mode, cat, role);
        if (found.empty()) {
            gaps.push_back("(" + mode + ", " + cat + ", " +
                           (role == RunRole::train ? "train" : "test") + ")");
            return;
        }
        size_t emitted = 0;
        json run_list = json::array();
        for (const auto* r : found) {
            check_vars(*r);
            seeds.insert(r->seed);
            run_list.push_back(json{{"seed", r->seed}, {"path", r->source_path}});
            for (auto& w : window_run(*r, stride)) {
                if (!keep.count(w.label)) continue;
                ++emitted;
                sink.push_back(std::move(w));
            }
        }
        cells[mode + "/" + cat] = json{{"runs", run_list}, {"windows", emitted}};
    };

    for (const auto& mode : config.modes) {
        for (const auto& cat : config.train_categories.at(mode)) {
            collect(mode, cat, RunRole::train, config.train_categories.at(mode), ds.train,
                    train_cells, train_seeds);
        }
        for (const auto& cat : config.test_categories.at(mode)) {
            collect(mode, cat, RunRole::test, config.test_categories.at(mode), ds.test, test_cells,
                    test_seeds);
        }
    }
    if (!gaps.empty()) {
        std::string msg = "build_task: missing runs for";
        for (const auto& g : gaps) msg += " " + g;
        throw DataError(msg);
    }
    for (uint64_t s : train_seeds) {
        if (test_seeds.count(s)) {
            throw DataError("build_task: seed " + std::to_string(s) +
                            " is used by both training and test runs");
        }
    }
    ds.manifest = json{{"schema_version", 1},
                       {"task_id", config.task_id},
                       {"stride", stride},
                       {"window_length", kWindowLength},
                       {"split_seed", seed},
                       {"variables", var_count},
                       {"train", train_cells},
                       {"test", test_cells},
                       {"train_seeds", std::vector<uint64_t>(train_seeds.begin(), train_seeds.end())},
                       {"test_seeds", std::vector<uint64_t>(test_seeds.begin(), test_seeds.end())}};
    return ds;
}

RunRecord import_external_csv(const std::string& path, const std::string& domain_id,
                              const std::string& label, long onset_index) {
    CsvTable table = read_numeric_csv(path);
    if (table.header.empty() || table.header[0] != "time_min") {
        throw ParseError(path + ": first column must be time_min");
    }
    if (table.values.rows == 0) throw ParseError(path + ": no data rows");
    RunRecord r;
    r.mode_id = domain_id;
    r.category = label;
    r.seed = fnv1a(path);
    r.onset_index = onset_index;
    r.source_path = path;
    r.measurements = Matrix(table.values.rows, table.values.cols - 1);
    for (size_t row = 0; row < table.values.rows; ++row) {
        for (size_t c = 1; c < table.values.cols; ++c) {
            r.measurements.at(row, c - 1) = table.values.at(row, c);
        }
    }
    return r;
}

std::map<std::pair<std::string, std::string>, size_t> class_balance_report(
    const std::vector<WindowSample>& set) {
    std::map<std::pair<std::string, std::string>, size_t> counts;
    for (const auto& w : set) counts[{w.domain_id, w.label}] += 1;
    return counts;
}

void write_windows_csv(const std::string& path, const std::vector<WindowSample>& windows) {
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "': " + std::strerror(errno));
    const size_t feat = windows.empty() ? 0 : windows[0].features.data.size();
    out << "domain_id,label,source";
    for (size_t i = 0; i < feat; ++i) out << ",f" << i;
    out << '\n';
    for (const auto& w : windows) {
        if (w.features.data.size() != feat) {
            throw DataError("write_windows_csv: inconsistent feature lengths");
        }
        out << w.domain_id << ',' << w.label << ',' << to_string(w.source);
        for (double v : w.features.data) out << ',' << fmt17(v);
        out << '\n';
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<WindowSample> read_windows_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "': " + std::strerror(errno));
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    size_t feat = 0;
    {
        size_t commas = static_cast<size_t>(std::count(line.begin(), line.end(), ','));
        if (commas < 3) throw ParseError(path + ": malformed header");
        feat = commas - 2;
    }
    if (feat % static_cast<size_t>(kWindowLength) != 0) {
        throw ParseError(path + ": feature count " + std::to_string(feat) +
                         " is not a multiple of the window length");
    }
    const size_t v = feat / static_cast<size_t>(kWindowLength);
    std::vector<WindowSample> out;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        WindowSample w;
        w.features = Matrix(v, static_cast<size_t>(kWindowLength));
        size_t pos = 0, field = 0, vi = 0;
        while (pos <= line.size()) {
            size_t next = line.find(',', pos);
            if (next == std::string::npos) next = line.size();
            std::string cell = line.substr(pos, next - pos);
            if (!cell.empty() && cell.back() == '\r') cell.pop_back();
            if (field == 0) {
                w.domain_id = cell;
            } else if (field == 1) {
                w.label = cell;
            } else if (field == 2) {
                w.source = window_source_from_string(cell);
            } else {
                char* end = nullptr;
                errno = 0;
                const double val = std::strtod(cell.c_str(), &end);
                if (end == cell.c_str() || *end != '\0' || errno == ERANGE) {
                    throw ParseError(path + ": non-numeric cell '" + cell + "' at line " +
                                     std::to_string(lineno));
                }
                if (vi >= feat) {
                    throw ParseError(path + ": too many cells at line " + std::to_string(lineno));
                }
                w.features.data[vi++] = val;
            }
            ++field;
            pos = next + 1;
            if (next == line.size()) break;
        }
        if (vi != feat) {
            throw ParseError(path + ": expected " + std::to_string(feat) + " features at line " +
                             std::to_string(lineno) + ", got " + std::to_string(vi));
        }
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace tsasan
