// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "tsasan/csvio.hpp"
#include "tsasan/dataset.hpp"

using namespace tsasan;

namespace {

RunRecord make_run(const std::string& mode, const std::string& cat, RunRole role, uint64_t seed,
                   long rows = 1200, long onset = 200) {
    RunRecord r;
    r.mode_id = mode;
    r.category = cat;
    r.role = role;
    r.seed = seed;
    r.onset_index = cat == "H" ? 0 : onset;
    r.measurements = Matrix(static_cast<size_t>(rows), 7);
    Rng rng(seed);
    for (auto& v : r.measurements.data) v = rng.uniform(-1, 1);
    return r;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("healthy run windows: count arithmetic and labels") {
    RunRecord run = make_run("M1", "H", RunRole::train, 1);
    auto windows = window_run(run, 4);
    CHECK(windows.size() == (1200 - 64) / 4 + 1);  // 285
    CHECK(windows.size() == 285);
    for (size_t i = 0; i < windows.size(); ++i) {
        CHECK(windows[i].label == "H");
        CHECK(windows[i].start_index == static_cast<long>(i) * 4);  // shift consistency
        CHECK(windows[i].features.rows == 7);
        CHECK(windows[i].features.cols == 64);
    }
}

TEST_CASE("fault run windows never straddle the onset") {
    RunRecord run = make_run("M2", "F3", RunRole::train, 2);
    auto windows = window_run(run, 4);
    size_t healthy = 0, faulty = 0;
    for (const auto& w : windows) {
        const long end = w.start_index + 64;
        const bool before = end <= run.onset_index;
        const bool after = w.start_index >= run.onset_index;
        CHECK((before || after));
        if (w.label == "H") {
            CHECK(before);
            ++healthy;
        } else {
            CHECK(w.label == "F3");
            CHECK(after);
            ++faulty;
        }
    }
    CHECK(healthy == 35);   // starts 0..136
    CHECK(faulty == 235);   // starts 200..1136
}

TEST_CASE("degenerate stride emits a single window at t=0") {
    RunRecord run = make_run("M1", "H", RunRole::train, 3);
    auto windows = window_run(run, 1200);
    REQUIRE(windows.size() == 1);
    CHECK(windows[0].start_index == 0);
}

TEST_CASE("short runs are rejected") {
    RunRecord run = make_run("M1", "H", RunRole::train, 4, 63);
    CHECK_THROWS_AS(window_run(run, 1), DataError);
    RunRecord ok = make_run("M1", "H", RunRole::train, 4, 64);
    CHECK(window_run(ok, 1).size() == 1);
}

TEST_CASE("window content matches the source rows") {
    RunRecord run = make_run("M1", "F2", RunRole::train, 5, 400);
    auto windows = window_run(run, 7);
    for (const auto& w : windows) {
        for (size_t c = 0; c < 7; ++c) {
            for (size_t t = 0; t < 64; ++t) {
                CHECK(w.features.at(c, t) ==
                      run.measurements.at(static_cast<size_t>(w.start_index) + t, c));
            }
        }
    }
}

TEST_CASE("task table matches the published grid") {
    auto t4 = TaskConfig::by_id("T4");
    CHECK(t4.modes == std::vector<std::string>{"M1", "M2"});
    CHECK(t4.train_categories.at("M1") ==
          std::set<std::string>{"H", "F1", "F2", "F3", "F4"});
    CHECK(t4.train_categories.at("M2") ==
          std::set<std::string>{"H", "F5", "F6", "F7", "F8", "F9"});
    for (const auto& id : TaskConfig::all_ids()) {
        CHECK_NOTHROW(TaskConfig::by_id(id).validate());
    }
    // the asymmetric grids, transcribed cell by cell
    auto t1 = TaskConfig::by_id("T1");
    CHECK(t1.train_categories.at("M1") ==
          std::set<std::string>{"H", "F1", "F2", "F3", "F4", "F5", "F6", "F7", "F8"});
    CHECK(t1.train_categories.at("M2") ==
          std::set<std::string>{"H", "F1", "F2", "F3", "F4", "F5", "F6", "F7", "F9"});
    auto t2 = TaskConfig::by_id("T2");
    CHECK(t2.train_categories.at("M1") ==
          std::set<std::string>{"H", "F1", "F2", "F3", "F4", "F5", "F6", "F7", "F9"});
    CHECK(t2.train_categories.at("M3") ==
          std::set<std::string>{"H", "F3", "F4", "F6", "F7", "F8"});
    auto t3 = TaskConfig::by_id("T3");
    CHECK(t3.train_categories.at("M2") == std::set<std::string>{"H", "F1", "F3", "F9"});
    CHECK(t3.train_categories.at("M3") ==
          std::set<std::string>{"H", "F1", "F2", "F4", "F5", "F6", "F7", "F8"});
    auto t7 = TaskConfig::by_id("T7");
    CHECK(t7.train_categories.at("M3") == std::set<std::string>{"H"});
    CHECK(t7.test_categories.at("M3").size() == 10);
    CHECK_THROWS_AS(TaskConfig::by_id("T99"), UsageError);
}

TEST_CASE("build_task assembles the T4 split correctly") {
    auto t4 = TaskConfig::by_id("T4");
    RunRegistry reg;
    uint64_t seed = 100;
    for (const auto& mode : t4.modes) {
        for (const auto& cat : t4.categories) {
            if (t4.train_categories.at(mode).count(cat)) {
                reg.add(make_run(mode, cat, RunRole::train, seed++));
            }
            reg.add(make_run(mode, cat, RunRole::test, 10000 + seed++));
        }
    }
    TaskDataset ds = build_task(t4, reg, 8, 7);

    // training filter honored, exhaustively
    size_t m2_f1 = 0;
    for (const auto& w : ds.train) {
        CHECK(t4.train_categories.at(w.domain_id).count(w.label) == 1);
        if (w.domain_id == "M2" && w.label == "F1") ++m2_f1;
    }
    CHECK(m2_f1 == 0);

    // test set covers all 10 categories in both modes
    auto counts = class_balance_report(ds.test);
    for (const auto& mode : t4.modes) {
        for (const auto& cat : t4.categories) {
            CHECK(counts[{mode, cat}] > 0);
        }
    }
    CHECK(ds.manifest.at("task_id") == "T4");
    CHECK(ds.manifest.at("stride") == 8);

    // the manifest itself proves there is no train/test leakage
    auto train_seeds = ds.manifest.at("train_seeds").get<std::set<uint64_t>>();
    auto test_seeds = ds.manifest.at("test_seeds").get<std::set<uint64_t>>();
    CHECK(!train_seeds.empty());
    CHECK(!test_seeds.empty());
    for (uint64_t s : train_seeds) CHECK(test_seeds.count(s) == 0);
}

TEST_CASE("build_task enumerates every missing run") {
    auto t4 = TaskConfig::by_id("T4");
    RunRegistry reg;  // deliberately empty except one cell
    reg.add(make_run("M1", "H", RunRole::train, 1));
    try {
        build_task(t4, reg, 4, 0);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        std::string msg = e.what();
        CHECK(msg.find("(M1, F1, train)") != std::string::npos);
        CHECK(msg.find("(M2, F5, train)") != std::string::npos);
        CHECK(msg.find("(M1, H, test)") != std::string::npos);
    }
}

TEST_CASE("build_task rejects shared train/test seeds") {
    auto t4 = TaskConfig::by_id("T4");
    RunRegistry reg;
    uint64_t seed = 100;
    for (const auto& mode : t4.modes) {
        for (const auto& cat : t4.categories) {
            if (t4.train_categories.at(mode).count(cat)) {
                reg.add(make_run(mode, cat, RunRole::train, seed++));
            }
            reg.add(make_run(mode, cat, RunRole::test, 10000 + seed++));
        }
    }
    reg.add(make_run("M1", "H", RunRole::test, 100));  // seed 100 is a training seed
    CHECK_THROWS_AS(build_task(t4, reg, 8, 7), DataError);
}

TEST_CASE("imported runs window exactly like the originals") {
    RunRecord original = make_run("M1", "F2", RunRole::train, 77, 300);
    // write it in the run CSV layout
    const std::string path = temp_path("tsasan_import_roundtrip.csv");
    Matrix table(original.measurements.rows, 8);
    for (size_t r = 0; r < table.rows; ++r) {
        table.at(r, 0) = static_cast<double>(r);
        for (size_t c = 0; c < 7; ++c) table.at(r, c + 1) = original.measurements.at(r, c);
    }
    std::vector<std::string> header = {"time_min"};
    for (const auto& n : monitored_variables()) header.push_back(n);
    write_numeric_csv(path, header, table);

    RunRecord imported = import_external_csv(path, "M1", "F2", 200);
    imported.role = RunRole::train;
    auto a = window_run(original, 4);
    auto b = window_run(imported, 4);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].label == b[i].label);
        CHECK(a[i].features.data == b[i].features.data);
    }
    std::filesystem::remove(path);
}

TEST_CASE("import errors cite the offending line") {
    const std::string path = temp_path("tsasan_import_bad.csv");
    std::ofstream out(path);
    out << "time_min,a,b\n";
    for (int i = 0; i < 15; ++i) out << i << ",1.0,2.0\n";
    out << "15,oops,2.0\n";  // line 17 including the header
    out.close();
    try {
        import_external_csv(path, "M1", "F1", 0);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 17") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("zero onset labels every window with the fault id") {
    RunRecord run = make_run("M1", "F5", RunRole::train, 6, 300, 0);
    run.onset_index = 0;
    for (const auto& w : window_run(run, 16)) CHECK(w.label == "F5");
}

TEST_CASE("class balance report is an exact recount") {
    CHECK(class_balance_report({}).empty());

    RunRecord r1 = make_run("M1", "F1", RunRole::train, 8, 500);
    RunRecord r2 = make_run("M2", "H", RunRole::train, 9, 500);
    std::vector<WindowSample> set;
    for (auto& w : window_run(r1, 8)) set.push_back(w);
    for (auto& w : window_run(r2, 8)) set.push_back(w);
    auto counts = class_balance_report(set);
    size_t total = 0;
    for (const auto& [key, n] : counts) total += n;
    CHECK(total == set.size());

    std::map<std::pair<std::string, std::string>, size_t> brute;
    for (const auto& w : set) brute[{w.domain_id, w.label}]++;
    CHECK(counts == brute);
}

TEST_CASE("windows.csv round trip preserves every field") {
    RunRecord run = make_run("M3", "F7", RunRole::train, 11, 400);
    auto windows = window_run(run, 16);
    windows[0].source = WindowSource::dasg;
    windows[1].source = WindowSource::iss;
    const std::string path = temp_path("tsasan_windows_roundtrip.csv");
    write_windows_csv(path, windows);
    auto loaded = read_windows_csv(path);
    REQUIRE(loaded.size() == windows.size());
    for (size_t i = 0; i < windows.size(); ++i) {
        CHECK(loaded[i].domain_id == windows[i].domain_id);
        CHECK(loaded[i].label == windows[i].label);
        CHECK(loaded[i].source == windows[i].source);
        CHECK(loaded[i].features.data == windows[i].features.data);
    }
    std::filesystem::remove(path);
}
