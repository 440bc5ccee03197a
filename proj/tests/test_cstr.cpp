// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "tsasan/cstr.hpp"
#include "tsasan/csvio.hpp"

using namespace tsasan;

namespace {

CstrParams noiseless_params() {
    CstrParams p;
    p.noise_std = {0.0, 0.0, 0.0};
    p.meas_noise_std.assign(p.meas_noise_std.size(), 0.0);
    return p;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("fault profiles reproduce the perturbation table exactly") {
    auto f1 = FaultSpec::by_id("F1");
    auto f5 = FaultSpec::by_id("F5");
    auto f8 = FaultSpec::by_id("F8");
    auto f9 = FaultSpec::by_id("F9");
    for (double t : {0.0, 1.0, 17.0, 533.0, 1000.0}) {
        CHECK(std::fabs(f1.apply(1.0, t) - (1.0 + 0.001 * t)) < 1e-12);
        CHECK(std::fabs(f5.additive(t) - (-0.1 * t)) < 1e-12);
        CHECK(std::fabs(f8.apply(17900.0, t) - 17900.0 * std::exp(-0.0005 * t)) < 1e-9);
        CHECK(std::fabs(f9.apply(0.5, t) - 0.5 * std::exp(-0.001 * t)) < 1e-12);
    }
    CHECK(f1.apply(1.0, -5.0) == 1.0);  // before onset
    CHECK(FaultSpec::by_id("H").is_healthy());

    try {
        FaultSpec::by_id("F99");
        FAIL("expected UsageError");
    } catch (const UsageError& e) {
        std::string msg = e.what();
        CHECK(msg.find("H") != std::string::npos);
        CHECK(msg.find("F1") != std::string::npos);
        CHECK(msg.find("F9") != std::string::npos);
    }
}

TEST_CASE("check_mode_stability on constant, ramp and noisy sequences") {
    std::vector<double> constant(100, 3.5);
    CHECK(check_mode_stability(constant, 0.01, 60));

    const double thr = 0.01;
    std::vector<double> ramp;
    for (int t = 0; t < 100; ++t) ramp.push_back(2.0 * thr * t);
    CHECK_FALSE(check_mode_stability(ramp, thr, 60));

    Rng rng(5);
    std::vector<double> noisy;
    for (int t = 0; t < 80; ++t) noisy.push_back(1.0 + 0.001 * rng.normal());
    const long window = 60;
    bool oracle = true;
    for (long t = 1; t <= window; ++t) {
        if (std::fabs(noisy[t] - noisy[0]) / t >= thr) oracle = false;
    }
    CHECK(check_mode_stability(noisy, thr, window) == oracle);

    CHECK_THROWS_AS(check_mode_stability(constant, 0.01, 1), ConfigError);
    CHECK_THROWS_AS(check_mode_stability({1.0, 2.0}, 0.01, 60), DataError);
}

TEST_CASE("steady state tracks the setpoint with small residuals") {
    CstrParams p;
    auto m1 = ModeSpec::by_id("M1", p);
    auto ss1 = steady_state(p, m1);
    CHECK(std::fabs(ss1[1] - m1.temp_setpoint) < 0.1);
    auto rhs = plant_rhs(p, ss1[0], ss1[1], ss1[2], ss1[3]);
    CHECK(std::fabs(rhs[0]) < 1e-3);
    CHECK(std::fabs(rhs[1]) < 1e-3);
    CHECK(std::fabs(rhs[2]) < 1e-3);

    auto ss2 = steady_state(p, ModeSpec::by_id("M2", p));
    auto ss3 = steady_state(p, ModeSpec::by_id("M3", p));
    CHECK(std::fabs((ss2[1] - ss1[1]) - 5.0) < 0.2);
    CHECK(std::fabs((ss3[1] - ss1[1]) - 10.0) < 0.2);
}

TEST_CASE("noiseless healthy run is stable in every 60-minute window") {
    CstrParams p = noiseless_params();
    SimRun run = simulate(p, ModeSpec::by_id("M1", p), FaultSpec::by_id("H"), 1);
    REQUIRE(run.measurements.rows == 1200);
    CHECK(run.onset_index == 200);
    std::vector<double> temps;
    for (size_t r = 0; r < run.measurements.rows; ++r) temps.push_back(run.measurements.at(r, 3));
    for (size_t start = 0; start + 61 <= temps.size(); start += 13) {
        std::vector<double> seg(temps.begin() + start, temps.begin() + start + 61);
        CHECK(check_mode_stability(seg, 0.01, 60));
    }
}

TEST_CASE("ramp fault injection is exact on the inlet concentration channel") {
    CstrParams p = noiseless_params();
    SimRun run = simulate(p, ModeSpec::by_id("M1", p), FaultSpec::by_id("F1"), 2);
    for (size_t t = 0; t < run.measurements.rows; ++t) {
        const double expected =
            t >= 200 ? p.inlet_conc + 0.001 * (static_cast<double>(t) - 200.0) : p.inlet_conc;
        CHECK(std::fabs(run.measurements.at(t, 0) - expected) < 1e-12);
    }
}

TEST_CASE("sensor drift and actuator offset are exact against the truth view") {
    CstrParams p = noiseless_params();
    // F4: measured reactor temperature = true value + 0.05 * minutes since onset
    SimRun f4 = simulate(p, ModeSpec::by_id("M1", p), FaultSpec::by_id("F4"), 3);
    for (size_t t = 0; t < f4.measurements.rows; ++t) {
        const double drift = t >= 200 ? 0.05 * (static_cast<double>(t) - 200.0) : 0.0;
        CHECK(std::fabs(f4.measurements.at(t, 3) - f4.truth.at(t, 3) - drift) < 1e-12);
    }
    // F5: applied coolant flow = commanded + (-0.1) * minutes since onset
    SimRun f5 = simulate(p, ModeSpec::by_id("M1", p), FaultSpec::by_id("F5"), 4);
    for (size_t t = 0; t < f5.measurements.rows; ++t) {
        const double offset = t >= 200 ? -0.1 * (static_cast<double>(t) - 200.0) : 0.0;
        CHECK(std::fabs(f5.truth.at(t, 6) - f5.qc_command[t] - offset) < 1e-12);
    }
}

TEST_CASE("same seed reproduces bit-identical runs, different seeds stay close on healthy") {
    CstrParams p;
    auto mode = ModeSpec::by_id("M2", p);
    SimRun a = simulate(p, mode, FaultSpec::by_id("F3"), 42);
    SimRun b = simulate(p, mode, FaultSpec::by_id("F3"), 42);
    CHECK(a.measurements.data == b.measurements.data);
    CHECK(a.truth.data == b.truth.data);

    SimRun h1 = simulate(p, mode, FaultSpec::by_id("H"), 1);
    SimRun h2 = simulate(p, mode, FaultSpec::by_id("H"), 2);
    CHECK(h1.measurements.data != h2.measurements.data);
    double max_dt = 0.0;
    for (size_t t = 0; t < h1.measurements.rows; ++t) {
        max_dt = std::max(max_dt, std::fabs(h1.measurements.at(t, 3) - h2.measurements.at(t, 3)));
    }
    CHECK(max_dt > 0.0);
    CHECK(max_dt < 1.0);  // differences stay at noise scale
}

TEST_CASE("halving the integration step changes sampled trajectories below 1e-4 relative") {
    CstrParams coarse = noiseless_params();
    CstrParams fine = coarse;
    fine.integration_step = 0.025;  // controller scan period unchanged
    for (const char* fault : {"H", "F2"}) {
        SimRun a = simulate(coarse, ModeSpec::by_id("M1", coarse), FaultSpec::by_id(fault), 5);
        SimRun b = simulate(fine, ModeSpec::by_id("M1", fine), FaultSpec::by_id(fault), 5);
        for (size_t c = 0; c < a.measurements.cols; ++c) {
            double max_abs = 1.0, max_diff = 0.0;
            for (size_t t = 0; t < a.measurements.rows; ++t) {
                max_abs = std::max(max_abs, std::fabs(a.measurements.at(t, c)));
                max_diff = std::max(max_diff,
                                    std::fabs(a.measurements.at(t, c) - b.measurements.at(t, c)));
            }
            CHECK(max_diff / max_abs < 1e-4);
        }
    }
}

TEST_CASE("export and reload round-trips measurements bit-exactly") {
    CstrParams p;
    p.duration_samples = 300;  // keep the file small
    SimRun run = simulate(p, ModeSpec::by_id("M1", p), FaultSpec::by_id("F6"), 9);
    const std::string path = temp_path("tsasan_run_roundtrip.csv");
    export_run(run, path);
    SimRun loaded = load_run(path);
    CHECK(loaded.fault_id == run.fault_id);
    CHECK(loaded.mode_id == run.mode_id);
    CHECK(loaded.onset_index == run.onset_index);
    CHECK(loaded.seed == run.seed);
    CHECK(loaded.var_names == run.var_names);
    REQUIRE(loaded.measurements.rows == run.measurements.rows);
    CHECK(loaded.measurements.data == run.measurements.data);
    std::filesystem::remove(path);
    std::filesystem::remove(temp_path("tsasan_run_roundtrip.json"));
}

TEST_CASE("a 20 hour run exports 1200 rows") {
    CstrParams p;
    SimRun run = simulate(p, ModeSpec::by_id("M3", p), FaultSpec::by_id("H"), 11);
    const std::string path = temp_path("tsasan_run_1200.csv");
    export_run(run, path);
    CsvTable table = read_numeric_csv(path);
    CHECK(table.values.rows == 1200);
    CHECK(table.header.size() == 8);  // time_min + 7 variables
    std::filesystem::remove(path);
    std::filesystem::remove(temp_path("tsasan_run_1200.json"));
}

TEST_CASE("divergent dynamics raise a simulation error with time and state") {
    CstrParams p;
    p.noise_std = {0.0, 1e7, 0.0};  // absurd process noise blows up the temperature
    try {
        simulate(p, ModeSpec::by_id("M1", p), FaultSpec::by_id("H"), 1);
        FAIL("expected SimulationError");
    } catch (const SimulationError& e) {
        std::string msg = e.what();
        CHECK(msg.find("t=") != std::string::npos);
        CHECK(msg.find("T=") != std::string::npos);
    }
}

TEST_CASE("parameter validation rejects non-positive constants") {
    CstrParams p;
    p.volume = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    CstrParams q;
    q.integration_step = 0.3;  // does not divide the 1-minute sampling interval
    CHECK_THROWS_AS(q.validate(), ConfigError);
}
