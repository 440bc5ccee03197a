// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "tsasan/samplegen.hpp"

using namespace tsasan;

namespace {

WindowSample make_window(const std::string& domain, const std::string& label, uint64_t seed,
                         size_t v = 3, size_t t = 8, double offset = 0.0) {
    WindowSample w;
    w.domain_id = domain;
    w.label = label;
    w.features = Matrix(v, t);
    Rng rng(seed);
    for (auto& x : w.features.data) x = offset + rng.uniform(-1, 1);
    return w;
}

WindowSample constant_window(const std::string& domain, const std::string& label, double value,
                             size_t v = 2, size_t t = 4) {
    WindowSample w;
    w.domain_id = domain;
    w.label = label;
    w.features = Matrix(v, t, value);
    return w;
}

}  // namespace

TEST_CASE("constant healthy data hits the sigma floor") {
    std::vector<WindowSample> pool = {constant_window("M1", "H", 5.0),
                                      constant_window("M1", "H", 5.0)};
    DomainStats s = fit_domain_stats(pool, "M1");
    CHECK(s.n_windows == 2);
    for (size_t c = 0; c < 2; ++c) {
        CHECK(s.mu[c] == doctest::Approx(5.0).epsilon(1e-15));
        CHECK(s.sigma[c] == DomainStats::sigma_floor(5.0));
    }
}

TEST_CASE("fitted moments match a brute-force pooled oracle") {
    std::vector<WindowSample> pool;
    for (uint64_t s = 1; s <= 5; ++s) pool.push_back(make_window("M2", "H", s, 4, 16, 2.0));
    DomainStats stats = fit_domain_stats(pool, "M2");

    for (size_t c = 0; c < 4; ++c) {
        std::vector<double> values;
        for (const auto& w : pool) {
            for (size_t t = 0; t < 16; ++t) values.push_back(w.features.at(c, t));
        }
        double mean = 0.0;
        for (double x : values) mean += x;
        mean /= static_cast<double>(values.size());
        double acc = 0.0;
        for (double x : values) acc += (x - mean) * (x - mean);
        double sd = std::sqrt(acc / static_cast<double>(values.size()));
        CHECK(std::fabs(stats.mu[c] - mean) < 1e-12);
        CHECK(std::fabs(stats.sigma[c] - sd) < 1e-12);
    }

    DomainStats again = fit_domain_stats(pool, "M2");
    CHECK(again.mu == stats.mu);
    CHECK(again.sigma == stats.sigma);
}

TEST_CASE("fitting requires at least two healthy windows of the right domain") {
    CHECK_THROWS_AS(fit_domain_stats({constant_window("M1", "H", 1.0)}, "M1"), GenerationError);
    std::vector<WindowSample> wrong = {constant_window("M1", "F1", 1.0),
                                       constant_window("M1", "H", 1.0)};
    CHECK_THROWS_AS(fit_domain_stats(wrong, "M1"), GenerationError);
}

TEST_CASE("map_domain identity, mean-to-mean and scalar formula") {
    std::vector<WindowSample> p1, p2;
    for (uint64_t s = 1; s <= 4; ++s) p1.push_back(make_window("M1", "H", s, 2, 8, 0.0));
    for (uint64_t s = 5; s <= 8; ++s) p2.push_back(make_window("M2", "H", s, 2, 8, 3.0));
    DomainStats s1 = fit_domain_stats(p1, "M1");
    DomainStats s2 = fit_domain_stats(p2, "M2");

    Matrix x = make_window("M1", "F1", 99, 2, 8).features;
    Matrix same = map_domain(x, s1, s1);
    CHECK(same.data == x.data);

    Matrix at_mean(2, 8);
    for (size_t c = 0; c < 2; ++c) {
        for (size_t t = 0; t < 8; ++t) at_mean.at(c, t) = s1.mu[c];
    }
    Matrix mapped = map_domain(at_mean, s1, s2);
    for (size_t c = 0; c < 2; ++c) {
        for (size_t t = 0; t < 8; ++t) {
            CHECK(mapped.at(c, t) == doctest::Approx(s2.mu[c]).epsilon(1e-12));
        }
    }

    DomainStats a{"A", {0.0}, {1.0}, 2};
    DomainStats b{"B", {10.0}, {2.0}, 2};
    Matrix one(1, 1, 1.0);
    CHECK(map_domain(one, a, b).at(0, 0) == doctest::Approx(12.0).epsilon(1e-15));

    DomainStats mismatched{"C", {0.0, 0.0}, {1.0, 1.0}, 2};
    CHECK_THROWS_AS(map_domain(one, a, mismatched), ShapeError);
}

TEST_CASE("latent round trip and affine shape preservation") {
    std::vector<WindowSample> pool;
    for (uint64_t s = 1; s <= 4; ++s) pool.push_back(make_window("M1", "H", s, 3, 32, 1.0));
    DomainStats stats = fit_domain_stats(pool, "M1");

    Matrix x = make_window("M1", "F2", 123, 3, 32, 4.0).features;
    Matrix rt = from_latent(to_latent(x, stats), stats);
    for (size_t i = 0; i < x.data.size(); ++i) CHECK(std::fabs(rt.data[i] - x.data[i]) < 1e-9);

    // per-variable Pearson correlation between input and mapped output is 1
    std::vector<WindowSample> pool2;
    for (uint64_t s = 11; s <= 14; ++s) pool2.push_back(make_window("M2", "H", s, 3, 32, -2.0));
    DomainStats stats2 = fit_domain_stats(pool2, "M2");
    Matrix y = map_domain(x, stats, stats2);
    for (size_t c = 0; c < 3; ++c) {
        double mx = 0, my = 0;
        for (size_t t = 0; t < 32; ++t) {
            mx += x.at(c, t);
            my += y.at(c, t);
        }
        mx /= 32;
        my /= 32;
        double sxy = 0, sxx = 0, syy = 0;
        for (size_t t = 0; t < 32; ++t) {
            sxy += (x.at(c, t) - mx) * (y.at(c, t) - my);
            sxx += (x.at(c, t) - mx) * (x.at(c, t) - mx);
            syy += (y.at(c, t) - my) * (y.at(c, t) - my);
        }
        CHECK(std::fabs(sxy / std::sqrt(sxx * syy) - 1.0) < 1e-12);
    }
}

TEST_CASE("dasg_expand fills exactly the missing cells of T4") {
    auto t4 = TaskConfig::by_id("T4");
    std::map<std::string, DomainStats> stats;
    std::vector<WindowSample> train;
    // two healthy windows per mode for the stats, plus two windows per seen fault cell
    for (const auto& mode : t4.modes) {
        std::vector<WindowSample> healthy;
        for (uint64_t s = 0; s < 3; ++s) {
            healthy.push_back(make_window(mode, "H", fnv1a(mode) + s, 3, 16,
                                          mode == "M1" ? 0.0 : 5.0));
        }
        stats[mode] = fit_domain_stats(healthy, mode);
        for (auto& h : healthy) train.push_back(h);
        for (const auto& cat : t4.train_categories.at(mode)) {
            if (cat == "H") continue;
            for (uint64_t s = 0; s < 2; ++s) {
                train.push_back(make_window(mode, cat, fnv1a(mode + cat) + s, 3, 16, 1.0));
            }
        }
    }

    auto generated = dasg_expand(train, t4, stats);

    // count oracle: every exclusive fault window maps to exactly one other domain
    size_t expected = 0;
    for (const auto& w : train) {
        if (w.label == "H") continue;
        for (const auto& mode : t4.modes) {
            if (mode != w.domain_id && !t4.train_categories.at(mode).count(w.label)) ++expected;
        }
    }
    CHECK(generated.size() == expected);
    CHECK(expected == 2 * 9);  // 4 fault cells in M1 + 5 in M2, 2 windows each

    for (const auto& g : generated) {
        CHECK(g.source == WindowSource::dasg);
        // never duplicates a cell that already has real coverage
        CHECK(t4.train_categories.at(g.domain_id).count(g.label) == 0);
    }

    // full grid coverage after expansion
    std::set<std::pair<std::string, std::string>> covered;
    for (const auto& w : train) covered.insert({w.domain_id, w.label});
    for (const auto& g : generated) covered.insert({g.domain_id, g.label});
    for (const auto& mode : t4.modes) {
        for (const auto& cat : t4.categories) {
            CHECK(covered.count({mode, cat}) == 1);
        }
    }

    std::map<std::string, DomainStats> missing = {{"M1", stats["M1"]}};
    CHECK_THROWS_AS(dasg_expand(train, t4, missing), GenerationError);
}

TEST_CASE("iss synthesis: reconstruction, labels and lambda law") {
    std::vector<WindowSample> faults, healthy;
    for (uint64_t s = 0; s < 7; ++s) faults.push_back(make_window("M1", "F4", 100 + s, 1, 2, 1.0));
    for (uint64_t s = 0; s < 5; ++s) healthy.push_back(make_window("M1", "H", 200 + s, 1, 2, 0.0));

    const size_t n = 100000;
    auto mixes = iss_synthesize(faults, healthy, n, 2, 9001);
    REQUIRE(mixes.size() == n);

    double min_l = 1.0, max_l = 0.0, sum_l = 0.0;
    for (const auto& m : mixes) {
        min_l = std::min(min_l, m.lambda);
        max_l = std::max(max_l, m.lambda);
        sum_l += m.lambda;
        CHECK(m.label == "F4");
        CHECK(m.domain_id == "M1");
        const auto& f = faults[m.parents.first].features;
        const auto& h = healthy[m.parents.second].features;
        for (size_t i = 0; i < f.data.size(); ++i) {
            const double expected = m.lambda * f.data[i] + (1.0 - m.lambda) * h.data[i];
            CHECK(m.features.data[i] == doctest::Approx(expected).epsilon(1e-15));
            // the mix lies on the segment between its parents
            CHECK(m.features.data[i] >= std::min(f.data[i], h.data[i]) - 1e-12);
            CHECK(m.features.data[i] <= std::max(f.data[i], h.data[i]) + 1e-12);
        }
    }
    CHECK(min_l >= 0.2);
    CHECK(max_l <= 1.0);
    CHECK(std::fabs(sum_l / static_cast<double>(n) - 0.6) < 0.01);

    // reproducibility and error contracts
    auto again = iss_synthesize(faults, healthy, 10, 2, 9001);
    auto first = iss_synthesize(faults, healthy, 10, 2, 9001);
    for (size_t i = 0; i < 10; ++i) CHECK(again[i].features.data == first[i].features.data);
    CHECK_THROWS_AS(iss_synthesize({}, healthy, 1, 2, 1), GenerationError);
    CHECK_THROWS_AS(iss_synthesize(faults, {}, 1, 2, 1), GenerationError);

    std::vector<WindowSample> other_domain = {make_window("M2", "H", 1, 1, 2)};
    CHECK_THROWS_AS(iss_synthesize(faults, other_domain, 1, 2, 1), GenerationError);
}

TEST_CASE("domain stats persist through json") {
    std::vector<WindowSample> pool;
    for (uint64_t s = 1; s <= 3; ++s) pool.push_back(make_window("M3", "H", s, 2, 8));
    std::map<std::string, DomainStats> stats = {{"M3", fit_domain_stats(pool, "M3")}};
    const std::string path =
        (std::filesystem::temp_directory_path() / "tsasan_domain_stats.json").string();
    write_domain_stats(path, stats);
    auto loaded = read_domain_stats(path);
    REQUIRE(loaded.count("M3") == 1);
    CHECK(loaded["M3"].mu == stats["M3"].mu);
    CHECK(loaded["M3"].sigma == stats["M3"].sigma);
    CHECK(loaded["M3"].n_windows == 3);
    std::filesystem::remove(path);
}
