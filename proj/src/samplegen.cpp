// SPDX-License-Identifier: Apache-2.0
#include "tsasan/samplegen.hpp"

#include <cmath>
#include <json.hpp>

#include "tsasan/csvio.hpp"

namespace tsasan {

using nlohmann::json;

DomainStats fit_domain_stats(const std::vector<WindowSample>& healthy_windows,
                             const std::string& domain_id) {
    if (healthy_windows.size() < 2) {
        throw GenerationError("fit_domain_stats: need at least 2 healthy windows for domain " +
                              domain_id + ", got " + std::to_string(healthy_windows.size()));
    }
    const size_t v = healthy_windows[0].features.rows;
    const size_t t = healthy_windows[0].features.cols;
    DomainStats stats;
    stats.domain_id = domain_id;
    stats.n_windows = healthy_windows.size();
    stats.mu.assign(v, 0.0);
    stats.sigma.assign(v, 0.0);
    std::vector<double> sq(v, 0.0);
    for (const auto& w : healthy_windows) {
        if (w.label != "H") {
            throw GenerationError("fit_domain_stats: non-healthy window (label " + w.label +
                                  ") in the fitting pool for " + domain_id);
        }
        if (w.domain_id != domain_id) {
            throw GenerationError("fit_domain_stats: window from domain " + w.domain_id +
                                  " in the pool for " + domain_id);
        }
        if (w.features.rows != v || w.features.cols != t) {
            throw ShapeError("fit_domain_stats: inconsistent window shapes");
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
        const double floor = DomainStats::sigma_floor(std::sqrt(ex2));
        stats.sigma[c] = std::max(std::sqrt(var), floor);
    }
    return stats;
}

namespace {

void check_var_count(const Matrix& features, const DomainStats& stats, const char* op) {
    if (features.rows != stats.mu.size()) {
        throw ShapeError(std::string(op) + ": window has " + std::to_string(features.rows) +
                         " variables, stats for " + stats.domain_id + " have " +
                         std::to_string(stats.mu.size()));
    }
}

}  // namespace

Matrix to_latent(const Matrix& features, const DomainStats& stats) {
    check_var_count(features, stats, "to_latent");
    Matrix out = features;
    for (size_t c = 0; c < out.rows; ++c) {
        for (size_t t = 0; t < out.cols; ++t) {
            out.at(c, t) = (out.at(c, t) - stats.mu[c]) / stats.sigma[c];
        }
    }
    return out;
}

Matrix from_latent(const Matrix& latent, const DomainStats& stats) {
    check_var_count(latent, stats, "from_latent");
    Matrix out = latent;
    for (size_t c = 0; c < out.rows; ++c) {
        for (size_t t = 0; t < out.cols; ++t) {
            out.at(c, t) = stats.mu[c] + stats.sigma[c] * out.at(c, t);
        }
    }
    return out;
}

Matrix map_domain(const Matrix& features, const DomainStats& from, const DomainStats& to) {
    check_var_count(features, from, "map_domain");
    if (from.mu.size() != to.mu.size()) {
        throw ShapeError("map_domain: variable counts differ (" + std::to_string(from.mu.size()) +
                         " vs " + std::to_string(to.mu.size()) + ")");
    }
    if (from.mu == to.mu && from.sigma == to.sigma) return features;  // exact identity
    Matrix out = features;
    for (size_t c = 0; c < out.rows; ++c) {
        const double scale = to.sigma[c] / from.sigma[c];
        for (size_t t = 0; t < out.cols; ++t) {
            out.at(c, t) = to.mu[c] + scale * (out.at(c, t) - from.mu[c]);
        }
    }
    return out;
}

std::vector<WindowSample> dasg_expand(const std::vector<WindowSample>& train,
                                      const TaskConfig& task,
                                      const std::map<std::string, DomainStats>& stats) {
    for (const auto& mode : task.modes) {
        if (!stats.count(mode)) {
            throw GenerationError("dasg_expand: no domain stats fitted for " + mode);
        }
    }
    std::vector<WindowSample> generated;
    for (const auto& w : train) {
        if (w.label == "H") continue;
        const auto& from = stats.at(w.domain_id);
        for (const auto& target : task.modes) {
            if (target == w.domain_id) continue;
            if (task.train_categories.at(target).count(w.label)) continue;  // already covered
            WindowSample g;
            g.features = map_domain(w.features, from, stats.at(target));
            g.label = w.label;
            g.domain_id = target;
            g.source = WindowSource::dasg;
            g.start_index = w.start_index;
            g.run_seed = w.run_seed;
            generated.push_back(std::move(g));
        }
    }
    return generated;
}

std::vector<MixSample> iss_synthesize(const std::vector<WindowSample>& latent_fault_pool,
                                      const std::vector<WindowSample>& latent_healthy_pool,
                                      size_t count, int alpha, uint64_t seed) {
    if (latent_fault_pool.empty() || latent_healthy_pool.empty()) {
        throw GenerationError("iss_synthesize: fault and healthy pools must both be non-empty");
    }
    if (alpha < 1) throw ConfigError("iss_synthesize: alpha must be a positive integer");
    const std::string& domain = latent_fault_pool[0].domain_id;
    for (const auto& w : latent_fault_pool) {
        if (w.domain_id != domain) {
            throw GenerationError("iss_synthesize: fault pool mixes domains " + domain + " and " +
                                  w.domain_id);
        }
    }
    for (const auto& w : latent_healthy_pool) {
        if (w.domain_id != domain) {
            throw GenerationError("iss_synthesize: healthy pool domain " + w.domain_id +
                                  " does not match fault pool domain " + domain);
        }
    }
    Rng rng = Rng::derive(seed, "iss");
    std::vector<MixSample> out;
    out.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        const double lambda = 0.2 + 0.8 * rng.beta_symmetric(alpha);
        const size_t fi = rng.index(latent_fault_pool.size());
        const size_t hi = rng.index(latent_healthy_pool.size());
        const auto& f = latent_fault_pool[fi].features;
        const auto& h = latent_healthy_pool[hi].features;
        if (f.rows != h.rows || f.cols != h.cols) {
            throw ShapeError("iss_synthesize: parent windows have different shapes");
        }
        MixSample m;
        m.features = Matrix(f.rows, f.cols);
        for (size_t j = 0; j < f.data.size(); ++j) {
            m.features.data[j] = lambda * f.data[j] + (1.0 - lambda) * h.data[j];
        }
        m.label = latent_fault_pool[fi].label;
        m.domain_id = domain;
        m.lambda = lambda;
        m.parents = {fi, hi};
        out.push_back(std::move(m));
    }
    return out;
}

void write_domain_stats(const std::string& path, const std::map<std::string, DomainStats>& stats) {
    json j = json::object();
    for (const auto& [domain, s] : stats) {
        j[domain] = json{{"mu", s.mu}, {"sigma", s.sigma}, {"n_windows", s.n_windows}};
    }
    write_text_file(path, json{{"schema_version", 1}, {"domains", j}}.dump(2) + "\n");
}

std::map<std::string, DomainStats> read_domain_stats(const std::string& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    std::map<std::string, DomainStats> out;
    for (const auto& [domain, s] : j.at("domains").items()) {
        DomainStats d;
        d.domain_id = domain;
        d.mu = s.at("mu").get<std::vector<double>>();
        d.sigma = s.at("sigma").get<std::vector<double>>();
        d.n_windows = s.at("n_windows");
        out[domain] = std::move(d);
    }
    return out;
}

}  // namespace tsasan
