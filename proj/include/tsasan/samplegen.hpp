// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "tsasan/dataset.hpp"

namespace tsasan {

// Per-domain healthy-class moments. g(x) = (x - mu) / sigma per variable maps
// a domain into the shared latent space; g^{-1} maps back. Standard
// deviations are floored so the map stays invertible on near-constant
// variables.
struct DomainStats {
    std::string domain_id;
    std::vector<double> mu;
    std::vector<double> sigma;
    size_t n_windows = 0;

    // floor = 1e-6 of the variable's global scale, where the scale is the
    // root-mean-square of the fitting pool (at least 1).
    static double sigma_floor(double rms) {
        double scale = rms > 1.0 ? rms : 1.0;
        return 1e-6 * scale;
    }
};

// Pooled per-variable mean/std over every timestep of every healthy window
// of one domain. Requires at least two windows.
DomainStats fit_domain_stats(const std::vector<WindowSample>& healthy_windows,
                             const std::string& domain_id);

Matrix to_latent(const Matrix& features, const DomainStats& stats);
Matrix from_latent(const Matrix& latent, const DomainStats& stats);

// x mapped from one domain's coordinates into another's:
// out = mu_to + sigma_to * (x - mu_from) / sigma_from, per variable.
Matrix map_domain(const Matrix& features, const DomainStats& from, const DomainStats& to);

// For every training fault window whose category is missing from another
// task domain's training categories, emit that window mapped into the other
// domain (source = dasg). Healthy windows are never mapped.
std::vector<WindowSample> dasg_expand(const std::vector<WindowSample>& train,
                                      const TaskConfig& task,
                                      const std::map<std::string, DomainStats>& stats);

struct MixSample {
    Matrix features;  // latent space
    std::string label;
    std::string domain_id;
    double lambda = 0.0;
    std::pair<size_t, size_t> parents;  // (fault index, healthy index) into the pools
};

// Mix-up between latent fault and healthy windows of one domain:
// z = lambda * z_fault + (1 - lambda) * z_healthy with
// lambda = 0.2 + 0.8 * Beta(alpha, alpha) and the fault parent's label.
std::vector<MixSample> iss_synthesize(const std::vector<WindowSample>& latent_fault_pool,
                                      const std::vector<WindowSample>& latent_healthy_pool,
                                      size_t count, int alpha, uint64_t seed);

// domain_stats.json round trip
void write_domain_stats(const std::string& path, const std::map<std::string, DomainStats>& stats);
std::map<std::string, DomainStats> read_domain_stats(const std::string& path);

}  // namespace tsasan
