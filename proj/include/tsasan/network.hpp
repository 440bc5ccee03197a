// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "tsasan/ops.hpp"

namespace tsasan {

// Multivariate window classifier: multi-scale depthwise convolutions (MSDC),
// self-adaptive instance normalization (SAIN), a GRU over time, a rank-1
// temporal-spatial attention map (TSAM), and a linear softmax classifier.

struct ArchConfig {
    enum class SainMode { adaptive, plain_in, none };

    long v = 7;                                 // monitored variables
    long window = 64;                           // timesteps per sample
    std::vector<long> kernel_sizes = {3, 5, 7, 9};
    long reduction = 16;                        // bottleneck divisor in attention FCs
    long n_classes = 10;
    double sain_epsilon = 1e-5;
    SainMode sain_mode = SainMode::adaptive;
    bool use_tsam = true;

    long msdc_channels() const { return v * static_cast<long>(kernel_sizes.size()); }
    long gru_hidden() const { return 2 * v; }
    static long reduced(long c, long r) { return c / r >= 1 ? c / r : 1; }

    void validate() const;
    nlohmann::json to_json() const;
    static ArchConfig from_json(const nlohmann::json& j);
};

const char* to_string(ArchConfig::SainMode m);
ArchConfig::SainMode sain_mode_from_string(const std::string& s);

class TsaSan {
public:
    TsaSan(ArchConfig arch, uint64_t seed);

    const ArchConfig& arch() const { return arch_; }

    // Stages. Each accepts [C x T] or [N x C x T] and preserves the input's
    // batch rank. Channel flow: v -> 4v (msdc) -> 4v (sain) -> 2v (gru)
    // -> 2v (tsam fused) -> n_classes.
    Tensor msdc_forward(const Tensor& x) const;
    Tensor sain_forward(const Tensor& f) const;
    std::pair<Tensor, Tensor> tsam_forward(const Tensor& f) const;  // (fused, attention map)

    Tensor forward_logits(const Tensor& x) const;
    Tensor forward(const Tensor& x) const;  // softmax probabilities, [N x n_classes]

    Tensor loss(const Tensor& probabilities, const std::vector<int>& labels) const;
    // Fused softmax + cross-entropy on the logits; the path used in training.
    Tensor train_loss(const Tensor& x, const std::vector<int>& labels) const;

    std::vector<std::pair<std::string, Tensor>>& params() { return params_; }
    const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }
    Tensor param(const std::string& name) const;
    void set_param(const std::string& name, const std::vector<double>& values);
    void zero_grad();

    nlohmann::json to_json() const;
    static TsaSan from_json(const nlohmann::json& j);

private:
    Tensor fc_branch(const Tensor& input, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                     const Tensor& b2) const;
    void register_params();

    ArchConfig arch_;

    std::vector<Tensor> kernels_;
    std::vector<Tensor> kernel_biases_;

    Tensor sg_w1_, sg_b1_, sg_w2_, sg_b2_;  // SAIN gamma path (from channel means)
    Tensor sb_w1_, sb_b1_, sb_w2_, sb_b2_;  // SAIN beta path (from channel stds)

    GruParams gru_;
    Tensor gru_h0_;  // fixed zero initial state

    Tensor ta_w1_, ta_b1_, ta_w2_, ta_b2_;  // temporal branch on channel means
    Tensor ts_w1_, ts_b1_, ts_w2_, ts_b2_;  // temporal branch on channel stds
    Tensor sa_w1_, sa_b1_, sa_w2_, sa_b2_;  // spatial branch on time means
    Tensor ss_w1_, ss_b1_, ss_w2_, ss_b2_;  // spatial branch on time stds
    Tensor tfuse_w_, tfuse_b_, sfuse_w_, sfuse_b_;

    Tensor cls_w_, cls_b_;

    std::vector<std::pair<std::string, Tensor>> params_;
};

// Single-document checkpoint: architecture, named parameters, and a free-form
// training manifest.
void save_checkpoint(const TsaSan& model, const nlohmann::json& manifest, const std::string& path);
std::pair<TsaSan, nlohmann::json> load_checkpoint(const std::string& path);

}  // namespace tsasan
