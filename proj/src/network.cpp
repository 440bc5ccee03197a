// SPDX-License-Identifier: Apache-2.0
#include "tsasan/network.hpp"

#include <cmath>

#include "tsasan/csvio.hpp"

namespace tsasan {

using nlohmann::json;

void ArchConfig::validate() const {
    if (v < 1) throw ConfigError("ArchConfig: v must be >= 1");
    if (window < 1) throw ConfigError("ArchConfig: window must be >= 1");
    if (n_classes < 2) throw ConfigError("ArchConfig: need at least two classes");
    if (reduction < 1) throw ConfigError("ArchConfig: reduction must be >= 1");
    if (!(sain_epsilon > 0.0)) throw ConfigError("ArchConfig: sain_epsilon must be positive");
    if (kernel_sizes.empty()) throw ConfigError("ArchConfig: no convolution kernels");
    for (long k : kernel_sizes) {
        if (k < 1 || k % 2 == 0) {
            throw ConfigError("ArchConfig: kernel sizes must be odd, got " + std::to_string(k));
        }
    }
}

const char* to_string(ArchConfig::SainMode m) {
    switch (m) {
        case ArchConfig::SainMode::adaptive: return "adaptive";
        case ArchConfig::SainMode::plain_in: return "plain_in";
        case ArchConfig::SainMode::none: return "none";
    }
    return "adaptive";
}

ArchConfig::SainMode sain_mode_from_string(const std::string& s) {
    if (s == "adaptive") return ArchConfig::SainMode::adaptive;
    if (s == "plain_in") return ArchConfig::SainMode::plain_in;
    if (s == "none") return ArchConfig::SainMode::none;
    throw ConfigError("unknown sain mode '" + s + "' (adaptive, plain_in, none)");
}

json ArchConfig::to_json() const {
    return json{{"v", v},
                {"window", window},
                {"kernel_sizes", kernel_sizes},
                {"reduction", reduction},
                {"n_classes", n_classes},
                {"sain_epsilon", sain_epsilon},
                {"sain_mode", std::string(to_string(sain_mode))},
                {"use_tsam", use_tsam}};
}

ArchConfig ArchConfig::from_json(const json& j) {
    ArchConfig a;
    a.v = j.at("v");
    a.window = j.at("window");
    a.kernel_sizes = j.at("kernel_sizes").get<std::vector<long>>();
    a.reduction = j.at("reduction");
    a.n_classes = j.at("n_classes");
    a.sain_epsilon = j.at("sain_epsilon");
    a.sain_mode = sain_mode_from_string(j.at("sain_mode"));
    a.use_tsam = j.at("use_tsam");
    a.validate();
    return a;
}

namespace {

Tensor init_weight(long rows, long cols, Rng& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(rows));
    return Tensor::uniform({rows, cols}, -s, s, rng, true);
}

void check_stage_finite(const Tensor& t, const char* stage) {
    if (!t.all_finite()) {
        throw InferenceError(std::string("forward: non-finite activation after stage '") + stage +
                             "'");
    }
}

}  // namespace

TsaSan::TsaSan(ArchConfig arch, uint64_t seed) : arch_(std::move(arch)) {
    arch_.validate();
    Rng rng = Rng::derive(seed, "model-init");
    const long v = arch_.v;
    const long c_msdc = arch_.msdc_channels();
    const long hidden = arch_.gru_hidden();
    const long t = arch_.window;

    for (long k : arch_.kernel_sizes) {
        const double s = 1.0 / std::sqrt(static_cast<double>(k));
        kernels_.push_back(Tensor::uniform({v, k}, -s, s, rng, true));
        kernel_biases_.push_back(Tensor::zeros({v}, true));
    }

    sg_w1_ = init_weight(c_msdc, c_msdc, rng);
    sg_b1_ = Tensor::zeros({c_msdc}, true);
    sg_w2_ = init_weight(c_msdc, c_msdc, rng);
    // gamma starts at 1 so the untrained block behaves like plain instance
    // normalization instead of zeroing the signal
    sg_b2_ = Tensor::full({c_msdc}, 1.0, true);
    sb_w1_ = init_weight(c_msdc, c_msdc, rng);
    sb_b1_ = Tensor::zeros({c_msdc}, true);
    sb_w2_ = init_weight(c_msdc, c_msdc, rng);
    sb_b2_ = Tensor::zeros({c_msdc}, true);

    gru_ = GruParams::init(c_msdc, hidden, rng);
    gru_h0_ = Tensor::zeros({hidden}, false);

    const long rt = ArchConfig::reduced(t, arch_.reduction);
    const long rc = ArchConfig::reduced(hidden, arch_.reduction);
    auto make_branch = [&](long dim, long rdim, Tensor& w1, Tensor& b1, Tensor& w2, Tensor& b2) {
        w1 = init_weight(dim, rdim, rng);
        b1 = Tensor::zeros({rdim}, true);
        w2 = init_weight(rdim, dim, rng);
        // attention starts neutral (map of ones)
        b2 = Tensor::full({dim}, 1.0, true);
    };
    make_branch(t, rt, ta_w1_, ta_b1_, ta_w2_, ta_b2_);
    make_branch(t, rt, ts_w1_, ts_b1_, ts_w2_, ts_b2_);
    make_branch(hidden, rc, sa_w1_, sa_b1_, sa_w2_, sa_b2_);
    make_branch(hidden, rc, ss_w1_, ss_b1_, ss_w2_, ss_b2_);
    tfuse_w_ = Tensor::from_data({2}, {0.5, 0.5}, true);
    tfuse_b_ = Tensor::zeros({1}, true);
    sfuse_w_ = Tensor::from_data({2}, {0.5, 0.5}, true);
    sfuse_b_ = Tensor::zeros({1}, true);

    cls_w_ = init_weight(hidden, arch_.n_classes, rng);
    cls_b_ = Tensor::zeros({arch_.n_classes}, true);

    register_params();
}

void TsaSan::register_params() {
    params_.clear();
    for (size_t i = 0; i < kernels_.size(); ++i) {
        const std::string base = "msdc.k" + std::to_string(arch_.kernel_sizes[i]);
        params_.emplace_back(base + ".kernel", kernels_[i]);
        params_.emplace_back(base + ".bias", kernel_biases_[i]);
    }
    params_.emplace_back("sain.gamma.fc1.weight", sg_w1_);
    params_.emplace_back("sain.gamma.fc1.bias", sg_b1_);
    params_.emplace_back("sain.gamma.fc2.weight", sg_w2_);
    params_.emplace_back("sain.gamma.fc2.bias", sg_b2_);
    params_.emplace_back("sain.beta.fc1.weight", sb_w1_);
    params_.emplace_back("sain.beta.fc1.bias", sb_b1_);
    params_.emplace_back("sain.beta.fc2.weight", sb_w2_);
    params_.emplace_back("sain.beta.fc2.bias", sb_b2_);
    for (auto& [name, t] : gru_.named("gru")) params_.emplace_back(name, t);
    auto reg_branch = [&](const std::string& base, Tensor& w1, Tensor& b1, Tensor& w2, Tensor& b2) {
        params_.emplace_back(base + ".fc1.weight", w1);
        params_.emplace_back(base + ".fc1.bias", b1);
        params_.emplace_back(base + ".fc2.weight", w2);
        params_.emplace_back(base + ".fc2.bias", b2);
    };
    reg_branch("tsam.temporal_avg", ta_w1_, ta_b1_, ta_w2_, ta_b2_);
    reg_branch("tsam.temporal_std", ts_w1_, ts_b1_, ts_w2_, ts_b2_);
    reg_branch("tsam.spatial_avg", sa_w1_, sa_b1_, sa_w2_, sa_b2_);
    reg_branch("tsam.spatial_std", ss_w1_, ss_b1_, ss_w2_, ss_b2_);
    params_.emplace_back("tsam.temporal_fuse.weight", tfuse_w_);
    params_.emplace_back("tsam.temporal_fuse.bias", tfuse_b_);
    params_.emplace_back("tsam.spatial_fuse.weight", sfuse_w_);
    params_.emplace_back("tsam.spatial_fuse.bias", sfuse_b_);
    params_.emplace_back("classifier.weight", cls_w_);
    params_.emplace_back("classifier.bias", cls_b_);
}

Tensor TsaSan::param(const std::string& name) const {
    for (const auto& [n, t] : params_) {
        if (n == name) return t;
    }
    throw ConfigError("unknown parameter '" + name + "'");
}

void TsaSan::set_param(const std::string& name, const std::vector<double>& values) {
    for (auto& [n, t] : params_) {
        if (n == name) {
            if (values.size() != t.numel()) {
                throw ShapeError("set_param: '" + name + "' expects " + std::to_string(t.numel()) +
                                 " values, got " + std::to_string(values.size()));
            }
            t.value() = values;
            return;
        }
    }
    throw ConfigError("unknown parameter '" + name + "'");
}

void TsaSan::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

Tensor TsaSan::fc_branch(const Tensor& input, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                         const Tensor& b2) const {
    return affine(relu(affine(input, w1, b1)), w2, b2);
}

Tensor TsaSan::msdc_forward(const Tensor& x) const {
    const bool batched = x.rank() == 3;
    Tensor x3 = batched ? x : reshape(x, {1, x.dim(0), x.dim(1)});
    if (x3.dim(1) != arch_.v || x3.dim(2) != arch_.window) {
        throw ShapeError("msdc_forward: expected [" + std::to_string(arch_.v) + " x " +
                         std::to_string(arch_.window) + "] windows, got " + shape_str(x.shape()));
    }
    std::vector<Tensor> branches;
    branches.reserve(kernels_.size());
    for (size_t i = 0; i < kernels_.size(); ++i) {
        branches.push_back(depthwise_conv1d(x3, kernels_[i], kernel_biases_[i]));
    }
    Tensor out = concat_channels(branches);
    return batched ? out : reshape(out, {arch_.msdc_channels(), arch_.window});
}

Tensor TsaSan::sain_forward(const Tensor& f) const {
    if (arch_.sain_mode == ArchConfig::SainMode::none) return f;
    const bool batched = f.rank() == 3;
    Tensor f3 = batched ? f : reshape(f, {1, f.dim(0), f.dim(1)});
    const long c = f3.dim(1);
    if (c != arch_.msdc_channels()) {
        throw ShapeError("sain_forward: expected " + std::to_string(arch_.msdc_channels()) +
                         " channels, got " + std::to_string(c));
    }
    Tensor mu = mean_over_time(f3);
    Tensor var = var_over_time(f3);
    Tensor norm = bc_mul(bc_sub(f3, mu), rsqrt_eps(var, arch_.sain_epsilon));
    Tensor out;
    if (arch_.sain_mode == ArchConfig::SainMode::plain_in) {
        out = norm;
    } else {
        Tensor sigma = sqrt_op(var);
        Tensor gamma = fc_branch(mu, sg_w1_, sg_b1_, sg_w2_, sg_b2_);
        Tensor beta = fc_branch(sigma, sb_w1_, sb_b1_, sb_w2_, sb_b2_);
        out = bc_add(bc_mul(norm, gamma), beta);
    }
    return batched ? out : reshape(out, {c, f3.dim(2)});
}

std::pair<Tensor, Tensor> TsaSan::tsam_forward(const Tensor& f) const {
    const bool batched = f.rank() == 3;
    Tensor f3 = batched ? f : reshape(f, {1, f.dim(0), f.dim(1)});
    const long c = f3.dim(1), t = f3.dim(2);
    if (c != arch_.gru_hidden() || t != arch_.window) {
        throw ShapeError("tsam_forward: expected [" + std::to_string(arch_.gru_hidden()) + " x " +
                         std::to_string(arch_.window) + "], got " + shape_str(f.shape()));
    }
    Tensor a_tap = fc_branch(mean_over_channels(f3), ta_w1_, ta_b1_, ta_w2_, ta_b2_);
    Tensor a_tsd = fc_branch(std_over_channels(f3), ts_w1_, ts_b1_, ts_w2_, ts_b2_);
    Tensor a_sap = fc_branch(mean_over_time(f3), sa_w1_, sa_b1_, sa_w2_, sa_b2_);
    Tensor a_ssd = fc_branch(std_over_time(f3), ss_w1_, ss_b1_, ss_w2_, ss_b2_);
    Tensor a_t = pair_conv1x1(a_tap, a_tsd, tfuse_w_, tfuse_b_);
    Tensor a_s = pair_conv1x1(a_sap, a_ssd, sfuse_w_, sfuse_b_);
    Tensor a_ts = outer_ct(a_s, a_t);
    Tensor fused = sum_over_time(mul(a_ts, f3));
    if (!batched) {
        fused = reshape(fused, {c});
        a_ts = reshape(a_ts, {c, t});
    }
    return {fused, a_ts};
}

Tensor TsaSan::forward_logits(const Tensor& x) const {
    const bool batched = x.rank() == 3;
    Tensor x3 = batched ? x : reshape(x, {1, x.dim(0), x.dim(1)});
    Tensor f = msdc_forward(x3);
    check_stage_finite(f, "msdc");
    f = sain_forward(f);
    check_stage_finite(f, "sain");
    f = gru_forward(f, gru_, gru_h0_);
    check_stage_finite(f, "gru");
    Tensor fused = arch_.use_tsam ? tsam_forward(f).first : sum_over_time(f);
    check_stage_finite(fused, arch_.use_tsam ? "tsam" : "time-sum");
    Tensor logits = affine(fused, cls_w_, cls_b_);
    check_stage_finite(logits, "classifier");
    return logits;
}

Tensor TsaSan::forward(const Tensor& x) const {
    Tensor probs = softmax(forward_logits(x));
    check_stage_finite(probs, "softmax");
    return probs;
}

Tensor TsaSan::loss(const Tensor& probabilities, const std::vector<int>& labels) const {
    return cross_entropy(probabilities, labels);
}

Tensor TsaSan::train_loss(const Tensor& x, const std::vector<int>& labels) const {
    return softmax_cross_entropy(forward_logits(x), labels);
}

json TsaSan::to_json() const {
    json params = json::object();
    for (const auto& [name, t] : params_) {
        params[name] = json{{"shape", t.shape()}, {"values", t.value()}};
    }
    return json{{"schema_version", 1}, {"arch", arch_.to_json()}, {"params", params}};
}

TsaSan TsaSan::from_json(const json& j) {
    TsaSan model(ArchConfig::from_json(j.at("arch")), /*seed=*/0);
    const auto& params = j.at("params");
    size_t loaded = 0;
    for (auto& [name, t] : model.params_) {
        if (!params.contains(name)) {
            throw ConfigError("checkpoint: missing parameter '" + name + "'");
        }
        const auto& entry = params.at(name);
        const auto shape = entry.at("shape").get<std::vector<long>>();
        if (shape != t.shape()) {
            throw ConfigError("checkpoint: parameter '" + name + "' has shape " +
                              shape_str(shape) + ", expected " + shape_str(t.shape()));
        }
        t.value() = entry.at("values").get<std::vector<double>>();
        if (t.value().size() != t.numel()) {
            throw ConfigError("checkpoint: parameter '" + name + "' has wrong value count");
        }
        ++loaded;
    }
    if (loaded != params.size()) {
        throw ConfigError("checkpoint: contains " + std::to_string(params.size()) +
                          " parameters, model expects " + std::to_string(loaded));
    }
    return model;
}

void save_checkpoint(const TsaSan& model, const json& manifest, const std::string& path) {
    json doc = model.to_json();
    doc["manifest"] = manifest;
    write_text_file(path, doc.dump(2) + "\n");
}

std::pair<TsaSan, json> load_checkpoint(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    TsaSan model = TsaSan::from_json(doc);
    json manifest = doc.contains("manifest") ? doc.at("manifest") : json::object();
    return {std::move(model), std::move(manifest)};
}

}  // namespace tsasan
