// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "tsasan/gradcheck.hpp"
#include "tsasan/network.hpp"
#include "test_util.hpp"

using namespace tsasan;

namespace {

ArchConfig small_arch(long v, long window, long n_classes = 4) {
    ArchConfig a;
    a.v = v;
    a.window = window;
    a.n_classes = n_classes;
    return a;
}

Tensor rand_windows(long n, long v, long t, Rng& rng, double scale = 1.0) {
    return Tensor::uniform({n, v, t}, -scale, scale, rng);
}

void zero_param(TsaSan& m, const std::string& name) {
    m.set_param(name, std::vector<double>(m.param(name).numel(), 0.0));
}

void fill_param(TsaSan& m, const std::string& name, double v) {
    m.set_param(name, std::vector<double>(m.param(name).numel(), v));
}

}  // namespace

TEST_CASE("msdc concatenates four length-preserving branches") {
    TsaSan model(small_arch(7, 64, 10), 1);
    Rng rng(2);
    Tensor x = Tensor::uniform({7, 64}, -1, 1, rng);
    Tensor f = model.msdc_forward(x);
    CHECK(f.shape() == std::vector<long>{28, 64});

    // all kernels and biases zero -> all zeros
    TsaSan zeroed(small_arch(3, 16), 1);
    for (long k : {3, 5, 7, 9}) {
        zero_param(zeroed, "msdc.k" + std::to_string(k) + ".kernel");
        zero_param(zeroed, "msdc.k" + std::to_string(k) + ".bias");
    }
    Tensor z = zeroed.msdc_forward(Tensor::uniform({3, 16}, -1, 1, rng));
    for (double v : z.value()) CHECK(v == 0.0);
}

TEST_CASE("zeroing one branch zeroes exactly its channel block") {
    const long v = 3, t = 16;
    TsaSan model(small_arch(v, t), 7);
    zero_param(model, "msdc.k5.kernel");
    zero_param(model, "msdc.k5.bias");
    Rng rng(3);
    Tensor f = model.msdc_forward(Tensor::uniform({v, t}, -1, 1, rng));
    // branch order: k3 -> channels [0, v), k5 -> [v, 2v)
    double second_block = 0.0, rest = 0.0;
    for (long c = 0; c < 4 * v; ++c) {
        for (long ti = 0; ti < t; ++ti) {
            double val = std::fabs(f.value()[c * t + ti]);
            if (c >= v && c < 2 * v) {
                second_block += val;
            } else {
                rest += val;
            }
        }
    }
    CHECK(second_block == 0.0);
    CHECK(rest > 0.0);
}

TEST_CASE("sain with unit gain and zero shift is plain instance normalization") {
    const long v = 2, t = 32;
    TsaSan model(small_arch(v, t), 11);
    // gamma = 1 (fc2 bias is already 1), beta = 0
    for (const char* p : {"sain.gamma.fc1.weight", "sain.gamma.fc2.weight",
                          "sain.beta.fc1.weight", "sain.beta.fc2.weight"}) {
        zero_param(model, p);
    }
    Rng rng(4);
    Tensor f = model.msdc_forward(Tensor::uniform({v, t}, -10, 10, rng));
    Tensor out = model.sain_forward(f);
    const long c_all = 4 * v;
    for (long c = 0; c < c_all; ++c) {
        double mean = 0.0;
        for (long ti = 0; ti < t; ++ti) mean += out.value()[c * t + ti];
        mean /= t;
        CHECK(std::fabs(mean) < 1e-9);
        double var = 0.0;
        for (long ti = 0; ti < t; ++ti) {
            double d = out.value()[c * t + ti] - mean;
            var += d * d;
        }
        var /= t;
        // variance falls just below 1 by the epsilon regularizer
        CHECK(std::fabs(var - 1.0) < 1e-4);
    }
}

TEST_CASE("constant channels pass only the adaptive shift through sain") {
    const long v = 1, t = 16;
    TsaSan model(small_arch(v, t), 13);
    for (const char* p : {"sain.beta.fc1.weight", "sain.beta.fc2.weight"}) zero_param(model, p);
    fill_param(model, "sain.beta.fc2.bias", 0.7);
    Tensor f = Tensor::full({4 * v, t}, 3.0);  // constant channels, zero variance
    Tensor out = model.sain_forward(f);
    for (long c = 0; c < 4 * v; ++c) {
        for (long ti = 0; ti < t; ++ti) {
            CHECK(out.value()[c * t + ti] == doctest::Approx(0.7).epsilon(1e-12));
        }
    }
}

TEST_CASE("sain gradients through the moment paths match central differences") {
    const long v = 1, t = 12;
    TsaSan model(small_arch(v, t), 17);
    Rng rng(5);
    Tensor x = Tensor::uniform({4 * v, t}, -1, 1, rng);
    auto wrt_input = [&](const Tensor& probe) { return sum(model.sain_forward(probe)); };
    CHECK(finite_difference_check(wrt_input, x, 1e-4) < 1e-4);

    auto loss_fn = [&] { return sum(model.sain_forward(x)); };
    for (const char* name : {"sain.gamma.fc1.weight", "sain.gamma.fc2.bias",
                             "sain.beta.fc1.weight", "sain.beta.fc2.weight"}) {
        CHECK(testutil::model_param_fd(model, name, loss_fn, 1e-4) < 1e-4);
    }
}

TEST_CASE("tsam with unit attention reduces to the plain time sum") {
    const long v = 2, t = 32;
    TsaSan model(small_arch(v, t), 19);
    for (const char* branch : {"temporal_avg", "temporal_std", "spatial_avg", "spatial_std"}) {
        zero_param(model, "tsam." + std::string(branch) + ".fc1.weight");
        zero_param(model, "tsam." + std::string(branch) + ".fc2.weight");
        // fc2 bias already 1 -> branch outputs all ones
    }
    // fuse: 0.5 * ones + 0.5 * ones + 0 = ones
    Rng rng(6);
    Tensor f = Tensor::uniform({2 * v, t}, -1, 1, rng);
    auto [fused, amap] = model.tsam_forward(f);
    for (long c = 0; c < 2 * v; ++c) {
        double s = 0.0;
        for (long ti = 0; ti < t; ++ti) s += f.value()[c * t + ti];
        CHECK(fused.value()[c] == doctest::Approx(s).epsilon(1e-12));
        for (long ti = 0; ti < t; ++ti) {
            CHECK(amap.value()[c * t + ti] == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("the attention map is rank one by construction") {
    const long v = 2, t = 16;
    TsaSan model(small_arch(v, t), 23);
    Rng rng(7);
    auto [fused, amap] = model.tsam_forward(Tensor::uniform({2 * v, t}, -1, 1, rng));
    // every 2x2 minor vanishes
    for (long c = 1; c < 2 * v; ++c) {
        for (long ti = 1; ti < t; ++ti) {
            const double det = amap.value()[0] * amap.value()[c * t + ti] -
                               amap.value()[ti] * amap.value()[c * t];
            CHECK(std::fabs(det) < 1e-9);
        }
    }
}

TEST_CASE("tsam gradients through both attention branches") {
    const long v = 1, t = 12;
    TsaSan model(small_arch(v, t), 29);
    Rng rng(8);
    Tensor f = Tensor::uniform({2 * v, t}, -1, 1, rng);
    auto wrt_input = [&](const Tensor& probe) { return sum(model.tsam_forward(probe).first); };
    CHECK(finite_difference_check(wrt_input, f, 1e-4) < 1e-3);

    auto loss_fn = [&] { return sum(model.tsam_forward(f).first); };
    for (const char* name :
         {"tsam.temporal_avg.fc1.weight", "tsam.temporal_std.fc2.weight",
          "tsam.spatial_avg.fc2.bias", "tsam.spatial_std.fc1.weight",
          "tsam.temporal_fuse.weight", "tsam.spatial_fuse.bias"}) {
        CHECK(testutil::model_param_fd(model, name, loss_fn, 1e-4) < 1e-3);
    }
}

TEST_CASE("forward yields normalized probability rows of width n_classes") {
    TsaSan model(small_arch(7, 64, 10), 31);
    Rng rng(9);
    Tensor x = rand_windows(5, 7, 64, rng);
    Tensor p = model.forward(x);
    CHECK(p.shape() == std::vector<long>{5, 10});
    for (long i = 0; i < 5; ++i) {
        double s = 0.0;
        for (long j = 0; j < 10; ++j) s += p.value()[i * 10 + j];
        CHECK(std::fabs(s - 1.0) < 1e-9);
    }
}

TEST_CASE("permuting the batch permutes outputs with no cross coupling") {
    TsaSan model(small_arch(3, 16, 5), 37);
    Rng rng(10);
    Tensor x = rand_windows(4, 3, 16, rng);
    Tensor p = model.forward(x);
    // reversed batch
    std::vector<double> rev;
    const size_t stride = 3 * 16;
    for (long i = 3; i >= 0; --i) {
        rev.insert(rev.end(), x.value().begin() + i * stride, x.value().begin() + (i + 1) * stride);
    }
    Tensor pr = model.forward(Tensor::from_data({4, 3, 16}, rev));
    for (long i = 0; i < 4; ++i) {
        for (long j = 0; j < 5; ++j) {
            CHECK(p.value()[i * 5 + j] == pr.value()[(3 - i) * 5 + j]);
        }
    }
}

TEST_CASE("loss values on perfect and uniform predictions") {
    TsaSan model(small_arch(2, 16, 10), 41);
    Tensor perfect = Tensor::from_data({2, 10}, [] {
        std::vector<double> v(20, 0.0);
        v[0 * 10 + 3] = 1.0;
        v[1 * 10 + 7] = 1.0;
        return v;
    }());
    CHECK(model.loss(perfect, {3, 7}).item() == doctest::Approx(0.0).epsilon(1e-12));
    Tensor uniform = Tensor::full({4, 10}, 0.1);
    CHECK(model.loss(uniform, {0, 9, 4, 2}).item() ==
          doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("non-finite activations name the failing stage") {
    TsaSan model(small_arch(2, 16, 4), 43);
    std::vector<double> bad(2 * 16, 0.0);
    bad[5] = std::nan("");
    try {
        model.forward(Tensor::from_data({2, 16}, bad));
        FAIL("expected InferenceError");
    } catch (const InferenceError& e) {
        CHECK(std::string(e.what()).find("msdc") != std::string::npos);
    }
}

TEST_CASE("checkpoint save, load and forward are bit-identical") {
    TsaSan model(small_arch(3, 32, 6), 47);
    Rng rng(11);
    Tensor x = rand_windows(3, 3, 32, rng);
    Tensor before = model.forward(x);
    const std::string path =
        (std::filesystem::temp_directory_path() / "tsasan_ckpt_test.json").string();
    save_checkpoint(model, {{"note", "test"}}, path);
    auto [loaded, manifest] = load_checkpoint(path);
    CHECK(manifest.at("note") == "test");
    Tensor after = loaded.forward(x);
    CHECK(before.value() == after.value());
    std::filesystem::remove(path);
}

TEST_CASE("checkpoints must carry every parameter exactly once") {
    TsaSan model(small_arch(2, 16, 4), 53);
    nlohmann::json doc = model.to_json();
    doc["params"].erase("classifier.weight");
    CHECK_THROWS_AS(TsaSan::from_json(doc), ConfigError);

    nlohmann::json extra = model.to_json();
    extra["params"]["mystery"] = {{"shape", {1}}, {"values", {0.0}}};
    CHECK_THROWS_AS(TsaSan::from_json(extra), ConfigError);
}

TEST_CASE("ablation modes change the normalization and attention paths") {
    ArchConfig none = small_arch(2, 16, 4);
    none.sain_mode = ArchConfig::SainMode::none;
    TsaSan mnone(none, 59);
    Rng rng(12);
    Tensor f = Tensor::uniform({8, 16}, -1, 1, rng);
    CHECK(mnone.sain_forward(f).value() == f.value());

    ArchConfig plain = small_arch(2, 16, 4);
    plain.sain_mode = ArchConfig::SainMode::plain_in;
    TsaSan mplain(plain, 59);
    Tensor out = mplain.sain_forward(f);
    for (long c = 0; c < 8; ++c) {
        double mean = 0.0;
        for (long t = 0; t < 16; ++t) mean += out.value()[c * 16 + t];
        CHECK(std::fabs(mean / 16.0) < 1e-9);
    }

    ArchConfig no_tsam = small_arch(2, 16, 4);
    no_tsam.use_tsam = false;
    TsaSan mflat(no_tsam, 59);
    CHECK_NOTHROW(mflat.forward(Tensor::uniform({2, 2, 16}, -1, 1, rng)));
}

TEST_CASE("architecture validation rejects inconsistent configs") {
    ArchConfig bad = small_arch(2, 16, 4);
    bad.kernel_sizes = {3, 4};
    CHECK_THROWS_AS(TsaSan(bad, 1), ConfigError);
    ArchConfig one_class = small_arch(2, 16, 1);
    CHECK_THROWS_AS(TsaSan(one_class, 1), ConfigError);
    CHECK(ArchConfig::reduced(6, 16) == 1);
    CHECK(ArchConfig::reduced(64, 16) == 4);
}
