// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>
#include <vector>

#include "tsasan/tensor.hpp"

namespace tsasan {

// Differentiable operations. Sequence ops accept either [C x T] or a batched
// [N x C x T] layout; matrix ops expect [N x D]. All layouts are row-major.

// views / elementwise ---------------------------------------------------------
Tensor reshape(const Tensor& x, std::vector<long> new_shape);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor axpb(const Tensor& x, double a, double b);  // a*x + b
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor sqrt_op(const Tensor& x);                 // backward guarded at 0
Tensor rsqrt_eps(const Tensor& x, double eps);   // (x + eps)^(-1/2)
Tensor sum(const Tensor& x);                     // -> scalar [1]

// linear ----------------------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
// out[n,j] = sum_d x[n,d] * w[d,j] + b[j]
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor broadcast_rows(const Tensor& v, long n);  // [M] -> [N x M]

// per-channel 1-D convolution along time, zero same-padding, stride 1
Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias);

// reductions over a [.. C x T] layout ------------------------------------------
Tensor mean_over_time(const Tensor& x);     // -> [(N x) C]
Tensor var_over_time(const Tensor& x);      // population variance
Tensor std_over_time(const Tensor& x);      // population std
Tensor sum_over_time(const Tensor& x);      // -> [(N x) C]
Tensor mean_over_channels(const Tensor& x); // -> [(N x) T]
Tensor std_over_channels(const Tensor& x);  // -> [(N x) T]

// channel-wise broadcasts: s has one entry per (n, c), applied across time ----
Tensor bc_sub(const Tensor& x, const Tensor& s);
Tensor bc_mul(const Tensor& x, const Tensor& s);
Tensor bc_add(const Tensor& x, const Tensor& s);

// rank-1 map over (channel, time): out[n,c,t] = s[n,c] * t[n,t] ---------------
Tensor outer_ct(const Tensor& s, const Tensor& t);

// sequence assembly -----------------------------------------------------------
Tensor slice_time(const Tensor& x, long t);              // [N x C x T] -> [N x C]
Tensor stack_time(const std::vector<Tensor>& steps);     // T x [N x C] -> [N x C x T]
Tensor concat_channels(const std::vector<Tensor>& parts);

// mean/std of each channel over time; the building block of instance norm
std::pair<Tensor, Tensor> instance_stats(const Tensor& x);

// classification heads ---------------------------------------------------------
Tensor softmax(const Tensor& x);  // rows of [N x K], max-shifted
Tensor cross_entropy(const Tensor& p, const std::vector<int>& labels);  // batch mean
// numerically fused path used for training; gradient is (softmax - onehot)/N
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// 1x1 convolution fusing two equal-shape maps: w[0]*a + w[1]*b + bias[0]
Tensor pair_conv1x1(const Tensor& a, const Tensor& b, const Tensor& w, const Tensor& bias);

// gated recurrent unit ----------------------------------------------------------
//   r_t = sigm(x_t Wxr + h Whr + br)
//   z_t = sigm(x_t Wxz + h Whz + bz)
//   n_t = tanh(x_t Wxn + (r_t . h) Whn + bn)
//   h_t = (1 - z_t) . h + z_t . n_t
struct GruParams {
    Tensor w_xr, w_hr, b_r;
    Tensor w_xz, w_hz, b_z;
    Tensor w_xn, w_hn, b_n;

    static GruParams init(long in_dim, long hidden, Rng& rng);
    std::vector<std::pair<std::string, Tensor>> named(const std::string& prefix) const;
};

// x: [(N x) C_in x T], h0: [hidden]; returns the full hidden sequence
Tensor gru_forward(const Tensor& x, const GruParams& params, const Tensor& h0);

}  // namespace tsasan
