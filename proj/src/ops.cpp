// SPDX-License-Identifier: Apache-2.0
#include "tsasan/ops.hpp"

#include <algorithm>
#include <cmath>

namespace tsasan {

namespace {

std::vector<double>* grad_of(TensorNode& self, size_t i) {
    auto& p = self.parents[i];
    if (!p->requires_grad) return nullptr;
    p->ensure_grad();
    return &p->grad;
}

const std::vector<double>& val_of(const TensorNode& self, size_t i) {
    return self.parents[i]->value;
}

// Sequence layout: [C x T] or [N x C x T].
void seq_dims(const Tensor& x, long& n, long& c, long& t, bool& batched) {
    if (x.rank() == 3) {
        n = x.dim(0);
        c = x.dim(1);
        t = x.dim(2);
        batched = true;
    } else if (x.rank() == 2) {
        n = 1;
        c = x.dim(0);
        t = x.dim(1);
        batched = false;
    } else {
        throw ShapeError("expected [C x T] or [N x C x T], got " + shape_str(x.shape()));
    }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

}  // namespace

Tensor reshape(const Tensor& x, std::vector<long> new_shape) {
    if (shape_numel(new_shape) != static_cast<long>(x.numel())) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(new_shape));
    }
    return make_op_tensor(std::move(new_shape), x.value(), {x}, [](TensorNode& self) {
        if (auto* g = grad_of(self, 0)) {
            for (size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
    return make_op_tensor(a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
        for (size_t p = 0; p < 2; ++p) {
            if (auto* g = grad_of(self, p)) {
                for (size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
            }
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
    return make_op_tensor(a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
        if (auto* g = grad_of(self, 0)) {
            for (size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
        }
        if (auto* g = grad_of(self, 1)) {
            for (size_t i = 0; i < self.grad.size(); ++i) (*g)[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    return make_op_tensor(a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
        const auto& av = val_of(self, 0);
        const auto& bv = val_of(self, 1);
        if (auto* g = grad_of(self, 0)) {
            for (size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * bv[i];
        }
        if (auto* g = grad_of(self, 1)) {
            for (size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * av[i];
        }
    });
}

Tensor axpb(const Tensor& x, double a, double b) {
    std::vector<double> out(x.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a * x.value()[i] + b;
    return make_op_tensor(x.shape(), std::move(out), {x}, [a](TensorNode& self) {
        if (auto* g = grad_of(self, 0)) {
            for (size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += a * self.grad[i];
        }
    });
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] > 0.0 ? x.value()[i] : 0.0;
    return make_op_tensor(x.shape(), std::move(out), {x}, [](TensorNode& self) {
        const auto& xv = val_of(self, 0);
        if (auto* g = grad_of(self, 0)) {
            for (size_t i = 0; i < self.grad.size(); ++i) {
                if (xv[i] > 0.0) (*g)[i] += self.grad[i];
            }
        }
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x.value()[i]));
    return make_op_tensor(x.shape(), std::move(out), {x}, [](TensorNode& self) {
        if (auto* g = grad_of(self, 0)) {
            for (size_t i = 0; i < self.grad.size(); ++i) {
                double s = self.value[i];
                (*g)[i] += self.grad[i] * s * (1.0 - s);
            }
        }
    });
}

Tensor tanh_op(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.value()[i]);
    return make_op_tensor(x.shape(), std::move(out), {x}, [](TensorNode& self) {
        if (auto* g = grad_of(self, 0)) {
            for (size_t i = 0; i < self.grad.size(); ++i) {
                double y = self.value[i];
                (*g)[i] += self.grad[i] * (1.0 - y * y);
            }
        }
    });
}

Tensor sqrt_op(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(x.value()[i]);
    return make_op_tensor(x.shape(), std::move(out), {x}, [](TensorNode& self) {
        if (auto* g = grad_of(self, 0)) {
            for (size_t i = 0; i < self.grad.size(); ++i) {
                (*g)[i] += self.grad[i] * 0.5 / std::max(self.value[i], 1e-12);
            }
        }
    });
}

Tensor rsqrt_eps(const Tensor& x, double eps) {
    std::vector<double> out(x.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / std::sqrt(x.value()[i] + eps);
    return make_op_tensor(x.shape(), std::move(out), {x}, [eps](TensorNode& self) {
        const auto& xv = val_of(self, 0);
        if (auto* g = grad_of(self, 0)) {
            for (size_t i = 0; i < self.grad.size(); ++i) {
                double d = xv[i] + eps;
                (*g)[i] += self.grad[i] * (-0.5) / (d * std::sqrt(d));
            }
        }
    });
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.value()) s += v;
    return make_op_tensor({1}, {s}, {x}, [](TensorNode& self) {
        if (auto* g = grad_of(self, 0)) {
            for (auto& gi : *g) gi += self.grad[0];
        }
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const long n = a.dim(0), k = a.dim(1), m = b.dim(1);
    std::vector<double> out(static_cast<size_t>(n * m), 0.0);
    const auto& av = a.value();
    const auto& bv = b.value();
    for (long i = 0; i < n; ++i) {
        for (long p = 0; p < k; ++p) {
            double aip = av[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = &bv[p * m];
            double* orow = &out[i * m];
            for (long j = 0; j < m; ++j) orow[j] += aip * brow[j];
        }
    }
    return make_op_tensor({n, m}, std::move(out), {a, b}, [n, k, m](TensorNode& self) {
        const auto& av = val_of(self, 0);
        const auto& bv = val_of(self, 1);
        if (auto* ga = grad_of(self, 0)) {
            for (long i = 0; i < n; ++i) {
                for (long p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* grow = &self.grad[i * m];
                    const double* brow = &bv[p * m];
                    for (long j = 0; j < m; ++j) acc += grow[j] * brow[j];
                    (*ga)[i * k + p] += acc;
                }
            }
        }
        if (auto* gb = grad_of(self, 1)) {
            for (long i = 0; i < n; ++i) {
                for (long p = 0; p < k; ++p) {
                    double aip = av[i * k + p];
                    if (aip == 0.0) continue;
                    const double* grow = &self.grad[i * m];
                    double* gbrow = &(*gb)[p * m];
                    for (long j = 0; j < m; ++j) gbrow[j] += aip * grow[j];
                }
            }
        }
    });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0)) {
        throw ShapeError("affine: incompatible shapes x" + shape_str(x.shape()) + " w" +
                         shape_str(w.shape()));
    }
    if (b.rank() != 1 || b.dim(0) != w.dim(1)) {
        throw ShapeError("affine: bias shape " + shape_str(b.shape()) + " does not match w" +
                         shape_str(w.shape()));
    }
    const long n = x.dim(0), k = x.dim(1), m = w.dim(1);
    std::vector<double> out(static_cast<size_t>(n * m));
    const auto& xv = x.value();
    const auto& wv = w.value();
    const auto& bv = b.value();
    for (long i = 0; i < n; ++i) {
        double* orow = &out[i * m];
        for (long j = 0; j < m; ++j) orow[j] = bv[j];
        for (long p = 0; p < k; ++p) {
            double xip = xv[i * k + p];
            if (xip == 0.0) continue;
            const double* wrow = &wv[p * m];
            for (long j = 0; j < m; ++j) orow[j] += xip * wrow[j];
        }
    }
    return make_op_tensor({n, m}, std::move(out), {x, w, b}, [n, k, m](TensorNode& self) {
        const auto& xv = val_of(self, 0);
        const auto& wv = val_of(self, 1);
        if (auto* gx = grad_of(self, 0)) {
            for (long i = 0; i < n; ++i) {
                for (long p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* grow = &self.grad[i * m];
                    const double* wrow = &wv[p * m];
                    for (long j = 0; j < m; ++j) acc += grow[j] * wrow[j];
                    (*gx)[i * k + p] += acc;
                }
            }
        }
        if (auto* gw = grad_of(self, 1)) {
            for (long i = 0; i < n; ++i) {
                for (long p = 0; p < k; ++p) {
                    double xip = xv[i * k + p];
                    if (xip == 0.0) continue;
                    const double* grow = &self.grad[i * m];
                    double* gwrow = &(*gw)[p * m];
                    for (long j = 0; j < m; ++j) gwrow[j] += xip * grow[j];
                }
            }
        }
        if (auto* gb = grad_of(self, 2)) {
            for (long i = 0; i < n; ++i) {
                const double* grow = &self.grad[i * m];
                for (long j = 0; j < m; ++j) (*gb)[j] += grow[j];
            }
        }
    });
}

Tensor broadcast_rows(const Tensor& v, long n) {
    if (v.rank() != 1) throw ShapeError("broadcast_rows: expected a vector, got " + shape_str(v.shape()));
    const long m = v.dim(0);
    std::vector<double> out(static_cast<size_t>(n * m));
    for (long i = 0; i < n; ++i) {
        std::copy(v.value().begin(), v.value().end(), out.begin() + i * m);
    }
    return make_op_tensor({n, m}, std::move(out), {v}, [n, m](TensorNode& self) {
        if (auto* g = grad_of(self, 0)) {
            for (long i = 0; i < n; ++i) {
                for (long j = 0; j < m; ++j) (*g)[j] += self.grad[i * m + j];
            }
        }
    });
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
    long n, c, t;
    bool batched;
    seq_dims(x, n, c, t, batched);
    if (kernel.rank() != 2 || kernel.dim(0) != c) {
        throw ShapeError("depthwise_conv1d: kernel " + shape_str(kernel.shape()) +
                         " does not match input " + shape_str(x.shape()));
    }
    const long k = kernel.dim(1);
    if (k % 2 == 0) {
        throw ConfigError("depthwise_conv1d: kernel size must be odd, got " + std::to_string(k));
    }
    if (bias.rank() != 1 || bias.dim(0) != c) {
        throw ShapeError("depthwise_conv1d: bias " + shape_str(bias.shape()) +
                         " does not match channel count " + std::to_string(c));
    }
    const long pad = (k - 1) / 2;
    std::vector<double> out(static_cast<size_t>(n * c * t));
    const auto& xv = x.value();
    const auto& kv = kernel.value();
    const auto& bv = bias.value();
    for (long in = 0; in < n; ++in) {
        for (long ic = 0; ic < c; ++ic) {
            const double* xrow = &xv[(in * c + ic) * t];
            const double* krow = &kv[ic * k];
            double* orow = &out[(in * c + ic) * t];
            for (long it = 0; it < t; ++it) {
                double acc = bv[ic];
                const long lo = std::max(0L, pad - it);
                const long hi = std::min(k, t + pad - it);
                for (long j = lo; j < hi; ++j) acc += xrow[it + j - pad] * krow[j];
                orow[it] = acc;
            }
        }
    }
    auto shape = x.shape();
    return make_op_tensor(std::move(shape), std::move(out), {x, kernel, bias},
                          [n, c, t, k, pad](TensorNode& self) {
        const auto& xv = val_of(self, 0);
        const auto& kv = val_of(self, 1);
        auto* gx = grad_of(self, 0);
        auto* gk = grad_of(self, 1);
        auto* gb = grad_of(self, 2);
        for (long in = 0; in < n; ++in) {
            for (long ic = 0; ic < c; ++ic) {
                const double* grow = &self.grad[(in * c + ic) * t];
                const double* xrow = &xv[(in * c + ic) * t];
                const double* krow = &kv[ic * k];
                for (long it = 0; it < t; ++it) {
                    const double g = grow[it];
                    if (g == 0.0) continue;
                    const long lo = std::max(0L, pad - it);
                    const long hi = std::min(k, t + pad - it);
                    if (gx) {
                        double* gxrow = &(*gx)[(in * c + ic) * t];
                        for (long j = lo; j < hi; ++j) gxrow[it + j - pad] += g * krow[j];
                    }
                    if (gk) {
                        double* gkrow = &(*gk)[ic * k];
                        for (long j = lo; j < hi; ++j) gkrow[j] += g * xrow[it + j - pad];
                    }
                    if (gb) (*gb)[ic] += g;
                }
            }
        }
    });
}

namespace {

enum class Axis { Time, Channel };
enum class Stat { Mean, Var, Std, Sum };

Tensor seq_reduce(const Tensor& x, Axis axis, Stat stat) {
    long n, c, t;
    bool batched;
    seq_dims(x, n, c, t, batched);
    const long keep = axis == Axis::Time ? c : t;   // surviving axis length
    const long red = axis == Axis::Time ? t : c;    // reduced axis length
    const auto& xv = x.value();
    auto idx = [c, t, axis](long in, long ik, long ir) {
        return axis == Axis::Time ? (in * c + ik) * t + ir : (in * c + ir) * t + ik;
    };
    std::vector<double> mu(static_cast<size_t>(n * keep), 0.0);
    for (long in = 0; in < n; ++in) {
        for (long ik = 0; ik < keep; ++ik) {
            double s = 0.0;
            for (long ir = 0; ir < red; ++ir) s += xv[idx(in, ik, ir)];
            mu[in * keep + ik] = s / static_cast<double>(red);
        }
    }
    std::vector<double> out(static_cast<size_t>(n * keep));
    if (stat == Stat::Mean) {
        out = mu;
    } else if (stat == Stat::Sum) {
        for (size_t i = 0; i < out.size(); ++i) out[i] = mu[i] * static_cast<double>(red);
    } else {
        for (long in = 0; in < n; ++in) {
            for (long ik = 0; ik < keep; ++ik) {
                double acc = 0.0;
                const double m = mu[in * keep + ik];
                for (long ir = 0; ir < red; ++ir) {
                    double d = xv[idx(in, ik, ir)] - m;
                    acc += d * d;
                }
                acc /= static_cast<double>(red);
                out[in * keep + ik] = stat == Stat::Var ? acc : std::sqrt(acc);
            }
        }
    }
    std::vector<long> oshape = batched ? std::vector<long>{n, keep} : std::vector<long>{keep};
    return make_op_tensor(std::move(oshape), std::move(out), {x},
                          [n, keep, red, idx, mu = std::move(mu), stat](TensorNode& self) {
        auto* gx = grad_of(self, 0);
        if (!gx) return;
        const auto& xv = val_of(self, 0);
        for (long in = 0; in < n; ++in) {
            for (long ik = 0; ik < keep; ++ik) {
                const double g = self.grad[in * keep + ik];
                if (g == 0.0) continue;
                switch (stat) {
                    case Stat::Sum:
                        for (long ir = 0; ir < red; ++ir) (*gx)[idx(in, ik, ir)] += g;
                        break;
                    case Stat::Mean:
                        for (long ir = 0; ir < red; ++ir) {
                            (*gx)[idx(in, ik, ir)] += g / static_cast<double>(red);
                        }
                        break;
                    case Stat::Var: {
                        const double m = mu[in * keep + ik];
                        for (long ir = 0; ir < red; ++ir) {
                            (*gx)[idx(in, ik, ir)] +=
                                g * 2.0 * (xv[idx(in, ik, ir)] - m) / static_cast<double>(red);
                        }
                        break;
                    }
                    case Stat::Std: {
                        const double m = mu[in * keep + ik];
                        const double s = std::max(self.value[in * keep + ik], 1e-12);
                        for (long ir = 0; ir < red; ++ir) {
                            (*gx)[idx(in, ik, ir)] +=
                                g * (xv[idx(in, ik, ir)] - m) / (static_cast<double>(red) * s);
                        }
                        break;
                    }
                }
            }
        }
    });
}

}  // namespace

Tensor mean_over_time(const Tensor& x) { return seq_reduce(x, Axis::Time, Stat::Mean); }
Tensor var_over_time(const Tensor& x) { return seq_reduce(x, Axis::Time, Stat::Var); }
Tensor std_over_time(const Tensor& x) { return seq_reduce(x, Axis::Time, Stat::Std); }
Tensor sum_over_time(const Tensor& x) { return seq_reduce(x, Axis::Time, Stat::Sum); }
Tensor mean_over_channels(const Tensor& x) { return seq_reduce(x, Axis::Channel, Stat::Mean); }
Tensor std_over_channels(const Tensor& x) { return seq_reduce(x, Axis::Channel, Stat::Std); }

namespace {

enum class BcKind { Sub, Mul, Add };

Tensor bc_op(const Tensor& x, const Tensor& s, BcKind kind) {
    long n, c, t;
    bool batched;
    seq_dims(x, n, c, t, batched);
    const std::vector<long> want = batched ? std::vector<long>{n, c} : std::vector<long>{c};
    if (s.shape() != want) {
        throw ShapeError("channel broadcast: stats shape " + shape_str(s.shape()) +
                         " does not match input " + shape_str(x.shape()));
    }
    const auto& xv = x.value();
    const auto& sv = s.value();
    std::vector<double> out(xv.size());
    for (long in = 0; in < n; ++in) {
        for (long ic = 0; ic < c; ++ic) {
            const double sval = sv[in * c + ic];
            const double* xrow = &xv[(in * c + ic) * t];
            double* orow = &out[(in * c + ic) * t];
            for (long it = 0; it < t; ++it) {
                switch (kind) {
                    case BcKind::Sub: orow[it] = xrow[it] - sval; break;
                    case BcKind::Mul: orow[it] = xrow[it] * sval; break;
                    case BcKind::Add: orow[it] = xrow[it] + sval; break;
                }
            }
        }
    }
    return make_op_tensor(x.shape(), std::move(out), {x, s}, [n, c, t, kind](TensorNode& self) {
        const auto& xv = val_of(self, 0);
        const auto& sv = val_of(self, 1);
        auto* gx = grad_of(self, 0);
        auto* gs = grad_of(self, 1);
        for (long in = 0; in < n; ++in) {
            for (long ic = 0; ic < c; ++ic) {
                const double* grow = &self.grad[(in * c + ic) * t];
                const double sval = sv[in * c + ic];
                if (gx) {
                    double* gxrow = &(*gx)[(in * c + ic) * t];
                    for (long it = 0; it < t; ++it) {
                        gxrow[it] += kind == BcKind::Mul ? grow[it] * sval : grow[it];
                    }
                }
                if (gs) {
                    double acc = 0.0;
                    const double* xrow = &xv[(in * c + ic) * t];
                    for (long it = 0; it < t; ++it) {
                        switch (kind) {
                            case BcKind::Sub: acc -= grow[it]; break;
                            case BcKind::Add: acc += grow[it]; break;
                            case BcKind::Mul: acc += grow[it] * xrow[it]; break;
                        }
                    }
                    (*gs)[in * c + ic] += acc;
                }
            }
        }
    });
}

}  // namespace

Tensor bc_sub(const Tensor& x, const Tensor& s) { return bc_op(x, s, BcKind::Sub); }
Tensor bc_mul(const Tensor& x, const Tensor& s) { return bc_op(x, s, BcKind::Mul); }
Tensor bc_add(const Tensor& x, const Tensor& s) { return bc_op(x, s, BcKind::Add); }

Tensor outer_ct(const Tensor& s, const Tensor& tv) {
    bool batched = s.rank() == 2;
    if (batched != (tv.rank() == 2) || (batched && s.dim(0) != tv.dim(0))) {
        throw ShapeError("outer_ct: incompatible shapes " + shape_str(s.shape()) + " and " +
                         shape_str(tv.shape()));
    }
    const long n = batched ? s.dim(0) : 1;
    const long c = batched ? s.dim(1) : s.dim(0);
    const long t = batched ? tv.dim(1) : tv.dim(0);
    const auto& svv = s.value();
    const auto& tvv = tv.value();
    std::vector<double> out(static_cast<size_t>(n * c * t));
    for (long in = 0; in < n; ++in) {
        for (long ic = 0; ic < c; ++ic) {
            const double sval = svv[in * c + ic];
            double* orow = &out[(in * c + ic) * t];
            const double* trow = &tvv[in * t];
            for (long it = 0; it < t; ++it) orow[it] = sval * trow[it];
        }
    }
    std::vector<long> oshape = batched ? std::vector<long>{n, c, t} : std::vector<long>{c, t};
    return make_op_tensor(std::move(oshape), std::move(out), {s, tv},
                          [n, c, t](TensorNode& self) {
        const auto& svv = val_of(self, 0);
        const auto& tvv = val_of(self, 1);
        auto* gs = grad_of(self, 0);
        auto* gt = grad_of(self, 1);
        for (long in = 0; in < n; ++in) {
            for (long ic = 0; ic < c; ++ic) {
                const double* grow = &self.grad[(in * c + ic) * t];
                const double* trow = &tvv[in * t];
                if (gs) {
                    double acc = 0.0;
                    for (long it = 0; it < t; ++it) acc += grow[it] * trow[it];
                    (*gs)[in * c + ic] += acc;
                }
                if (gt) {
                    const double sval = svv[in * c + ic];
                    double* gtrow = &(*gt)[in * t];
                    for (long it = 0; it < t; ++it) gtrow[it] += grow[it] * sval;
                }
            }
        }
    });
}

Tensor slice_time(const Tensor& x, long t) {
    if (x.rank() != 3) throw ShapeError("slice_time: expected [N x C x T], got " + shape_str(x.shape()));
    const long n = x.dim(0), c = x.dim(1), tt = x.dim(2);
    if (t < 0 || t >= tt) throw IndexError("slice_time: index " + std::to_string(t) + " out of range");
    std::vector<double> out(static_cast<size_t>(n * c));
    const auto& xv = x.value();
    for (long in = 0; in < n; ++in) {
        for (long ic = 0; ic < c; ++ic) out[in * c + ic] = xv[(in * c + ic) * tt + t];
    }
    return make_op_tensor({n, c}, std::move(out), {x}, [n, c, tt, t](TensorNode& self) {
        if (auto* g = grad_of(self, 0)) {
            for (long in = 0; in < n; ++in) {
                for (long ic = 0; ic < c; ++ic) {
                    (*g)[(in * c + ic) * tt + t] += self.grad[in * c + ic];
                }
            }
        }
    });
}

Tensor stack_time(const std::vector<Tensor>& steps) {
    if (steps.empty()) throw ShapeError("stack_time: no steps");
    const long n = steps[0].dim(0), c = steps[0].dim(1);
    const long t = static_cast<long>(steps.size());
    std::vector<double> out(static_cast<size_t>(n * c * t));
    for (long it = 0; it < t; ++it) {
        const auto& s = steps[static_cast<size_t>(it)];
        if (s.rank() != 2 || s.dim(0) != n || s.dim(1) != c) {
            throw ShapeError("stack_time: step " + std::to_string(it) + " has shape " +
                             shape_str(s.shape()));
        }
        const auto& sv = s.value();
        for (long in = 0; in < n; ++in) {
            for (long ic = 0; ic < c; ++ic) out[(in * c + ic) * t + it] = sv[in * c + ic];
        }
    }
    return make_op_tensor({n, c, t}, std::move(out), steps, [n, c, t](TensorNode& self) {
        for (long it = 0; it < t; ++it) {
            if (auto* g = grad_of(self, static_cast<size_t>(it))) {
                for (long in = 0; in < n; ++in) {
                    for (long ic = 0; ic < c; ++ic) {
                        (*g)[in * c + ic] += self.grad[(in * c + ic) * t + it];
                    }
                }
            }
        }
    });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    long n, c0, t;
    bool batched;
    seq_dims(parts[0], n, c0, t, batched);
    long ctotal = 0;
    std::vector<long> offsets;
    for (const auto& p : parts) {
        long pn, pc, pt;
        bool pb;
        seq_dims(p, pn, pc, pt, pb);
        if (pn != n || pt != t || pb != batched) {
            throw ShapeError("concat_channels: mismatched part " + shape_str(p.shape()));
        }
        offsets.push_back(ctotal);
        ctotal += pc;
    }
    std::vector<double> out(static_cast<size_t>(n * ctotal * t));
    for (size_t pi = 0; pi < parts.size(); ++pi) {
        long pc = batched ? parts[pi].dim(1) : parts[pi].dim(0);
        const auto& pv = parts[pi].value();
        for (long in = 0; in < n; ++in) {
            for (long ic = 0; ic < pc; ++ic) {
                std::copy(pv.begin() + (in * pc + ic) * t, pv.begin() + (in * pc + ic + 1) * t,
                          out.begin() + (in * ctotal + offsets[pi] + ic) * t);
            }
        }
    }
    std::vector<long> oshape = batched ? std::vector<long>{n, ctotal, t}
                                       : std::vector<long>{ctotal, t};
    return make_op_tensor(std::move(oshape), std::move(out), parts,
                          [n, ctotal, t, offsets, batched](TensorNode& self) {
        for (size_t pi = 0; pi < self.parents.size(); ++pi) {
            auto* g = grad_of(self, pi);
            if (!g) continue;
            const auto& pshape = self.parents[pi]->shape;
            long pc = batched ? pshape[1] : pshape[0];
            for (long in = 0; in < n; ++in) {
                for (long ic = 0; ic < pc; ++ic) {
                    const double* grow = &self.grad[(in * ctotal + offsets[pi] + ic) * t];
                    double* prow = &(*g)[(in * pc + ic) * t];
                    for (long it = 0; it < t; ++it) prow[it] += grow[it];
                }
            }
        }
    });
}

std::pair<Tensor, Tensor> instance_stats(const Tensor& x) {
    return {mean_over_time(x), std_over_time(x)};
}

Tensor softmax(const Tensor& x) {
    if (x.rank() != 2) throw ShapeError("softmax: expected [N x K], got " + shape_str(x.shape()));
    const long n = x.dim(0), k = x.dim(1);
    std::vector<double> out(x.numel());
    const auto& xv = x.value();
    for (long i = 0; i < n; ++i) {
        const double* row = &xv[i * k];
        double m = row[0];
        for (long j = 1; j < k; ++j) m = std::max(m, row[j]);
        double z = 0.0;
        for (long j = 0; j < k; ++j) {
            out[i * k + j] = std::exp(row[j] - m);
            z += out[i * k + j];
        }
        for (long j = 0; j < k; ++j) out[i * k + j] /= z;
    }
    return make_op_tensor(x.shape(), std::move(out), {x}, [n, k](TensorNode& self) {
        if (auto* g = grad_of(self, 0)) {
            for (long i = 0; i < n; ++i) {
                const double* p = &self.value[i * k];
                const double* go = &self.grad[i * k];
                double dot = 0.0;
                for (long j = 0; j < k; ++j) dot += go[j] * p[j];
                for (long j = 0; j < k; ++j) (*g)[i * k + j] += p[j] * (go[j] - dot);
            }
        }
    });
}

namespace {

void check_labels(long n, long k, const std::vector<int>& labels, const char* op) {
    if (static_cast<long>(labels.size()) != n) {
        throw ShapeError(std::string(op) + ": got " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(n));
    }
    for (long i = 0; i < n; ++i) {
        if (labels[static_cast<size_t>(i)] < 0 || labels[static_cast<size_t>(i)] >= k) {
            throw IndexError(std::string(op) + ": label " +
                             std::to_string(labels[static_cast<size_t>(i)]) +
                             " out of range [0, " + std::to_string(k) + ") at sample " +
                             std::to_string(i));
        }
    }
}

}  // namespace

Tensor cross_entropy(const Tensor& p, const std::vector<int>& labels) {
    if (p.rank() != 2) throw ShapeError("cross_entropy: expected [N x K], got " + shape_str(p.shape()));
    const long n = p.dim(0), k = p.dim(1);
    check_labels(n, k, labels, "cross_entropy");
    const auto& pv = p.value();
    double loss = 0.0;
    for (long i = 0; i < n; ++i) {
        loss -= std::log(std::max(pv[i * k + labels[static_cast<size_t>(i)]], 1e-300));
    }
    loss /= static_cast<double>(n);
    return make_op_tensor({1}, {loss}, {p}, [n, k, labels](TensorNode& self) {
        if (auto* g = grad_of(self, 0)) {
            const auto& pv = val_of(self, 0);
            const double go = self.grad[0];
            for (long i = 0; i < n; ++i) {
                const long y = labels[static_cast<size_t>(i)];
                (*g)[i * k + y] -= go / (static_cast<double>(n) * std::max(pv[i * k + y], 1e-300));
            }
        }
    });
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) {
        throw ShapeError("softmax_cross_entropy: expected [N x K], got " + shape_str(logits.shape()));
    }
    const long n = logits.dim(0), k = logits.dim(1);
    check_labels(n, k, labels, "softmax_cross_entropy");
    const auto& xv = logits.value();
    std::vector<double> probs(logits.numel());
    double loss = 0.0;
    for (long i = 0; i < n; ++i) {
        const double* row = &xv[i * k];
        double m = row[0];
        for (long j = 1; j < k; ++j) m = std::max(m, row[j]);
        double z = 0.0;
        for (long j = 0; j < k; ++j) z += std::exp(row[j] - m);
        const double lse = m + std::log(z);
        loss += lse - row[labels[static_cast<size_t>(i)]];
        for (long j = 0; j < k; ++j) probs[i * k + j] = std::exp(row[j] - lse);
    }
    loss /= static_cast<double>(n);
    return make_op_tensor({1}, {loss}, {logits},
                          [n, k, labels, probs = std::move(probs)](TensorNode& self) {
        if (auto* g = grad_of(self, 0)) {
            const double go = self.grad[0];
            for (long i = 0; i < n; ++i) {
                const long y = labels[static_cast<size_t>(i)];
                for (long j = 0; j < k; ++j) {
                    double d = probs[i * k + j] - (j == y ? 1.0 : 0.0);
                    (*g)[i * k + j] += go * d / static_cast<double>(n);
                }
            }
        }
    });
}

Tensor pair_conv1x1(const Tensor& a, const Tensor& b, const Tensor& w, const Tensor& bias) {
    check_same_shape(a, b, "pair_conv1x1");
    if (w.rank() != 1 || w.dim(0) != 2 || bias.rank() != 1 || bias.dim(0) != 1) {
        throw ShapeError("pair_conv1x1: expected w[2] and bias[1], got " + shape_str(w.shape()) +
                         " and " + shape_str(bias.shape()));
    }
    const double w0 = w.value()[0], w1 = w.value()[1], b0 = bias.value()[0];
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = w0 * a.value()[i] + w1 * b.value()[i] + b0;
    }
    return make_op_tensor(a.shape(), std::move(out), {a, b, w, bias}, [](TensorNode& self) {
        const auto& av = val_of(self, 0);
        const auto& bv = val_of(self, 1);
        const auto& wv = val_of(self, 2);
        if (auto* g = grad_of(self, 0)) {
            for (size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += wv[0] * self.grad[i];
        }
        if (auto* g = grad_of(self, 1)) {
            for (size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += wv[1] * self.grad[i];
        }
        if (auto* g = grad_of(self, 2)) {
            double acc0 = 0.0, acc1 = 0.0;
            for (size_t i = 0; i < self.grad.size(); ++i) {
                acc0 += self.grad[i] * av[i];
                acc1 += self.grad[i] * bv[i];
            }
            (*g)[0] += acc0;
            (*g)[1] += acc1;
        }
        if (auto* g = grad_of(self, 3)) {
            double acc = 0.0;
            for (double gi : self.grad) acc += gi;
            (*g)[0] += acc;
        }
    });
}

GruParams GruParams::init(long in_dim, long hidden, Rng& rng) {
    const double sx = 1.0 / std::sqrt(static_cast<double>(in_dim));
    const double sh = 1.0 / std::sqrt(static_cast<double>(hidden));
    GruParams p;
    p.w_xr = Tensor::uniform({in_dim, hidden}, -sx, sx, rng, true);
    p.w_hr = Tensor::uniform({hidden, hidden}, -sh, sh, rng, true);
    p.b_r = Tensor::zeros({hidden}, true);
    p.w_xz = Tensor::uniform({in_dim, hidden}, -sx, sx, rng, true);
    p.w_hz = Tensor::uniform({hidden, hidden}, -sh, sh, rng, true);
    p.b_z = Tensor::zeros({hidden}, true);
    p.w_xn = Tensor::uniform({in_dim, hidden}, -sx, sx, rng, true);
    p.w_hn = Tensor::uniform({hidden, hidden}, -sh, sh, rng, true);
    p.b_n = Tensor::zeros({hidden}, true);
    return p;
}

std::vector<std::pair<std::string, Tensor>> GruParams::named(const std::string& prefix) const {
    return {
        {prefix + ".w_xr", w_xr}, {prefix + ".w_hr", w_hr}, {prefix + ".b_r", b_r},
        {prefix + ".w_xz", w_xz}, {prefix + ".w_hz", w_hz}, {prefix + ".b_z", b_z},
        {prefix + ".w_xn", w_xn}, {prefix + ".w_hn", w_hn}, {prefix + ".b_n", b_n},
    };
}

Tensor gru_forward(const Tensor& x, const GruParams& params, const Tensor& h0) {
    const bool batched = x.rank() == 3;
    Tensor x3 = batched ? x : reshape(x, {1, x.dim(0), x.dim(1)});
    const long n = x3.dim(0), cin = x3.dim(1), t = x3.dim(2);
    const long hidden = params.w_xr.dim(1);
    if (params.w_xr.dim(0) != cin) {
        throw ShapeError("gru_forward: input channels " + std::to_string(cin) +
                         " do not match w_xr " + shape_str(params.w_xr.shape()));
    }
    if (h0.rank() != 1 || h0.dim(0) != hidden) {
        throw ShapeError("gru_forward: h0 " + shape_str(h0.shape()) + " must have length " +
                         std::to_string(hidden));
    }
    Tensor h = broadcast_rows(h0, n);
    std::vector<Tensor> outputs;
    outputs.reserve(static_cast<size_t>(t));
    for (long it = 0; it < t; ++it) {
        Tensor xt = slice_time(x3, it);
        Tensor r = sigmoid(add(matmul(xt, params.w_xr), affine(h, params.w_hr, params.b_r)));
        Tensor z = sigmoid(add(matmul(xt, params.w_xz), affine(h, params.w_hz, params.b_z)));
        Tensor nt = tanh_op(add(matmul(xt, params.w_xn), affine(mul(r, h), params.w_hn, params.b_n)));
        h = add(mul(axpb(z, -1.0, 1.0), h), mul(z, nt));
        outputs.push_back(h);
    }
    Tensor seq = stack_time(outputs);
    return batched ? seq : reshape(seq, {hidden, t});
}

}  // namespace tsasan
