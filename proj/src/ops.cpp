#include "hsemis/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hsemis {

namespace {

constexpr double kProbEps = 1e-7;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

// C[M,N] (+)= op(A) * op(B); plain triple loop, rows parallel.
void gemm_acc(bool trans_a, bool trans_b, int m, int n, int k, const double* a, const double* b,
              double* c) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int l = 0; l < k; ++l) {
            const double av = trans_a ? a[static_cast<std::size_t>(l) * m + i]
                                      : a[static_cast<std::size_t>(i) * k + l];
            const double* brow = trans_b ? b + static_cast<std::size_t>(l)
                                         : b + static_cast<std::size_t>(l) * n;
            if (trans_b) {
                for (int j = 0; j < n; ++j) crow[j] += av * brow[static_cast<std::size_t>(j) * k];
            } else {
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

struct ConvDims {
    int n, h, w, c;   // input
    int ho, wo;       // output spatial
    bool batched;
};

ConvDims conv_dims(const char* op, const Tensor& x, int kh, int kw, int stride, int padding) {
    if (x.rank() != 3 && x.rank() != 4) {
        throw ShapeError(std::string(op) + ": expected rank-3 or rank-4 input, got " +
                         shape_str(x.shape()));
    }
    if (stride < 1) throw ShapeError(std::string(op) + ": stride must be positive");
    if (padding < 0) throw ShapeError(std::string(op) + ": padding must be nonnegative");
    ConvDims d;
    d.batched = x.rank() == 4;
    d.n = d.batched ? x.dim(0) : 1;
    d.h = x.dim(d.batched ? 1 : 0);
    d.w = x.dim(d.batched ? 2 : 1);
    d.c = x.dim(d.batched ? 3 : 2);
    if (kh > d.h + 2 * padding || kw > d.w + 2 * padding) {
        throw ShapeError(std::string(op) + ": kernel " + std::to_string(kh) + "x" +
                         std::to_string(kw) + " exceeds padded input " + shape_str(x.shape()));
    }
    d.ho = (d.h + 2 * padding - kh) / stride + 1;
    d.wo = (d.w + 2 * padding - kw) / stride + 1;
    return d;
}

} // namespace

// ---------------------------------------------------------------------------
// Elementwise arithmetic and shaping
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<double> out(a.values());
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return make_op_result("add", a.shape(), std::move(out), {a, b}, [](TensorNode& node) {
        for (auto& parent : node.parents) {
            if (!parent->requires_grad) continue;
            parent->ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i) parent->grad[i] += node.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<double> out(a.values());
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return make_op_result("sub", a.shape(), std::move(out), {a, b}, [](TensorNode& node) {
        auto& pa = node.parents[0];
        auto& pb = node.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i) pa->grad[i] += node.grad[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i) pb->grad[i] -= node.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> out(a.values());
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return make_op_result("mul", a.shape(), std::move(out), {a, b}, [](TensorNode& node) {
        auto& pa = node.parents[0];
        auto& pb = node.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i)
                pa->grad[i] += node.grad[i] * pb->values[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i)
                pb->grad[i] += node.grad[i] * pa->values[i];
        }
    });
}

Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.values());
    for (double& v : out) v += c;
    return make_op_result("add_scalar", a.shape(), std::move(out), {a}, [](TensorNode& node) {
        auto& pa = node.parents[0];
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i) pa->grad[i] += node.grad[i];
    });
}

Tensor mul_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.values());
    for (double& v : out) v *= c;
    return make_op_result("mul_scalar", a.shape(), std::move(out), {a}, [c](TensorNode& node) {
        auto& pa = node.parents[0];
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i) pa->grad[i] += c * node.grad[i];
    });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
    if (bias.rank() != 1 || x.rank() < 1 || bias.dim(0) != x.dim(x.rank() - 1)) {
        throw ShapeError("add_channel_bias: bias " + shape_str(bias.shape()) +
                         " does not match last dim of " + shape_str(x.shape()));
    }
    const int c = bias.dim(0);
    std::vector<double> out(x.values());
    const auto& bv = bias.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % static_cast<std::size_t>(c)];
    return make_op_result("add_channel_bias", x.shape(), std::move(out), {x, bias},
                          [c](TensorNode& node) {
                              auto& px = node.parents[0];
                              auto& pb = node.parents[1];
                              if (px->requires_grad) {
                                  px->ensure_grad();
                                  for (std::size_t i = 0; i < node.grad.size(); ++i)
                                      px->grad[i] += node.grad[i];
                              }
                              if (pb->requires_grad) {
                                  pb->ensure_grad();
                                  for (std::size_t i = 0; i < node.grad.size(); ++i)
                                      pb->grad[i % static_cast<std::size_t>(c)] += node.grad[i];
                              }
                          });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    std::vector<double> out(x.values());
    return make_op_result("reshape", std::move(shape), std::move(out), {x}, [](TensorNode& node) {
        auto& px = node.parents[0];
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i) px->grad[i] += node.grad[i];
    });
}

Tensor concat_last(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_last: no inputs");
    const Shape& first = parts[0].shape();
    Shape lead(first.begin(), first.end() - 1);
    int total_c = 0;
    std::vector<int> widths;
    for (const Tensor& t : parts) {
        Shape tl(t.shape().begin(), t.shape().end() - 1);
        if (tl != lead) {
            throw ShapeError("concat_last: leading dims mismatch " + shape_str(t.shape()) + " vs " +
                             shape_str(first));
        }
        widths.push_back(t.dim(t.rank() - 1));
        total_c += widths.back();
    }
    const std::int64_t rows = shape_numel(lead);
    Shape out_shape = lead;
    out_shape.push_back(total_c);
    std::vector<double> out(static_cast<std::size_t>(rows * total_c));
    for (std::int64_t r = 0; r < rows; ++r) {
        double* dst = out.data() + r * total_c;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            const int w = widths[p];
            const double* src = parts[p].values().data() + r * w;
            std::memcpy(dst, src, sizeof(double) * static_cast<std::size_t>(w));
            dst += w;
        }
    }
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    return make_op_result("concat_last", std::move(out_shape), std::move(out), std::move(inputs),
                          [widths, rows, total_c](TensorNode& node) {
                              for (std::int64_t r = 0; r < rows; ++r) {
                                  const double* g = node.grad.data() + r * total_c;
                                  for (std::size_t p = 0; p < node.parents.size(); ++p) {
                                      const int w = widths[p];
                                      auto& parent = node.parents[p];
                                      if (parent->requires_grad) {
                                          parent->ensure_grad();
                                          double* dst = parent->grad.data() + r * w;
                                          for (int j = 0; j < w; ++j) dst[j] += g[j];
                                      }
                                      g += w;
                                  }
                              }
                          });
}

Tensor select_dim1(const Tensor& x, const std::vector<int>& indices) {
    if (x.rank() < 2) throw ShapeError("select_dim1: rank must be >= 2, got " + shape_str(x.shape()));
    const int n = x.dim(0);
    const int m = x.dim(1);
    std::int64_t inner = 1;
    for (int i = 2; i < x.rank(); ++i) inner *= x.dim(i);
    for (int idx : indices) {
        if (idx < 0 || idx >= m)
            throw ShapeError("select_dim1: index " + std::to_string(idx) + " out of range [0," +
                             std::to_string(m) + ")");
    }
    const int k = static_cast<int>(indices.size());
    Shape out_shape = x.shape();
    out_shape[1] = k;
    std::vector<double> out(static_cast<std::size_t>(n) * k * inner);
    const auto& xv = x.values();
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) {
            const double* src = xv.data() + (static_cast<std::int64_t>(i) * m + indices[j]) * inner;
            double* dst = out.data() + (static_cast<std::int64_t>(i) * k + j) * inner;
            std::memcpy(dst, src, sizeof(double) * static_cast<std::size_t>(inner));
        }
    }
    return make_op_result("select_dim1", std::move(out_shape), std::move(out), {x},
                          [indices, n, m, k, inner](TensorNode& node) {
                              auto& px = node.parents[0];
                              if (!px->requires_grad) return;
                              px->ensure_grad();
                              for (int i = 0; i < n; ++i) {
                                  for (int j = 0; j < k; ++j) {
                                      const double* g =
                                          node.grad.data() + (static_cast<std::int64_t>(i) * k + j) * inner;
                                      double* dst = px->grad.data() +
                                                    (static_cast<std::int64_t>(i) * m + indices[j]) * inner;
                                      for (std::int64_t t = 0; t < inner; ++t) dst[t] += g[t];
                                  }
                              }
                          });
}

Tensor slice_rows(const Tensor& x, int start, int count) {
    if (x.rank() < 1) throw ShapeError("slice_rows: scalar input");
    const int n = x.dim(0);
    if (start < 0 || count <= 0 || start + count > n) {
        throw ShapeError("slice_rows: range [" + std::to_string(start) + "," +
                         std::to_string(start + count) + ") out of bounds for dim " + std::to_string(n));
    }
    const std::int64_t inner = x.numel() / n;
    Shape out_shape = x.shape();
    out_shape[0] = count;
    std::vector<double> out(x.values().begin() + start * inner,
                            x.values().begin() + (start + static_cast<std::int64_t>(count)) * inner);
    return make_op_result("slice_rows", std::move(out_shape), std::move(out), {x},
                          [start, inner](TensorNode& node) {
                              auto& px = node.parents[0];
                              if (!px->requires_grad) return;
                              px->ensure_grad();
                              double* dst = px->grad.data() + start * inner;
                              for (std::size_t i = 0; i < node.grad.size(); ++i) dst[i] += node.grad[i];
                          });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    gemm_acc(false, false, m, n, k, a.values().data(), b.values().data(), out.data());
    return make_op_result("matmul", {m, n}, std::move(out), {a, b}, [m, n, k](TensorNode& node) {
        auto& pa = node.parents[0];
        auto& pb = node.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            // dA = dC * B^T
            gemm_acc(false, true, m, k, n, node.grad.data(), pb->values.data(), pa->grad.data());
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            // dB = A^T * dC
            gemm_acc(true, false, k, n, m, pa->values.data(), node.grad.data(), pb->grad.data());
        }
    });
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& bias) {
    return add_channel_bias(matmul(x, w), bias);
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

namespace {

template <typename Fwd, typename Dfn>
Tensor unary_op(const char* name, const Tensor& x, Fwd fwd, Dfn dval) {
    std::vector<double> out(x.values().size());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
    return make_op_result(name, x.shape(), std::move(out), {x}, [dval](TensorNode& node) {
        auto& px = node.parents[0];
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            px->grad[i] += node.grad[i] * dval(px->values[i], node.values[i]);
        }
    });
}

} // namespace

Tensor relu(const Tensor& x) {
    return unary_op(
        "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double xin, double) { return xin > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double negative_slope) {
    return unary_op(
        "leaky_relu", x, [negative_slope](double v) { return v > 0.0 ? v : negative_slope * v; },
        [negative_slope](double xin, double) { return xin > 0.0 ? 1.0 : negative_slope; });
}

Tensor tanh_op(const Tensor& x) {
    return unary_op(
        "tanh", x, [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        "sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    return make_op_result("sum", Shape{}, {acc}, {x}, [](TensorNode& node) {
        auto& px = node.parents[0];
        if (!px->requires_grad) return;
        px->ensure_grad();
        const double g = node.grad[0];
        for (double& gv : px->grad) gv += g;
    });
}

Tensor mean(const Tensor& x) {
    const double inv = 1.0 / static_cast<double>(x.numel());
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    return make_op_result("mean", Shape{}, {acc * inv}, {x}, [inv](TensorNode& node) {
        auto& px = node.parents[0];
        if (!px->requires_grad) return;
        px->ensure_grad();
        const double g = node.grad[0] * inv;
        for (double& gv : px->grad) gv += g;
    });
}

// ---------------------------------------------------------------------------
// Convolutions and pooling
// ---------------------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride, int padding) {
    if (kernel.rank() != 4) throw ShapeError("conv2d: kernel must be [kh,kw,Cin,Cout]");
    const int kh = kernel.dim(0), kw = kernel.dim(1), ci = kernel.dim(2), co = kernel.dim(3);
    const ConvDims d = conv_dims("conv2d", x, kh, kw, stride, padding);
    if (d.c != ci) {
        throw ShapeError("conv2d: input channels " + std::to_string(d.c) +
                         " != kernel Cin " + std::to_string(ci));
    }

    std::vector<double> out(static_cast<std::size_t>(d.n) * d.ho * d.wo * co, 0.0);
    const double* xv = x.values().data();
    const double* kv = kernel.values().data();
    const int h = d.h, w = d.w, ho = d.ho, wo = d.wo;
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
    for (int n = 0; n < d.n; ++n) {
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                double* optr = out.data() + ((static_cast<std::int64_t>(n) * ho + oy) * wo + ox) * co;
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy * stride + ky - padding;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ox * stride + kx - padding;
                        if (ix < 0 || ix >= w) continue;
                        const double* iptr = xv + ((static_cast<std::int64_t>(n) * h + iy) * w + ix) * ci;
                        const double* kptr = kv + (static_cast<std::int64_t>(ky) * kw + kx) * ci * co;
                        for (int c = 0; c < ci; ++c) {
                            const double v = iptr[c];
                            const double* kc = kptr + static_cast<std::int64_t>(c) * co;
                            for (int f = 0; f < co; ++f) optr[f] += v * kc[f];
                        }
                    }
                }
            }
        }
    }

    Shape out_shape = d.batched ? Shape{d.n, ho, wo, co} : Shape{ho, wo, co};
    auto backward = [=](TensorNode& node) {
        auto& px = node.parents[0];
        auto& pk = node.parents[1];
        const double* gout = node.grad.data();
        if (px->requires_grad) {
            px->ensure_grad();
            double* gx = px->grad.data();
            const double* kvals = pk->values.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
            for (int n = 0; n < d.n; ++n) {
                for (int oy = 0; oy < ho; ++oy) {
                    for (int ox = 0; ox < wo; ++ox) {
                        const double* gptr =
                            gout + ((static_cast<std::int64_t>(n) * ho + oy) * wo + ox) * co;
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = oy * stride + ky - padding;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ox * stride + kx - padding;
                                if (ix < 0 || ix >= w) continue;
                                double* gi = gx + ((static_cast<std::int64_t>(n) * h + iy) * w + ix) * ci;
                                const double* kptr =
                                    kvals + (static_cast<std::int64_t>(ky) * kw + kx) * ci * co;
                                for (int c = 0; c < ci; ++c) {
                                    const double* kc = kptr + static_cast<std::int64_t>(c) * co;
                                    double acc = 0.0;
                                    for (int f = 0; f < co; ++f) acc += gptr[f] * kc[f];
                                    gi[c] += acc;
                                }
                            }
                        }
                    }
                }
            }
        }
        if (pk->requires_grad) {
            pk->ensure_grad();
            double* gk = pk->grad.data();
            const double* xvals = px->values.data();
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    double* gslice = gk + (static_cast<std::int64_t>(ky) * kw + kx) * ci * co;
                    for (int n = 0; n < d.n; ++n) {
                        for (int oy = 0; oy < ho; ++oy) {
                            const int iy = oy * stride + ky - padding;
                            if (iy < 0 || iy >= h) continue;
                            for (int ox = 0; ox < wo; ++ox) {
                                const int ix = ox * stride + kx - padding;
                                if (ix < 0 || ix >= w) continue;
                                const double* iptr =
                                    xvals + ((static_cast<std::int64_t>(n) * h + iy) * w + ix) * ci;
                                const double* gptr =
                                    gout + ((static_cast<std::int64_t>(n) * ho + oy) * wo + ox) * co;
                                for (int c = 0; c < ci; ++c) {
                                    const double v = iptr[c];
                                    double* gc = gslice + static_cast<std::int64_t>(c) * co;
                                    for (int f = 0; f < co; ++f) gc[f] += v * gptr[f];
                                }
                            }
                        }
                    }
                }
            }
        }
    };
    return make_op_result("conv2d", std::move(out_shape), std::move(out), {x, kernel}, backward);
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel, int stride, int padding) {
    if (kernel.rank() != 3) throw ShapeError("depthwise_conv2d: kernel must be [kh,kw,C]");
    const int kh = kernel.dim(0), kw = kernel.dim(1), c = kernel.dim(2);
    const ConvDims d = conv_dims("depthwise_conv2d", x, kh, kw, stride, padding);
    if (d.c != c) {
        throw ShapeError("depthwise_conv2d: input channels " + std::to_string(d.c) +
                         " != kernel channels " + std::to_string(c));
    }
    std::vector<double> out(static_cast<std::size_t>(d.n) * d.ho * d.wo * c, 0.0);
    const double* xv = x.values().data();
    const double* kv = kernel.values().data();
    const int h = d.h, w = d.w, ho = d.ho, wo = d.wo;
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
    for (int n = 0; n < d.n; ++n) {
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                double* optr = out.data() + ((static_cast<std::int64_t>(n) * ho + oy) * wo + ox) * c;
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy * stride + ky - padding;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ox * stride + kx - padding;
                        if (ix < 0 || ix >= w) continue;
                        const double* iptr = xv + ((static_cast<std::int64_t>(n) * h + iy) * w + ix) * c;
                        const double* kptr = kv + (static_cast<std::int64_t>(ky) * kw + kx) * c;
                        for (int ch = 0; ch < c; ++ch) optr[ch] += iptr[ch] * kptr[ch];
                    }
                }
            }
        }
    }
    Shape out_shape = d.batched ? Shape{d.n, ho, wo, c} : Shape{ho, wo, c};
    auto backward = [=](TensorNode& node) {
        auto& px = node.parents[0];
        auto& pk = node.parents[1];
        const double* gout = node.grad.data();
        if (px->requires_grad) {
            px->ensure_grad();
            double* gx = px->grad.data();
            const double* kvals = pk->values.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
            for (int n = 0; n < d.n; ++n) {
                for (int oy = 0; oy < ho; ++oy) {
                    for (int ox = 0; ox < wo; ++ox) {
                        const double* gptr =
                            gout + ((static_cast<std::int64_t>(n) * ho + oy) * wo + ox) * c;
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = oy * stride + ky - padding;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ox * stride + kx - padding;
                                if (ix < 0 || ix >= w) continue;
                                double* gi = gx + ((static_cast<std::int64_t>(n) * h + iy) * w + ix) * c;
                                const double* kptr = kvals + (static_cast<std::int64_t>(ky) * kw + kx) * c;
                                for (int ch = 0; ch < c; ++ch) gi[ch] += gptr[ch] * kptr[ch];
                            }
                        }
                    }
                }
            }
        }
        if (pk->requires_grad) {
            pk->ensure_grad();
            double* gk = pk->grad.data();
            const double* xvals = px->values.data();
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    double* gslice = gk + (static_cast<std::int64_t>(ky) * kw + kx) * c;
                    for (int n = 0; n < d.n; ++n) {
                        for (int oy = 0; oy < ho; ++oy) {
                            const int iy = oy * stride + ky - padding;
                            if (iy < 0 || iy >= h) continue;
                            for (int ox = 0; ox < wo; ++ox) {
                                const int ix = ox * stride + kx - padding;
                                if (ix < 0 || ix >= w) continue;
                                const double* iptr =
                                    xvals + ((static_cast<std::int64_t>(n) * h + iy) * w + ix) * c;
                                const double* gptr =
                                    gout + ((static_cast<std::int64_t>(n) * ho + oy) * wo + ox) * c;
                                for (int ch = 0; ch < c; ++ch) gslice[ch] += iptr[ch] * gptr[ch];
                            }
                        }
                    }
                }
            }
        }
    };
    return make_op_result("depthwise_conv2d", std::move(out_shape), std::move(out), {x, kernel},
                          backward);
}

Tensor conv2d_transpose(const Tensor& x, const Tensor& kernel, int stride, int padding) {
    if (kernel.rank() != 4) throw ShapeError("conv2d_transpose: kernel must be [kh,kw,Cin,Cout]");
    const int kh = kernel.dim(0), kw = kernel.dim(1), ci = kernel.dim(2), co = kernel.dim(3);
    if (x.rank() != 3 && x.rank() != 4) {
        throw ShapeError("conv2d_transpose: expected rank-3 or rank-4 input, got " +
                         shape_str(x.shape()));
    }
    const bool batched = x.rank() == 4;
    const int n_total = batched ? x.dim(0) : 1;
    const int h = x.dim(batched ? 1 : 0), w = x.dim(batched ? 2 : 1), cin = x.dim(batched ? 3 : 2);
    if (cin != ci) {
        throw ShapeError("conv2d_transpose: input channels " + std::to_string(cin) +
                         " != kernel Cin " + std::to_string(ci));
    }
    const int ho = (h - 1) * stride - 2 * padding + kh;
    const int wo = (w - 1) * stride - 2 * padding + kw;
    if (ho <= 0 || wo <= 0) throw ShapeError("conv2d_transpose: output size would be non-positive");

    std::vector<double> out(static_cast<std::size_t>(n_total) * ho * wo * co, 0.0);
    const double* xv = x.values().data();
    const double* kv = kernel.values().data();
    // Gather form: for each output position collect contributing inputs.
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
    for (int n = 0; n < n_total; ++n) {
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                double* optr = out.data() + ((static_cast<std::int64_t>(n) * ho + oy) * wo + ox) * co;
                for (int ky = 0; ky < kh; ++ky) {
                    const int ny = oy + padding - ky;
                    if (ny < 0 || ny % stride != 0) continue;
                    const int iy = ny / stride;
                    if (iy >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int nx = ox + padding - kx;
                        if (nx < 0 || nx % stride != 0) continue;
                        const int ix = nx / stride;
                        if (ix >= w) continue;
                        const double* iptr = xv + ((static_cast<std::int64_t>(n) * h + iy) * w + ix) * ci;
                        const double* kptr = kv + (static_cast<std::int64_t>(ky) * kw + kx) * ci * co;
                        for (int c = 0; c < ci; ++c) {
                            const double v = iptr[c];
                            const double* kc = kptr + static_cast<std::int64_t>(c) * co;
                            for (int f = 0; f < co; ++f) optr[f] += v * kc[f];
                        }
                    }
                }
            }
        }
    }
    Shape out_shape = batched ? Shape{n_total, ho, wo, co} : Shape{ho, wo, co};
    auto backward = [=](TensorNode& node) {
        auto& px = node.parents[0];
        auto& pk = node.parents[1];
        const double* gout = node.grad.data();
        if (px->requires_grad) {
            px->ensure_grad();
            double* gx = px->grad.data();
            const double* kvals = pk->values.data();
            // dx[n,iy,ix,c] = sum over kernel taps of gout at oy=iy*s+ky-p.
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
            for (int n = 0; n < n_total; ++n) {
                for (int iy = 0; iy < h; ++iy) {
                    for (int ix = 0; ix < w; ++ix) {
                        double* gi = gx + ((static_cast<std::int64_t>(n) * h + iy) * w + ix) * ci;
                        for (int ky = 0; ky < kh; ++ky) {
                            const int oy = iy * stride + ky - padding;
                            if (oy < 0 || oy >= ho) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ox = ix * stride + kx - padding;
                                if (ox < 0 || ox >= wo) continue;
                                const double* gptr =
                                    gout + ((static_cast<std::int64_t>(n) * ho + oy) * wo + ox) * co;
                                const double* kptr =
                                    kvals + (static_cast<std::int64_t>(ky) * kw + kx) * ci * co;
                                for (int c = 0; c < ci; ++c) {
                                    const double* kc = kptr + static_cast<std::int64_t>(c) * co;
                                    double acc = 0.0;
                                    for (int f = 0; f < co; ++f) acc += gptr[f] * kc[f];
                                    gi[c] += acc;
                                }
                            }
                        }
                    }
                }
            }
        }
        if (pk->requires_grad) {
            pk->ensure_grad();
            double* gk = pk->grad.data();
            const double* xvals = px->values.data();
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    double* gslice = gk + (static_cast<std::int64_t>(ky) * kw + kx) * ci * co;
                    for (int n = 0; n < n_total; ++n) {
                        for (int iy = 0; iy < h; ++iy) {
                            const int oy = iy * stride + ky - padding;
                            if (oy < 0 || oy >= ho) continue;
                            for (int ix = 0; ix < w; ++ix) {
                                const int ox = ix * stride + kx - padding;
                                if (ox < 0 || ox >= wo) continue;
                                const double* iptr =
                                    xvals + ((static_cast<std::int64_t>(n) * h + iy) * w + ix) * ci;
                                const double* gptr =
                                    gout + ((static_cast<std::int64_t>(n) * ho + oy) * wo + ox) * co;
                                for (int c = 0; c < ci; ++c) {
                                    const double v = iptr[c];
                                    double* gc = gslice + static_cast<std::int64_t>(c) * co;
                                    for (int f = 0; f < co; ++f) gc[f] += v * gptr[f];
                                }
                            }
                        }
                    }
                }
            }
        }
    };
    return make_op_result("conv2d_transpose", std::move(out_shape), std::move(out), {x, kernel},
                          backward);
}

Tensor maxpool2x2(const Tensor& x) {
    if (x.rank() != 3 && x.rank() != 4) {
        throw ShapeError("maxpool2x2: expected rank-3 or rank-4 input, got " + shape_str(x.shape()));
    }
    const bool batched = x.rank() == 4;
    const int n_total = batched ? x.dim(0) : 1;
    const int h = x.dim(batched ? 1 : 0), w = x.dim(batched ? 2 : 1), c = x.dim(batched ? 3 : 2);
    if (h % 2 != 0 || w % 2 != 0) {
        throw ShapeError("maxpool2x2: spatial dims must be even, got " + shape_str(x.shape()));
    }
    const int ho = h / 2, wo = w / 2;
    std::vector<double> out(static_cast<std::size_t>(n_total) * ho * wo * c);
    auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
    const double* xv = x.values().data();
    for (int n = 0; n < n_total; ++n) {
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                for (int ch = 0; ch < c; ++ch) {
                    const std::int64_t oidx =
                        ((static_cast<std::int64_t>(n) * ho + oy) * wo + ox) * c + ch;
                    double best = -1e300;
                    std::int64_t best_idx = -1;
                    for (int dy = 0; dy < 2; ++dy) {
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::int64_t iidx =
                                ((static_cast<std::int64_t>(n) * h + 2 * oy + dy) * w + 2 * ox + dx) * c +
                                ch;
                            if (xv[iidx] > best) {
                                best = xv[iidx];
                                best_idx = iidx;
                            }
                        }
                    }
                    out[static_cast<std::size_t>(oidx)] = best;
                    (*argmax)[static_cast<std::size_t>(oidx)] = best_idx;
                }
            }
        }
    }
    Shape out_shape = batched ? Shape{n_total, ho, wo, c} : Shape{ho, wo, c};
    return make_op_result("maxpool2x2", std::move(out_shape), std::move(out), {x},
                          [argmax](TensorNode& node) {
                              auto& px = node.parents[0];
                              if (!px->requires_grad) return;
                              px->ensure_grad();
                              for (std::size_t i = 0; i < node.grad.size(); ++i) {
                                  px->grad[static_cast<std::size_t>((*argmax)[i])] += node.grad[i];
                              }
                          });
}

namespace {

Tensor spatial_mean_impl(const Tensor& x, bool keep_dims) {
    if (x.rank() != 4) throw ShapeError("spatial_mean: expected [N,H,W,C], got " + shape_str(x.shape()));
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const double inv = 1.0 / (static_cast<double>(h) * w);
    std::vector<double> out(static_cast<std::size_t>(n) * c, 0.0);
    const double* xv = x.values().data();
    for (int i = 0; i < n; ++i) {
        for (int s = 0; s < h * w; ++s) {
            const double* iptr = xv + (static_cast<std::int64_t>(i) * h * w + s) * c;
            double* optr = out.data() + static_cast<std::int64_t>(i) * c;
            for (int ch = 0; ch < c; ++ch) optr[ch] += iptr[ch];
        }
    }
    for (double& v : out) v *= inv;
    Shape out_shape = keep_dims ? Shape{n, 1, 1, c} : Shape{n, c};
    return make_op_result("spatial_mean", std::move(out_shape), std::move(out), {x},
                          [n, h, w, c, inv](TensorNode& node) {
                              auto& px = node.parents[0];
                              if (!px->requires_grad) return;
                              px->ensure_grad();
                              for (int i = 0; i < n; ++i) {
                                  const double* g = node.grad.data() + static_cast<std::int64_t>(i) * c;
                                  for (int s = 0; s < h * w; ++s) {
                                      double* gi = px->grad.data() +
                                                   (static_cast<std::int64_t>(i) * h * w + s) * c;
                                      for (int ch = 0; ch < c; ++ch) gi[ch] += g[ch] * inv;
                                  }
                              }
                          });
}

} // namespace

Tensor spatial_mean(const Tensor& x) { return spatial_mean_impl(x, false); }
Tensor spatial_mean_keep(const Tensor& x) { return spatial_mean_impl(x, true); }

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  std::vector<double>& running_mean, std::vector<double>& running_var,
                  bool training, bool update_running, double momentum, double eps) {
    if (x.rank() != 2 && x.rank() != 4) {
        throw ShapeError("batch_norm: expected [N,C] or [N,H,W,C], got " + shape_str(x.shape()));
    }
    const int c = x.dim(x.rank() - 1);
    if (gamma.numel() != c || beta.numel() != c || static_cast<int>(running_mean.size()) != c ||
        static_cast<int>(running_var.size()) != c) {
        throw ShapeError("batch_norm: parameter size mismatch for " + std::to_string(c) + " channels");
    }
    const std::int64_t rows = x.numel() / c;
    const double* xv = x.values().data();

    std::vector<double> use_mean(static_cast<std::size_t>(c), 0.0);
    std::vector<double> use_var(static_cast<std::size_t>(c), 0.0);
    if (training) {
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* row = xv + r * c;
            for (int ch = 0; ch < c; ++ch) use_mean[static_cast<std::size_t>(ch)] += row[ch];
        }
        const double inv_rows = 1.0 / static_cast<double>(rows);
        for (double& m : use_mean) m *= inv_rows;
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* row = xv + r * c;
            for (int ch = 0; ch < c; ++ch) {
                const double dlt = row[ch] - use_mean[static_cast<std::size_t>(ch)];
                use_var[static_cast<std::size_t>(ch)] += dlt * dlt;
            }
        }
        for (double& v : use_var) v *= inv_rows;
        if (update_running) {
            for (int ch = 0; ch < c; ++ch) {
                running_mean[static_cast<std::size_t>(ch)] =
                    momentum * running_mean[static_cast<std::size_t>(ch)] +
                    (1.0 - momentum) * use_mean[static_cast<std::size_t>(ch)];
                running_var[static_cast<std::size_t>(ch)] =
                    momentum * running_var[static_cast<std::size_t>(ch)] +
                    (1.0 - momentum) * use_var[static_cast<std::size_t>(ch)];
            }
        }
    } else {
        use_mean = running_mean;
        use_var = running_var;
    }

    std::vector<double> inv_std(static_cast<std::size_t>(c));
    for (int ch = 0; ch < c; ++ch)
        inv_std[static_cast<std::size_t>(ch)] = 1.0 / std::sqrt(use_var[static_cast<std::size_t>(ch)] + eps);

    auto xhat = std::make_shared<std::vector<double>>(x.values().size());
    std::vector<double> out(x.values().size());
    const double* gv = gamma.values().data();
    const double* bv = beta.values().data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* row = xv + r * c;
        double* hrow = xhat->data() + r * c;
        double* orow = out.data() + r * c;
        for (int ch = 0; ch < c; ++ch) {
            const double hx = (row[ch] - use_mean[static_cast<std::size_t>(ch)]) *
                              inv_std[static_cast<std::size_t>(ch)];
            hrow[ch] = hx;
            orow[ch] = gv[ch] * hx + bv[ch];
        }
    }

    auto inv_std_copy = std::make_shared<std::vector<double>>(std::move(inv_std));
    auto backward = [rows, c, xhat, inv_std_copy, training](TensorNode& node) {
        auto& px = node.parents[0];
        auto& pg = node.parents[1];
        auto& pb = node.parents[2];
        const double* g = node.grad.data();
        const double* gamma_v = pg->values.data();
        if (pg->requires_grad || pb->requires_grad) {
            if (pg->requires_grad) pg->ensure_grad();
            if (pb->requires_grad) pb->ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* grow = g + r * c;
                const double* hrow = xhat->data() + r * c;
                for (int ch = 0; ch < c; ++ch) {
                    if (pg->requires_grad) pg->grad[static_cast<std::size_t>(ch)] += grow[ch] * hrow[ch];
                    if (pb->requires_grad) pb->grad[static_cast<std::size_t>(ch)] += grow[ch];
                }
            }
        }
        if (px->requires_grad) {
            px->ensure_grad();
            if (training) {
                // dx = gamma*istd*(dy - mean(dy) - xhat*mean(dy*xhat))
                std::vector<double> mean_dy(static_cast<std::size_t>(c), 0.0);
                std::vector<double> mean_dyx(static_cast<std::size_t>(c), 0.0);
                for (std::int64_t r = 0; r < rows; ++r) {
                    const double* grow = g + r * c;
                    const double* hrow = xhat->data() + r * c;
                    for (int ch = 0; ch < c; ++ch) {
                        mean_dy[static_cast<std::size_t>(ch)] += grow[ch];
                        mean_dyx[static_cast<std::size_t>(ch)] += grow[ch] * hrow[ch];
                    }
                }
                const double inv_rows = 1.0 / static_cast<double>(rows);
                for (int ch = 0; ch < c; ++ch) {
                    mean_dy[static_cast<std::size_t>(ch)] *= inv_rows;
                    mean_dyx[static_cast<std::size_t>(ch)] *= inv_rows;
                }
                for (std::int64_t r = 0; r < rows; ++r) {
                    const double* grow = g + r * c;
                    const double* hrow = xhat->data() + r * c;
                    double* gx = px->grad.data() + r * c;
                    for (int ch = 0; ch < c; ++ch) {
                        gx[ch] += gamma_v[ch] * (*inv_std_copy)[static_cast<std::size_t>(ch)] *
                                  (grow[ch] - mean_dy[static_cast<std::size_t>(ch)] -
                                   hrow[ch] * mean_dyx[static_cast<std::size_t>(ch)]);
                    }
                }
            } else {
                for (std::int64_t r = 0; r < rows; ++r) {
                    const double* grow = g + r * c;
                    double* gx = px->grad.data() + r * c;
                    for (int ch = 0; ch < c; ++ch) {
                        gx[ch] += grow[ch] * gamma_v[ch] * (*inv_std_copy)[static_cast<std::size_t>(ch)];
                    }
                }
            }
        }
    };
    return make_op_result("batch_norm", x.shape(), std::move(out), {x, gamma, beta}, backward);
}

Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.rank() != 4) throw ShapeError("instance_norm: expected [N,H,W,C], got " + shape_str(x.shape()));
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    if (gamma.numel() != c || beta.numel() != c) {
        throw ShapeError("instance_norm: parameter size mismatch for " + std::to_string(c) +
                         " channels");
    }
    const int hw = h * w;
    const double inv_hw = 1.0 / static_cast<double>(hw);
    const double* xv = x.values().data();
    const double* gv = gamma.values().data();
    const double* bv = beta.values().data();

    auto xhat = std::make_shared<std::vector<double>>(x.values().size());
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n) * c);
    std::vector<double> out(x.values().size());
    for (int i = 0; i < n; ++i) {
        for (int ch = 0; ch < c; ++ch) {
            double m = 0.0;
            for (int s = 0; s < hw; ++s) m += xv[(static_cast<std::int64_t>(i) * hw + s) * c + ch];
            m *= inv_hw;
            double var = 0.0;
            for (int s = 0; s < hw; ++s) {
                const double dlt = xv[(static_cast<std::int64_t>(i) * hw + s) * c + ch] - m;
                var += dlt * dlt;
            }
            var *= inv_hw;
            const double istd = 1.0 / std::sqrt(var + eps);
            (*inv_std)[static_cast<std::size_t>(i) * c + ch] = istd;
            for (int s = 0; s < hw; ++s) {
                const std::int64_t idx = (static_cast<std::int64_t>(i) * hw + s) * c + ch;
                const double hx = (xv[idx] - m) * istd;
                (*xhat)[static_cast<std::size_t>(idx)] = hx;
                out[static_cast<std::size_t>(idx)] = gv[ch] * hx + bv[ch];
            }
        }
    }
    auto backward = [n, c, hw, inv_hw, xhat, inv_std](TensorNode& node) {
        auto& px = node.parents[0];
        auto& pg = node.parents[1];
        auto& pb = node.parents[2];
        const double* g = node.grad.data();
        const double* gamma_v = pg->values.data();
        if (pg->requires_grad) pg->ensure_grad();
        if (pb->requires_grad) pb->ensure_grad();
        if (px->requires_grad) px->ensure_grad();
        for (int i = 0; i < n; ++i) {
            for (int ch = 0; ch < c; ++ch) {
                double sum_dy = 0.0, sum_dyx = 0.0;
                for (int s = 0; s < hw; ++s) {
                    const std::int64_t idx = (static_cast<std::int64_t>(i) * hw + s) * c + ch;
                    sum_dy += g[idx];
                    sum_dyx += g[idx] * (*xhat)[static_cast<std::size_t>(idx)];
                }
                if (pg->requires_grad) pg->grad[static_cast<std::size_t>(ch)] += sum_dyx;
                if (pb->requires_grad) pb->grad[static_cast<std::size_t>(ch)] += sum_dy;
                if (px->requires_grad) {
                    const double istd = (*inv_std)[static_cast<std::size_t>(i) * c + ch];
                    const double mean_dy = sum_dy * inv_hw;
                    const double mean_dyx = sum_dyx * inv_hw;
                    for (int s = 0; s < hw; ++s) {
                        const std::int64_t idx = (static_cast<std::int64_t>(i) * hw + s) * c + ch;
                        px->grad[static_cast<std::size_t>(idx)] +=
                            gamma_v[ch] * istd *
                            (g[idx] - mean_dy - (*xhat)[static_cast<std::size_t>(idx)] * mean_dyx);
                    }
                }
            }
        }
    };
    return make_op_result("instance_norm", x.shape(), std::move(out), {x, gamma, beta}, backward);
}

Tensor l2_tanh_rows(const Tensor& x, double omega) {
    if (x.rank() != 1 && x.rank() != 2) {
        throw ShapeError("l2_tanh_normalize: expected [D] or [N,D], got " + shape_str(x.shape()));
    }
    const int n = x.rank() == 2 ? x.dim(0) : 1;
    const int d = x.dim(x.rank() - 1);
    const double* xv = x.values().data();
    std::vector<double> out(x.values().size());
    auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double* row = xv + static_cast<std::int64_t>(i) * d;
        double sq = 0.0;
        for (int j = 0; j < d; ++j) sq += row[j] * row[j];
        const double r = std::sqrt(sq);
        if (r == 0.0) throw NumericFault("l2_tanh_normalize: zero-norm input row");
        (*norms)[static_cast<std::size_t>(i)] = r;
        double* orow = out.data() + static_cast<std::int64_t>(i) * d;
        for (int j = 0; j < d; ++j) orow[j] = std::tanh(omega * row[j] / r);
    }
    auto backward = [n, d, omega, norms](TensorNode& node) {
        auto& px = node.parents[0];
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (int i = 0; i < n; ++i) {
            const double r = (*norms)[static_cast<std::size_t>(i)];
            const double* row = px->values.data() + static_cast<std::int64_t>(i) * d;
            const double* yrow = node.values.data() + static_cast<std::int64_t>(i) * d;
            const double* grow = node.grad.data() + static_cast<std::int64_t>(i) * d;
            // h = (1 - y^2) .* g; gx = (omega/r) * (h - u * (u.h)), u = x/r
            double uh = 0.0;
            for (int j = 0; j < d; ++j) uh += (row[j] / r) * (1.0 - yrow[j] * yrow[j]) * grow[j];
            double* gx = px->grad.data() + static_cast<std::int64_t>(i) * d;
            for (int j = 0; j < d; ++j) {
                const double hj = (1.0 - yrow[j] * yrow[j]) * grow[j];
                gx[j] += (omega / r) * (hj - (row[j] / r) * uh);
            }
        }
    };
    return make_op_result("l2_tanh_normalize", x.shape(), std::move(out), {x}, backward);
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

Tensor loss_bce(const Tensor& pred, const Tensor& target) {
    require_same_shape("loss_bce", pred, target);
    if (pred.numel() == 0) throw ShapeError("loss_bce: empty batch");
    const auto& pv = pred.values();
    const auto& tv = target.values();
    const double inv = 1.0 / static_cast<double>(pred.numel());
    double acc = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double p = std::clamp(pv[i], kProbEps, 1.0 - kProbEps);
        acc += -(tv[i] * std::log(p) + (1.0 - tv[i]) * std::log(1.0 - p));
    }
    return make_op_result("loss_bce", Shape{}, {acc * inv}, {pred, target}, [inv](TensorNode& node) {
        auto& pp = node.parents[0];
        auto& pt = node.parents[1];
        if (!pp->requires_grad) return;
        pp->ensure_grad();
        const double g = node.grad[0] * inv;
        for (std::size_t i = 0; i < pp->values.size(); ++i) {
            const double praw = pp->values[i];
            if (praw <= kProbEps || praw >= 1.0 - kProbEps) continue; // clamped: flat
            pp->grad[i] += g * (-pt->values[i] / praw + (1.0 - pt->values[i]) / (1.0 - praw));
        }
    });
}

Tensor loss_bce_const(const Tensor& pred, double target) {
    Tensor t = Tensor::full(pred.shape(), target);
    return loss_bce(pred, t);
}

Tensor loss_l1(const Tensor& a, const Tensor& b) {
    require_same_shape("loss_l1", a, b);
    if (a.numel() == 0) throw ShapeError("loss_l1: empty batch");
    const double inv = 1.0 / static_cast<double>(a.numel());
    double acc = 0.0;
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) acc += std::abs(av[i] - bv[i]);
    return make_op_result("loss_l1", Shape{}, {acc * inv}, {a, b}, [inv](TensorNode& node) {
        auto& pa = node.parents[0];
        auto& pb = node.parents[1];
        const double g = node.grad[0] * inv;
        for (std::size_t i = 0; i < pa->values.size(); ++i) {
            const double diff = pa->values[i] - pb->values[i];
            const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            if (pa->requires_grad) {
                pa->ensure_grad();
                pa->grad[i] += g * s;
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                pb->grad[i] -= g * s;
            }
        }
    });
}

Tensor loss_mse(const Tensor& a, const Tensor& b) {
    require_same_shape("loss_mse", a, b);
    if (a.numel() == 0) throw ShapeError("loss_mse: empty batch");
    const double inv = 1.0 / static_cast<double>(a.numel());
    double acc = 0.0;
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        acc += d * d;
    }
    return make_op_result("loss_mse", Shape{}, {acc * inv}, {a, b}, [inv](TensorNode& node) {
        auto& pa = node.parents[0];
        auto& pb = node.parents[1];
        const double g = node.grad[0] * inv;
        for (std::size_t i = 0; i < pa->values.size(); ++i) {
            const double d = 2.0 * (pa->values[i] - pb->values[i]);
            if (pa->requires_grad) {
                pa->ensure_grad();
                pa->grad[i] += g * d;
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                pb->grad[i] -= g * d;
            }
        }
    });
}

Tensor softmax_ce(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw ShapeError("softmax_ce: logits must be [N,C]");
    const int n = logits.dim(0), c = logits.dim(1);
    if (static_cast<int>(labels.size()) != n) {
        throw ShapeError("softmax_ce: label count " + std::to_string(labels.size()) +
                         " != batch size " + std::to_string(n));
    }
    if (n == 0) throw ShapeError("softmax_ce: empty batch");
    for (int y : labels) {
        if (y < 0 || y >= c) throw ShapeError("softmax_ce: label " + std::to_string(y) + " out of range");
    }
    const double* lv = logits.values().data();
    auto probs = std::make_shared<std::vector<double>>(logits.values().size());
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* row = lv + static_cast<std::int64_t>(i) * c;
        double mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        const double logz = std::log(z) + mx;
        for (int j = 0; j < c; ++j)
            (*probs)[static_cast<std::size_t>(i) * c + j] = std::exp(row[j] - logz);
        acc += logz - row[labels[static_cast<std::size_t>(i)]];
    }
    const double inv = 1.0 / static_cast<double>(n);
    return make_op_result("softmax_ce", Shape{}, {acc * inv}, {logits},
                          [n, c, inv, probs, labels](TensorNode& node) {
                              auto& pl = node.parents[0];
                              if (!pl->requires_grad) return;
                              pl->ensure_grad();
                              const double g = node.grad[0] * inv;
                              for (int i = 0; i < n; ++i) {
                                  double* grow = pl->grad.data() + static_cast<std::int64_t>(i) * c;
                                  const double* prow = probs->data() + static_cast<std::int64_t>(i) * c;
                                  for (int j = 0; j < c; ++j) grow[j] += g * prow[j];
                                  grow[labels[static_cast<std::size_t>(i)]] -= g;
                              }
                          });
}

Tensor loss_nll_probs(const Tensor& probs, const std::vector<int>& labels) {
    if (probs.rank() != 2) throw ShapeError("loss_nll_probs: probs must be [N,C]");
    const int n = probs.dim(0), c = probs.dim(1);
    if (static_cast<int>(labels.size()) != n) {
        throw ShapeError("loss_nll_probs: label count mismatch");
    }
    if (n == 0) throw ShapeError("loss_nll_probs: empty batch");
    for (int y : labels) {
        if (y < 0 || y >= c)
            throw ShapeError("loss_nll_probs: label " + std::to_string(y) + " out of range");
    }
    const double* pv = probs.values().data();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double p = std::clamp(pv[static_cast<std::int64_t>(i) * c + labels[static_cast<std::size_t>(i)]],
                                    kProbEps, 1.0);
        acc += -std::log(p);
    }
    const double inv = 1.0 / static_cast<double>(n);
    return make_op_result("loss_nll_probs", Shape{}, {acc * inv}, {probs},
                          [n, c, inv, labels](TensorNode& node) {
                              auto& pp = node.parents[0];
                              if (!pp->requires_grad) return;
                              pp->ensure_grad();
                              const double g = node.grad[0] * inv;
                              for (int i = 0; i < n; ++i) {
                                  const std::int64_t idx =
                                      static_cast<std::int64_t>(i) * c + labels[static_cast<std::size_t>(i)];
                                  const double p = pp->values[static_cast<std::size_t>(idx)];
                                  if (p <= kProbEps) continue;
                                  pp->grad[static_cast<std::size_t>(idx)] += -g / p;
                              }
                          });
}

} // namespace hsemis
