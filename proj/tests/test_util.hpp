#pragma once

// Shared test oracles. Everything here recomputes expectations from first
// principles, independent of the library's forward/backward kernels.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "hsemis/qcn.hpp"
#include "hsemis/rng.hpp"
#include "hsemis/tensor.hpp"

namespace testutil {

using hsemis::Rng;
using hsemis::Tensor;

inline Tensor random_tensor(hsemis::Shape shape, Rng& rng, double scale = 1.0,
                            bool requires_grad = false) {
    std::vector<double> v(static_cast<std::size_t>(hsemis::shape_numel(shape)));
    for (double& x : v) x = scale * (2.0 * rng.next_double() - 1.0);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

// Central finite differences against the recorded gradient of `loss_fn`,
// probing every coordinate of every parameter. loss_fn must rebuild the
// graph from the parameter tensors on each call.
struct FdReport {
    double max_rel_err = 0.0;
    int checked = 0;
};

inline FdReport fd_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params,
                         double h = 1e-5, int max_coords_per_param = 0) {
    for (auto& p : params) p.zero_grad();
    Tensor loss = loss_fn();
    loss.backward();
    std::vector<std::vector<double>> analytic;
    for (auto& p : params) {
        analytic.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.values().size(), 0.0));
    }

    FdReport report;
    Rng pick(12345);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& vals = params[pi].raw_values();
        std::vector<std::size_t> coords(vals.size());
        for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        if (max_coords_per_param > 0 && coords.size() > static_cast<std::size_t>(max_coords_per_param)) {
            pick.shuffle(coords);
            coords.resize(static_cast<std::size_t>(max_coords_per_param));
        }
        for (std::size_t ci : coords) {
            const double keep = vals[ci];
            vals[ci] = keep + h;
            const double up = loss_fn().item();
            vals[ci] = keep - h;
            const double down = loss_fn().item();
            vals[ci] = keep;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[pi][ci];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3});
            report.max_rel_err = std::max(report.max_rel_err, rel);
            ++report.checked;
        }
    }
    return report;
}

// Quadruple-loop cross-correlation, the conv2d reference.
inline std::vector<double> conv2d_oracle(const std::vector<double>& x, int h, int w, int ci,
                                         const std::vector<double>& k, int kh, int kw, int co,
                                         int stride, int pad) {
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (w + 2 * pad - kw) / stride + 1;
    std::vector<double> out(static_cast<std::size_t>(ho) * wo * co, 0.0);
    for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox)
            for (int f = 0; f < co; ++f)
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx)
                        for (int c = 0; c < ci; ++c) {
                            const int iy = oy * stride + ky - pad;
                            const int ix = ox * stride + kx - pad;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            out[static_cast<std::size_t>((oy * wo + ox) * co + f)] +=
                                x[static_cast<std::size_t>((iy * w + ix) * ci + c)] *
                                k[static_cast<std::size_t>(((ky * kw + kx) * ci + c) * co + f)];
                        }
    return out;
}

// ---------------------------------------------------------------------------
// Dense unitary oracle: builds explicit 2^n x 2^n matrices from the gate
// definitions and multiplies them out.
// ---------------------------------------------------------------------------

using cmat = std::vector<std::vector<std::complex<double>>>;

inline cmat identity_matrix(std::size_t dim) {
    cmat m(dim, std::vector<std::complex<double>>(dim, 0.0));
    for (std::size_t i = 0; i < dim; ++i) m[i][i] = 1.0;
    return m;
}

// Embeds a 2x2 single-qubit matrix acting on qubit q (bit q of the index).
inline cmat embed_single(int n, int q, const std::complex<double> u[2][2]) {
    const std::size_t dim = 1ULL << n;
    cmat m(dim, std::vector<std::complex<double>>(dim, 0.0));
    const std::size_t bit = 1ULL << q;
    for (std::size_t col = 0; col < dim; ++col) {
        const int b = (col & bit) ? 1 : 0;
        for (int r = 0; r < 2; ++r) {
            const std::size_t row = r ? (col | bit) : (col & ~bit);
            m[row][col] += u[r][b];
        }
    }
    return m;
}

// Controlled single-qubit matrix: apply u on `target` when bit `control`=1.
inline cmat embed_controlled(int n, int control, int target, const std::complex<double> u[2][2]) {
    const std::size_t dim = 1ULL << n;
    cmat m(dim, std::vector<std::complex<double>>(dim, 0.0));
    const std::size_t cbit = 1ULL << control;
    const std::size_t tbit = 1ULL << target;
    for (std::size_t col = 0; col < dim; ++col) {
        if (!(col & cbit)) {
            m[col][col] += 1.0;
            continue;
        }
        const int b = (col & tbit) ? 1 : 0;
        for (int r = 0; r < 2; ++r) {
            const std::size_t row = r ? (col | tbit) : (col & ~tbit);
            m[row][col] += u[r][b];
        }
    }
    return m;
}

inline cmat gate_matrix(int n, const hsemis::GateSpec& g, double angle) {
    using cd = std::complex<double>;
    switch (g.kind) {
    case hsemis::GateSpec::Kind::Ry: {
        const cd u[2][2] = {{std::cos(angle / 2), -std::sin(angle / 2)},
                            {std::sin(angle / 2), std::cos(angle / 2)}};
        return embed_single(n, g.q0, u);
    }
    case hsemis::GateSpec::Kind::X: {
        const cd u[2][2] = {{0.0, 1.0}, {1.0, 0.0}};
        return embed_single(n, g.q0, u);
    }
    case hsemis::GateSpec::Kind::Cnot: {
        const cd u[2][2] = {{0.0, 1.0}, {1.0, 0.0}};
        return embed_controlled(n, g.q0, g.q1, u);
    }
    case hsemis::GateSpec::Kind::Crz: {
        const cd u[2][2] = {{std::exp(cd(0.0, -angle / 2)), 0.0}, {0.0, std::exp(cd(0.0, angle / 2))}};
        return embed_controlled(n, g.q0, g.q1, u);
    }
    case hsemis::GateSpec::Kind::Crx: {
        const cd u[2][2] = {{std::cos(angle / 2), cd(0.0, -std::sin(angle / 2))},
                            {cd(0.0, -std::sin(angle / 2)), std::cos(angle / 2)}};
        return embed_controlled(n, g.q0, g.q1, u);
    }
    }
    return identity_matrix(1ULL << n);
}

inline std::vector<std::complex<double>> matvec(const cmat& m,
                                                const std::vector<std::complex<double>>& v) {
    std::vector<std::complex<double>> out(v.size(), 0.0);
    for (std::size_t r = 0; r < v.size(); ++r) {
        for (std::size_t c = 0; c < v.size(); ++c) out[r] += m[r][c] * v[c];
    }
    return out;
}

} // namespace testutil
