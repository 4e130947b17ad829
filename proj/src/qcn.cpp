#include "hsemis/qcn.hpp"

#include <cmath>

namespace hsemis {

namespace {
constexpr double kHalfPi = 1.5707963267948966192313216916398;

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

int log2_exact(std::size_t n) {
    int k = 0;
    while ((1ULL << k) < n) ++k;
    return k;
}
} // namespace

StateVector::StateVector(int n_qubits) : n_(n_qubits) {
    if (n_qubits < 1 || n_qubits > 20) {
        throw ShapeError("statevector: qubit count " + std::to_string(n_qubits) + " out of range");
    }
    amps_.assign(1ULL << n_, cplx(0.0, 0.0));
    amps_[0] = cplx(1.0, 0.0);
}

StateVector::StateVector(int n_qubits, std::vector<cplx> amplitudes) : n_(n_qubits) {
    if (amplitudes.size() != (1ULL << n_qubits)) {
        throw ShapeError("statevector: amplitude count does not match qubit count");
    }
    amps_ = std::move(amplitudes);
}

void StateVector::check_qubit(int q) const {
    if (q < 0 || q >= n_) {
        throw ShapeError("statevector: qubit index " + std::to_string(q) + " out of range for " +
                         std::to_string(n_) + " qubits");
    }
}

void StateVector::apply_ry(int q, double theta) {
    check_qubit(q);
    const double c = std::cos(theta / 2.0);
    const double s = std::sin(theta / 2.0);
    const std::size_t bit = 1ULL << q;
    for (std::size_t i = 0; i < amps_.size(); ++i) {
        if (i & bit) continue;
        const cplx a0 = amps_[i];
        const cplx a1 = amps_[i | bit];
        amps_[i] = c * a0 - s * a1;
        amps_[i | bit] = s * a0 + c * a1;
    }
}

void StateVector::apply_x(int q) {
    check_qubit(q);
    const std::size_t bit = 1ULL << q;
    for (std::size_t i = 0; i < amps_.size(); ++i) {
        if (i & bit) continue;
        std::swap(amps_[i], amps_[i | bit]);
    }
}

void StateVector::apply_cnot(int control, int target) {
    check_qubit(control);
    check_qubit(target);
    if (control == target) throw ShapeError("cnot: control equals target");
    const std::size_t cbit = 1ULL << control;
    const std::size_t tbit = 1ULL << target;
    for (std::size_t i = 0; i < amps_.size(); ++i) {
        if ((i & cbit) && !(i & tbit)) std::swap(amps_[i], amps_[i | tbit]);
    }
}

void StateVector::apply_crz(int control, int target, double phi) {
    check_qubit(control);
    check_qubit(target);
    if (control == target) throw ShapeError("crz: control equals target");
    const std::size_t cbit = 1ULL << control;
    const std::size_t tbit = 1ULL << target;
    const cplx e_minus(std::cos(phi / 2.0), -std::sin(phi / 2.0));
    const cplx e_plus(std::cos(phi / 2.0), std::sin(phi / 2.0));
    for (std::size_t i = 0; i < amps_.size(); ++i) {
        if (!(i & cbit)) continue;
        amps_[i] *= (i & tbit) ? e_plus : e_minus;
    }
}

void StateVector::apply_crx(int control, int target, double phi) {
    check_qubit(control);
    check_qubit(target);
    if (control == target) throw ShapeError("crx: control equals target");
    const std::size_t cbit = 1ULL << control;
    const std::size_t tbit = 1ULL << target;
    const double c = std::cos(phi / 2.0);
    const cplx mis(0.0, -std::sin(phi / 2.0));
    for (std::size_t i = 0; i < amps_.size(); ++i) {
        if (!(i & cbit) || (i & tbit)) continue;
        const cplx a0 = amps_[i];
        const cplx a1 = amps_[i | tbit];
        amps_[i] = c * a0 + mis * a1;
        amps_[i | tbit] = mis * a0 + c * a1;
    }
}

double StateVector::norm_sq() const {
    double acc = 0.0;
    for (const cplx& a : amps_) acc += std::norm(a);
    return acc;
}

std::array<double, 2> StateVector::measure_probs(int wire) const {
    check_qubit(wire);
    const std::size_t bit = 1ULL << wire;
    double p0 = 0.0, p1 = 0.0;
    for (std::size_t i = 0; i < amps_.size(); ++i) {
        if (i & bit) {
            p1 += std::norm(amps_[i]);
        } else {
            p0 += std::norm(amps_[i]);
        }
    }
    return {p0, p1};
}

StateVector amplitude_encode(const std::vector<double>& v) {
    if (!is_power_of_two(v.size())) {
        throw ShapeError("amplitude_encode: length " + std::to_string(v.size()) +
                         " is not a power of two");
    }
    double sq = 0.0;
    for (double x : v) sq += x * x;
    if (sq == 0.0) throw NumericFault("amplitude_encode: zero vector");
    const double inv = 1.0 / std::sqrt(sq);
    std::vector<cplx> amps(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) amps[i] = cplx(v[i] * inv, 0.0);
    return StateVector(log2_exact(v.size()), std::move(amps));
}

void conv_unitary(StateVector& s, int qa, int qb, double theta0, double theta1) {
    s.apply_ry(qa, theta0);
    s.apply_ry(qb, theta1);
    s.apply_cnot(qa, qb);
}

void pool_op(StateVector& s, int q_keep, int q_drop, double phi) {
    s.apply_crz(q_drop, q_keep, phi);
    s.apply_x(q_drop);
    s.apply_crx(q_drop, q_keep, phi);
}

// ---------------------------------------------------------------------------

QcnCircuit QcnCircuit::make(int n_qubits, int layers, int wire) {
    if (n_qubits < 1 || n_qubits > 12) {
        throw ConfigError("qcn: qubit count " + std::to_string(n_qubits) + " out of supported range");
    }
    if (layers < 1) throw ConfigError("qcn: layer count must be positive");
    QcnCircuit c;
    c.n_qubits = n_qubits;
    c.layers = layers;
    std::vector<int> active(static_cast<std::size_t>(n_qubits));
    for (int q = 0; q < n_qubits; ++q) active[static_cast<std::size_t>(q)] = q;
    int slot = 0;
    for (int layer = 0; layer < layers && active.size() >= 2; ++layer) {
        const std::size_t pairs = active.size() / 2;
        // conv over adjacent active pairs
        for (std::size_t p = 0; p < pairs; ++p) {
            const int qa = active[2 * p];
            const int qb = active[2 * p + 1];
            c.gates.push_back({GateSpec::Kind::Ry, qa, 0, slot++});
            c.gates.push_back({GateSpec::Kind::Ry, qb, 0, slot++});
            c.gates.push_back({GateSpec::Kind::Cnot, qa, qb, -1});
        }
        // pool retires the higher member of each pair
        std::vector<int> next;
        next.reserve(pairs);
        for (std::size_t p = 0; p < pairs; ++p) {
            const int q_keep = active[2 * p];
            const int q_drop = active[2 * p + 1];
            c.gates.push_back({GateSpec::Kind::Crz, q_drop, q_keep, slot});
            c.gates.push_back({GateSpec::Kind::X, q_drop, 0, -1});
            c.gates.push_back({GateSpec::Kind::Crx, q_drop, q_keep, slot});
            ++slot;
            next.push_back(q_keep);
        }
        if (active.size() % 2 == 1) next.push_back(active.back());
        active = std::move(next);
    }
    c.measured_wire = wire < 0 ? active.front() : wire;
    if (c.measured_wire >= n_qubits) {
        throw ConfigError("qcn: measured wire " + std::to_string(c.measured_wire) +
                          " out of range for " + std::to_string(n_qubits) + " qubits");
    }
    return c;
}

int QcnCircuit::angle_count() const {
    int mx = 0;
    for (const auto& g : gates) mx = std::max(mx, g.angle_slot + 1);
    return mx;
}

namespace {
void apply_gate(StateVector& s, const GateSpec& g, double angle) {
    switch (g.kind) {
    case GateSpec::Kind::Ry: s.apply_ry(g.q0, angle); break;
    case GateSpec::Kind::X: s.apply_x(g.q0); break;
    case GateSpec::Kind::Cnot: s.apply_cnot(g.q0, g.q1); break;
    case GateSpec::Kind::Crz: s.apply_crz(g.q0, g.q1, angle); break;
    case GateSpec::Kind::Crx: s.apply_crx(g.q0, g.q1, angle); break;
    }
}
} // namespace

void QcnCircuit::apply(StateVector& s, const std::vector<double>& angles) const {
    for (const auto& g : gates) {
        const double a = g.angle_slot >= 0 ? angles[static_cast<std::size_t>(g.angle_slot)] : 0.0;
        apply_gate(s, g, a);
    }
}

void QcnCircuit::apply_inverse(StateVector& s, const std::vector<double>& angles) const {
    for (auto it = gates.rbegin(); it != gates.rend(); ++it) {
        const double a = it->angle_slot >= 0 ? -angles[static_cast<std::size_t>(it->angle_slot)] : 0.0;
        apply_gate(s, *it, a);
    }
}

std::array<double, 2> QcnCircuit::forward_probs(const std::vector<double>& input,
                                                const std::vector<double>& angles) const {
    if (input.size() != (1ULL << n_qubits)) {
        throw ShapeError("qcn_forward: input length " + std::to_string(input.size()) +
                         " != 2^" + std::to_string(n_qubits));
    }
    StateVector s = amplitude_encode(input);
    apply(s, angles);
    return s.measure_probs(measured_wire);
}

std::vector<double> QcnCircuit::input_gradient(const std::vector<double>& input,
                                               const std::vector<double>& angles) const {
    // p0 = <psi|P|psi>, psi = U a  =>  dp0/da = 2 Re(U^dag P psi).
    StateVector s = amplitude_encode(input);
    const std::vector<cplx> encoded = s.amplitudes();
    apply(s, angles);

    const std::size_t bit = 1ULL << measured_wire;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i & bit) s.amplitudes()[i] = cplx(0.0, 0.0);
    }
    apply_inverse(s, angles);

    double sq = 0.0;
    for (double x : input) sq += x * x;
    const double r = std::sqrt(sq);

    std::vector<double> grad_a(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) grad_a[i] = 2.0 * s.amplitudes()[i].real();

    // Chain through a = v/r: dv = (da - (da . a) a) / r.
    double dot = 0.0;
    for (std::size_t i = 0; i < input.size(); ++i) dot += grad_a[i] * encoded[i].real();
    std::vector<double> grad_v(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
        grad_v[i] = (grad_a[i] - dot * encoded[i].real()) / r;
    }
    return grad_v;
}

double QcnCircuit::shift_gradient(const std::vector<double>& input, const std::vector<double>& angles,
                                  int angle_index) const {
    if (angle_index < 0 || angle_index >= angle_count()) {
        throw ShapeError("parameter_shift: angle index " + std::to_string(angle_index) +
                         " out of range");
    }
    std::vector<double> shifted = angles;
    shifted[static_cast<std::size_t>(angle_index)] += kHalfPi;
    const double plus = forward_probs(input, shifted)[0];
    shifted[static_cast<std::size_t>(angle_index)] -= 2.0 * kHalfPi;
    const double minus = forward_probs(input, shifted)[0];
    return 0.5 * (plus - minus);
}

Tensor init_qcn_angles(const QcnCircuit& circuit, Rng& rng) {
    const int k = circuit.angle_count();
    std::vector<double> v(static_cast<std::size_t>(k));
    for (double& a : v) a = rng.next_range(-3.14159265358979323846, 3.14159265358979323846);
    return Tensor({k}, std::move(v), true);
}

Tensor qcn_forward_batch(const Tensor& rows, const Tensor& angles, const QcnCircuit& circuit) {
    if (rows.rank() != 2) throw ShapeError("qcn_forward: expected [N,D] rows");
    const int n = rows.dim(0);
    const int d = rows.dim(1);
    if (d != (1 << circuit.n_qubits)) {
        throw ShapeError("qcn_forward: row length " + std::to_string(d) + " != 2^" +
                         std::to_string(circuit.n_qubits));
    }
    if (angles.numel() != circuit.angle_count()) {
        throw ShapeError("qcn_forward: angle count mismatch");
    }
    const std::vector<double>& av = angles.values();
    std::vector<double> out(static_cast<std::size_t>(n) * 2);
    for (int i = 0; i < n; ++i) {
        std::vector<double> row(rows.values().begin() + static_cast<std::int64_t>(i) * d,
                                rows.values().begin() + static_cast<std::int64_t>(i + 1) * d);
        const auto probs = circuit.forward_probs(row, av);
        out[static_cast<std::size_t>(i) * 2] = probs[0];
        out[static_cast<std::size_t>(i) * 2 + 1] = probs[1];
    }
    auto backward = [n, d, circuit](TensorNode& node) {
        auto& prows = node.parents[0];
        auto& pang = node.parents[1];
        const std::vector<double>& av = pang->values;
        for (int i = 0; i < n; ++i) {
            // p1 = 1 - p0, so dL/d(.) = (g0 - g1) * dp0/d(.)
            const double scale = node.grad[static_cast<std::size_t>(i) * 2] -
                                 node.grad[static_cast<std::size_t>(i) * 2 + 1];
            if (scale == 0.0) continue;
            std::vector<double> row(prows->values.begin() + static_cast<std::int64_t>(i) * d,
                                    prows->values.begin() + static_cast<std::int64_t>(i + 1) * d);
            if (prows->requires_grad) {
                prows->ensure_grad();
                const std::vector<double> gv = circuit.input_gradient(row, av);
                double* dst = prows->grad.data() + static_cast<std::int64_t>(i) * d;
                for (int j = 0; j < d; ++j) dst[j] += scale * gv[static_cast<std::size_t>(j)];
            }
            if (pang->requires_grad) {
                pang->ensure_grad();
                for (int k = 0; k < circuit.angle_count(); ++k) {
                    pang->grad[static_cast<std::size_t>(k)] +=
                        scale * circuit.shift_gradient(row, av, k);
                }
            }
        }
    };
    return make_op_result("qcn_forward", {n, 2}, std::move(out), {rows, angles}, backward);
}

} // namespace hsemis
