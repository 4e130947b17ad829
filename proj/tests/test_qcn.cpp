#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hsemis/ops.hpp"
#include "hsemis/qcn.hpp"

#include "test_util.hpp"

using namespace hsemis;
using testutil::random_tensor;

namespace {
constexpr double kPi = 3.14159265358979323846;

std::vector<double> random_unit_input(int n_qubits, Rng& rng) {
    std::vector<double> v(1ULL << n_qubits);
    double sq = 0.0;
    while (sq == 0.0) {
        for (double& x : v) x = 2.0 * rng.next_double() - 1.0;
        sq = 0.0;
        for (double x : v) sq += x * x;
    }
    return v;
}

StateVector random_state(int n_qubits, Rng& rng) {
    std::vector<cplx> amps(1ULL << n_qubits);
    double sq = 0.0;
    for (auto& a : amps) {
        a = cplx(rng.next_normal(), rng.next_normal());
        sq += std::norm(a);
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (auto& a : amps) a *= inv;
    return StateVector(n_qubits, std::move(amps));
}
} // namespace

TEST_CASE("amplitude encoding") {
    std::vector<double> e0(256, 0.0);
    e0[0] = 1.0;
    StateVector s = amplitude_encode(e0);
    CHECK(s.n_qubits() == 8);
    CHECK(s.amplitudes()[0] == cplx(1.0, 0.0));

    StateVector v = amplitude_encode({3.0, 4.0});
    CHECK(v.amplitudes()[0].real() == doctest::Approx(0.6));
    CHECK(v.amplitudes()[1].real() == doctest::Approx(0.8));
    const auto probs = v.measure_probs(0);
    CHECK(probs[0] == doctest::Approx(0.36));
    CHECK(probs[1] == doctest::Approx(0.64));

    std::vector<double> uniform(16, 0.7);
    StateVector u = amplitude_encode(uniform);
    for (const auto& a : u.amplitudes()) CHECK(a.real() == doctest::Approx(0.25));

    CHECK_THROWS_AS(amplitude_encode(std::vector<double>(8, 0.0)), NumericFault);
    CHECK_THROWS_AS(amplitude_encode(std::vector<double>(3, 1.0)), ShapeError);
}

TEST_CASE("single-gate truth tables") {
    StateVector s(1);
    s.apply_ry(0, 0.0);
    CHECK(s.amplitudes()[0].real() == doctest::Approx(1.0));

    s.apply_ry(0, kPi); // |0> -> |1>
    CHECK(std::abs(s.amplitudes()[0]) == doctest::Approx(0.0));
    CHECK(s.amplitudes()[1].real() == doctest::Approx(1.0));

    StateVector c(2);
    c.apply_x(1);                 // |10> (qubit 1 set)
    c.apply_cnot(1, 0);           // control qubit 1 -> flips qubit 0: |11>
    CHECK(c.amplitudes()[3].real() == doctest::Approx(1.0));

    StateVector c2(2);
    c2.apply_cnot(1, 0); // |00> unchanged
    CHECK(c2.amplitudes()[0].real() == doctest::Approx(1.0));

    CHECK_THROWS_AS(c2.apply_ry(5, 0.1), ShapeError);
    CHECK_THROWS_AS(c2.apply_cnot(0, 0), ShapeError);
}

TEST_CASE("conv unitary gate chase") {
    StateVector s(2);
    conv_unitary(s, 0, 1, 0.0, 0.0); // reduces to CNOT on |00>
    CHECK(s.amplitudes()[0].real() == doctest::Approx(1.0));

    StateVector t(2);
    conv_unitary(t, 0, 1, kPi, 0.0); // Ry flips qubit 0, CNOT then flips qubit 1
    CHECK(std::abs(t.amplitudes()[3].real()) == doctest::Approx(1.0));
}

TEST_CASE("pool op at phi=0 only applies the X gate") {
    StateVector s(2); // qubit 0 = keep, qubit 1 = drop
    pool_op(s, 0, 1, 0.0);
    CHECK(std::abs(s.amplitudes()[2]) == doctest::Approx(1.0)); // |drop=1, keep=0>
    const auto probs = s.measure_probs(0);
    CHECK(probs[0] == doctest::Approx(1.0));
}

TEST_CASE("measure_probs marginals") {
    StateVector s(3);
    for (int wire = 0; wire < 3; ++wire) {
        const auto p = s.measure_probs(wire);
        CHECK(p[0] == doctest::Approx(1.0));
        CHECK(p[1] == doctest::Approx(0.0));
    }
    StateVector h(1);
    h.apply_ry(0, kPi / 2);
    const auto p = h.measure_probs(0);
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[1] == doctest::Approx(0.5));

    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        StateVector r = random_state(3, rng);
        const auto pr = r.measure_probs(rng.next_int(3));
        CHECK(pr[0] + pr[1] == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("gates acting elsewhere leave a wire's marginal unchanged") {
    Rng rng(6);
    StateVector s = random_state(3, rng);
    const auto before = s.measure_probs(2);
    s.apply_ry(0, 0.7);
    s.apply_cnot(0, 1);
    s.apply_crx(1, 0, 1.3);
    const auto after = s.measure_probs(2);
    CHECK(after[0] == doctest::Approx(before[0]).epsilon(1e-12));
}

TEST_CASE("500 random gate sequences match the dense unitary oracle (n <= 4)") {
    Rng rng(7);
    int sequences = 0;
    while (sequences < 500) {
        const int n = 1 + rng.next_int(4);
        const int len = 1 + rng.next_int(12);
        StateVector s = random_state(n, rng);
        std::vector<cplx> reference = s.amplitudes();

        std::vector<GateSpec> gates;
        std::vector<double> angles;
        for (int g = 0; g < len; ++g) {
            const int kind = rng.next_int(n >= 2 ? 7 : 2);
            const double theta = rng.next_range(-2.0 * kPi, 2.0 * kPi);
            const int q0 = rng.next_int(n);
            int q1 = rng.next_int(n);
            while (n >= 2 && q1 == q0) q1 = rng.next_int(n);
            switch (kind) {
            case 0:
                s.apply_ry(q0, theta);
                gates.push_back({GateSpec::Kind::Ry, q0, 0, -1});
                angles.push_back(theta);
                break;
            case 1:
                s.apply_x(q0);
                gates.push_back({GateSpec::Kind::X, q0, 0, -1});
                angles.push_back(0.0);
                break;
            case 2:
                s.apply_cnot(q0, q1);
                gates.push_back({GateSpec::Kind::Cnot, q0, q1, -1});
                angles.push_back(0.0);
                break;
            case 3:
                s.apply_crz(q0, q1, theta);
                gates.push_back({GateSpec::Kind::Crz, q0, q1, -1});
                angles.push_back(theta);
                break;
            case 4:
                s.apply_crx(q0, q1, theta);
                gates.push_back({GateSpec::Kind::Crx, q0, q1, -1});
                angles.push_back(theta);
                break;
            case 5: {
                const double theta1 = rng.next_range(-kPi, kPi);
                conv_unitary(s, q0, q1, theta, theta1);
                gates.push_back({GateSpec::Kind::Ry, q0, 0, -1});
                angles.push_back(theta);
                gates.push_back({GateSpec::Kind::Ry, q1, 0, -1});
                angles.push_back(theta1);
                gates.push_back({GateSpec::Kind::Cnot, q0, q1, -1});
                angles.push_back(0.0);
                break;
            }
            case 6:
                pool_op(s, q0, q1, theta);
                gates.push_back({GateSpec::Kind::Crz, q1, q0, -1});
                angles.push_back(theta);
                gates.push_back({GateSpec::Kind::X, q1, 0, -1});
                angles.push_back(0.0);
                gates.push_back({GateSpec::Kind::Crx, q1, q0, -1});
                angles.push_back(theta);
                break;
            }
        }

        // dense matrix product applied to the initial state
        std::vector<cplx> expect = reference;
        for (std::size_t g = 0; g < gates.size(); ++g) {
            expect = testutil::matvec(testutil::gate_matrix(n, gates[g], angles[g]), expect);
        }
        double max_err = 0.0;
        for (std::size_t i = 0; i < expect.size(); ++i) {
            max_err = std::max(max_err, std::abs(expect[i] - s.amplitudes()[i]));
        }
        CHECK(max_err < 1e-10);
        CHECK(std::abs(s.norm_sq() - 1.0) < 1e-10);
        ++sequences;
    }
}

TEST_CASE("qcn circuit layout: 8 qubits, 3 layers") {
    QcnCircuit c = QcnCircuit::make(8, 3, -1);
    // conv angles: 2*(4+2+1) = 14; pool angles: 4+2+1 = 7
    CHECK(c.angle_count() == 21);
    CHECK(c.measured_wire == 0); // last active qubit under lower-member pooling
    QcnCircuit paper_wire = QcnCircuit::make(8, 3, 4);
    CHECK(paper_wire.measured_wire == 4);
}

TEST_CASE("qcn_forward output sums to one and is reproducible") {
    Rng rng(8);
    QcnCircuit c = QcnCircuit::make(8, 3, -1);
    std::vector<double> angles(static_cast<std::size_t>(c.angle_count()), 0.0);
    const std::vector<double> input = random_unit_input(8, rng);
    const auto p1 = c.forward_probs(input, angles);
    const auto p2 = c.forward_probs(input, angles);
    CHECK(p1[0] + p1[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p1[0] == p2[0]); // bit-exact determinism at all-zero angles
    CHECK(p1[1] == p2[1]);
}

TEST_CASE("2-qubit reduced configuration matches an end-to-end dense oracle") {
    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        QcnCircuit c = QcnCircuit::make(2, 1, -1);
        std::vector<double> angles(static_cast<std::size_t>(c.angle_count()));
        for (double& a : angles) a = rng.next_range(-kPi, kPi);
        const std::vector<double> input = random_unit_input(2, rng);

        const auto probs = c.forward_probs(input, angles);

        double sq = 0.0;
        for (double v : input) sq += v * v;
        std::vector<cplx> state(input.size());
        for (std::size_t i = 0; i < input.size(); ++i) state[i] = input[i] / std::sqrt(sq);
        for (const auto& g : c.gates) {
            const double a = g.angle_slot >= 0 ? angles[static_cast<std::size_t>(g.angle_slot)] : 0.0;
            state = testutil::matvec(testutil::gate_matrix(2, g, a), state);
        }
        double p0 = 0.0;
        for (std::size_t i = 0; i < state.size(); ++i) {
            if (!(i & (1ULL << c.measured_wire))) p0 += std::norm(state[i]);
        }
        CHECK(std::abs(probs[0] - p0) < 1e-10);
    }
}

TEST_CASE("parameter-shift gradient matches finite differences for every angle") {
    Rng rng(10);
    QcnCircuit c = QcnCircuit::make(8, 3, -1);
    std::vector<double> angles(static_cast<std::size_t>(c.angle_count()));
    for (double& a : angles) a = rng.next_range(-kPi, kPi);
    const std::vector<double> input = random_unit_input(8, rng);

    const double h = 1e-5;
    for (int k = 0; k < c.angle_count(); ++k) {
        const double analytic = c.shift_gradient(input, angles, k);
        std::vector<double> shifted = angles;
        shifted[static_cast<std::size_t>(k)] += h;
        const double up = c.forward_probs(input, shifted)[0];
        shifted[static_cast<std::size_t>(k)] -= 2 * h;
        const double down = c.forward_probs(input, shifted)[0];
        const double numeric = (up - down) / (2 * h);
        CHECK(std::abs(analytic - numeric) < 1e-6);
    }
}

TEST_CASE("parameter-shift: 2*pi shift leaves the gradient unchanged") {
    Rng rng(11);
    QcnCircuit c = QcnCircuit::make(4, 2, -1);
    std::vector<double> angles(static_cast<std::size_t>(c.angle_count()));
    for (double& a : angles) a = rng.next_range(-kPi, kPi);
    const std::vector<double> input = random_unit_input(4, rng);
    const double g1 = c.shift_gradient(input, angles, 3);
    angles[3] += 2.0 * kPi;
    const double g2 = c.shift_gradient(input, angles, 3);
    CHECK(g1 == doctest::Approx(g2).epsilon(1e-10));
}

TEST_CASE("angle with no causal path to the measured wire has zero gradient") {
    // one layer over 4 qubits, measuring wire 0: the (2,3) pair cannot reach it
    QcnCircuit c = QcnCircuit::make(4, 1, 0);
    Rng rng(12);
    std::vector<double> angles(static_cast<std::size_t>(c.angle_count()));
    for (double& a : angles) a = rng.next_range(-kPi, kPi);
    const std::vector<double> input = random_unit_input(4, rng);
    // the (2,3) pair shares no gate with the measured wire's light cone
    int far_angles = 0;
    for (const auto& g : c.gates) {
        if (g.angle_slot < 0) continue;
        const bool q0_far = g.q0 == 2 || g.q0 == 3;
        const bool q1_far = g.kind == GateSpec::Kind::Ry || g.q1 == 2 || g.q1 == 3;
        if (q0_far && q1_far) {
            CHECK(std::abs(c.shift_gradient(input, angles, g.angle_slot)) < 1e-12);
            ++far_angles;
        }
    }
    // two conv rotations plus the pool angle, which sits on both CRz and CRx
    CHECK(far_angles == 4);
}

TEST_CASE("wire 4 stays measurable after it is retired from later layers") {
    Rng rng(16);
    QcnCircuit c = QcnCircuit::make(8, 3, 4);
    std::vector<double> angles(static_cast<std::size_t>(c.angle_count()));
    for (double& a : angles) a = rng.next_range(-kPi, kPi);
    const auto probs = c.forward_probs(random_unit_input(8, rng), angles);
    CHECK(probs[0] + probs[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("input gradient via adjoint pass matches finite differences") {
    Rng rng(13);
    QcnCircuit c = QcnCircuit::make(4, 2, -1);
    std::vector<double> angles(static_cast<std::size_t>(c.angle_count()));
    for (double& a : angles) a = rng.next_range(-kPi, kPi);
    std::vector<double> input = random_unit_input(4, rng);

    const auto grad = c.input_gradient(input, angles);
    const double h = 1e-6;
    for (std::size_t j = 0; j < input.size(); ++j) {
        const double keep = input[j];
        input[j] = keep + h;
        const double up = c.forward_probs(input, angles)[0];
        input[j] = keep - h;
        const double down = c.forward_probs(input, angles)[0];
        input[j] = keep;
        CHECK(std::abs(grad[j] - (up - down) / (2 * h)) < 1e-6);
    }
}

TEST_CASE("qcn_forward_batch: tape op forwards and backwards") {
    Rng rng(14);
    QcnCircuit c = QcnCircuit::make(3, 2, -1);
    Tensor angles = init_qcn_angles(c, rng);
    Tensor rows = random_tensor({2, 8}, rng, 1.0, true);
    auto loss = [&]() { return mean(qcn_forward_batch(tanh_op(rows), angles, c)); };
    auto rep = testutil::fd_check(loss, {rows, angles});
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("unitarity preserved across random circuits") {
    Rng rng(15);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + rng.next_int(3);
        StateVector s = random_state(n, rng);
        for (int g = 0; g < 10; ++g) {
            const int q0 = rng.next_int(n);
            int q1 = (q0 + 1 + rng.next_int(n - 1)) % n;
            pool_op(s, q0, q1, rng.next_range(-kPi, kPi));
        }
        CHECK(std::abs(s.norm_sq() - 1.0) < 1e-10);
    }
}
