#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <vector>

#include "hsemis/rng.hpp"
#include "hsemis/tensor.hpp"

namespace hsemis {

using cplx = std::complex<double>;

/// Exact 2^n-amplitude register. Qubit q addresses bit q of the basis index
/// (qubit 0 = least significant bit).
class StateVector {
  public:
    explicit StateVector(int n_qubits); // |0...0>
    StateVector(int n_qubits, std::vector<cplx> amplitudes);

    int n_qubits() const { return n_; }
    std::size_t size() const { return amps_.size(); }
    const std::vector<cplx>& amplitudes() const { return amps_; }
    std::vector<cplx>& amplitudes() { return amps_; }

    void apply_ry(int q, double theta);
    void apply_x(int q);
    void apply_cnot(int control, int target);
    void apply_crz(int control, int target, double phi);
    void apply_crx(int control, int target, double phi);

    double norm_sq() const;
    /// Marginal basis probabilities [p(0), p(1)] of one wire.
    std::array<double, 2> measure_probs(int wire) const;

  private:
    void check_qubit(int q) const;
    int n_;
    std::vector<cplx> amps_;
};

/// v / ||v||_2 as real amplitudes. Length must be a power of two.
StateVector amplitude_encode(const std::vector<double>& v);

/// CNOT(qa->qb) * (Ry(theta0) on qa  (x)  Ry(theta1) on qb).
void conv_unitary(StateVector& s, int qa, int qb, double theta0, double theta1);

/// CRz(phi) with control q_drop on q_keep, X on q_drop, CRx(phi) with
/// control q_drop on q_keep. q_drop is retired from later layers.
void pool_op(StateVector& s, int q_keep, int q_drop, double phi);

// ---------------------------------------------------------------------------
// Circuit: alternating conv/pool layers over adjacent active pairs, the
// lower-index qubit of each pair surviving pooling.
// ---------------------------------------------------------------------------

struct GateSpec {
    enum class Kind { Ry, X, Cnot, Crz, Crx };
    Kind kind;
    int q0 = 0;         // Ry/X target, or control for 2-qubit gates
    int q1 = 0;         // target for 2-qubit gates
    int angle_slot = -1; // index into the angle vector, -1 for fixed gates
};

struct QcnCircuit {
    int n_qubits = 8;
    int layers = 3;
    int measured_wire = 0;
    std::vector<GateSpec> gates;

    /// wire = -1 picks the last active qubit after pooling.
    static QcnCircuit make(int n_qubits, int layers, int wire = -1);

    int angle_count() const;

    void apply(StateVector& s, const std::vector<double>& angles) const;
    void apply_inverse(StateVector& s, const std::vector<double>& angles) const;

    /// encode -> layers -> measure: [p(0), p(1)] at the measured wire.
    std::array<double, 2> forward_probs(const std::vector<double>& input,
                                        const std::vector<double>& angles) const;

    /// d p(0) / d input, via projector + inverse-circuit adjoint pass,
    /// chained through the encoding normalization.
    std::vector<double> input_gradient(const std::vector<double>& input,
                                       const std::vector<double>& angles) const;

    /// Parameter-shift rule: 0.5 * (p0(theta + pi/2) - p0(theta - pi/2)).
    double shift_gradient(const std::vector<double>& input, const std::vector<double>& angles,
                          int angle_index) const;
};

/// Uniform angles in [-pi, pi).
Tensor init_qcn_angles(const QcnCircuit& circuit, Rng& rng);

/// Tape op: rows [N,2^n] -> per-row [p(0),p(1)] at the measured wire.
/// Backward uses the adjoint pass for input rows and the parameter-shift
/// rule for the angle tensor.
Tensor qcn_forward_batch(const Tensor& rows, const Tensor& angles, const QcnCircuit& circuit);

} // namespace hsemis
