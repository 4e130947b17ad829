#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hsemis/error.hpp"

namespace hsemis {

using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad; // empty until touched by backward / accumulation
    bool requires_grad = false;
    bool backward_ran = false;
    std::string op; // producing operation, for diagnostics
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Reads this->grad and accumulates into parents' grads.
    std::function<void(TensorNode&)> backward_fn;

    void ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), 0.0);
    }
};

/// Dense row-major n-d array with reverse-mode gradient tracking.
///
/// Copying a Tensor copies a handle to shared storage; ops produce fresh
/// nodes. Values are immutable after construction except through recorded
/// operations (or the explicit raw mutators used by optimizers).
class Tensor {
  public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(node_->values.size()); }

    const std::vector<double>& values() const { return node_->values; }
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool flag);

    bool has_grad() const { return node_ && !node_->grad.empty(); }
    const std::vector<double>& grad() const;
    void zero_grad();

    /// Reverse-accumulate d(this)/d(leaf) for every reachable requires_grad
    /// leaf. `this` must be scalar. A second call on the same node throws.
    void backward() const;

    /// Same values, detached from the tape.
    Tensor detach() const;

    /// Deep copy of values (detached, no grad).
    Tensor clone() const;

    // Raw access for optimizers, EMA and serialization. Bypasses the tape.
    std::vector<double>& raw_values() { return node_->values; }
    const std::shared_ptr<TensorNode>& node() const { return node_; }

  private:
    std::shared_ptr<TensorNode> node_;
};

/// Scoped disable of gradient recording (teacher passes, evaluation).
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

/// Throws NumericFault if any value is non-finite.
void check_finite(const char* op, const std::vector<double>& values);

/// Builds an op result node. Parents are recorded (and backward_fn kept)
/// only when grad mode is on and some parent requires grad.
Tensor make_op_result(const char* op, Shape shape, std::vector<double> values,
                      std::vector<Tensor> inputs,
                      std::function<void(TensorNode&)> backward_fn);

} // namespace hsemis
