#include "hsemis/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace hsemis {

namespace {
thread_local int g_no_grad_depth = 0;
}

bool grad_enabled() { return g_no_grad_depth == 0; }

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

void check_finite(const char* op, const std::vector<double>& values) {
    for (double v : values) {
        if (!std::isfinite(v)) throw NumericFault(std::string(op) + ": non-finite value in result");
    }
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    for (int d : shape) {
        if (d <= 0) throw ShapeError("tensor: dimension sizes must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
        throw ShapeError("tensor: shape " + shape_str(shape) + " does not match value count " +
                         std::to_string(values.size()));
    }
    node_ = std::make_shared<TensorNode>();
    node_->shape = std::move(shape);
    node_->values = std::move(values);
    node_->requires_grad = requires_grad;
    node_->op = "leaf";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)), 0.0);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)), value);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item: tensor has " + std::to_string(numel()) + " elements");
    return node_->values[0];
}

Tensor& Tensor::set_requires_grad(bool flag) {
    node_->requires_grad = flag;
    return *this;
}

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) throw StateError("grad: no gradient has been accumulated for this tensor");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const {
    Tensor out;
    out.node_ = std::make_shared<TensorNode>();
    out.node_->shape = node_->shape;
    out.node_->values = node_->values;
    out.node_->op = "detach";
    return out;
}

Tensor Tensor::clone() const { return detach(); }

void Tensor::backward() const {
    if (!node_) throw StateError("backward: undefined tensor");
    if (numel() != 1) throw ShapeError("backward: loss must be scalar, got shape " + shape_str(shape()));
    if (!node_->requires_grad) {
        throw StateError("backward: tensor was not produced by recorded operations");
    }
    if (node_->backward_ran) throw StateError("backward: already ran on this node; rebuild the graph first");
    node_->backward_ran = true;

    // Iterative DFS post-order; reversed it yields root-first topological order.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [cur, idx] = stack.back();
        if (idx < cur->parents.size()) {
            TensorNode* next = cur->parents[idx].get();
            ++idx;
            if (next->backward_fn && visited.insert(next).second) stack.emplace_back(next, 0);
        } else {
            order.push_back(cur);
            stack.pop_back();
        }
    }

    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* cur = *it;
        if (cur->backward_fn) cur->backward_fn(*cur);
    }
}

Tensor make_op_result(const char* op, Shape shape, std::vector<double> values,
                      std::vector<Tensor> inputs, std::function<void(TensorNode&)> backward_fn) {
    check_finite(op, values);
    Tensor out(std::move(shape), std::move(values), false);
    TensorNode& node = *out.node();
    node.op = op;
    bool needs_grad = false;
    if (grad_enabled()) {
        for (const Tensor& t : inputs) {
            if (t.defined() && t.requires_grad()) {
                needs_grad = true;
                break;
            }
        }
    }
    if (needs_grad) {
        node.requires_grad = true;
        node.parents.reserve(inputs.size());
        for (const Tensor& t : inputs) node.parents.push_back(t.node());
        node.backward_fn = std::move(backward_fn);
    }
    return out;
}

} // namespace hsemis
