#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hsemis/ops.hpp"
#include "hsemis/rng.hpp"
#include "hsemis/tensor.hpp"

namespace hsemis {

/// Callback over a module's named tensors. `trainable` is false for buffers
/// (running statistics), which are checkpointed and EMA-averaged but never
/// handed to the optimizer.
using TensorVisitor = std::function<void(const std::string& name, Tensor& t, bool trainable)>;

struct Module {
    virtual ~Module() = default;
    virtual void visit_tensors(const std::string& prefix, const TensorVisitor& fn) = 0;

    std::vector<Tensor> parameters();
    std::vector<std::pair<std::string, Tensor>> named_tensors();
};

// He-uniform fan-in initialization.
Tensor he_uniform(Shape shape, int fan_in, Rng& rng);

struct Conv2d : Module {
    Tensor weight; // [k,k,Cin,Cout]
    Tensor bias;   // [Cout]
    int stride = 1;
    int padding = 0;

    Conv2d() = default;
    Conv2d(int k, int cin, int cout, int stride, int padding, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void visit_tensors(const std::string& prefix, const TensorVisitor& fn) override;
};

/// Depthwise 3x3 followed by pointwise 1x1.
struct SepConv2d : Module {
    Tensor depthwise; // [k,k,Cin]
    Tensor pointwise; // [1,1,Cin,Cout]
    Tensor bias;      // [Cout]
    int stride = 1;
    int padding = 0;

    SepConv2d() = default;
    SepConv2d(int k, int cin, int cout, int stride, int padding, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void visit_tensors(const std::string& prefix, const TensorVisitor& fn) override;
};

struct ConvTranspose2d : Module {
    Tensor weight; // [k,k,Cin,Cout]
    Tensor bias;   // [Cout]
    int stride = 1;
    int padding = 0;

    ConvTranspose2d() = default;
    ConvTranspose2d(int k, int cin, int cout, int stride, int padding, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void visit_tensors(const std::string& prefix, const TensorVisitor& fn) override;
};

struct Dense : Module {
    Tensor weight; // [In,Out]
    Tensor bias;   // [Out]

    Dense() = default;
    Dense(int in, int out, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void visit_tensors(const std::string& prefix, const TensorVisitor& fn) override;
};

struct BatchNorm2d : Module {
    Tensor gamma;
    Tensor beta;
    Tensor running_mean; // buffer
    Tensor running_var;  // buffer
    double momentum = 0.9;
    double eps = 1e-5;
    bool update_running = true;

    BatchNorm2d() = default;
    explicit BatchNorm2d(int channels);
    Tensor forward(const Tensor& x, bool training) const;
    void visit_tensors(const std::string& prefix, const TensorVisitor& fn) override;
};

struct InstanceNorm2d : Module {
    Tensor gamma;
    Tensor beta;
    double eps = 1e-5;

    InstanceNorm2d() = default;
    explicit InstanceNorm2d(int channels);
    Tensor forward(const Tensor& x) const;
    void visit_tensors(const std::string& prefix, const TensorVisitor& fn) override;
};

} // namespace hsemis
