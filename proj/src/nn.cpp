#include "hsemis/nn.hpp"

#include <cmath>

namespace hsemis {

std::vector<Tensor> Module::parameters() {
    std::vector<Tensor> out;
    visit_tensors("", [&](const std::string&, Tensor& t, bool trainable) {
        if (trainable) out.push_back(t);
    });
    return out;
}

std::vector<std::pair<std::string, Tensor>> Module::named_tensors() {
    std::vector<std::pair<std::string, Tensor>> out;
    visit_tensors("", [&](const std::string& name, Tensor& t, bool) { out.emplace_back(name, t); });
    return out;
}

Tensor he_uniform(Shape shape, int fan_in, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (double& x : v) x = rng.next_range(-limit, limit);
    return Tensor(std::move(shape), std::move(v), true);
}

// ---------------------------------------------------------------------------

Conv2d::Conv2d(int k, int cin, int cout, int stride_, int padding_, Rng& rng)
    : weight(he_uniform({k, k, cin, cout}, k * k * cin, rng)),
      bias(Tensor::zeros({cout}, true)),
      stride(stride_),
      padding(padding_) {}

Tensor Conv2d::forward(const Tensor& x) const {
    return add_channel_bias(conv2d(x, weight, stride, padding), bias);
}

void Conv2d::visit_tensors(const std::string& prefix, const TensorVisitor& fn) {
    fn(prefix + "weight", weight, true);
    fn(prefix + "bias", bias, true);
}

// ---------------------------------------------------------------------------

SepConv2d::SepConv2d(int k, int cin, int cout, int stride_, int padding_, Rng& rng)
    : depthwise(he_uniform({k, k, cin}, k * k, rng)),
      pointwise(he_uniform({1, 1, cin, cout}, cin, rng)),
      bias(Tensor::zeros({cout}, true)),
      stride(stride_),
      padding(padding_) {}

Tensor SepConv2d::forward(const Tensor& x) const {
    Tensor mid = depthwise_conv2d(x, depthwise, stride, padding);
    return add_channel_bias(conv2d(mid, pointwise, 1, 0), bias);
}

void SepConv2d::visit_tensors(const std::string& prefix, const TensorVisitor& fn) {
    fn(prefix + "depthwise", depthwise, true);
    fn(prefix + "pointwise", pointwise, true);
    fn(prefix + "bias", bias, true);
}

// ---------------------------------------------------------------------------

ConvTranspose2d::ConvTranspose2d(int k, int cin, int cout, int stride_, int padding_, Rng& rng)
    : weight(he_uniform({k, k, cin, cout}, k * k * cin, rng)),
      bias(Tensor::zeros({cout}, true)),
      stride(stride_),
      padding(padding_) {}

Tensor ConvTranspose2d::forward(const Tensor& x) const {
    return add_channel_bias(conv2d_transpose(x, weight, stride, padding), bias);
}

void ConvTranspose2d::visit_tensors(const std::string& prefix, const TensorVisitor& fn) {
    fn(prefix + "weight", weight, true);
    fn(prefix + "bias", bias, true);
}

// ---------------------------------------------------------------------------

Dense::Dense(int in, int out, Rng& rng)
    : weight(he_uniform({in, out}, in, rng)), bias(Tensor::zeros({out}, true)) {}

Tensor Dense::forward(const Tensor& x) const { return dense(x, weight, bias); }

void Dense::visit_tensors(const std::string& prefix, const TensorVisitor& fn) {
    fn(prefix + "weight", weight, true);
    fn(prefix + "bias", bias, true);
}

// ---------------------------------------------------------------------------

BatchNorm2d::BatchNorm2d(int channels)
    : gamma(Tensor::full({channels}, 1.0, true)),
      beta(Tensor::zeros({channels}, true)),
      running_mean(Tensor::zeros({channels})),
      running_var(Tensor::full({channels}, 1.0)) {}

Tensor BatchNorm2d::forward(const Tensor& x, bool training) const {
    auto& self = const_cast<BatchNorm2d&>(*this);
    return batch_norm(x, gamma, beta, self.running_mean.raw_values(), self.running_var.raw_values(),
                      training, training && update_running, momentum, eps);
}

void BatchNorm2d::visit_tensors(const std::string& prefix, const TensorVisitor& fn) {
    fn(prefix + "gamma", gamma, true);
    fn(prefix + "beta", beta, true);
    fn(prefix + "running_mean", running_mean, false);
    fn(prefix + "running_var", running_var, false);
}

// ---------------------------------------------------------------------------

InstanceNorm2d::InstanceNorm2d(int channels)
    : gamma(Tensor::full({channels}, 1.0, true)), beta(Tensor::zeros({channels}, true)) {}

Tensor InstanceNorm2d::forward(const Tensor& x) const { return instance_norm(x, gamma, beta, eps); }

void InstanceNorm2d::visit_tensors(const std::string& prefix, const TensorVisitor& fn) {
    fn(prefix + "gamma", gamma, true);
    fn(prefix + "beta", beta, true);
}

} // namespace hsemis
