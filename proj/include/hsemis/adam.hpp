#pragma once

#include <vector>

#include "hsemis/tensor.hpp"

namespace hsemis {

/// Per-parameter Adam state with decoupled weight decay.
struct AdamState {
    long step = 0;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    double lr = 3e-4;
    double weight_decay = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// One bias-corrected Adam update plus lr*wd*theta decay, in place.
void adam_step(AdamState& state, std::vector<double>& param, const std::vector<double>& grad);

/// Optimizer over a fixed set of parameter tensors.
class Adam {
  public:
    Adam(std::vector<Tensor> params, double lr, double weight_decay);

    void step();
    void zero_grad();

    std::size_t size() const { return params_.size(); }

  private:
    std::vector<Tensor> params_;
    std::vector<AdamState> states_;
};

} // namespace hsemis
