#include "hsemis/adam.hpp"

#include <cmath>

namespace hsemis {

void adam_step(AdamState& state, std::vector<double>& param, const std::vector<double>& grad) {
    if (param.size() != grad.size()) {
        throw ShapeError("adam_step: gradient size " + std::to_string(grad.size()) +
                         " != parameter size " + std::to_string(param.size()));
    }
    if (state.first_moment.empty()) {
        state.first_moment.assign(param.size(), 0.0);
        state.second_moment.assign(param.size(), 0.0);
    }
    if (state.first_moment.size() != param.size()) {
        throw ShapeError("adam_step: moment buffers do not match parameter size");
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        state.first_moment[i] = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
        state.second_moment[i] = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
        const double mhat = state.first_moment[i] / bc1;
        const double vhat = state.second_moment[i] / bc2;
        const double theta = param[i];
        param[i] = theta - state.lr * mhat / (std::sqrt(vhat) + state.epsilon) -
                   state.lr * state.weight_decay * theta;
    }
}

Adam::Adam(std::vector<Tensor> params, double lr, double weight_decay) : params_(std::move(params)) {
    states_.resize(params_.size());
    for (auto& st : states_) {
        st.lr = lr;
        st.weight_decay = weight_decay;
    }
}

void Adam::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!params_[i].has_grad()) continue; // parameter untouched this step
        adam_step(states_[i], params_[i].raw_values(), params_[i].grad());
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

} // namespace hsemis
