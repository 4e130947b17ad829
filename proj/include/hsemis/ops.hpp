#pragma once

#include <vector>

#include "hsemis/tensor.hpp"

namespace hsemis {

// ---------------------------------------------------------------------------
// Elementwise arithmetic and shaping
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

/// Adds a [C] bias across the last dimension of x.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

Tensor reshape(const Tensor& x, Shape shape);

/// Concatenates along the last dimension; leading dimensions must match.
Tensor concat_last(const std::vector<Tensor>& parts);

/// Selects slices along dimension 1 (rank >= 2); repeated indices allowed.
Tensor select_dim1(const Tensor& x, const std::vector<int>& indices);

/// Contiguous slice along dimension 0.
Tensor slice_rows(const Tensor& x, int start, int count);

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);                      // [M,K]x[K,N]
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& bias);   // [N,K],[K,D],[D]

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double negative_slope);
Tensor tanh_op(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// ---------------------------------------------------------------------------
// Convolutions and pooling. Layout is NHWC; rank-3 inputs [H,W,C] are
// treated as a single sample and returned rank-3.
// ---------------------------------------------------------------------------

/// Discrete cross-correlation. kernel [kh,kw,Cin,Cout].
Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride, int padding);

/// Per-channel convolution. kernel [kh,kw,C].
Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel, int stride, int padding);

/// Fractionally-strided convolution. kernel [kh,kw,Cin,Cout];
/// H_out = (H-1)*stride - 2*padding + kh.
Tensor conv2d_transpose(const Tensor& x, const Tensor& kernel, int stride, int padding);

/// 2x2 max pool, stride 2; spatial dims must be even.
Tensor maxpool2x2(const Tensor& x);

/// Global average pool: [N,H,W,C] -> [N,C].
Tensor spatial_mean(const Tensor& x);

/// Adaptive average pool to 1x1: [N,H,W,C] -> [N,1,1,C].
Tensor spatial_mean_keep(const Tensor& x);

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Batch normalization over all dims but the last. In training mode uses
/// batch statistics and (optionally) folds them into the running buffers
/// with the given momentum; in eval mode uses the running buffers.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  std::vector<double>& running_mean, std::vector<double>& running_var,
                  bool training, bool update_running, double momentum, double eps);

/// Instance normalization over spatial dims per sample and channel.
Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

/// tanh(omega * row / ||row||_2) per row ([D] or [N,D]). Zero rows fault.
Tensor l2_tanh_rows(const Tensor& x, double omega);

// ---------------------------------------------------------------------------
// Losses (scalar outputs, mean reduction over all elements / batch rows)
// ---------------------------------------------------------------------------

/// Binary cross-entropy on probabilities; inputs clamped to [eps,1-eps],
/// eps = 1e-7. Targets must be 0/1 and shape-match.
Tensor loss_bce(const Tensor& pred, const Tensor& target);

/// BCE against a constant target for every element.
Tensor loss_bce_const(const Tensor& pred, double target);

Tensor loss_l1(const Tensor& a, const Tensor& b);
Tensor loss_mse(const Tensor& a, const Tensor& b);

/// Softmax + cross-entropy on logits [N,C] with integer labels.
Tensor softmax_ce(const Tensor& logits, const std::vector<int>& labels);

/// Cross-entropy on probability rows [N,C]; probabilities clamped at 1e-7.
Tensor loss_nll_probs(const Tensor& probs, const std::vector<int>& labels);

} // namespace hsemis
