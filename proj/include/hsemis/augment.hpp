#pragma once

#include <vector>

#include "hsemis/rng.hpp"
#include "hsemis/tensor.hpp"

namespace hsemis {

// Weak: flips with probability 0.5 plus translation up to 0.2 of each axis.
// Strong: RandAugment-style menu of invert / shear / scale / translate /
// brightness / rotation / blur, a fixed number of ops per sample.

struct AugOp {
    enum class Kind { Invert, ShearX, ShearY, Scale, TranslateX, TranslateY, Brightness, Rotate, Blur };
    Kind kind;
    double magnitude; // kernel size for Blur, unused for Invert
};

Tensor flip_horizontal(const Tensor& img);
Tensor flip_vertical(const Tensor& img);

/// Affine resample with bilinear interpolation and zero padding. The matrix
/// maps output pixel coordinates (centered) to input coordinates.
Tensor affine_sample(const Tensor& img, const double m[4], double tx, double ty);

Tensor gaussian_blur(const Tensor& img, int kernel);

Tensor apply_aug_op(const Tensor& img, const AugOp& op);

/// Samples `count` ops from the strong menu with magnitudes inside the
/// declared ranges.
std::vector<AugOp> sample_strong_ops(Rng& rng, int count);

Tensor weak_augment(const Tensor& img, Rng& rng);
Tensor strong_augment(const Tensor& img, Rng& rng, int ops_per_sample);

} // namespace hsemis
