#pragma once

#include <cstdint>
#include <vector>

#include "hsemis/tensor.hpp"

namespace hsemis {

/// An image cut into N_p non-overlapping p x p patches (row-major patch
/// order) with fixed sinusoidal positional encodings.
struct PatchSet {
    int patch_size = 0;
    int h = 0, w = 0, ch = 0;
    std::vector<std::vector<double>> patches; // raw z_i, length p*p*ch each
    std::vector<std::vector<double>> pos_enc; // PE_i, same shape

    int patch_count() const { return static_cast<int>(patches.size()); }
    int patch_len() const { return patch_size * patch_size * ch; }
    /// z_i + PE_i.
    std::vector<double> encoded(int i) const;
};

/// Disjoint (masked, visible) partition of patch indices.
struct MaskPlan {
    std::vector<int> masked;
    std::vector<int> visible;
    double ratio = 0.0;
    std::uint64_t seed = 0;
};

std::vector<std::vector<double>> sinusoidal_positional_encoding(int count, int length);

PatchSet patchify(const Tensor& image, int p);

Tensor unpatchify(const PatchSet& ps);

/// Uniform sample of round(ratio * n_patches) masked indices, without
/// replacement, deterministic in the seed.
MaskPlan sample_mask(int n_patches, double ratio, std::uint64_t seed);

/// Visible positions keep original content bit-exactly; masked positions
/// take the reconstructions (one vector per masked index, in plan order).
Tensor repair(const PatchSet& original, const std::vector<std::vector<double>>& reconstructed,
              const MaskPlan& plan);

} // namespace hsemis
