#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hsemis/nn.hpp"
#include "hsemis/patches.hpp"
#include "hsemis/tensor.hpp"

namespace hsemis {

struct MirecConfig {
    int image_size = 32;
    int channels = 1;
    int patch = 8;
    double mask_ratio = 0.75;
    double alpha = 1.0;
    int steps = 1200;
    int batch = 4;
    double lr = 3e-4;
    double weight_decay = 3e-4;
    std::uint64_t seed = 42;

    int patches_per_side() const { return image_size / patch; }
    int patch_count() const { return patches_per_side() * patches_per_side(); }
    int patch_len() const { return patch * patch * channels; }
};

/// sigmoid(conv1x1(up) + conv1x1(skip)) elementwise-multiplying the skip.
struct AttentionGate : Module {
    Conv2d from_up;
    Conv2d from_skip;

    AttentionGate() = default;
    AttentionGate(int ch_up, int ch_skip, Rng& rng);
    Tensor forward(const Tensor& up, const Tensor& skip) const;
    void visit_tensors(const std::string& prefix, const TensorVisitor& fn) override;
};

struct ResidualSepBlock : Module {
    SepConv2d conv1, conv2;
    BatchNorm2d bn1, bn2;
    Conv2d shortcut; // 1x1, present when cin != cout
    bool has_shortcut = false;

    ResidualSepBlock() = default;
    ResidualSepBlock(int cin, int cout, Rng& rng);
    Tensor forward(const Tensor& x, bool training) const;
    void visit_tensors(const std::string& prefix, const TensorVisitor& fn) override;
};

/// Five residual encoder blocks (each halving resolution) and five decoder
/// blocks (transpose-conv upsampling, gated skip fusion, residual refine).
struct ReconstructionGenerator : Module {
    static constexpr int kBlocks = 5;

    MirecConfig cfg;
    Tensor mask_token; // [p*p*ch], learned
    std::vector<ResidualSepBlock> enc;
    std::vector<ConvTranspose2d> up;
    std::vector<AttentionGate> att;
    std::vector<ResidualSepBlock> dec;
    Conv2d head;

    ReconstructionGenerator() = default;
    ReconstructionGenerator(const MirecConfig& cfg, Rng& rng);

    /// [N,H,W,C] -> [N,H,W,C], values in (0,1).
    Tensor forward(const Tensor& x, bool training) const;
    void visit_tensors(const std::string& prefix, const TensorVisitor& fn) override;
};

/// Five conv blocks (instance norm, leaky ReLU 0.2) downsampling to the
/// patch grid, sigmoid head: one real/fake probability per patch.
struct ReconstructionDiscriminator : Module {
    MirecConfig cfg;
    std::vector<Conv2d> conv;
    std::vector<InstanceNorm2d> norm;
    Conv2d head;

    ReconstructionDiscriminator() = default;
    ReconstructionDiscriminator(const MirecConfig& cfg, Rng& rng);

    /// [N,H,W,C] -> [N, N_p] probabilities in [0,1].
    Tensor forward(const Tensor& x) const;
    void visit_tensors(const std::string& prefix, const TensorVisitor& fn) override;
};

// ---------------------------------------------------------------------------
// Tape ops over the patch grid
// ---------------------------------------------------------------------------

/// Builds the generator input batch: visible patches carry image content,
/// masked ones the learned token, positional encodings added everywhere.
/// The image batch is treated as constant; gradients reach only the token.
Tensor assemble_masked_input(const Tensor& images, const std::vector<MaskPlan>& plans,
                             const Tensor& mask_token, int patch);

/// Gathers per-sample patch vectors: [N,H,W,C] -> [N, k, p*p*C].
Tensor gather_patches(const Tensor& images, const std::vector<std::vector<int>>& indices, int patch);

/// Splices reconstructed patches into the images at the masked positions
/// (x_rep). Visible content is constant; gradients flow to the patches.
Tensor compose_repaired(const Tensor& images, const Tensor& patches,
                        const std::vector<std::vector<int>>& indices, int patch);

/// Per-sample selection along dim 1: [N,M] or [N,M,L] with indices[n].
Tensor select_per_row(const Tensor& x, const std::vector<std::vector<int>>& indices);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// BCE(d_fake, 1) + alpha * mean-L1(recon - real).
Tensor generator_loss(const Tensor& d_out_on_fake, const Tensor& recon_masked,
                      const Tensor& real_masked, double alpha);

/// 0.5*BCE(d_real, 1) + alpha * 0.5*BCE(d_fake, 0). alpha scales only the
/// fake term.
Tensor discriminator_loss(const Tensor& d_out_on_real, const Tensor& d_out_on_fake, double alpha);

Tensor mirec_total_loss(const Tensor& gen_loss, const Tensor& dis_loss);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct MirecHistoryRow {
    long step;
    double gen_loss;
    double dis_loss;
    double l1;
};

struct TrainedMirec {
    ReconstructionGenerator generator;
    ReconstructionDiscriminator discriminator;
    std::vector<MirecHistoryRow> history;
};

/// Alternating generator/discriminator Adam steps over the image set.
TrainedMirec train_mirec(const std::vector<Tensor>& images, const MirecConfig& cfg);

/// Eval-mode reconstruction of one image under the given plan; returns the
/// repaired image (visible content exact, masked content generated).
Tensor reconstruct_image(const ReconstructionGenerator& gen, const Tensor& image,
                         const MaskPlan& plan);

std::string mirec_history_csv(const std::vector<MirecHistoryRow>& rows);

} // namespace hsemis
