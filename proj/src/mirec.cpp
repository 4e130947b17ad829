#include "hsemis/mirec.hpp"

#include <cmath>
#include <sstream>

#include "hsemis/adam.hpp"
#include "hsemis/ops.hpp"

namespace hsemis {

namespace {
const int kWidths[ReconstructionGenerator::kBlocks] = {16, 32, 64, 128, 256};

int int_log2(int v) {
    int k = 0;
    while ((1 << k) < v) ++k;
    return k;
}
} // namespace

// ---------------------------------------------------------------------------
// Blocks
// ---------------------------------------------------------------------------

AttentionGate::AttentionGate(int ch_up, int ch_skip, Rng& rng)
    : from_up(1, ch_up, ch_skip, 1, 0, rng), from_skip(1, ch_skip, ch_skip, 1, 0, rng) {}

Tensor AttentionGate::forward(const Tensor& upf, const Tensor& skip) const {
    Tensor gate = sigmoid(add(from_up.forward(upf), from_skip.forward(skip)));
    return mul(gate, skip);
}

void AttentionGate::visit_tensors(const std::string& prefix, const TensorVisitor& fn) {
    from_up.visit_tensors(prefix + "up.", fn);
    from_skip.visit_tensors(prefix + "skip.", fn);
}

ResidualSepBlock::ResidualSepBlock(int cin, int cout, Rng& rng)
    : conv1(3, cin, cout, 1, 1, rng),
      conv2(3, cout, cout, 1, 1, rng),
      bn1(cout),
      bn2(cout),
      shortcut(),
      has_shortcut(cin != cout) {
    if (has_shortcut) shortcut = Conv2d(1, cin, cout, 1, 0, rng);
}

Tensor ResidualSepBlock::forward(const Tensor& x, bool training) const {
    Tensor h = relu(bn1.forward(conv1.forward(x), training));
    h = bn2.forward(conv2.forward(h), training);
    Tensor sc = has_shortcut ? shortcut.forward(x) : x;
    return relu(add(h, sc));
}

void ResidualSepBlock::visit_tensors(const std::string& prefix, const TensorVisitor& fn) {
    conv1.visit_tensors(prefix + "conv1.", fn);
    conv2.visit_tensors(prefix + "conv2.", fn);
    bn1.visit_tensors(prefix + "bn1.", fn);
    bn2.visit_tensors(prefix + "bn2.", fn);
    if (has_shortcut) shortcut.visit_tensors(prefix + "shortcut.", fn);
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

ReconstructionGenerator::ReconstructionGenerator(const MirecConfig& cfg_, Rng& rng) : cfg(cfg_) {
    mask_token = Tensor::zeros({cfg.patch_len()}, true);
    int cin = cfg.channels;
    for (int k = 0; k < kBlocks; ++k) {
        enc.emplace_back(cin, kWidths[k], rng);
        cin = kWidths[k];
    }
    // Decoder runs k = 5..1; block k upsamples F_d^{k+1} and fuses F_e^{k-1}.
    for (int k = kBlocks - 1; k >= 0; --k) {
        const int ch_in = kWidths[k];                        // channels entering block k
        const int ch_up = k > 0 ? kWidths[k - 1] : kWidths[0] / 2;
        const int ch_skip = k > 0 ? kWidths[k - 1] : cfg.channels; // F_e^{k-1}; F_e^0 = input
        up.emplace_back(2, ch_in, ch_up, 2, 0, rng);
        att.emplace_back(ch_up, ch_skip, rng);
        dec.emplace_back(ch_up + ch_skip, ch_up, rng);
    }
    head = Conv2d(3, kWidths[0] / 2, cfg.channels, 1, 1, rng);
}

Tensor ReconstructionGenerator::forward(const Tensor& x, bool training) const {
    std::vector<Tensor> skips;
    skips.push_back(x); // F_e^0
    Tensor h = x;
    for (int k = 0; k < kBlocks; ++k) {
        h = maxpool2x2(enc[static_cast<std::size_t>(k)].forward(h, training));
        skips.push_back(h);
    }
    // h == F_e^5 == F_d^6
    for (int i = 0; i < kBlocks; ++i) {
        const int k = kBlocks - 1 - i; // paper block index minus one
        Tensor upsampled = up[static_cast<std::size_t>(i)].forward(h);
        Tensor gated = att[static_cast<std::size_t>(i)].forward(upsampled, skips[static_cast<std::size_t>(k)]);
        Tensor fused = concat_last({upsampled, gated});
        h = dec[static_cast<std::size_t>(i)].forward(fused, training);
    }
    return sigmoid(head.forward(h));
}

void ReconstructionGenerator::visit_tensors(const std::string& prefix, const TensorVisitor& fn) {
    fn(prefix + "mask_token", mask_token, true);
    for (int k = 0; k < kBlocks; ++k) {
        enc[static_cast<std::size_t>(k)].visit_tensors(prefix + "enc" + std::to_string(k + 1) + ".", fn);
        up[static_cast<std::size_t>(k)].visit_tensors(prefix + "up" + std::to_string(kBlocks - k) + ".", fn);
        att[static_cast<std::size_t>(k)].visit_tensors(prefix + "att" + std::to_string(kBlocks - k) + ".", fn);
        dec[static_cast<std::size_t>(k)].visit_tensors(prefix + "dec" + std::to_string(kBlocks - k) + ".", fn);
    }
    head.visit_tensors(prefix + "head.", fn);
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

ReconstructionDiscriminator::ReconstructionDiscriminator(const MirecConfig& cfg_, Rng& rng) : cfg(cfg_) {
    const int down_blocks = int_log2(cfg.patch);
    int cin = cfg.channels;
    for (int k = 0; k < 5; ++k) {
        const int stride = k < down_blocks ? 2 : 1;
        conv.emplace_back(3, cin, kWidths[k], stride, 1, rng);
        norm.emplace_back(kWidths[k]);
        cin = kWidths[k];
    }
    head = Conv2d(1, cin, 1, 1, 0, rng);
}

Tensor ReconstructionDiscriminator::forward(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t k = 0; k < conv.size(); ++k) {
        h = leaky_relu(norm[k].forward(conv[k].forward(h)), 0.2);
    }
    Tensor probs = sigmoid(head.forward(h)); // [N, g, g, 1]
    const int n = probs.dim(0);
    return reshape(probs, {n, cfg.patch_count()});
}

void ReconstructionDiscriminator::visit_tensors(const std::string& prefix, const TensorVisitor& fn) {
    for (std::size_t k = 0; k < conv.size(); ++k) {
        conv[k].visit_tensors(prefix + "conv" + std::to_string(k + 1) + ".", fn);
        norm[k].visit_tensors(prefix + "norm" + std::to_string(k + 1) + ".", fn);
    }
    head.visit_tensors(prefix + "head.", fn);
}

// ---------------------------------------------------------------------------
// Patch-grid tape ops
// ---------------------------------------------------------------------------

namespace {

struct Grid {
    int n, h, w, c, p, gx, gy, len;
};

Grid grid_of(const char* op, const Tensor& images, int patch) {
    if (images.rank() != 4) throw ShapeError(std::string(op) + ": expected [N,H,W,C]");
    Grid g;
    g.n = images.dim(0);
    g.h = images.dim(1);
    g.w = images.dim(2);
    g.c = images.dim(3);
    g.p = patch;
    if (g.h % patch != 0 || g.w % patch != 0) {
        throw std::invalid_argument(std::string(op) + ": image not divisible by patch size");
    }
    g.gy = g.h / patch;
    g.gx = g.w / patch;
    g.len = patch * patch * g.c;
    return g;
}

std::int64_t pixel_index(const Grid& g, int n, int patch_idx, int offset) {
    const int py = patch_idx / g.gx, px = patch_idx % g.gx;
    const int within = offset / g.c;
    const int c = offset % g.c;
    const int y = within / g.p, x = within % g.p;
    return ((static_cast<std::int64_t>(n) * g.h + py * g.p + y) * g.w + px * g.p + x) * g.c + c;
}

} // namespace

Tensor assemble_masked_input(const Tensor& images, const std::vector<MaskPlan>& plans,
                             const Tensor& mask_token, int patch) {
    const Grid g = grid_of("assemble_masked_input", images, patch);
    if (static_cast<int>(plans.size()) != g.n) {
        throw std::invalid_argument("assemble_masked_input: one plan per image required");
    }
    if (mask_token.numel() != g.len) {
        throw ShapeError("assemble_masked_input: mask token length mismatch");
    }
    const auto pe = sinusoidal_positional_encoding(g.gy * g.gx, g.len);
    std::vector<double> out(images.values());
    const auto& tok = mask_token.values();
    auto masked_flags = std::make_shared<std::vector<std::vector<int>>>();
    masked_flags->reserve(static_cast<std::size_t>(g.n));
    for (int n = 0; n < g.n; ++n) {
        masked_flags->push_back(plans[static_cast<std::size_t>(n)].masked);
        for (int i : plans[static_cast<std::size_t>(n)].masked) {
            for (int off = 0; off < g.len; ++off) {
                out[static_cast<std::size_t>(pixel_index(g, n, i, off))] = tok[static_cast<std::size_t>(off)];
            }
        }
        for (int i = 0; i < g.gy * g.gx; ++i) {
            const auto& enc = pe[static_cast<std::size_t>(i)];
            for (int off = 0; off < g.len; ++off) {
                out[static_cast<std::size_t>(pixel_index(g, n, i, off))] += enc[static_cast<std::size_t>(off)];
            }
        }
    }
    return make_op_result("assemble_masked_input", images.shape(), std::move(out),
                          {images.detach(), mask_token}, [g, masked_flags](TensorNode& node) {
                              auto& ptok = node.parents[1];
                              if (!ptok->requires_grad) return;
                              ptok->ensure_grad();
                              for (int n = 0; n < g.n; ++n) {
                                  for (int i : (*masked_flags)[static_cast<std::size_t>(n)]) {
                                      for (int off = 0; off < g.len; ++off) {
                                          ptok->grad[static_cast<std::size_t>(off)] +=
                                              node.grad[static_cast<std::size_t>(pixel_index(g, n, i, off))];
                                      }
                                  }
                              }
                          });
}

Tensor gather_patches(const Tensor& images, const std::vector<std::vector<int>>& indices, int patch) {
    const Grid g = grid_of("gather_patches", images, patch);
    if (static_cast<int>(indices.size()) != g.n) {
        throw std::invalid_argument("gather_patches: one index list per image required");
    }
    const std::size_t k = indices[0].size();
    for (const auto& idx : indices) {
        if (idx.size() != k) throw std::invalid_argument("gather_patches: ragged index lists");
    }
    std::vector<double> out(static_cast<std::size_t>(g.n) * k * g.len);
    const auto& iv = images.values();
    for (int n = 0; n < g.n; ++n) {
        for (std::size_t j = 0; j < k; ++j) {
            double* dst = out.data() + (static_cast<std::size_t>(n) * k + j) * g.len;
            for (int off = 0; off < g.len; ++off) {
                dst[off] = iv[static_cast<std::size_t>(
                    pixel_index(g, n, indices[static_cast<std::size_t>(n)][j], off))];
            }
        }
    }
    return make_op_result("gather_patches", {g.n, static_cast<int>(k), g.len}, std::move(out), {images},
                          [g, indices, k](TensorNode& node) {
                              auto& pi = node.parents[0];
                              if (!pi->requires_grad) return;
                              pi->ensure_grad();
                              for (int n = 0; n < g.n; ++n) {
                                  for (std::size_t j = 0; j < k; ++j) {
                                      const double* src =
                                          node.grad.data() + (static_cast<std::size_t>(n) * k + j) * g.len;
                                      for (int off = 0; off < g.len; ++off) {
                                          pi->grad[static_cast<std::size_t>(pixel_index(
                                              g, n, indices[static_cast<std::size_t>(n)][j], off))] +=
                                              src[off];
                                      }
                                  }
                              }
                          });
}

Tensor compose_repaired(const Tensor& images, const Tensor& patches,
                        const std::vector<std::vector<int>>& indices, int patch) {
    const Grid g = grid_of("compose_repaired", images, patch);
    if (static_cast<int>(indices.size()) != g.n) {
        throw std::invalid_argument("compose_repaired: one index list per image required");
    }
    if (patches.rank() != 3 || patches.dim(0) != g.n || patches.dim(2) != g.len) {
        throw ShapeError("compose_repaired: patches must be [N,k," + std::to_string(g.len) + "]");
    }
    const int k = patches.dim(1);
    for (const auto& idx : indices) {
        if (static_cast<int>(idx.size()) != k) {
            throw std::invalid_argument("compose_repaired: index count mismatch with patches");
        }
    }
    std::vector<double> out(images.values());
    const auto& pv = patches.values();
    for (int n = 0; n < g.n; ++n) {
        for (int j = 0; j < k; ++j) {
            const double* src = pv.data() + (static_cast<std::int64_t>(n) * k + j) * g.len;
            for (int off = 0; off < g.len; ++off) {
                out[static_cast<std::size_t>(
                    pixel_index(g, n, indices[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)],
                                off))] = src[off];
            }
        }
    }
    return make_op_result("compose_repaired", images.shape(), std::move(out),
                          {images.detach(), patches}, [g, indices, k](TensorNode& node) {
                              auto& pp = node.parents[1];
                              if (!pp->requires_grad) return;
                              pp->ensure_grad();
                              for (int n = 0; n < g.n; ++n) {
                                  for (int j = 0; j < k; ++j) {
                                      double* dst =
                                          pp->grad.data() + (static_cast<std::int64_t>(n) * k + j) * g.len;
                                      for (int off = 0; off < g.len; ++off) {
                                          dst[off] += node.grad[static_cast<std::size_t>(pixel_index(
                                              g, n,
                                              indices[static_cast<std::size_t>(n)]
                                                     [static_cast<std::size_t>(j)],
                                              off))];
                                      }
                                  }
                              }
                          });
}

Tensor select_per_row(const Tensor& x, const std::vector<std::vector<int>>& indices) {
    if (x.rank() != 2 && x.rank() != 3) throw ShapeError("select_per_row: expected rank-2 or rank-3");
    const int n = x.dim(0), m = x.dim(1);
    const std::int64_t inner = x.rank() == 3 ? x.dim(2) : 1;
    if (static_cast<int>(indices.size()) != n) {
        throw std::invalid_argument("select_per_row: one index list per row required");
    }
    const std::size_t k = indices[0].size();
    for (const auto& idx : indices) {
        if (idx.size() != k) throw std::invalid_argument("select_per_row: ragged index lists");
        for (int i : idx) {
            if (i < 0 || i >= m) throw std::invalid_argument("select_per_row: index out of range");
        }
    }
    Shape out_shape = x.shape();
    out_shape[1] = static_cast<int>(k);
    std::vector<double> out(static_cast<std::size_t>(n) * k * inner);
    const auto& xv = x.values();
    for (int i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            const double* src =
                xv.data() + (static_cast<std::int64_t>(i) * m + indices[static_cast<std::size_t>(i)][j]) * inner;
            double* dst = out.data() + (static_cast<std::size_t>(i) * k + j) * inner;
            for (std::int64_t t = 0; t < inner; ++t) dst[t] = src[t];
        }
    }
    return make_op_result("select_per_row", std::move(out_shape), std::move(out), {x},
                          [indices, n, m, k, inner](TensorNode& node) {
                              auto& px = node.parents[0];
                              if (!px->requires_grad) return;
                              px->ensure_grad();
                              for (int i = 0; i < n; ++i) {
                                  for (std::size_t j = 0; j < k; ++j) {
                                      const double* src =
                                          node.grad.data() + (static_cast<std::size_t>(i) * k + j) * inner;
                                      double* dst = px->grad.data() +
                                                    (static_cast<std::int64_t>(i) * m +
                                                     indices[static_cast<std::size_t>(i)][j]) *
                                                        inner;
                                      for (std::int64_t t = 0; t < inner; ++t) dst[t] += src[t];
                                  }
                              }
                          });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

namespace {
void require_probs(const char* op, const Tensor& t) {
    for (double v : t.values()) {
        if (v < 0.0 || v > 1.0) {
            throw std::invalid_argument(std::string(op) + ": discriminator outputs must lie in [0,1]");
        }
    }
}
} // namespace

Tensor generator_loss(const Tensor& d_out_on_fake, const Tensor& recon_masked,
                      const Tensor& real_masked, double alpha) {
    if (alpha < 0.0) throw std::invalid_argument("generator_loss: alpha must be nonnegative");
    require_probs("generator_loss", d_out_on_fake);
    Tensor adv = loss_bce_const(d_out_on_fake, 1.0);
    Tensor rec = loss_l1(recon_masked, real_masked);
    return add(adv, mul_scalar(rec, alpha));
}

Tensor discriminator_loss(const Tensor& d_out_on_real, const Tensor& d_out_on_fake, double alpha) {
    require_probs("discriminator_loss", d_out_on_real);
    require_probs("discriminator_loss", d_out_on_fake);
    Tensor real_term = mul_scalar(loss_bce_const(d_out_on_real, 1.0), 0.5);
    Tensor fake_term = mul_scalar(loss_bce_const(d_out_on_fake, 0.0), 0.5 * alpha);
    return add(real_term, fake_term);
}

Tensor mirec_total_loss(const Tensor& gen_loss, const Tensor& dis_loss) {
    return add(gen_loss, dis_loss);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

TrainedMirec train_mirec(const std::vector<Tensor>& images, const MirecConfig& cfg) {
    if (images.empty()) throw std::invalid_argument("train_mirec: empty dataset");
    for (const Tensor& img : images) {
        if (img.rank() != 3 || img.dim(0) != cfg.image_size || img.dim(1) != cfg.image_size ||
            img.dim(2) != cfg.channels) {
            throw ShapeError("train_mirec: image shape " + shape_str(img.shape()) +
                             " does not match config");
        }
    }
    Rng rng(cfg.seed);
    Rng init_rng = rng.fork(1);
    Rng mask_rng = rng.fork(2);
    Rng order_rng = rng.fork(3);

    TrainedMirec result;
    result.generator = ReconstructionGenerator(cfg, init_rng);
    result.discriminator = ReconstructionDiscriminator(cfg, init_rng);

    Adam opt_gen(result.generator.parameters(), cfg.lr, cfg.weight_decay);
    Adam opt_dis(result.discriminator.parameters(), cfg.lr, cfg.weight_decay);

    const int batch = std::min<int>(cfg.batch, static_cast<int>(images.size()));
    std::vector<int> order(images.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    order_rng.shuffle(order);
    std::size_t cursor = 0;

    for (long step = 0; step < cfg.steps; ++step) {
        // batch assembly: cycle a reshuffled order
        std::vector<double> flat;
        flat.reserve(static_cast<std::size_t>(batch) * cfg.image_size * cfg.image_size * cfg.channels);
        std::vector<MaskPlan> plans;
        for (int b = 0; b < batch; ++b) {
            if (cursor == order.size()) {
                order_rng.shuffle(order);
                cursor = 0;
            }
            const Tensor& img = images[static_cast<std::size_t>(order[cursor++])];
            flat.insert(flat.end(), img.values().begin(), img.values().end());
            plans.push_back(sample_mask(cfg.patch_count(), cfg.mask_ratio, mask_rng.next_u64()));
        }
        Tensor batch_images({batch, cfg.image_size, cfg.image_size, cfg.channels}, std::move(flat));
        std::vector<std::vector<int>> masked_idx;
        for (const auto& p : plans) masked_idx.push_back(p.masked);

        Tensor real_masked = gather_patches(batch_images, masked_idx, cfg.patch);

        // generator step
        opt_gen.zero_grad();
        opt_dis.zero_grad();
        Tensor gen_in = assemble_masked_input(batch_images, plans, result.generator.mask_token, cfg.patch);
        Tensor gen_out = result.generator.forward(gen_in, true);
        Tensor recon_masked = gather_patches(gen_out, masked_idx, cfg.patch);
        Tensor x_rep = compose_repaired(batch_images, recon_masked, masked_idx, cfg.patch);
        Tensor d_fake_all = result.discriminator.forward(x_rep);
        Tensor d_fake = select_per_row(d_fake_all, masked_idx);
        Tensor l1_term = loss_l1(recon_masked, real_masked);
        Tensor g_loss = add(loss_bce_const(d_fake, 1.0), mul_scalar(l1_term, cfg.alpha));
        g_loss.backward();
        opt_gen.step();

        // discriminator step (generator output detached)
        opt_gen.zero_grad();
        opt_dis.zero_grad();
        Tensor x_rep_det = compose_repaired(batch_images, recon_masked.detach(), masked_idx, cfg.patch);
        Tensor d_real = select_per_row(result.discriminator.forward(batch_images), masked_idx);
        Tensor d_fake2 = select_per_row(result.discriminator.forward(x_rep_det), masked_idx);
        Tensor d_loss = discriminator_loss(d_real, d_fake2, cfg.alpha);
        d_loss.backward();
        opt_dis.step();

        result.history.push_back({step, g_loss.item(), d_loss.item(), l1_term.item()});
    }
    return result;
}

Tensor reconstruct_image(const ReconstructionGenerator& gen, const Tensor& image,
                         const MaskPlan& plan) {
    NoGradGuard guard;
    const int hw = gen.cfg.image_size;
    Tensor batch = reshape(image, {1, hw, hw, gen.cfg.channels});
    Tensor gen_in = assemble_masked_input(batch, {plan}, gen.mask_token, gen.cfg.patch);
    Tensor out = gen.forward(gen_in, false);
    Tensor img3 = reshape(out, {hw, hw, gen.cfg.channels});
    // splice: visible positions keep the source bit-exactly
    PatchSet original = patchify(image, gen.cfg.patch);
    PatchSet recon = patchify(img3, gen.cfg.patch);
    std::vector<std::vector<double>> rec_patches;
    rec_patches.reserve(plan.masked.size());
    for (int idx : plan.masked) rec_patches.push_back(recon.patches[static_cast<std::size_t>(idx)]);
    return repair(original, rec_patches, plan);
}

std::string mirec_history_csv(const std::vector<MirecHistoryRow>& rows) {
    std::ostringstream os;
    os << "step,gen_loss,dis_loss,l1\n";
    os.precision(10);
    for (const auto& r : rows) {
        os << r.step << ',' << r.gen_loss << ',' << r.dis_loss << ',' << r.l1 << '\n';
    }
    return os.str();
}

} // namespace hsemis
