#include "hsemis/patches.hpp"

#include <algorithm>
#include <cmath>

#include "hsemis/rng.hpp"

namespace hsemis {

std::vector<double> PatchSet::encoded(int i) const {
    std::vector<double> out = patches[static_cast<std::size_t>(i)];
    const auto& pe = pos_enc[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += pe[j];
    return out;
}

std::vector<std::vector<double>> sinusoidal_positional_encoding(int count, int length) {
    std::vector<std::vector<double>> pe(static_cast<std::size_t>(count),
                                        std::vector<double>(static_cast<std::size_t>(length)));
    for (int i = 0; i < count; ++i) {
        for (int j = 0; j < length; ++j) {
            const double freq = std::pow(10000.0, -static_cast<double>(j - (j % 2)) / length);
            const double arg = static_cast<double>(i) * freq;
            pe[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                (j % 2 == 0) ? std::sin(arg) : std::cos(arg);
        }
    }
    return pe;
}

PatchSet patchify(const Tensor& image, int p) {
    if (image.rank() != 3) throw ShapeError("patchify: expected [h,w,ch], got " + shape_str(image.shape()));
    if (p <= 0) throw std::invalid_argument("patchify: patch size must be positive");
    const int h = image.dim(0), w = image.dim(1), ch = image.dim(2);
    if (h % p != 0 || w % p != 0) {
        throw std::invalid_argument("patchify: image " + shape_str(image.shape()) +
                                    " not divisible by patch size " + std::to_string(p));
    }
    PatchSet ps;
    ps.patch_size = p;
    ps.h = h;
    ps.w = w;
    ps.ch = ch;
    const int gy = h / p, gx = w / p;
    const int len = p * p * ch;
    const double* img = image.values().data();
    ps.patches.resize(static_cast<std::size_t>(gy) * gx);
    for (int py = 0; py < gy; ++py) {
        for (int px = 0; px < gx; ++px) {
            std::vector<double> patch(static_cast<std::size_t>(len));
            int k = 0;
            for (int y = 0; y < p; ++y) {
                for (int x = 0; x < p; ++x) {
                    for (int c = 0; c < ch; ++c) {
                        patch[static_cast<std::size_t>(k++)] =
                            img[((static_cast<std::int64_t>(py) * p + y) * w + px * p + x) * ch + c];
                    }
                }
            }
            ps.patches[static_cast<std::size_t>(py) * gx + px] = std::move(patch);
        }
    }
    ps.pos_enc = sinusoidal_positional_encoding(gy * gx, len);
    return ps;
}

Tensor unpatchify(const PatchSet& ps) {
    const int p = ps.patch_size, h = ps.h, w = ps.w, ch = ps.ch;
    const int gx = w / p;
    std::vector<double> img(static_cast<std::size_t>(h) * w * ch);
    for (int i = 0; i < ps.patch_count(); ++i) {
        const int py = i / gx, px = i % gx;
        const auto& patch = ps.patches[static_cast<std::size_t>(i)];
        int k = 0;
        for (int y = 0; y < p; ++y) {
            for (int x = 0; x < p; ++x) {
                for (int c = 0; c < ch; ++c) {
                    img[((static_cast<std::int64_t>(py) * p + y) * w + px * p + x) * ch + c] =
                        patch[static_cast<std::size_t>(k++)];
                }
            }
        }
    }
    return Tensor({h, w, ch}, std::move(img));
}

MaskPlan sample_mask(int n_patches, double ratio, std::uint64_t seed) {
    if (n_patches < 2) throw std::invalid_argument("sample_mask: need at least 2 patches");
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw std::invalid_argument("sample_mask: ratio must lie in (0,1), got " + std::to_string(ratio));
    }
    const int n_masked = static_cast<int>(std::lround(ratio * n_patches));
    if (n_masked == 0 || n_masked == n_patches) {
        throw std::invalid_argument("sample_mask: degenerate mask (" + std::to_string(n_masked) + " of " +
                                    std::to_string(n_patches) + " patches)");
    }
    Rng rng(seed);
    MaskPlan plan;
    plan.ratio = ratio;
    plan.seed = seed;
    plan.masked = rng.sample_without_replacement(n_patches, n_masked);
    std::sort(plan.masked.begin(), plan.masked.end());
    std::vector<bool> is_masked(static_cast<std::size_t>(n_patches), false);
    for (int i : plan.masked) is_masked[static_cast<std::size_t>(i)] = true;
    for (int i = 0; i < n_patches; ++i) {
        if (!is_masked[static_cast<std::size_t>(i)]) plan.visible.push_back(i);
    }
    return plan;
}

Tensor repair(const PatchSet& original, const std::vector<std::vector<double>>& reconstructed,
              const MaskPlan& plan) {
    if (reconstructed.size() != plan.masked.size()) {
        throw std::invalid_argument("repair: got " + std::to_string(reconstructed.size()) +
                                    " reconstructions for " + std::to_string(plan.masked.size()) +
                                    " masked patches");
    }
    if (plan.masked.size() + plan.visible.size() != original.patches.size()) {
        throw std::invalid_argument("repair: plan does not cover the patch grid");
    }
    PatchSet merged = original;
    for (std::size_t j = 0; j < plan.masked.size(); ++j) {
        const auto& rec = reconstructed[j];
        if (static_cast<int>(rec.size()) != original.patch_len()) {
            throw std::invalid_argument("repair: reconstruction length mismatch");
        }
        merged.patches[static_cast<std::size_t>(plan.masked[j])] = rec;
    }
    return unpatchify(merged);
}

} // namespace hsemis
