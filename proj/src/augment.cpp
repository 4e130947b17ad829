#include "hsemis/augment.hpp"

#include <algorithm>
#include <cmath>

namespace hsemis {

namespace {

void require_image(const char* op, const Tensor& img) {
    if (img.rank() != 3) throw ShapeError(std::string(op) + ": expected [h,w,ch]");
}

constexpr double kDegToRad = 0.01745329251994329576923690768489;

} // namespace

Tensor flip_horizontal(const Tensor& img) {
    require_image("flip_horizontal", img);
    const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
    std::vector<double> out(img.values().size());
    const double* src = img.values().data();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                out[(static_cast<std::size_t>(y) * w + x) * c + ch] =
                    src[(static_cast<std::size_t>(y) * w + (w - 1 - x)) * c + ch];
            }
        }
    }
    return Tensor(img.shape(), std::move(out));
}

Tensor flip_vertical(const Tensor& img) {
    require_image("flip_vertical", img);
    const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
    std::vector<double> out(img.values().size());
    const double* src = img.values().data();
    for (int y = 0; y < h; ++y) {
        const double* row = src + (static_cast<std::size_t>(h - 1 - y) * w) * c;
        std::copy(row, row + static_cast<std::size_t>(w) * c,
                  out.begin() + (static_cast<std::size_t>(y) * w) * c);
    }
    return Tensor(img.shape(), std::move(out));
}

Tensor affine_sample(const Tensor& img, const double m[4], double tx, double ty) {
    require_image("affine_sample", img);
    const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    std::vector<double> out(img.values().size(), 0.0);
    const double* src = img.values().data();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double sy = m[0] * (y - cy) + m[1] * (x - cx) + cy + ty;
            const double sx = m[2] * (y - cy) + m[3] * (x - cx) + cx + tx;
            const int y0 = static_cast<int>(std::floor(sy));
            const int x0 = static_cast<int>(std::floor(sx));
            const double fy = sy - y0, fx = sx - x0;
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const int yy = y0 + dy, xx = x0 + dx;
                        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                        const double wgt = (dy ? fy : 1.0 - fy) * (dx ? fx : 1.0 - fx);
                        acc += wgt * src[(static_cast<std::size_t>(yy) * w + xx) * c + ch];
                    }
                }
                out[(static_cast<std::size_t>(y) * w + x) * c + ch] = acc;
            }
        }
    }
    return Tensor(img.shape(), std::move(out));
}

Tensor gaussian_blur(const Tensor& img, int kernel) {
    require_image("gaussian_blur", img);
    if (kernel != 3 && kernel != 5) throw std::invalid_argument("gaussian_blur: kernel must be 3 or 5");
    const double sigma = 0.3 * ((kernel - 1) * 0.5 - 1.0) + 0.8;
    const int r = kernel / 2;
    std::vector<double> taps(static_cast<std::size_t>(kernel));
    double norm = 0.0;
    for (int i = -r; i <= r; ++i) {
        taps[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        norm += taps[static_cast<std::size_t>(i + r)];
    }
    for (double& t : taps) t /= norm;

    const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
    std::vector<double> mid(img.values().size(), 0.0);
    const double* src = img.values().data();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int i = -r; i <= r; ++i) {
                    const int xx = std::clamp(x + i, 0, w - 1);
                    acc += taps[static_cast<std::size_t>(i + r)] *
                           src[(static_cast<std::size_t>(y) * w + xx) * c + ch];
                }
                mid[(static_cast<std::size_t>(y) * w + x) * c + ch] = acc;
            }
        }
    }
    std::vector<double> out(img.values().size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int i = -r; i <= r; ++i) {
                    const int yy = std::clamp(y + i, 0, h - 1);
                    acc += taps[static_cast<std::size_t>(i + r)] *
                           mid[(static_cast<std::size_t>(yy) * w + x) * c + ch];
                }
                out[(static_cast<std::size_t>(y) * w + x) * c + ch] = acc;
            }
        }
    }
    return Tensor(img.shape(), std::move(out));
}

Tensor apply_aug_op(const Tensor& img, const AugOp& op) {
    const int h = img.dim(0), w = img.dim(1);
    switch (op.kind) {
    case AugOp::Kind::Invert: {
        std::vector<double> out(img.values());
        for (double& v : out) v = 1.0 - v;
        return Tensor(img.shape(), std::move(out));
    }
    case AugOp::Kind::ShearX: {
        const double m[4] = {1.0, 0.0, op.magnitude, 1.0};
        return affine_sample(img, m, 0.0, 0.0);
    }
    case AugOp::Kind::ShearY: {
        const double m[4] = {1.0, op.magnitude, 0.0, 1.0};
        return affine_sample(img, m, 0.0, 0.0);
    }
    case AugOp::Kind::Scale: {
        const double inv = 1.0 / op.magnitude;
        const double m[4] = {inv, 0.0, 0.0, inv};
        return affine_sample(img, m, 0.0, 0.0);
    }
    case AugOp::Kind::TranslateX: {
        const double m[4] = {1.0, 0.0, 0.0, 1.0};
        return affine_sample(img, m, -op.magnitude * w, 0.0);
    }
    case AugOp::Kind::TranslateY: {
        const double m[4] = {1.0, 0.0, 0.0, 1.0};
        return affine_sample(img, m, 0.0, -op.magnitude * h);
    }
    case AugOp::Kind::Brightness: {
        std::vector<double> out(img.values());
        for (double& v : out) v = std::clamp(v * op.magnitude, 0.0, 1.0);
        return Tensor(img.shape(), std::move(out));
    }
    case AugOp::Kind::Rotate: {
        const double a = op.magnitude * kDegToRad;
        const double m[4] = {std::cos(a), -std::sin(a), std::sin(a), std::cos(a)};
        return affine_sample(img, m, 0.0, 0.0);
    }
    case AugOp::Kind::Blur:
        return gaussian_blur(img, static_cast<int>(op.magnitude));
    }
    throw std::invalid_argument("apply_aug_op: unknown op");
}

std::vector<AugOp> sample_strong_ops(Rng& rng, int count) {
    std::vector<AugOp> ops;
    ops.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        switch (rng.next_int(9)) {
        case 0: ops.push_back({AugOp::Kind::Invert, 0.0}); break;
        case 1: ops.push_back({AugOp::Kind::ShearX, rng.next_range(-0.3, 0.3)}); break;
        case 2: ops.push_back({AugOp::Kind::ShearY, rng.next_range(-0.3, 0.3)}); break;
        case 3: ops.push_back({AugOp::Kind::Scale, rng.next_range(0.51, 0.60)}); break;
        case 4: ops.push_back({AugOp::Kind::TranslateX, rng.next_range(-0.3, 0.3)}); break;
        case 5: ops.push_back({AugOp::Kind::TranslateY, rng.next_range(-0.3, 0.3)}); break;
        case 6: ops.push_back({AugOp::Kind::Brightness, rng.next_range(0.05, 0.95)}); break;
        case 7: ops.push_back({AugOp::Kind::Rotate, rng.next_range(-30.0, 30.0)}); break;
        case 8: ops.push_back({AugOp::Kind::Blur, rng.next_bool(0.5) ? 3.0 : 5.0}); break;
        }
    }
    return ops;
}

Tensor weak_augment(const Tensor& img, Rng& rng) {
    require_image("weak_augment", img);
    Tensor out = img;
    if (rng.next_bool(0.5)) out = flip_vertical(out);
    if (rng.next_bool(0.5)) out = flip_horizontal(out);
    const double tx = rng.next_range(-0.2, 0.2) * img.dim(1);
    const double ty = rng.next_range(-0.2, 0.2) * img.dim(0);
    const double m[4] = {1.0, 0.0, 0.0, 1.0};
    return affine_sample(out, m, -tx, -ty);
}

Tensor strong_augment(const Tensor& img, Rng& rng, int ops_per_sample) {
    require_image("strong_augment", img);
    Tensor out = img;
    for (const AugOp& op : sample_strong_ops(rng, ops_per_sample)) out = apply_aug_op(out, op);
    return out;
}

} // namespace hsemis
