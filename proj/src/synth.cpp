#include "hsemis/synth.hpp"

#include <algorithm>
#include <cmath>

#include "hsemis/rng.hpp"

namespace hsemis {

void validate_spec(const SyntheticSpec& spec) {
    if (spec.image_size < 16) throw ConfigError("synth: image size too small");
    if (spec.class_count < 2) throw ConfigError("synth: need at least 2 classes");
    if (static_cast<int>(spec.per_class.size()) != spec.class_count ||
        static_cast<int>(spec.gap_widths.size()) != spec.class_count ||
        static_cast<int>(spec.blob_counts.size()) != spec.class_count) {
        throw ConfigError("synth: per-class lists must have one entry per class");
    }
    for (long n : spec.per_class) {
        if (n <= 0) throw ConfigError("synth: per-class counts must be positive");
    }
    for (int c = 0; c < spec.class_count; ++c) {
        if (spec.gap_widths[static_cast<std::size_t>(c)] <= 0 ||
            spec.gap_widths[static_cast<std::size_t>(c)] >= spec.image_size) {
            throw ConfigError("synth: gap width out of range for grade " + std::to_string(c));
        }
        if (c > 0) {
            if (spec.gap_widths[static_cast<std::size_t>(c)] >=
                spec.gap_widths[static_cast<std::size_t>(c - 1)]) {
                throw ConfigError("synth: gap widths must strictly decrease with grade");
            }
            if (spec.blob_counts[static_cast<std::size_t>(c)] <
                spec.blob_counts[static_cast<std::size_t>(c - 1)]) {
                throw ConfigError("synth: blob counts must be nondecreasing with grade");
            }
        }
    }
    if (spec.noise_sigma < 0.0) throw ConfigError("synth: noise sigma must be nonnegative");
    if (spec.jitter < 0 || spec.jitter > spec.image_size / 4) {
        throw ConfigError("synth: jitter out of range");
    }
}

Tensor synth_image(const SyntheticSpec& spec, int grade, std::uint64_t sample_seed) {
    if (grade < 0 || grade >= spec.class_count) throw std::invalid_argument("synth: bad grade");
    Rng rng(sample_seed);
    const int hw = spec.image_size;
    const int gap = spec.gap_widths[static_cast<std::size_t>(grade)];
    const int band = std::max(3, hw / 6);
    const int jitter = spec.jitter > 0 ? rng.next_int(2 * spec.jitter + 1) - spec.jitter : 0;
    const int center = hw / 2 + jitter;

    std::vector<double> img(static_cast<std::size_t>(hw) * hw, 0.1);
    auto paint_band = [&](int y0, int y1) {
        y0 = std::clamp(y0, 0, hw);
        y1 = std::clamp(y1, 0, hw);
        for (int y = y0; y < y1; ++y) {
            for (int x = 0; x < hw; ++x) img[static_cast<std::size_t>(y) * hw + x] = 0.75;
        }
    };
    const int top_edge = center - gap / 2;       // exclusive bottom row of the upper band
    const int bottom_edge = center + (gap + 1) / 2; // first row of the lower band
    paint_band(top_edge - band, top_edge);
    paint_band(bottom_edge, bottom_edge + band);

    // marginal blobs hug the gap boundary
    const int blobs = spec.blob_counts[static_cast<std::size_t>(grade)];
    for (int b = 0; b < blobs; ++b) {
        const double bx = 3.0 + rng.next_double() * (hw - 6.0);
        const double by = rng.next_bool(0.5) ? top_edge - 1.0 : bottom_edge + 0.0;
        for (int y = std::max(0, static_cast<int>(by) - 3); y < std::min(hw, static_cast<int>(by) + 4); ++y) {
            for (int x = std::max(0, static_cast<int>(bx) - 3); x < std::min(hw, static_cast<int>(bx) + 4);
                 ++x) {
                const double d2 = (y - by) * (y - by) + (x - bx) * (x - bx);
                img[static_cast<std::size_t>(y) * hw + x] += 0.5 * std::exp(-d2 / (2.0 * 1.2 * 1.2));
            }
        }
    }

    if (spec.noise_sigma > 0.0) {
        for (double& v : img) v += spec.noise_sigma * rng.next_normal();
    }
    for (double& v : img) v = std::clamp(v, 0.0, 1.0);
    return Tensor({hw, hw, 1}, std::move(img));
}

Dataset synth_dataset(const SyntheticSpec& spec) {
    validate_spec(spec);
    Rng rng(spec.seed);
    Dataset ds;
    int serial = 0;
    for (int grade = 0; grade < spec.class_count; ++grade) {
        for (long i = 0; i < spec.per_class[static_cast<std::size_t>(grade)]; ++i) {
            ds.images.push_back(synth_image(spec, grade, rng.fork(static_cast<std::uint64_t>(serial)).next_u64()));
            ds.labels.push_back(grade);
            char buf[32];
            std::snprintf(buf, sizeof(buf), "img_%05d", serial);
            ds.ids.emplace_back(buf);
            ++serial;
        }
    }
    return ds;
}

} // namespace hsemis
