#include "hsemis/sirl.hpp"

#include <algorithm>
#include <cmath>

namespace hsemis {

TemplateLibrary build_template_library(const std::vector<std::vector<std::vector<double>>>& per_class,
                                       int k, Rng& rng) {
    if (per_class.empty()) throw std::invalid_argument("build_template_library: no classes");
    TemplateLibrary lib;
    lib.class_count = static_cast<int>(per_class.size());
    lib.samples_per_class = k;
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        const auto& feats = per_class[c];
        if (feats.empty()) {
            throw std::invalid_argument("build_template_library: class " + std::to_string(c) +
                                        " has no feature vectors");
        }
        if (lib.dim == 0) lib.dim = static_cast<int>(feats[0].size());
        std::vector<int> chosen;
        if (static_cast<int>(feats.size()) <= k) {
            for (std::size_t i = 0; i < feats.size(); ++i) chosen.push_back(static_cast<int>(i));
        } else {
            chosen = rng.sample_without_replacement(static_cast<int>(feats.size()), k);
        }
        std::vector<double> tmpl(static_cast<std::size_t>(lib.dim));
        std::vector<double> column(chosen.size());
        for (int d = 0; d < lib.dim; ++d) {
            for (std::size_t i = 0; i < chosen.size(); ++i) {
                const auto& f = feats[static_cast<std::size_t>(chosen[i])];
                if (static_cast<int>(f.size()) != lib.dim) {
                    throw std::invalid_argument("build_template_library: inconsistent feature dims");
                }
                column[i] = f[static_cast<std::size_t>(d)];
            }
            const std::size_t mid = column.size() / 2;
            std::nth_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(mid),
                             column.end());
            double med = column[mid];
            if (column.size() % 2 == 0) {
                const double lower =
                    *std::max_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(mid));
                med = 0.5 * (med + lower);
            }
            tmpl[static_cast<std::size_t>(d)] = med;
        }
        lib.templates.push_back(std::move(tmpl));
    }
    return lib;
}

double similarity_score(const std::vector<double>& f, const std::vector<double>& t, double alpha) {
    if (f.size() != t.size()) throw std::invalid_argument("similarity_score: dimension mismatch");
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("similarity_score: alpha outside [0,1]");
    double ff = 0.0, tt = 0.0, ft = 0.0, dd = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        ff += f[i] * f[i];
        tt += t[i] * t[i];
        ft += f[i] * t[i];
        const double d = f[i] - t[i];
        dd += d * d;
    }
    if (ff == 0.0 || tt == 0.0) throw std::invalid_argument("similarity_score: zero-norm input");
    const double cosine = ft / (std::sqrt(ff) * std::sqrt(tt));
    const double dist = std::max(std::sqrt(dd), 1e-8);
    return alpha * cosine + (1.0 - alpha) / dist;
}

ProxyLabel assign_label(const std::vector<double>& f, const TemplateLibrary& lib, double tau,
                        double alpha) {
    if (static_cast<int>(f.size()) != lib.dim) {
        throw std::invalid_argument("assign_label: feature dim " + std::to_string(f.size()) +
                                    " != library dim " + std::to_string(lib.dim));
    }
    ProxyLabel out;
    out.per_class_scores.resize(static_cast<std::size_t>(lib.class_count));
    int best = 0;
    for (int c = 0; c < lib.class_count; ++c) {
        const double s = similarity_score(f, lib.templates[static_cast<std::size_t>(c)], alpha);
        out.per_class_scores[static_cast<std::size_t>(c)] = s;
        if (s > out.per_class_scores[static_cast<std::size_t>(best)]) best = c;
    }
    out.score = out.per_class_scores[static_cast<std::size_t>(best)];
    out.label = out.score >= tau ? best : -1;
    return out;
}

LabelingResult label_reconstructed_set(const std::vector<Tensor>& images,
                                       const FeatureExtractor& extractor, const TemplateLibrary& lib,
                                       double tau, double alpha) {
    LabelingResult result;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const ProxyLabel pl = assign_label(extractor(images[i]), lib, tau, alpha);
        if (pl.label < 0) {
            ++result.discarded;
        } else {
            result.labeled.push_back({static_cast<int>(i), pl.label, pl.score});
        }
    }
    return result;
}

} // namespace hsemis
