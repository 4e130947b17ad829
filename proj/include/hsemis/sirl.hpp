#pragma once

#include <functional>
#include <vector>

#include "hsemis/rng.hpp"
#include "hsemis/tensor.hpp"

namespace hsemis {

/// Per-class coordinate-wise median feature vectors.
struct TemplateLibrary {
    int class_count = 0;
    int dim = 0;
    int samples_per_class = 50;
    std::vector<std::vector<double>> templates; // [C][dim]
};

/// Samples up to k feature vectors per class (all, if fewer) and takes the
/// coordinate-wise median. Even counts average the two middle values.
TemplateLibrary build_template_library(const std::vector<std::vector<std::vector<double>>>& per_class,
                                       int k, Rng& rng);

/// alpha * cosine(f,t) + (1-alpha) / max(||f-t||_2, 1e-8).
double similarity_score(const std::vector<double>& f, const std::vector<double>& t, double alpha);

struct ProxyLabel {
    int label = -1; // -1 = unassigned
    double score = 0.0;
    std::vector<double> per_class_scores;
};

/// argmax over templates; threshold tau gates assignment; ties go to the
/// lowest class index.
ProxyLabel assign_label(const std::vector<double>& f, const TemplateLibrary& lib, double tau,
                        double alpha);

using FeatureExtractor = std::function<std::vector<double>(const Tensor& image)>;

struct LabeledSample {
    int index = 0; // position in the input set
    int label = 0;
    double score = 0.0;
};

struct LabelingResult {
    std::vector<LabeledSample> labeled;
    int discarded = 0;
};

/// Labels every reconstructed sample, dropping the ones below tau.
LabelingResult label_reconstructed_set(const std::vector<Tensor>& images,
                                       const FeatureExtractor& extractor, const TemplateLibrary& lib,
                                       double tau, double alpha);

} // namespace hsemis
