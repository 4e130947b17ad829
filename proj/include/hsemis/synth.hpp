#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hsemis/tensor.hpp"

namespace hsemis {

/// Stand-in for graded knee radiographs: two horizontal bright bands whose
/// separation narrows with grade, bright marginal blobs whose count grows
/// with grade, plus Gaussian noise.
struct SyntheticSpec {
    int image_size = 32;
    int class_count = 5;
    std::vector<long> per_class = {493, 226, 329, 164, 38};
    std::vector<int> gap_widths = {10, 8, 6, 4, 2}; // strictly decreasing
    std::vector<int> blob_counts = {0, 1, 2, 3, 5}; // nondecreasing
    double noise_sigma = 0.05;
    int jitter = 3; // vertical offset range of the joint center
    std::uint64_t seed = 42;
};

void validate_spec(const SyntheticSpec& spec);

Tensor synth_image(const SyntheticSpec& spec, int grade, std::uint64_t sample_seed);

struct Dataset {
    std::vector<Tensor> images;
    std::vector<int> labels;
    std::vector<std::string> ids;

    std::size_t size() const { return images.size(); }
};

Dataset synth_dataset(const SyntheticSpec& spec);

} // namespace hsemis
