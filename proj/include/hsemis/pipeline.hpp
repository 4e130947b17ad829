#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "hsemis/config.hpp"
#include "hsemis/him.hpp"
#include "hsemis/sirl.hpp"

namespace hsemis {

struct PipelineReport {
    std::map<std::string, double> node_accuracies; // by node id
    double agg_accuracy = 0.0;
    Metrics flat_metrics;
    double baseline_accuracy = -1.0; // -1 when the baseline run is disabled
    int discarded_proxy_count = 0;
    int proxy_count = 0;
    int labeled_count = 0;
    int unlabeled_count = 0;
    int test_count = 0;
    double mirec_initial_l1 = 0.0;
    double mirec_final_l1 = 0.0;
    std::uint64_t seed = 0;

    std::string to_json() const;
};

/// Stage 1 -> 2 -> 3 end to end. Artifacts (loss CSVs, reconstructions,
/// templates, checkpoints, report.json) land under out_dir; pass an empty
/// path to skip writing artifacts.
PipelineReport run_pipeline(const RunConfig& cfg, const std::filesystem::path& out_dir);

/// The feature extractor used by SiRL (seeded base network or raw pixels).
FeatureExtractor make_extractor(const RunConfig& cfg);

} // namespace hsemis
