#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hsemis/mirec.hpp"
#include "hsemis/qtest.hpp"
#include "hsemis/synth.hpp"

namespace hsemis {

/// Flat key=value run configuration. Unknown keys are rejected; every value
/// is range-checked.
struct RunConfig {
    std::uint64_t seed = 42;

    // data
    std::string data_dir; // empty = synthesize
    SyntheticSpec synth;
    double test_fraction = 0.2;
    double label_fraction = 0.2;

    // stage 1
    MirecConfig mirec;

    // stage 2
    double sirl_tau = 0.80;
    double sirl_alpha = 0.5;
    int sirl_samples_per_class = 50;
    std::string sirl_extractor = "base"; // base | pixel

    // stage 3
    QTestConfig qtest;
    int qcn_batch = 64;
    std::string him_mode = "koa-fixed"; // koa-fixed | count-balanced
    bool run_baseline = true;
    int baseline_steps = 0; // 0 = same as qtest.steps

    static RunConfig defaults();
    static RunConfig from_file(const std::filesystem::path& path);
    static RunConfig from_string(const std::string& content);

    void set(const std::string& key, const std::string& value);
    void validate() const;
    std::string to_string() const;
};

} // namespace hsemis
