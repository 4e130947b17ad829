#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hsemis/synth.hpp"

namespace hsemis {

/// Writes one HSTN tensor per sample plus labels.csv (`id,grade`).
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);

/// Loads every id listed in labels.csv from <dir>/<id>.hstn.
Dataset load_dataset(const std::filesystem::path& dir);

/// Loads HSTN tensors only (no labels.csv required); ids sorted.
std::vector<std::pair<std::string, Tensor>> load_tensor_dir(const std::filesystem::path& dir);

struct SplitResult {
    Dataset labeled;
    Dataset unlabeled;
    Dataset test;
};

/// Stratified by grade: test_fraction per class held out, then
/// label_fraction of the remaining training pool labeled. Deterministic,
/// disjoint. A class with no labeled sample raises DataError.
SplitResult split_dataset(const Dataset& ds, double label_fraction, double test_fraction,
                          std::uint64_t seed);

} // namespace hsemis
