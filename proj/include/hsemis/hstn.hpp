#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hsemis/tensor.hpp"

namespace hsemis {

// "HSTN" tensor file: 4-byte magic, u32 LE rank, rank u32 LE dims,
// product(dims) f32 LE values. Rank 0 encodes a single scalar.

/// Writes atomically (temp file in the same directory, then rename).
void write_hstn(const std::filesystem::path& path, const Tensor& t);

Tensor read_hstn(const std::filesystem::path& path);

/// Atomic text write used for CSV / JSON / config artifacts.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

/// Saves a set of named tensors as <dir>/<name>.hstn plus a manifest.
void save_checkpoint(const std::filesystem::path& dir,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::vector<std::pair<std::string, std::string>>& meta = {});

/// Loads values from <dir> into the given tensors; shapes must match.
void load_checkpoint(const std::filesystem::path& dir,
                     std::vector<std::pair<std::string, Tensor>> tensors);

/// Reads the key=value meta file written by save_checkpoint.
std::vector<std::pair<std::string, std::string>> read_checkpoint_meta(const std::filesystem::path& dir);

} // namespace hsemis
