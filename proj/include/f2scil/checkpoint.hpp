#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "f2scil/models.hpp"
#include "f2scil/parameter.hpp"

namespace f2scil {

/// On-disk layout, all integers little-endian:
///
///   "F2SCKPT1"                       8-byte magic
///   u64 manifest_len, manifest       JSON: format, groups {name: group},
///                                    bn_running_stats [names], meta {...}
///   u64 entry_count
///   entry*: u32 name_len, name, u32 rank, u64 dims[rank],
///           f64 data[prod(dims)]      raw IEEE-754 little-endian
///
/// Round trips are bit-exact.
struct Checkpoint {
  std::vector<Parameter> params;
  nlohmann::json meta;
};

void write_checkpoint(const std::filesystem::path& path, std::span<const Parameter> params,
                      const nlohmann::json& meta = nlohmann::json::object());
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Classifier checkpoints carry the layer shape and session→column map in meta.
void save_classifier(const std::filesystem::path& path, const Classifier& model);
Classifier load_classifier(const std::filesystem::path& path);

}  // namespace f2scil
