#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pve/adam.hpp"
#include "pve/tensor.hpp"

namespace pve {

/// Contents of a "PVE1" parameter file.
///
/// Layout (all integers u64 little-endian, all reals f32 little-endian):
///   "PVE1", record count, records...
///   optional "ADAM" section: step, skipped, lr, beta1, beta2, epsilon (f32),
///     record count, first-moment records, second-moment records
///   optional "META" section: byte length, "key=value\n" lines
/// A record is: name length, name bytes, rank, extents, data.
struct Checkpoint {
  std::vector<std::string> names;
  std::vector<Tensor> params;
  std::optional<AdamState> adam;
  std::map<std::string, std::string> meta;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pve
