#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "pathvlm/nn.hpp"

namespace pathvlm {

// Checkpoints are directories: metadata.json plus one <group>.bin blob per
// ParamGroup. Tensor bytes are raw little-endian float64, row-major, so the
// round trip is bit-exact.
namespace checkpoint {

// Serialized bytes of one group (also the hashing unit for freeze checks).
std::string serialize_group(const ParamGroup& g);

void save(const std::filesystem::path& dir, const ParamRegistry& reg, const nlohmann::json& metadata);

// Loads blobs into an existing registry with identical group/param layout.
// Throws std::runtime_error on any mismatch.
void load_into(const std::filesystem::path& dir, ParamRegistry& reg);

// Loads a single group's blob (layout must match).
void load_group(const std::filesystem::path& dir, ParamGroup& group);

nlohmann::json load_metadata(const std::filesystem::path& dir);

// SHA-256 of a group's serialized bytes.
std::string group_hash(const ParamGroup& g);

}  // namespace checkpoint
}  // namespace pathvlm
