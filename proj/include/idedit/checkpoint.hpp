#pragma once

#include <filesystem>
#include <string>

#include "idedit/model.hpp"

namespace idedit {

inline constexpr int kCheckpointFormatVersion = 1;

// Layout: 9-byte magic "ALAE-TOY\x01", uint32 LE manifest length, JSON
// manifest, then a float32 little-endian blob addressed by the manifest.
std::string serialize_checkpoint(const GenerativeAutoencoder& model);
GenerativeAutoencoder deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const GenerativeAutoencoder& model, const std::filesystem::path& path);
GenerativeAutoencoder load_checkpoint(const std::filesystem::path& path);

}  // namespace idedit
