#pragma once

#include <filesystem>
#include <string>

#include "demtrain/classifier.hpp"

namespace demtrain::model {

// Checkpoint layout: <dir>/manifest.json plus one blob per parameter tensor
// under <dir>/params/. Each blob is a single ASCII header line
//   "<name> <ndim> <d0> <d1> ...\n"
// followed by raw little-endian float32 values in row-major order.
void save_checkpoint(const ProbedClassifier& model, const std::filesystem::path& dir,
                     const std::string& extra_manifest_json = "");

ProbedClassifier load_checkpoint(const std::filesystem::path& dir);

// Checksum over all parameter blobs in manifest order (ignores the manifest
// itself, which carries timestamps).
std::uint64_t checkpoint_checksum(const std::filesystem::path& dir);

}  // namespace demtrain::model
