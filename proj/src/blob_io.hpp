#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "demtrain/errors.hpp"
#include "demtrain/tensor.hpp"

namespace demtrain::io {

// Blob format: one ASCII header line "<name> <ndim> <d0> <d1> ...\n" followed
// by raw little-endian float32 (or int32) values, row-major.
void write_float_blob(const std::filesystem::path& path, const std::string& name,
                      const Tensor& t);
Tensor read_float_blob(const std::filesystem::path& path, std::string* name_out = nullptr);

void write_int_blob(const std::filesystem::path& path, const std::string& name,
                    const std::vector<int>& v);
std::vector<int> read_int_blob(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace demtrain::io
