#pragma once

#include <filesystem>
#include <string>

#include "hairshift/tensor.hpp"

namespace hairshift {

// Persistence format used for every tensor artifact: `<name>.json` carrying
// {name, dtype:"f32", shape, layout:"row-major", endianness:"little"} next to
// `<name>.bin` holding the raw little-endian f32 data.
void save_tensor(const std::filesystem::path& dir, const std::string& name, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& dir, const std::string& name);
bool tensor_exists(const std::filesystem::path& dir, const std::string& name);

}  // namespace hairshift
