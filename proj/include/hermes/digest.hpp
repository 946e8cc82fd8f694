#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "hermes/tensor.hpp"

namespace hermes {

// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// First 16 hex digits of the SHA-256 of the matrix printed row by row
// ("%.17g" values, comma separated, newline per row). Shape is included.
std::string feature_checksum(const Tensor& features);

}  // namespace hermes
