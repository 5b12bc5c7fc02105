#pragma once

#include <string>
#include <string_view>

#include "c2c/model.hpp"

namespace c2c {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
// Throws ConfigError when the file cannot be read.
std::string sha256_file(const std::string& path);
// Digest of a model's config and fp32 weights in checkpoint order.
std::string model_digest(const ToyModel<float>& model);

}  // namespace c2c
