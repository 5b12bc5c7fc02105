#pragma once

#include <cstdint>
#include <string>

#include "c2c/fuser.hpp"
#include "c2c/model.hpp"

namespace c2c {

// Toy model file: "C2CTOY1", config block, then every weight tensor in
// declaration order as rows, cols and little-endian fp32 values.
void save_toy_model(const std::string& path, const ToyModel<float>& model);
ToyModel<float> load_toy_model(const std::string& path);

struct FuserMetadata {
  uint64_t seed = 0;
  int steps = 0;
  double final_temperature = 1.0;
};

// Fuser file: "C2CFUS1", config block, then named tensors (name, rows, cols,
// little-endian fp32). A JSON sidecar at path + ".json" carries the config
// and FuserMetadata.
void save_fuser(const std::string& path, const FuserParams<float>& params, const FuserMetadata& meta);
FuserParams<float> load_fuser(const std::string& path, FuserMetadata* meta = nullptr);

std::string fuser_config_json(const FuserConfig& config);

}  // namespace c2c
