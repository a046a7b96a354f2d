#pragma once

#include <map>
#include <string>
#include <vector>

#include "sggec/parameters.hpp"

namespace sggec {

struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& message) : std::runtime_error(message) {}
};

// Binary container: magic "SGGC", version u32, length-prefixed UTF-8 config
// block (key=value lines), then one record per tensor: u32 name length,
// name bytes, u32 rank, u64 dims, little-endian f32 payload. Records are
// written in name order, so identical content produces identical bytes.
struct Checkpoint {
    std::string config;  // key=value lines
    std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

// Splits records into model parameters and optimizer state ("optim." prefix).
Parameters checkpoint_model_parameters(const Checkpoint& checkpoint);

}  // namespace sggec
