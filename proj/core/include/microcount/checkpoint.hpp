#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "microcount/tensor.hpp"

namespace microcount::nn {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

// Flat binary checkpoint: magic "MCKP", u32 version, u32 tensor count, a
// table of (name, shape, byte offset) entries, then raw little-endian f32
// payloads. Bit-exact round trip.
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);

struct LoadedTensor {
    std::string name;
    Shape shape;
    std::vector<float> values;
};
std::vector<LoadedTensor> load_checkpoint(const std::filesystem::path& path);

// Copies values into matching parameters; throws on missing names or shape
// mismatches.
void restore_checkpoint(const std::filesystem::path& path, std::vector<NamedTensor>& params);

}  // namespace microcount::nn
