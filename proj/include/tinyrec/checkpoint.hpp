#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tinyrec/tensor.hpp"

namespace tinyrec {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

struct CheckpointData {
    std::vector<std::pair<std::string, std::string>> meta;
    std::vector<NamedTensor> tensors;

    const std::string* find_meta(const std::string& key) const;
    const Tensor* find_tensor(const std::string& name) const;
};

// Checkpoint = <stem>.manifest + <stem>.bin. The manifest is text: "#meta k v"
// lines first, then one "name f64 d0 d1 ..." line per tensor. The blob is the
// raw little-endian f64 payload in manifest order. Round-trips are bit-exact.
void save_checkpoint(const std::string& stem, const std::vector<NamedTensor>& tensors,
                     const std::vector<std::pair<std::string, std::string>>& meta);
CheckpointData load_checkpoint(const std::string& stem);

// FNV-1a over names, shapes, and value bytes; used to assert parameter sets
// were left untouched by a training phase.
uint64_t params_fingerprint(const std::vector<NamedTensor>& tensors);

}  // namespace tinyrec
