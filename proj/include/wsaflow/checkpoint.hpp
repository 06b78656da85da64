#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "wsaflow/params.hpp"

namespace wsaflow {

// Adam moment buffers, keyed like the parameters they belong to.
struct AdamState {
    uint64_t step = 0;
    std::map<std::string, std::vector<float>> m;
    std::map<std::string, std::vector<float>> v;
};

// Versioned binary container: magic "WSCK", manifest of (name, shape, offset),
// f32 little-endian values, optimizer state appended. Round-trips bit-exactly.
struct Checkpoint {
    uint32_t next_epoch = 0;
    ParamMap<float> params;
    bool has_opt = false;
    AdamState opt;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace wsaflow
