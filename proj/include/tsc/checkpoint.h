#pragma once

// Binary parameter container, little-endian throughout:
//   "TSCK"  u32 version
//   u32 metadata length, metadata bytes (UTF-8 JSON)
//   u32 tensor count, then per tensor:
//     u32 name length, name bytes, u32 rank, u64 dims[rank], f64 values[numel]

#include "tsc/autodiff.h"

#include <cstdint>
#include <string>
#include <string_view>

namespace tsc {

inline constexpr std::uint32_t checkpoint_version = 1;

struct Checkpoint {
    std::string metadata; // free-form JSON text
    ad::ParamStore params;
};

std::string encode_checkpoint(const std::string &metadata, const ad::ParamStore &params);
// Throws SyntaxError (with byte offset) on a malformed or truncated buffer.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string &path, const std::string &metadata, const ad::ParamStore &params);
Checkpoint load_checkpoint(const std::string &path);

} // namespace tsc
