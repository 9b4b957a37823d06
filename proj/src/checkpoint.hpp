#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace squidlet {

// Checkpoint container format:
//   magic "SQD1" | version u32 LE | CRC-32 of payload (u32 LE) | payload
// payload:
//   config text: length u64 LE + UTF-8 bytes
//   tensor count u64 LE
//   per tensor: name length u64 LE + UTF-8 name, dtype u32 LE (0 = f32),
//               rank u32 LE, dims u64 LE each, element bytes LE
// All multi-byte values little-endian; floats serialized bit-exactly.

inline constexpr char kCheckpointMagic[4] = {'S', 'Q', 'D', '1'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointData {
    uint32_t version = kCheckpointVersion;
    std::string config_text;
    std::vector<std::pair<std::string, Tensor>> tensors;
};

void write_checkpoint_file(const std::string& path, const CheckpointData& data);
CheckpointData read_checkpoint_file(const std::string& path);

uint32_t crc32(const uint8_t* data, size_t len);

// Flat key = value config text helpers (sorted stable order is the
// caller's job; parsing preserves duplicates as last-wins).
std::string config_get(const std::string& text, const std::string& key);
std::vector<std::pair<std::string, std::string>> config_parse_lines(const std::string& text);

} // namespace squidlet
