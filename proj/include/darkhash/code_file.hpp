#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "darkhash/hashspace.hpp"

namespace darkhash {

// DHC1 code-database container, shared with the packed Hamming kernel.
//
//   bytes 0..3   "DHC1"
//   u32 LE       N (records)
//   u32 LE       K (code bits)
//   u32 LE       L (label classes)
//   N records:   ceil(K/8) code bytes, then ceil(L/8) label bytes
//
// Bit j of byte floor(k/8) holds position k with j = k mod 8; +1 -> 1,
// -1 -> 0; padding bits are zero. Labels use the same layout.
std::vector<std::uint8_t> encode_code_file(const CodeDatabase& db);
CodeDatabase decode_code_file(std::span<const std::uint8_t> bytes);

void write_code_file(const std::filesystem::path& path, const CodeDatabase& db);
CodeDatabase read_code_file(const std::filesystem::path& path);

}  // namespace darkhash
