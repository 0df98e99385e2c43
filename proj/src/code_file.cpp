#include "darkhash/code_file.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "darkhash/errors.hpp"

namespace darkhash {

namespace {

constexpr std::array<char, 4> kMagic = {'D', 'H', 'C', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t off) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(in[off + b]) << (8 * b);
  return v;
}

std::size_t packed_bytes(std::size_t bits) { return (bits + 7) / 8; }

}  // namespace

std::vector<std::uint8_t> encode_code_file(const CodeDatabase& db) {
  db.validate();
  const std::size_t k = db.bits();
  const std::size_t l = db.label_count();
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  put_u32(out, static_cast<std::uint32_t>(db.size()));
  put_u32(out, static_cast<std::uint32_t>(k));
  put_u32(out, static_cast<std::uint32_t>(l));
  out.reserve(out.size() + db.size() * (packed_bytes(k) + packed_bytes(l)));
  for (std::size_t i = 0; i < db.size(); ++i) {
    std::vector<std::uint8_t> code(packed_bytes(k), 0);
    for (std::size_t b = 0; b < k; ++b) {
      if (db.codes[i][b] == 1) code[b / 8] |= static_cast<std::uint8_t>(1u << (b % 8));
    }
    std::vector<std::uint8_t> label(packed_bytes(l), 0);
    for (std::size_t c = 0; c < l; ++c) {
      if (db.labels[i][c] != 0) label[c / 8] |= static_cast<std::uint8_t>(1u << (c % 8));
    }
    out.insert(out.end(), code.begin(), code.end());
    out.insert(out.end(), label.begin(), label.end());
  }
  return out;
}

CodeDatabase decode_code_file(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw FormatError("not a DHC1 code file");
  }
  const std::size_t n = get_u32(bytes, 4);
  const std::size_t k = get_u32(bytes, 8);
  const std::size_t l = get_u32(bytes, 12);
  if (k == 0) throw FormatError("DHC1: K must be positive");
  const std::size_t record = packed_bytes(k) + packed_bytes(l);
  if (bytes.size() != 16 + n * record) {
    throw FormatError("DHC1: expected " + std::to_string(16 + n * record) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  CodeDatabase db;
  std::size_t off = 16;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::int8_t> bits(k);
    for (std::size_t b = 0; b < k; ++b) {
      bits[b] = (bytes[off + b / 8] >> (b % 8)) & 1u ? 1 : -1;
    }
    for (std::size_t b = k; b < packed_bytes(k) * 8; ++b) {
      if ((bytes[off + b / 8] >> (b % 8)) & 1u) throw FormatError("DHC1: nonzero code padding");
    }
    off += packed_bytes(k);
    LabelVector label(l);
    for (std::size_t c = 0; c < l; ++c) label[c] = (bytes[off + c / 8] >> (c % 8)) & 1u;
    off += packed_bytes(l);
    db.push_back(HashCode(std::move(bits)), std::move(label), std::to_string(i));
  }
  return db;
}

void write_code_file(const std::filesystem::path& path, const CodeDatabase& db) {
  const auto bytes = encode_code_file(db);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

CodeDatabase read_code_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_code_file(bytes);
}

}  // namespace darkhash
