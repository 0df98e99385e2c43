#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>

#include "darkhash/hashspace.hpp"

namespace darkhash {

// The packed Hamming kernel ships separately as a standalone executable.
// It is looked up through $DARKHASH_KERNEL first, then as `hamming-kernel`
// on $PATH.
std::optional<std::filesystem::path> find_kernel();

// Runs `<exe> map --queries q.dhc --db d.dhc [--target t]` over temporary
// DHC1 files and parses the single number it prints. Throws KernelError
// when the process fails or prints something unparsable.
double kernel_map(const std::filesystem::path& exe, const CodeDatabase& queries, const CodeDatabase& db,
                  std::optional<std::size_t> target = std::nullopt);

}  // namespace darkhash
