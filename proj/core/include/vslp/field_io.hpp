#pragma once

#include <filesystem>
#include <iosfwd>

#include "vslp/field.hpp"

namespace vslp {

/// Portable field format:
///   8-byte magic "VSLPF\0\0\1"
///   H, W, K as unsigned 32-bit little-endian
///   H*W*K little-endian IEEE-754 doubles
///   H*W validity bytes (0 or 1)
void write_field(std::ostream& out, const PixelField& field);
PixelField read_field(std::istream& in);

void save_field(const std::filesystem::path& path, const PixelField& field);
PixelField load_field(const std::filesystem::path& path);

}  // namespace vslp
