#pragma once

#include <filesystem>
#include <iosfwd>

#include "vslp/network.hpp"

namespace vslp::nn {

/// Parameter checkpoint:
///   5-byte magic "VSLPP", tensor count (u32 LE), then per tensor
///   name length (u32 LE), name bytes, rank (u32 LE), rank dims (u64 LE),
///   little-endian f64 payload. Tensors are written in name order.
void write_params(std::ostream& out, const NetworkParams& params);
NetworkParams read_params(std::istream& in);

void save_params(const std::filesystem::path& path,
                 const NetworkParams& params);
NetworkParams load_params(const std::filesystem::path& path);

}  // namespace vslp::nn
