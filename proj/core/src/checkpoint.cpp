#include "vslp/checkpoint.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "vslp/endian_io.hpp"

namespace vslp::nn {

namespace {
constexpr std::array<char, 5> kMagic = {'V', 'S', 'L', 'P', 'P'};
constexpr std::uint32_t kMaxNameLength = 4096;
constexpr std::uint32_t kMaxRank = 8;
}  // namespace

void write_params(std::ostream& out, const NetworkParams& params) {
  using detail::write_le;
  out.write(kMagic.data(), kMagic.size());
  write_le(out, static_cast<std::uint32_t>(params.tensor_count()));
  for (const auto& [name, tensor] : params.tensors()) {
    write_le(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le(out, static_cast<std::uint32_t>(tensor.shape.size()));
    for (std::size_t d : tensor.shape) {
      write_le(out, static_cast<std::uint64_t>(d));
    }
    for (double v : tensor.data) write_le(out, v);
  }
  if (!out) throw std::runtime_error("write_params: stream error");
}

NetworkParams read_params(std::istream& in) {
  using detail::read_le;
  std::array<char, 5> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw std::runtime_error("read_params: bad magic");
  }
  NetworkParams params;
  const auto count = read_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = read_le<std::uint32_t>(in);
    if (len > kMaxNameLength) {
      throw std::runtime_error("read_params: tensor name too long");
    }
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) {
      throw std::runtime_error("read_params: truncated name");
    }
    const auto rank = read_le<std::uint32_t>(in);
    if (rank > kMaxRank) throw std::runtime_error("read_params: bad rank");
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = static_cast<std::size_t>(read_le<std::uint64_t>(in));
    Tensor tensor(dims);
    for (double& v : tensor.data) {
      v = read_le<double>(in);
      if (!std::isfinite(v)) {
        throw std::runtime_error("read_params: non-finite value in " + name);
      }
    }
    params.add(name, std::move(tensor));
  }
  return params;
}

void save_params(const std::filesystem::path& path,
                 const NetworkParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  write_params(out, params);
}

NetworkParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_params(in);
}

}  // namespace vslp::nn
