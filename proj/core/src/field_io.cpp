#include "vslp/field_io.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "vslp/endian_io.hpp"

namespace vslp {

namespace {
constexpr std::array<char, 8> kMagic = {'V', 'S', 'L', 'P', 'F', 0, 0, 1};
}

void write_field(std::ostream& out, const PixelField& field) {
  constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
  if (field.height() > kMax || field.width() > kMax ||
      field.channels() > kMax) {
    throw std::invalid_argument("write_field: dimension exceeds 32 bits");
  }
  out.write(kMagic.data(), kMagic.size());
  detail::write_le(out, static_cast<std::uint32_t>(field.height()));
  detail::write_le(out, static_cast<std::uint32_t>(field.width()));
  detail::write_le(out, static_cast<std::uint32_t>(field.channels()));
  for (double v : field.data()) detail::write_le(out, v);
  for (std::uint8_t v : field.validity()) {
    out.put(static_cast<char>(v != 0 ? 1 : 0));
  }
  if (!out) throw std::runtime_error("write_field: stream error");
}

PixelField read_field(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw std::runtime_error("read_field: bad magic");
  }
  const auto h = detail::read_le<std::uint32_t>(in);
  const auto w = detail::read_le<std::uint32_t>(in);
  const auto k = detail::read_le<std::uint32_t>(in);
  std::vector<double> data(static_cast<std::size_t>(h) * w * k);
  for (double& v : data) {
    v = detail::read_le<double>(in);
    if (!std::isfinite(v)) {
      throw std::runtime_error("read_field: non-finite entry");
    }
  }
  PixelField field(h, w, k, std::move(data));
  for (std::uint8_t& v : field.validity()) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) {
      throw std::runtime_error("read_field: truncated validity mask");
    }
    if (c != 0 && c != 1) {
      throw std::runtime_error("read_field: validity byte not 0/1");
    }
    v = static_cast<std::uint8_t>(c);
  }
  return field;
}

void save_field(const std::filesystem::path& path, const PixelField& field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  write_field(out, field);
}

PixelField load_field(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_field(in);
}

}  // namespace vslp
