#include "octs/volume_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include <fmt/format.h>

#include "octs/errors.hpp"

namespace octs {
namespace {

constexpr std::array<char, 4> kMagic{'O', 'C', 'T', 'V'};

template <typename T>
void put_le(std::vector<char>& buf, T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  buf.insert(buf.end(), bytes.begin(), bytes.end());
}

template <typename T>
T get_le(const char* p) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

std::vector<char> encode_header(const OctvHeader& h) {
  std::vector<char> buf(kMagic.begin(), kMagic.end());
  put_le<std::uint16_t>(buf, h.version);
  put_le<std::uint8_t>(buf, static_cast<std::uint8_t>(h.domain));
  const auto ch = static_cast<std::uint8_t>(h.channels | (h.complex ? kOctvComplexFlag : 0));
  put_le<std::uint8_t>(buf, ch);
  put_le<std::uint64_t>(buf, h.dims.nz);
  put_le<std::uint64_t>(buf, h.dims.nx);
  put_le<std::uint64_t>(buf, h.dims.ny);
  put_le<double>(buf, h.pitch.dz);
  put_le<double>(buf, h.pitch.dx);
  put_le<double>(buf, h.pitch.dy);
  return buf;
}

OctvHeader decode_header(const char* p, const std::filesystem::path& path) {
  if (!std::equal(kMagic.begin(), kMagic.end(), p)) {
    throw FormatError(fmt::format("{}: bad magic, not an OCTV file", path.string()));
  }
  OctvHeader h;
  h.version = get_le<std::uint16_t>(p + 4);
  if (h.version != kOctvVersion) {
    throw FormatError(fmt::format("{}: unsupported OCTV version {}", path.string(), h.version));
  }
  const auto dom = get_le<std::uint8_t>(p + 6);
  if (dom > 3) throw FormatError(fmt::format("{}: unknown domain code {}", path.string(), dom));
  h.domain = static_cast<Domain>(dom);
  const auto ch = get_le<std::uint8_t>(p + 7);
  h.complex = (ch & kOctvComplexFlag) != 0;
  h.channels = ch & 0x7f;
  if (h.channels < 1 || h.channels > 2 || (!h.complex && h.channels != 1)) {
    throw FormatError(fmt::format("{}: invalid channel byte 0x{:02x}", path.string(), ch));
  }
  h.dims = {get_le<std::uint64_t>(p + 8), get_le<std::uint64_t>(p + 16), get_le<std::uint64_t>(p + 24)};
  h.pitch = {get_le<double>(p + 32), get_le<double>(p + 40), get_le<double>(p + 48)};
  if (h.dims.nz == 0 || h.dims.nx == 0 || h.dims.ny == 0) {
    throw FormatError(fmt::format("{}: zero extent in header", path.string()));
  }
  if (!(h.pitch.dz > 0 && h.pitch.dx > 0 && h.pitch.dy > 0)) {
    throw FormatError(fmt::format("{}: nonpositive pitch in header", path.string()));
  }
  return h;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("{}: cannot open for reading (file not found or unreadable)", path.string()));
  return in;
}

OctvHeader read_header_from(std::ifstream& in, const std::filesystem::path& path) {
  std::array<char, kOctvHeaderBytes> raw{};
  in.read(raw.data(), raw.size());
  if (in.gcount() < 4) throw FormatError(fmt::format("{}: file too short for OCTV magic", path.string()));
  if (!std::equal(kMagic.begin(), kMagic.end(), raw.data())) {
    throw FormatError(fmt::format("{}: bad magic, not an OCTV file", path.string()));
  }
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw FormatError(fmt::format("{}: truncated header", path.string()));
  }
  return decode_header(raw.data(), path);
}

std::vector<float> read_payload(std::ifstream& in, const OctvHeader& h, const std::filesystem::path& path) {
  const std::uint64_t avail = std::filesystem::file_size(path) - kOctvHeaderBytes;
  const std::uint64_t per_voxel = h.complex ? 8 * h.channels : 4;
  const std::uint64_t voxels = h.dims.nz * h.dims.nx * h.dims.ny;
  if (voxels / h.dims.nz / h.dims.nx != h.dims.ny || voxels > avail / per_voxel) {
    throw FormatError(fmt::format("{}: truncated payload (header declares {}x{}x{}, {} bytes present)", path.string(),
                                  h.dims.nz, h.dims.nx, h.dims.ny, avail));
  }
  const std::size_t floats = voxels * per_voxel / 4;
  std::vector<char> raw(floats * 4);
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw FormatError(fmt::format("{}: truncated payload ({} of {} bytes)", path.string(), in.gcount(), raw.size()));
  }
  std::vector<float> out(floats);
  for (std::size_t i = 0; i < floats; ++i) out[i] = get_le<float>(raw.data() + 4 * i);
  return out;
}

void write_file(const std::filesystem::path& path, const std::vector<char>& header, std::span<const float> payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("{}: cannot open for writing", path.string()));
  std::vector<char> buf = header;
  buf.reserve(header.size() + payload.size() * 4);
  for (float f : payload) put_le<float>(buf, f);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  out.flush();
  if (!out) throw IoError(fmt::format("{}: write failed", path.string()));
}

} // namespace

OctvHeader read_header(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_header_from(in, path);
}

Volume read_volume(const std::filesystem::path& path) {
  auto in = open_in(path);
  const OctvHeader h = read_header_from(in, path);
  if (h.complex) throw FormatError(fmt::format("{}: holds a complex tomogram, expected a scalar volume", path.string()));
  Volume v(h.dims, h.domain, read_payload(in, h, path), h.pitch);
  validate_domain(v);
  return v;
}

void write_volume(const Volume& v, const std::filesystem::path& path) {
  OctvHeader h;
  h.domain = v.domain();
  h.dims = v.dims();
  h.pitch = v.pitch();
  write_file(path, encode_header(h), v.values());
}

ComplexTomogram read_tomogram(const std::filesystem::path& path) {
  auto in = open_in(path);
  const OctvHeader h = read_header_from(in, path);
  if (!h.complex) throw FormatError(fmt::format("{}: holds a scalar volume, expected a complex tomogram", path.string()));
  const auto flat = read_payload(in, h, path);
  ComplexTomogram t(h.dims, h.channels, h.pitch);
  std::size_t k = 0;
  for (std::size_t c = 0; c < h.channels; ++c) {
    for (auto& e : t.channel(c)) {
      e = {flat[k], flat[k + 1]};
      k += 2;
    }
  }
  return t;
}

void write_tomogram(const ComplexTomogram& t, const std::filesystem::path& path) {
  OctvHeader h;
  h.complex = true;
  h.channels = t.channels();
  h.dims = t.dims();
  h.pitch = t.pitch();
  std::vector<float> flat;
  flat.reserve(2 * t.channels() * t.dims().count());
  for (std::size_t c = 0; c < t.channels(); ++c) {
    for (const auto& e : t.channel(c)) {
      flat.push_back(e.real());
      flat.push_back(e.imag());
    }
  }
  write_file(path, encode_header(h), flat);
}

} // namespace octs
