#pragma once

#include <cstdint>
#include <filesystem>

#include "octs/volume.hpp"

namespace octs {

// OCTV container, little-endian:
//   magic "OCTV" | version u16 | domain u8 | channels u8 | nz nx ny u64 |
//   dz dx dy f64 | payload
// Real volumes carry channels = 1 and a raw f32 payload. Complex tomograms
// set bit 0x80 in the channel byte and store interleaved f32 re/im, one
// channel after the other.
inline constexpr std::uint16_t kOctvVersion = 1;
inline constexpr std::size_t kOctvHeaderBytes = 56;
inline constexpr std::uint8_t kOctvComplexFlag = 0x80;

struct OctvHeader {
  std::uint16_t version = kOctvVersion;
  Domain domain = Domain::Linear;
  bool complex = false;
  std::size_t channels = 1;
  Dims dims{};
  Pitch pitch{};
};

// Parses only the header; throws IoError / FormatError.
OctvHeader read_header(const std::filesystem::path& path);

Volume read_volume(const std::filesystem::path& path);
void write_volume(const Volume& v, const std::filesystem::path& path);

ComplexTomogram read_tomogram(const std::filesystem::path& path);
void write_tomogram(const ComplexTomogram& t, const std::filesystem::path& path);

} // namespace octs
