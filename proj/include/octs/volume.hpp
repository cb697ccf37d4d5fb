#pragma once

#include <complex>
#include <initializer_list>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace octs {

// Value domain of a scalar volume.
//   Linear  intensity, >= 0
//   LogDb   10*log10(intensity), unconstrained
//   Unit    affinely windowed log intensity in [0, 1]
//   Signed  network-ready values in [-1, 1]
enum class Domain : std::uint8_t { Linear = 0, LogDb = 1, Unit = 2, Signed = 3 };

std::string_view to_string(Domain d);
Domain parse_domain(std::string_view name);

// Grid extents: z = depth, x = fast axis, y = slow axis.
struct Dims {
  std::size_t nz = 1;
  std::size_t nx = 1;
  std::size_t ny = 1;

  std::size_t count() const { return nz * nx * ny; }
  std::size_t plane() const { return nz * nx; }
  bool operator==(const Dims&) const = default;
};

// Micrometers per voxel.
struct Pitch {
  double dz = 1.0;
  double dx = 1.0;
  double dy = 1.0;
  bool operator==(const Pitch&) const = default;
};

using cfloat = std::complex<float>;

// Owning 2D cross-section (B-scan), z-fastest like Volume.
template <typename T>
struct Plane {
  std::size_t nz = 0;
  std::size_t nx = 0;
  std::vector<T> data;

  Plane() = default;
  Plane(std::size_t z, std::size_t x) : nz(z), nx(x), data(z * x) {}
  Plane(std::size_t z, std::size_t x, std::vector<T> d) : nz(z), nx(x), data(std::move(d)) {}

  T& operator()(std::size_t z, std::size_t x) { return data[z + nz * x]; }
  const T& operator()(std::size_t z, std::size_t x) const { return data[z + nz * x]; }
  bool operator==(const Plane&) const = default;
};

using BScan = Plane<float>;
using ComplexBScan = Plane<cfloat>;

// Display/quantization window on log intensity.
struct ContrastWindow {
  double lower_db = 0.0;
  double upper_db = 1.0;

  ContrastWindow() = default;
  ContrastWindow(double lower, double upper);
  double width() const { return upper_db - lower_db; }
  bool operator==(const ContrastWindow&) const = default;
};

// Dense 3D scalar grid with z-fastest storage: voxel (z, x, y) lives at
// z + nz * (x + nx * y). A B-scan (fixed y) is therefore one contiguous
// nz*nx block.
class Volume {
public:
  Volume() = default;
  Volume(Dims dims, Domain domain, Pitch pitch = {});
  Volume(Dims dims, Domain domain, std::vector<float> data, Pitch pitch = {});
  Volume(Dims dims, Domain domain, std::initializer_list<float> data, Pitch pitch = {})
      : Volume(dims, domain, std::vector<float>(data), pitch) {}

  const Dims& dims() const { return dims_; }
  const Pitch& pitch() const { return pitch_; }
  Domain domain() const { return domain_; }
  void set_domain(Domain d) { domain_ = d; }
  void set_pitch(Pitch p);

  std::size_t index(std::size_t z, std::size_t x, std::size_t y) const {
    return z + dims_.nz * (x + dims_.nx * y);
  }
  float& operator()(std::size_t z, std::size_t x, std::size_t y) { return data_[index(z, x, y)]; }
  float operator()(std::size_t z, std::size_t x, std::size_t y) const { return data_[index(z, x, y)]; }

  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  std::vector<float>& storage() { return data_; }

  std::span<float> bscan(std::size_t y) { return values().subspan(y * dims_.plane(), dims_.plane()); }
  std::span<const float> bscan(std::size_t y) const {
    return values().subspan(y * dims_.plane(), dims_.plane());
  }

  BScan bscan_copy(std::size_t y) const;
  void set_bscan(std::size_t y, const BScan& b);

  // Copies B-scans [y0, y0 + count) into a new volume.
  Volume slab(std::size_t y0, std::size_t count) const;

  bool operator==(const Volume&) const = default;

private:
  Dims dims_{};
  Pitch pitch_{};
  Domain domain_ = Domain::Linear;
  std::vector<float> data_ = std::vector<float>(1, 0.0f);
};

// Throws DataError if any value violates the volume's domain constraint.
void validate_domain(const Volume& v);


// Complex field with one or two polarization channels, same ordering as Volume.
class ComplexTomogram {
public:
  ComplexTomogram() = default;
  ComplexTomogram(Dims dims, std::size_t channels, Pitch pitch = {});

  const Dims& dims() const { return dims_; }
  const Pitch& pitch() const { return pitch_; }
  std::size_t channels() const { return channels_.size(); }

  std::span<cfloat> channel(std::size_t c) { return channels_.at(c); }
  std::span<const cfloat> channel(std::size_t c) const { return channels_.at(c); }
  std::span<cfloat> bscan(std::size_t c, std::size_t y) {
    return channel(c).subspan(y * dims_.plane(), dims_.plane());
  }
  std::span<const cfloat> bscan(std::size_t c, std::size_t y) const {
    return channel(c).subspan(y * dims_.plane(), dims_.plane());
  }

  ComplexBScan bscan_copy(std::size_t c, std::size_t y) const;
  void set_bscan(std::size_t c, std::size_t y, const ComplexBScan& b);

  bool operator==(const ComplexTomogram&) const = default;

private:
  Dims dims_{};
  Pitch pitch_{};
  std::vector<std::vector<cfloat>> channels_ = {std::vector<cfloat>(1)};
};

struct ConversionOptions {
  // Required for LogDb <-> Unit.
  std::optional<ContrastWindow> window;
  // Linear values <= floor are replaced by floor before the log. Disengaged
  // means nonpositive values raise DataError.
  std::optional<double> log_floor = 1e-12;
};

// Converts between value domains. Supported directly: Linear <-> LogDb,
// LogDb <-> Unit (window), Unit <-> Signed; other pairs are composed.
Volume convert_domain(const Volume& v, Domain target, const ConversionOptions& opts = {});

// [min, max] of the values; the lossless window for LogDb -> Unit.
ContrastWindow full_range_window(const Volume& v);

} // namespace octs
