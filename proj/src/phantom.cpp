#include "octs/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include <fmt/format.h>

#include "octs/errors.hpp"
#include "octs/kernels.hpp"
#include "octs/parallel.hpp"
#include "octs/rng.hpp"

namespace octs::phantom {

std::string_view to_string(Preset p) {
  switch (p) {
  case Preset::Uniform: return "uniform";
  case Preset::Layers: return "layers";
  case Preset::Vessel: return "vessel";
  case Preset::Step: return "step";
  }
  return "?";
}

Preset parse_preset(std::string_view name) {
  for (Preset p : {Preset::Uniform, Preset::Layers, Preset::Vessel, Preset::Step})
    if (to_string(p) == name) return p;
  throw ArgumentError(fmt::format("unknown phantom preset '{}' (uniform, layers, vessel, step)", name));
}

std::string_view to_string(Axis a) {
  switch (a) {
  case Axis::Z: return "z";
  case Axis::X: return "x";
  case Axis::Y: return "y";
  }
  return "?";
}

Axis parse_axis(std::string_view name) {
  for (Axis a : {Axis::Z, Axis::X, Axis::Y})
    if (to_string(a) == name) return a;
  throw ArgumentError(fmt::format("unknown axis '{}' (z, x, y)", name));
}

void PhantomSpec::validate() const {
  if (dims.nz < 8 || dims.nx < 8 || dims.ny < 8) {
    throw ArgumentError(fmt::format("phantom dims {}x{}x{}: need >= 8 per axis", dims.nz, dims.nx, dims.ny));
  }
  if (!(psf.z >= 0.0 && psf.x >= 0.0 && psf.y >= 0.0)) throw ArgumentError("psf sigmas must be >= 0");
  if (!(level >= 0.0)) throw ArgumentError(fmt::format("level must be >= 0, got {}", level));
  switch (preset) {
  case Preset::Uniform: break;
  case Preset::Layers: {
    double prev = -1.0;
    for (const Layer& l : layers) {
      if (!(l.reflectivity >= 0.0)) throw ArgumentError("layer reflectivities must be >= 0");
      if (!(l.top >= 0.0 && l.top <= 1.0) || !(l.top > prev)) {
        throw ArgumentError("layer tops must be strictly increasing fractions in [0, 1]");
      }
      prev = l.top;
    }
    if (!(undulation_amplitude >= 0.0)) throw ArgumentError("undulation_amplitude must be >= 0");
    if (undulation_amplitude > 0.0 && !(undulation_period > 0.0)) {
      throw ArgumentError("undulation_period must be > 0");
    }
    break;
  }
  case Preset::Vessel:
    if (!(vessel_radius >= 0.0)) throw ArgumentError("vessel_radius must be >= 0");
    if (!(vessel_contrast >= 0.0)) throw ArgumentError("vessel_contrast must be >= 0");
    if (!(vessel_center_a >= 0.0 && vessel_center_a <= 1.0 && vessel_center_b >= 0.0 && vessel_center_b <= 1.0)) {
      throw ArgumentError("vessel center fractions must lie in [0, 1]");
    }
    break;
  case Preset::Step:
    if (!(step_levels.first >= 0.0 && step_levels.second >= 0.0)) throw ArgumentError("step levels must be >= 0");
    if (step_position && !(*step_position >= 0.0)) throw ArgumentError("step_position must be >= 0");
    break;
  }
}

namespace {

double coord(Axis a, std::size_t z, std::size_t x, std::size_t y) {
  return static_cast<double>(a == Axis::Z ? z : a == Axis::X ? x : y);
}

std::size_t extent(Axis a, const Dims& d) { return a == Axis::Z ? d.nz : a == Axis::X ? d.nx : d.ny; }

double layers_value(const PhantomSpec& s, std::size_t z, std::size_t x) {
  const double shift =
      s.undulation_amplitude > 0.0
          ? s.undulation_amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(x) / s.undulation_period)
          : 0.0;
  double r = s.level;
  for (const Layer& l : s.layers) {
    if (static_cast<double>(z) >= l.top * static_cast<double>(s.dims.nz) + shift) r = l.reflectivity;
  }
  return r;
}

double vessel_value(const PhantomSpec& s, std::size_t z, std::size_t x, std::size_t y) {
  Axis a = Axis::Z, b = Axis::X;
  if (s.vessel_axis == Axis::X) b = Axis::Y;
  if (s.vessel_axis == Axis::Z) a = Axis::X, b = Axis::Y;
  const double ca = s.vessel_center_a * static_cast<double>(extent(a, s.dims) - 1);
  const double cb = s.vessel_center_b * static_cast<double>(extent(b, s.dims) - 1);
  const double da = coord(a, z, x, y) - ca;
  const double db = coord(b, z, x, y) - cb;
  return da * da + db * db < s.vessel_radius * s.vessel_radius ? s.level * s.vessel_contrast : s.level;
}

double step_value(const PhantomSpec& s, std::size_t z, std::size_t x, std::size_t y) {
  const double pos = s.step_position ? *s.step_position : static_cast<double>(extent(s.step_axis, s.dims) / 2);
  return coord(s.step_axis, z, x, y) < pos ? s.step_levels.first : s.step_levels.second;
}

std::size_t psf_radius(double sigma) { return sigma > 0.0 ? static_cast<std::size_t>(std::ceil(4.0 * sigma)) : 0; }

// Unit-energy taps (sum of squares 1).
std::vector<double> psf_taps(double sigma) {
  auto taps = gaussian_taps(sigma, psf_radius(sigma));
  double e = 0.0;
  for (double t : taps) e += t * t;
  for (double& t : taps) t /= std::sqrt(e);
  return taps;
}

// Valid-mode convolution along one axis; the output is shorter by
// taps.size() - 1 along that axis. Layout z-fastest.
template <typename T>
std::vector<T> convolve_axis(const std::vector<T>& src, Dims& d, int axis, const std::vector<double>& taps) {
  if (taps.size() == 1 && taps[0] == 1.0) return src;
  const std::size_t k = taps.size();
  Dims o = d;
  if (axis == 0) o.nz -= k - 1;
  if (axis == 1) o.nx -= k - 1;
  if (axis == 2) o.ny -= k - 1;
  std::vector<T> dst(o.count());
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? d.nz : d.plane();
  parallel_for(o.ny, [&](std::size_t y) {
    for (std::size_t x = 0; x < o.nx; ++x) {
      for (std::size_t z = 0; z < o.nz; ++z) {
        const std::size_t base = z + d.nz * (x + d.nx * y);
        T acc{};
        for (std::size_t t = 0; t < k; ++t) acc += taps[t] * src[base + t * stride];
        dst[z + o.nz * (x + o.nx * y)] = acc;
      }
    }
  });
  d = o;
  return dst;
}

struct Padded {
  Dims dims;
  std::size_t pz, px, py;
};

Padded padded_dims(const Dims& d, const PsfSigma& psf) {
  const std::size_t pz = psf_radius(psf.z), px = psf_radius(psf.x), py = psf_radius(psf.y);
  return {{d.nz + 2 * pz, d.nx + 2 * px, d.ny + 2 * py}, pz, px, py};
}

// R at padded coordinate, edge-extended.
float edge_value(const Volume& r, const Padded& p, std::size_t z, std::size_t x, std::size_t y) {
  const Dims& d = r.dims();
  auto clampi = [](std::size_t i, std::size_t pad, std::size_t n) {
    const auto v = static_cast<std::int64_t>(i) - static_cast<std::int64_t>(pad);
    return static_cast<std::size_t>(std::clamp<std::int64_t>(v, 0, static_cast<std::int64_t>(n) - 1));
  };
  return r(clampi(z, p.pz, d.nz), clampi(x, p.px, d.nx), clampi(y, p.py, d.ny));
}

void check_psf(const PsfSigma& psf) {
  if (!(psf.z >= 0.0 && psf.x >= 0.0 && psf.y >= 0.0)) throw ArgumentError("psf sigmas must be >= 0");
}

} // namespace

Volume generate_incoherent(const PhantomSpec& spec) {
  spec.validate();
  Volume out(spec.dims, Domain::Linear);
  const Dims& d = spec.dims;
  for (std::size_t y = 0; y < d.ny; ++y)
    for (std::size_t x = 0; x < d.nx; ++x)
      for (std::size_t z = 0; z < d.nz; ++z) {
        double r = spec.level;
        switch (spec.preset) {
        case Preset::Uniform: break;
        case Preset::Layers: r = layers_value(spec, z, x); break;
        case Preset::Vessel: r = vessel_value(spec, z, x, y); break;
        case Preset::Step: r = step_value(spec, z, x, y); break;
        }
        out(z, x, y) = static_cast<float>(r);
      }
  return out;
}

SpeckleRealization speckle_realization(const Volume& incoherent, const PsfSigma& psf, std::uint64_t seed) {
  check_psf(psf);
  if (incoherent.domain() != Domain::Linear) throw ArgumentError("speckle_realization expects a linear map");
  const Padded p = padded_dims(incoherent.dims(), psf);
  Dims d = p.dims;
  using cd = std::complex<double>;
  std::vector<cd> g(d.count());
  parallel_for(d.ny, [&](std::size_t y) {
    Rng rng = Rng::stream(seed, y);
    for (std::size_t x = 0; x < d.nx; ++x)
      for (std::size_t z = 0; z < d.nz; ++z) {
        const double sd = std::sqrt(std::max(0.0f, edge_value(incoherent, p, z, x, y)) / 2.0);
        const double re = rng.normal();
        const double im = rng.normal();
        g[z + d.nz * (x + d.nx * y)] = {sd * re, sd * im};
      }
  });
  g = convolve_axis(g, d, 0, psf_taps(psf.z));
  g = convolve_axis(g, d, 1, psf_taps(psf.x));
  g = convolve_axis(g, d, 2, psf_taps(psf.y));

  SpeckleRealization out{ComplexTomogram(d, 1, incoherent.pitch()), Volume(d, Domain::Linear, incoherent.pitch())};
  auto field = out.field.channel(0);
  auto inten = out.intensity.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    field[i] = cfloat(static_cast<float>(g[i].real()), static_cast<float>(g[i].imag()));
    inten[i] = static_cast<float>(std::norm(g[i]));
  }
  return out;
}

Volume expected_intensity(const Volume& incoherent, const PsfSigma& psf) {
  check_psf(psf);
  const Padded p = padded_dims(incoherent.dims(), psf);
  Dims d = p.dims;
  std::vector<double> r(d.count());
  for (std::size_t y = 0; y < d.ny; ++y)
    for (std::size_t x = 0; x < d.nx; ++x)
      for (std::size_t z = 0; z < d.nz; ++z) r[z + d.nz * (x + d.nx * y)] = edge_value(incoherent, p, z, x, y);
  auto squared = [](std::vector<double> t) {
    for (double& v : t) v *= v;
    return t;
  };
  r = convolve_axis(r, d, 0, squared(psf_taps(psf.z)));
  r = convolve_axis(r, d, 1, squared(psf_taps(psf.x)));
  r = convolve_axis(r, d, 2, squared(psf_taps(psf.y)));
  Volume out(d, Domain::Linear, incoherent.pitch());
  std::transform(r.begin(), r.end(), out.values().begin(), [](double v) { return static_cast<float>(v); });
  return out;
}

std::vector<PhantomPair> make_pair_set(const PhantomSpec& spec, const tnode::TNodeParams& params, std::size_t count,
                                       std::uint64_t seed) {
  if (count < 1) throw ArgumentError("make_pair_set: count must be >= 1");
  params.validate();
  const Volume truth = generate_incoherent(spec);
  std::vector<PhantomPair> pairs;
  pairs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    PhantomPair pair;
    pair.seed = Rng::stream(seed, i).next();
    const auto real = speckle_realization(truth, spec.psf, pair.seed);
    pair.raw_db = convert_domain(real.intensity, Domain::LogDb);
    pair.window = full_range_window(pair.raw_db);
    const Volume unit = convert_domain(pair.raw_db, Domain::Unit, {.window = pair.window});
    pair.target_db = convert_domain(tnode::despeckle(unit, params, pair.window), Domain::LogDb, {.window = pair.window});
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

} // namespace octs::phantom
