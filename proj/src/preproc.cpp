#include "octs/preproc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fft.hpp"
#include "octs/errors.hpp"
#include "octs/kernels.hpp"
#include "octs/parallel.hpp"

namespace octs::preproc {

using detail::cdouble;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Signed DFT frequency for bin i of an n-point transform (Nyquist is -n/2).
double signed_freq(std::size_t i, std::size_t n) {
  return i < (n + 1) / 2 ? static_cast<double>(i) : static_cast<double>(i) - static_cast<double>(n);
}

template <typename T>
std::vector<cdouble> to_complex(const Plane<T>& p) {
  std::vector<cdouble> out(p.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cdouble(p.data[i]);
  return out;
}

// One axis of a separable filter over a z-fastest plane, mirror boundary.
// `stride` is 1 for z and nz for x.
template <typename T>
void filter_axis(std::vector<T>& data, std::size_t nz, std::size_t nx, bool along_z, const std::vector<double>& taps) {
  if (taps.size() == 1) return;
  const auto radius = static_cast<std::int64_t>(taps.size() / 2);
  const std::vector<T> src = data;
  const std::size_t n = along_z ? nz : nx;
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t z = 0; z < nz; ++z) {
      T acc{};
      const auto pos = static_cast<std::int64_t>(along_z ? z : x);
      for (std::int64_t k = -radius; k <= radius; ++k) {
        const std::size_t m = mirror_index(pos + k, n);
        const T& s = along_z ? src[m + nz * x] : src[z + nz * m];
        acc += s * taps[static_cast<std::size_t>(k + radius)];
      }
      data[z + nz * x] = acc;
    }
  }
}

std::vector<double> lowpass_taps(double sigma) {
  if (sigma < 0.0 || !std::isfinite(sigma)) throw ArgumentError(fmt::format("lowpass sigma must be >= 0, got {}", sigma));
  if (sigma == 0.0) return {1.0};
  const auto radius = static_cast<std::size_t>(std::ceil(4.0 * sigma));
  return normalized(gaussian_taps(sigma, radius));
}

template <typename Sample, typename Acc>
void lowpass_plane(std::span<Sample> plane, std::size_t nz, std::size_t nx, const std::vector<double>& tz,
                   const std::vector<double>& tx) {
  std::vector<Acc> work(plane.begin(), plane.end());
  filter_axis(work, nz, nx, true, tz);
  filter_axis(work, nz, nx, false, tx);
  for (std::size_t i = 0; i < work.size(); ++i) plane[i] = static_cast<Sample>(work[i]);
}

std::size_t argmax_abs(const std::vector<cdouble>& v) {
  std::size_t best = 0;
  double best_mag = -1.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double m = std::norm(v[i]);
    if (m > best_mag) {
      best_mag = m;
      best = i;
    }
  }
  return best;
}

bool all_zero(const std::vector<cdouble>& v) {
  return std::all_of(v.begin(), v.end(), [](const cdouble& c) { return c == cdouble{}; });
}

// exp(+i 2 pi k s / n) for every signed frequency k and every sample s.
std::vector<cdouble> dft_kernel(std::size_t n, const std::vector<double>& samples) {
  std::vector<cdouble> k(n * samples.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double f = signed_freq(i, n);
    for (std::size_t j = 0; j < samples.size(); ++j) {
      k[i * samples.size() + j] = std::polar(1.0, kTwoPi * f * samples[j] / static_cast<double>(n));
    }
  }
  return k;
}

ShiftEstimate estimate_core(std::vector<cdouble> ref, std::vector<cdouble> mov, std::size_t nz, std::size_t nx,
                            int upsample) {
  if (upsample < 1) throw ArgumentError(fmt::format("upsample factor must be >= 1, got {}", upsample));
  if (all_zero(ref) || all_zero(mov)) throw DegenerateInput("estimate_shift: all-zero B-scan");

  detail::fft2(ref, nz, nx, false);
  detail::fft2(mov, nz, nx, false);
  double energy_ref = 0.0;
  double energy_mov = 0.0;
  std::vector<cdouble> cross(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    energy_ref += std::norm(ref[i]);
    energy_mov += std::norm(mov[i]);
    cross[i] = ref[i] * std::conj(mov[i]);
  }
  const double norm = std::sqrt(energy_ref * energy_mov);

  std::vector<cdouble> cc = cross;
  detail::fft2(cc, nz, nx, true);
  const std::size_t at = argmax_abs(cc);
  const double z0 = signed_freq(at % nz, nz);
  const double x0 = signed_freq(at / nz, nx);

  ShiftEstimate est;
  est.upsample = upsample;
  if (upsample == 1) {
    est.dz = z0;
    est.dx = x0;
    est.peak = std::min(1.0, std::abs(cc[at]) / norm);
    return est;
  }

  // Evaluate the cross-correlation on a +/-1.5 px grid around the integer peak.
  const auto half = static_cast<std::size_t>(std::ceil(1.5 * upsample));
  const std::size_t m = 2 * half + 1;
  std::vector<double> sz(m), sx(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double off = (static_cast<double>(j) - static_cast<double>(half)) / upsample;
    sz[j] = z0 + off;
    sx[j] = x0 + off;
  }
  const auto kx = dft_kernel(nx, sx);
  const auto kz = dft_kernel(nz, sz);

  // partial[kz][jx] = sum_kx cross[kz, kx] * kx[kx][jx]
  std::vector<cdouble> partial(nz * m);
  for (std::size_t ix = 0; ix < nx; ++ix) {
    const cdouble* krow = &kx[ix * m];
    for (std::size_t iz = 0; iz < nz; ++iz) {
      const cdouble c = cross[iz + nz * ix];
      cdouble* prow = &partial[iz * m];
      for (std::size_t j = 0; j < m; ++j) prow[j] += c * krow[j];
    }
  }
  // up[jz][jx] = sum_kz partial[kz][jx] * kz[kz][jz]
  std::vector<cdouble> up(m * m);
  for (std::size_t iz = 0; iz < nz; ++iz) {
    const cdouble* prow = &partial[iz * m];
    for (std::size_t jz = 0; jz < m; ++jz) {
      const cdouble w = kz[iz * m + jz];
      cdouble* urow = &up[jz * m];
      for (std::size_t jx = 0; jx < m; ++jx) urow[jx] += prow[jx] * w;
    }
  }
  const std::size_t best = argmax_abs(up);
  est.dz = sz[best / m];
  est.dx = sx[best % m];
  est.peak = std::min(1.0, std::abs(up[best]) / norm);
  return est;
}

std::vector<cdouble> shift_core(std::vector<cdouble> data, std::size_t nz, std::size_t nx, double dz, double dx) {
  if (!std::isfinite(dz) || !std::isfinite(dx)) throw ArgumentError("apply_shift: shift must be finite");
  detail::fft2(data, nz, nx, false);
  const double scale = 1.0 / static_cast<double>(nz * nx);
  std::vector<cdouble> rz(nz);
  for (std::size_t i = 0; i < nz; ++i) rz[i] = std::polar(1.0, -kTwoPi * signed_freq(i, nz) * dz / static_cast<double>(nz));
  for (std::size_t ix = 0; ix < nx; ++ix) {
    const cdouble rx = std::polar(scale, -kTwoPi * signed_freq(ix, nx) * dx / static_cast<double>(nx));
    for (std::size_t iz = 0; iz < nz; ++iz) data[iz + nz * ix] *= rz[iz] * rx;
  }
  detail::fft2(data, nz, nx, true);
  return data;
}

template <typename T>
void check_same_extent(const Plane<T>& a, const Plane<T>& b) {
  if (a.nz != b.nz || a.nx != b.nx) {
    throw ArgumentError(fmt::format("estimate_shift: extent mismatch {}x{} vs {}x{}", a.nz, a.nx, b.nz, b.nx));
  }
  if (a.data.empty()) throw ArgumentError("estimate_shift: empty B-scan");
}

BScan log_intensity_bscan(const ComplexTomogram& t, std::size_t y) {
  BScan out(t.dims().nz, t.dims().nx);
  for (std::size_t c = 0; c < t.channels(); ++c) {
    const auto b = t.bscan(c, y);
    for (std::size_t i = 0; i < b.size(); ++i) out.data[i] += std::norm(b[i]);
  }
  for (auto& v : out.data) v = static_cast<float>(10.0 * std::log10(std::max(static_cast<double>(v), 1e-12)));
  return out;
}

} // namespace

Volume combine_polarization(const ComplexTomogram& t) {
  Volume out(t.dims(), Domain::Linear, t.pitch());
  auto dst = out.values();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < t.channels(); ++c) acc += std::norm(std::complex<double>(t.channel(c)[i]));
    dst[i] = static_cast<float>(acc);
  }
  return out;
}

PhaseStabilization stabilize_phase(const ComplexTomogram& t) {
  const Dims d = t.dims();
  if (d.nx < 2) throw ArgumentError("stabilize_phase requires nx >= 2");
  PhaseStabilization result{t, 0};
  std::vector<std::size_t> undefined(d.ny * t.channels(), 0);
  parallel_for(d.ny * t.channels(), [&](std::size_t job) {
    const std::size_t c = job / d.ny;
    const std::size_t y = job % d.ny;
    const auto src = t.bscan(c, y);
    auto dst = result.tomogram.bscan(c, y);
    double phase = 0.0;
    for (std::size_t x = 1; x < d.nx; ++x) {
      std::complex<double> s{};
      for (std::size_t z = 0; z < d.nz; ++z) {
        s += std::complex<double>(src[z + d.nz * x]) * std::conj(std::complex<double>(src[z + d.nz * (x - 1)]));
      }
      if (s == std::complex<double>{}) {
        ++undefined[job];
      } else {
        phase += std::arg(s);
      }
      const std::complex<double> rot = std::polar(1.0, -phase);
      for (std::size_t z = 0; z < d.nz; ++z) {
        dst[z + d.nz * x] = cfloat(std::complex<double>(src[z + d.nz * x]) * rot);
      }
    }
  });
  for (auto n : undefined) result.undefined_pairs += n;
  if (result.undefined_pairs > 0) {
    spdlog::warn("stabilize_phase: {} all-zero A-line pair(s); applied phase 0", result.undefined_pairs);
  }
  return result;
}

ComplexTomogram lowpass(const ComplexTomogram& t, double sigma_z, double sigma_x) {
  const auto tz = lowpass_taps(sigma_z);
  const auto tx = lowpass_taps(sigma_x);
  ComplexTomogram out = t;
  const Dims d = t.dims();
  parallel_for(d.ny * t.channels(), [&](std::size_t job) {
    lowpass_plane<cfloat, cdouble>(out.bscan(job / d.ny, job % d.ny), d.nz, d.nx, tz, tx);
  });
  return out;
}

Volume lowpass(const Volume& v, double sigma_z, double sigma_x) {
  const auto tz = lowpass_taps(sigma_z);
  const auto tx = lowpass_taps(sigma_x);
  Volume out = v;
  const Dims d = v.dims();
  parallel_for(d.ny, [&](std::size_t y) { lowpass_plane<float, double>(out.bscan(y), d.nz, d.nx, tz, tx); });
  return out;
}

ShiftEstimate estimate_shift(const BScan& ref, const BScan& mov, int upsample) {
  check_same_extent(ref, mov);
  return estimate_core(to_complex(ref), to_complex(mov), ref.nz, ref.nx, upsample);
}

ShiftEstimate estimate_shift(const ComplexBScan& ref, const ComplexBScan& mov, int upsample) {
  check_same_extent(ref, mov);
  return estimate_core(to_complex(ref), to_complex(mov), ref.nz, ref.nx, upsample);
}

BScan apply_shift(const BScan& b, double dz, double dx) {
  const auto shifted = shift_core(to_complex(b), b.nz, b.nx, dz, dx);
  BScan out(b.nz, b.nx);
  for (std::size_t i = 0; i < shifted.size(); ++i) out.data[i] = static_cast<float>(shifted[i].real());
  return out;
}

ComplexBScan apply_shift(const ComplexBScan& b, double dz, double dx) {
  const auto shifted = shift_core(to_complex(b), b.nz, b.nx, dz, dx);
  ComplexBScan out(b.nz, b.nx);
  for (std::size_t i = 0; i < shifted.size(); ++i) out.data[i] = cfloat(shifted[i]);
  return out;
}

VolumeRegistration register_volume(const Volume& v, int upsample) {
  const Dims d = v.dims();
  if (d.ny < 2) throw ArgumentError(fmt::format("register_volume requires ny >= 2, got {}", d.ny));
  VolumeRegistration result{v, {}};
  result.trace.push_back({0, 0.0, 0.0, 1.0});
  for (std::size_t y = 1; y < d.ny; ++y) {
    const BScan mov = v.bscan_copy(y);
    ShiftEstimate est;
    try {
      est = estimate_shift(result.volume.bscan_copy(y - 1), mov, upsample);
    } catch (const DegenerateInput& e) {
      throw DegenerateInput(fmt::format("B-scan {}: {}", y, e.what()));
    }
    result.volume.set_bscan(y, apply_shift(mov, est.dz, est.dx));
    result.trace.push_back({y, est.dz, est.dx, est.peak});
  }
  return result;
}

TomogramRegistration register_tomogram(const ComplexTomogram& t, const RegistrationOptions& opts) {
  const Dims d = t.dims();
  if (d.ny < 2) throw ArgumentError(fmt::format("register_tomogram requires ny >= 2, got {}", d.ny));
  TomogramRegistration result{t, {}};
  result.trace.push_back({0, 0.0, 0.0, 1.0});
  for (std::size_t y = 1; y < d.ny; ++y) {
    ShiftEstimate est;
    try {
      if (opts.source == RegistrationSource::Complex) {
        est = estimate_shift(result.tomogram.bscan_copy(0, y - 1), t.bscan_copy(0, y), opts.upsample);
      } else {
        est = estimate_shift(log_intensity_bscan(result.tomogram, y - 1), log_intensity_bscan(t, y), opts.upsample);
      }
    } catch (const DegenerateInput& e) {
      throw DegenerateInput(fmt::format("B-scan {}: {}", y, e.what()));
    }
    for (std::size_t c = 0; c < t.channels(); ++c) {
      result.tomogram.set_bscan(c, y, apply_shift(t.bscan_copy(c, y), est.dz, est.dx));
    }
    result.trace.push_back({y, est.dz, est.dx, est.peak});
  }
  return result;
}

std::string format_shift_log(const std::vector<ShiftRecord>& trace) {
  std::string out = "# y dz dx peak\n";
  for (const auto& r : trace) out += fmt::format("{} {:.6f} {:.6f} {:.6f}\n", r.y, r.dz, r.dx, r.peak);
  return out;
}

PreprocResult preprocess(const ComplexTomogram& t, const PreprocOptions& opts) {
  ComplexTomogram work = t.dims().nx >= 2 ? stabilize_phase(t).tomogram : t;
  work = lowpass(work, opts.sigma_z, opts.sigma_x);
  PreprocResult result;
  if (opts.register_bscans && work.dims().ny >= 2) {
    auto reg = register_tomogram(work, opts.registration);
    work = std::move(reg.tomogram);
    result.trace = std::move(reg.trace);
  }
  result.log_intensity = convert_domain(combine_polarization(work), Domain::LogDb);
  return result;
}

} // namespace octs::preproc
