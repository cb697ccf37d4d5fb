#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "octs/volume.hpp"

// Tomogram pre-processing: polarization combination, bulk phase
// stabilization along the fast axis, Gaussian low-pass, and inter-B-scan
// sub-pixel motion correction by upsampled cross-correlation.
namespace octs::preproc {

// Sum of |E|^2 over the polarization channels (Linear domain).
Volume combine_polarization(const ComplexTomogram& t);

struct PhaseStabilization {
  ComplexTomogram tomogram;
  // A-line pairs whose correlation was zero; these receive phase 0.
  std::size_t undefined_pairs = 0;
};

// Removes the cumulative bulk phase between adjacent A-lines of every B-scan,
// independently per channel. Requires nx >= 2.
PhaseStabilization stabilize_phase(const ComplexTomogram& t);

// Per-B-scan separable Gaussian filter (mirror boundary, kernel radius
// ceil(4 sigma), unit sum). Real and imaginary parts are filtered
// independently. sigma 0 leaves an axis untouched.
ComplexTomogram lowpass(const ComplexTomogram& t, double sigma_z, double sigma_x);
Volume lowpass(const Volume& v, double sigma_z, double sigma_x);

struct ShiftEstimate {
  double dz = 0.0;  // axial, pixels
  double dx = 0.0;  // lateral, pixels
  double peak = 0.0;  // normalized cross-correlation magnitude in [0, 1]
  int upsample = 1;
};

// Estimates the translation that maps `mov` onto `ref`, i.e.
// apply_shift(mov, dz, dx) ~ ref. The integer peak comes from the inverse
// transform of REF * conj(MOV); it is then refined on a +/-1.5 px
// neighborhood sampled at 1/upsample px with a matrix-multiply DFT.
// Throws DegenerateInput for all-zero inputs.
ShiftEstimate estimate_shift(const BScan& ref, const BScan& mov, int upsample);
ShiftEstimate estimate_shift(const ComplexBScan& ref, const ComplexBScan& mov, int upsample);

// Circular translation by a spectral phase ramp: out(z, x) = b(z - dz, x - dx).
BScan apply_shift(const BScan& b, double dz, double dx);
ComplexBScan apply_shift(const ComplexBScan& b, double dz, double dx);

struct ShiftRecord {
  std::size_t y = 0;
  double dz = 0.0;  // correction applied to B-scan y (cumulative w.r.t. B-scan 0)
  double dx = 0.0;
  double peak = 1.0;
};

enum class RegistrationSource { Intensity, Complex };

struct RegistrationOptions {
  int upsample = 100;
  RegistrationSource source = RegistrationSource::Intensity;
};

struct VolumeRegistration {
  Volume volume;
  std::vector<ShiftRecord> trace;
};

struct TomogramRegistration {
  ComplexTomogram tomogram;
  std::vector<ShiftRecord> trace;
};

// Registers every B-scan y >= 1 to the already corrected B-scan y - 1.
// B-scan 0 is the anchor. Requires ny >= 2.
VolumeRegistration register_volume(const Volume& v, int upsample = 100);

// Estimates on log intensity of the combined channels (or on channel 0's
// complex field) and applies the same correction to every channel.
TomogramRegistration register_tomogram(const ComplexTomogram& t, const RegistrationOptions& opts = {});

// Plain-text table, one "y dz dx peak" row per B-scan.
std::string format_shift_log(const std::vector<ShiftRecord>& trace);

struct PreprocOptions {
  double sigma_z = 1.0;
  double sigma_x = 1.0;
  RegistrationOptions registration{};
  bool register_bscans = true;
};

struct PreprocResult {
  Volume log_intensity;  // LogDb
  std::vector<ShiftRecord> trace;
};

// stabilize_phase -> lowpass -> register (if ny >= 2) -> combine -> 10 log10.
PreprocResult preprocess(const ComplexTomogram& t, const PreprocOptions& opts = {});

} // namespace octs::preproc
