#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

#include "octs/volume.hpp"

// Volumetric non-local-means despeckling on unit-normalized log intensity
// with an SNR-adaptive filtering strength.
namespace octs::tnode {

struct Radii {
  std::size_t z = 0;
  std::size_t x = 0;
  std::size_t y = 0;
  bool operator==(const Radii&) const = default;
};

struct TNodeParams {
  double h0 = 0.080;  // base filtering parameter, [0,1] log-intensity units
  double h1 = 0.040;  // extra strength at the noise floor
  Radii search{8, 8, 8};  // slow-axis window 2*8+1
  Radii patch{1, 1, 1};
  // Noise floor in dB; disengaged means "estimate from the volume".
  std::optional<double> noise_floor_db;
  double snr_scale_db = 10.0;  // decay constant of the SNR -> h mapping

  // Throws ArgumentError on h0 <= 0, h1 < 0, snr_scale_db <= 0 or
  // patch radii exceeding search radii.
  void validate() const;
};

// Signed voxel coordinate; positions outside the grid are mirrored.
struct Voxel {
  std::int64_t z = 0;
  std::int64_t x = 0;
  std::int64_t y = 0;
};

// Separable Gaussian patch kernel with sigma = radius / 2 per axis.
// Each axis is normalized to unit sum, so the 3D kernel sums to one.
struct PatchKernel {
  std::vector<double> z, x, y;
  explicit PatchKernel(const Radii& patch);
};

// Gaussian-weighted mean squared difference between the patches around p
// and q, mirror boundary.
double patch_distance(const Volume& v, Voxel p, Voxel q, const Radii& patch);

// h = h0 + h1 * exp(-max(0, intensity - floor) / snr_scale). Requires a
// resolved noise floor in params.
double adaptive_h(double intensity_db, const TNodeParams& params);

// Filters a Unit-domain volume. `window` maps Unit values back to dB for the
// adaptive h; when the params carry no noise floor it is estimated from the
// whole volume. For every voxel p:
//   out(p) = sum_q w(p,q) v(q) / sum_q w(p,q),  w = exp(-d^2(p,q) / h(p)^2)
// over the mirrored search window, with the self weight replaced by the
// largest neighbor weight. Each output voxel is computed wholly by one worker
// in a fixed order, so results do not depend on the thread count.
Volume despeckle(const Volume& v, const TNodeParams& params, const ContrastWindow& window);

// B-scan `center_y` of despeckle(v, params, window), bit for bit, at the
// cost of one B-scan.
BScan despeckle_partial(const Volume& v, std::size_t center_y, const TNodeParams& params,
                        const ContrastWindow& window);

// The noise floor despeckle would use for this volume and window.
double resolve_noise_floor(const Volume& v, const TNodeParams& params, const ContrastWindow& window);

} // namespace octs::tnode
