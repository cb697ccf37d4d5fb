#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "octs/volume.hpp"

namespace octs::metrics {

struct Roi {
  std::size_t z = 0, x = 0, y = 0;
  std::size_t dz = 1, dx = 1, dy = 1;

  // Throws ArgumentError unless the extent is >= 1 per axis and the box lies
  // inside dims.
  void validate(const Dims& dims) const;
  bool overlaps(const Roi& other) const;
  std::size_t count() const { return dz * dx * dy; }
  bool operator==(const Roi&) const = default;
};

// "z,x,y,dz,dx,dy"
Roi parse_roi(const std::string& text);
std::string to_string(const Roi& r);
Roi whole(const Dims& dims);

// Population statistics over the ROI.
struct RoiStats {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t count = 0;
};
RoiStats roi_stats(const Volume& v, const Roi& roi);

// Maps a LogDb volume onto [0, 65535] codes (stored as float) under the
// window, the same quantizer the pair exporter uses.
Volume quantize(const Volume& v_db, const ContrastWindow& w);

// 10 log10(65535^2 / MSE) over volumes holding 16-bit codes. Identical
// inputs give +infinity. Throws ArgumentError on a size mismatch or values
// outside [0, 65535].
double psnr(std::span<const double> ref, std::span<const double> test);
double psnr(const Volume& ref, const Volume& test);

// (|mu2| - |mu1|) / sqrt(sd1^2 + sd2^2). Throws DegenerateInput when both
// ROIs have zero variance.
double cnr(const Volume& v, const Roi& roi1, const Roi& roi2);

struct SsimOptions {
  // Dynamic range L. Disengaged: 1 for Unit, 2 for Signed, otherwise the
  // reference's max - min (1 when that is zero).
  std::optional<double> data_range;
  double k1 = 0.01;
  double k2 = 0.03;
  double sigma = 1.5;
  std::size_t window = 11;
};

double resolve_data_range(const Volume& ref, const SsimOptions& opts);

struct SsimResult {
  double score = 0.0;
  Volume map;  // local SSIM, same dims
  double data_range = 0.0;
};

// Local SSIM under a separable 3D Gaussian window with replicated borders;
// the score is the mean of the map.
SsimResult ssim3d(const Volume& ref, const Volume& test, const SsimOptions& opts = {});

struct MsssimResult {
  double score = 0.0;
  std::size_t scales_requested = 0;
  std::size_t scales_used = 0;
  bool reduced = false;
  std::vector<double> per_scale;  // mean contrast-structure per scale; last entry is the full SSIM
  std::vector<double> weights;    // renormalized over the active scales
};

inline constexpr double kMsssimWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

// Multi-scale SSIM. Scales are reduced (with a warning) until every axis
// longer than one voxel has at least 2^(scales-1) * window samples.
// Negative per-scale terms keep their sign under the power.
MsssimResult msssim3d(const Volume& ref, const Volume& test, std::size_t scales = 5, const SsimOptions& opts = {});

struct TTest {
  double t = 0.0;
  double p = 1.0;  // two-sided
  double dof = 0.0;
};

// Pooled two-sample Student's t-test over the voxel values of two maps.
TTest ssim_ttest(const Volume& map_a, const Volume& map_b);
TTest ttest(std::span<const float> a, std::span<const float> b);

// sd / mean over the ROI of a Linear volume. Throws DegenerateInput when the
// mean is not positive.
double speckle_contrast(const Volume& v, const Roi& roi);

struct MetricReport {
  std::optional<double> psnr_db;
  std::optional<double> cnr;
  std::optional<double> ssim;
  std::optional<double> ms_ssim;
  std::optional<double> speckle_contrast;
  std::optional<Roi> roi1;
  std::optional<Roi> roi2;
  nlohmann::json parameters = nlohmann::json::object();
};

nlohmann::json to_json(const MetricReport& r);
std::string format_report(const MetricReport& r);

} // namespace octs::metrics
