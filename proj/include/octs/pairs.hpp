#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "octs/rng.hpp"
#include "octs/volume.hpp"

// Training-pair construction and export: partial-volume inputs, despeckled
// targets, contrast-window jitter, uint16 quantization, geometric
// augmentation and the on-disk manifest consumed by the trainer.
namespace octs::pairs {

inline constexpr int kManifestVersion = 1;

// Median of the lowest decile of voxel values (LogDb).
double noise_floor(const Volume& v);

struct AugmentPolicy {
  double lower_jitter_min_db = 0.0;
  double lower_jitter_max_db = 10.0;
  double upper_jitter_min_db = -15.0;
  double upper_jitter_max_db = 1.0;
  std::size_t voi_z = 11;
  std::size_t voi_x = 11;
  std::size_t voi_y = 3;
  bool flip = true;
  bool rotate = true;
  bool free_rotation = false;  // arbitrary angle, bilinear; otherwise multiples of 90 deg
  bool crop = true;
  double crop_min_area = 0.5;  // crop keeps [crop_min_area, 1] of the area
  std::size_t output_nz = 0;   // 0 keeps the post-rotation extent
  std::size_t output_nx = 0;

  void validate() const;
};

// Jittered window and the quantities it was built from, kept so a consumer
// can re-jitter later.
struct WindowDraw {
  ContrastWindow window;
  double noise_floor_db = 0.0;
  double voi_mean_db = 0.0;
  double lower_jitter_db = 0.0;
  double upper_jitter_db = 0.0;
  int attempts = 1;
};

// lower = floor + lower jitter, upper = voi_mean + upper jitter.
// Throws DegenerateInput when upper <= lower.
ContrastWindow window_from_draws(double floor_db, double voi_mean_db, double lower_jitter_db, double upper_jitter_db);

// Mean over the policy's VOI (clipped to the block) centered on the block's
// maximum voxel; first maximum in storage order wins ties.
double voi_mean_at_max(const Volume& block, const AugmentPolicy& policy);

// Draws the lower jitter once and re-draws the upper jitter up to 10 times
// until the window is ordered; throws DegenerateInput otherwise.
WindowDraw draw_contrast_window(const Volume& block, double floor_db, const AugmentPolicy& policy, Rng& rng);

// round(65535 * clamp((v - l) / (u - l), 0, 1)), in storage order.
std::vector<std::uint16_t> quantize_uint16(std::span<const float> values_db, const ContrastWindow& w);

// Plane stack of uint16 codes: `planes` B-scans of nz x nx.
struct QuantizedStack {
  std::size_t nz = 0;
  std::size_t nx = 0;
  std::size_t planes = 0;
  std::vector<std::uint16_t> codes;
};

// Recorded geometric transform. Applied in order: flips, rotation, crop,
// resize.
struct Transform {
  bool flip_z = false;
  bool flip_x = false;
  int rot90 = 0;              // counter-clockwise quarter turns in the z-x plane
  double angle_deg = 0.0;     // free counter-clockwise rotation (bilinear, same extent)
  std::size_t crop_z0 = 0, crop_x0 = 0, crop_nz = 0, crop_nx = 0;  // crop_nz == 0: no crop
  std::size_t out_nz = 0, out_nx = 0;                              // 0: no resize
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  bool operator==(const Transform&) const = default;
};

nlohmann::json to_json(const Transform& t);
Transform transform_from_json(const nlohmann::json& j);

// Input block (2n+1 B-scans) and target B-scan, both Signed after augment.
struct TrainingPair {
  std::size_t center_index = 0;
  std::size_t half_width = 0;
  Volume input;   // ny = 2n+1, B-scan n is the center
  Volume target;  // ny = 1
  WindowDraw window;
  Transform transform;
};

// Draws a transform for an nz x nx stack under the policy.
// Throws ArgumentError when the drawn crop is below 16 px per side.
Transform draw_transform(std::size_t nz, std::size_t nx, const AugmentPolicy& policy, Rng& rng);

// Applies a recorded transform to every plane and remaps codes to
// 2 * (q / 65535) - 1. Deterministic: same stack and transform give the same
// bits.
Volume apply_transform(const QuantizedStack& stack, const Transform& t, Pitch pitch);

// Draws and applies one transform to input and target alike.
struct Augmented {
  Volume input;
  Volume target;
  Transform transform;
};
Augmented augment(const QuantizedStack& input, const QuantizedStack& target, const AugmentPolicy& policy, Rng& rng,
                  Pitch pitch = {});

// One exported source: raw log intensity plus its despeckled counterpart.
// A Unit target needs the window it was normalized with; a LogDb target is
// used as is.
struct PairSource {
  Volume raw;
  Volume despeckled;
  std::optional<ContrastWindow> despeckled_window;
  std::optional<double> noise_floor_db;  // overrides the estimator
  std::string name;
};

struct ExportOptions {
  std::size_t half_width = 8;
  std::size_t count = 100;  // pairs per source
  std::uint64_t seed = 0;
  AugmentPolicy policy{};
};

// Builds one pair deterministically from (source, center, seed, stream).
TrainingPair build_pair(const PairSource& src, const Volume& target_db, double floor_db, std::size_t center,
                        const ExportOptions& opts, std::uint64_t stream);

// Writes pair_XXXXXX_{input,target}.octv and manifest.json into out_dir and
// returns the manifest. Output is byte-identical for a fixed seed regardless
// of thread count.
nlohmann::json export_pairs(const std::vector<PairSource>& sources, const ExportOptions& opts,
                            const std::filesystem::path& out_dir);

} // namespace octs::pairs
