#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "octs/tnode.hpp"
#include "octs/volume.hpp"

// Synthetic speckle volumes with a known incoherent reflectivity map.
namespace octs::phantom {

enum class Preset { Uniform, Layers, Vessel, Step };
enum class Axis { Z, X, Y };

std::string_view to_string(Preset p);
Preset parse_preset(std::string_view name);
std::string_view to_string(Axis a);
Axis parse_axis(std::string_view name);

// Gaussian PSF standard deviations in voxels.
struct PsfSigma {
  double z = 1.0;
  double x = 1.5;
  double y = 1.5;
  bool operator==(const PsfSigma&) const = default;
};

// Starts at depth fraction `top` of nz and runs to the next layer.
struct Layer {
  double top = 0.0;
  double reflectivity = 1.0;
};

struct PhantomSpec {
  Preset preset = Preset::Uniform;
  Dims dims{128, 128, 64};
  PsfSigma psf{};
  std::uint64_t seed = 0;

  // uniform level; background for layers (above the first layer) and vessel
  double level = 1.0;

  std::vector<Layer> layers{{0.20, 0.6}, {0.40, 2.5}, {0.55, 0.9}, {0.75, 4.0}};
  double undulation_amplitude = 3.0;  // voxels, boundary depth varies along x
  double undulation_period = 40.0;    // voxels

  Axis vessel_axis = Axis::Y;
  double vessel_center_a = 0.5;  // fractions of the two cross-section axes, in (z, x, y) order
  double vessel_center_b = 0.5;
  double vessel_radius = 8.0;    // voxels; 0 leaves the background
  double vessel_contrast = 0.1;  // reflectivity inside = level * contrast

  Axis step_axis = Axis::X;
  std::optional<double> step_position;  // voxel index of the first high sample; default n/2
  std::pair<double, double> step_levels{1.0, 4.0};

  // Throws ArgumentError on dims < 8, negative reflectivities or sigmas,
  // unordered layers and other malformed preset parameters.
  void validate() const;
};

// Piecewise reflectivity map R(p). Does not depend on the seed.
Volume generate_incoherent(const PhantomSpec& spec);

struct SpeckleRealization {
  ComplexTomogram field;  // one channel
  Volume intensity;       // Linear, |field|^2
};

// Circular complex Gaussian scatterers with variance R(p), convolved with a
// separable Gaussian PSF normalized to unit energy per axis, so the ensemble
// mean intensity is R convolved with |PSF|^2. The map is edge-extended
// beyond the grid.
SpeckleRealization speckle_realization(const Volume& incoherent, const PsfSigma& psf, std::uint64_t seed);

// Ensemble mean of the realized intensity: R (edge-extended) convolved with
// the squared PSF.
Volume expected_intensity(const Volume& incoherent, const PsfSigma& psf);

struct PhantomPair {
  Volume raw_db;     // LogDb speckled intensity
  Volume target_db;  // LogDb despeckled
  ContrastWindow window;  // full-range window the filter ran under
  std::uint64_t seed = 0;
};

// count speckle realizations of spec (seeds derived from `seed`), each
// despeckled with the given parameters.
std::vector<PhantomPair> make_pair_set(const PhantomSpec& spec, const tnode::TNodeParams& params, std::size_t count,
                                       std::uint64_t seed);

} // namespace octs::phantom
