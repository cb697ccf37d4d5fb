#include "octs/tnode.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "octs/errors.hpp"
#include "octs/kernels.hpp"
#include "octs/pairs.hpp"
#include "octs/parallel.hpp"

namespace octs::tnode {

void TNodeParams::validate() const {
  if (!(h0 > 0.0)) throw ArgumentError(fmt::format("h0 must be > 0, got {}", h0));
  if (!(h1 >= 0.0)) throw ArgumentError(fmt::format("h1 must be >= 0, got {}", h1));
  if (!(snr_scale_db > 0.0)) throw ArgumentError(fmt::format("snr_scale_db must be > 0, got {}", snr_scale_db));
  if (patch.z > search.z || patch.x > search.x || patch.y > search.y) {
    throw ArgumentError(fmt::format("patch radii ({},{},{}) exceed search radii ({},{},{})", patch.z, patch.x,
                                    patch.y, search.z, search.x, search.y));
  }
  if (noise_floor_db && !std::isfinite(*noise_floor_db)) throw ArgumentError("noise_floor_db must be finite");
}

namespace {

std::vector<double> patch_taps(std::size_t radius) {
  return normalized(gaussian_taps(static_cast<double>(radius) / 2.0, radius));
}

void check_fits(const Dims& d, const Radii& patch) {
  if (d.nz < 2 * patch.z + 1 || d.nx < 2 * patch.x + 1 || d.ny < 2 * patch.y + 1) {
    throw ArgumentError(fmt::format("volume {}x{}x{} is smaller than the {}x{}x{} similarity window", d.nz, d.nx, d.ny,
                                    2 * patch.z + 1, 2 * patch.x + 1, 2 * patch.y + 1));
  }
}

// exp(x) for x <= 0, branch-free so the caller's loop vectorizes. Relative
// error is below 2e-7 over the range; arguments below -87 flush to 0.
inline float exp_neg(float x) {
  const bool underflow = x < -87.0f;
  x = std::max(x, -87.0f);
  // round to nearest by the 1.5 * 2^23 trick; std::floor is a libcall here
  const float n = (x * 1.44269504088896341f + 12582912.0f) - 12582912.0f;
  float r = x - n * 0.693145751953125f;
  r -= n * 1.42860682030941723e-6f;
  float p = 1.0f / 40320.0f;
  p = p * r + 1.0f / 5040.0f;
  p = p * r + 1.0f / 720.0f;
  p = p * r + 1.0f / 120.0f;
  p = p * r + 1.0f / 24.0f;
  p = p * r + 1.0f / 6.0f;
  p = p * r + 0.5f;
  p = p * r + 1.0f;
  p = p * r + 1.0f;
  const auto bits = static_cast<std::uint32_t>(static_cast<std::int32_t>(n) + 127) << 23;
  const float result = p * std::bit_cast<float>(bits);
  return underflow ? 0.0f : result;
}

// Mirror-padded copy of the volume plus everything the per-B-scan kernel needs.
class Engine {
public:
  Engine(const Volume& v, const TNodeParams& params, const ContrastWindow& window)
      : dims_(v.dims()), params_(params), window_(window), search_(params.search), patch_(params.patch) {
    params_.validate();
    if (v.domain() != Domain::Unit) throw ArgumentError("despeckle expects a Unit-domain volume");
    check_fits(dims_, patch_);
    params_.noise_floor_db = resolve_noise_floor(v, params, window);

    for (auto [dst, r] : {std::pair{&gz_, patch_.z}, std::pair{&gx_, patch_.x}, std::pair{&gy_, patch_.y}}) {
      for (double t : patch_taps(r)) dst->push_back(static_cast<float>(t));
    }
    pad_ = {search_.z + patch_.z, search_.x + patch_.x, search_.y + patch_.y};
    pz_ = dims_.nz + 2 * pad_.z;
    px_ = dims_.nx + 2 * pad_.x;
    py_ = dims_.ny + 2 * pad_.y;
    padded_.resize(pz_ * px_ * py_);
    for (std::size_t y = 0; y < py_; ++y) {
      const std::size_t sy = mirror_index(static_cast<std::int64_t>(y) - static_cast<std::int64_t>(pad_.y), dims_.ny);
      for (std::size_t x = 0; x < px_; ++x) {
        const std::size_t sx = mirror_index(static_cast<std::int64_t>(x) - static_cast<std::int64_t>(pad_.x), dims_.nx);
        const auto src = v.values().subspan(dims_.nz * (sx + dims_.nx * sy), dims_.nz);
        float* dst = &padded_[pz_ * (x + px_ * y)];
        for (std::size_t z = 0; z < pz_; ++z) {
          dst[z] = src[mirror_index(static_cast<std::int64_t>(z) - static_cast<std::int64_t>(pad_.z), dims_.nz)];
        }
      }
    }
  }

  std::size_t tiles_per_bscan() const { return (dims_.nx + kTile - 1) / kTile; }

  // Computes output B-scan y, columns [tile*kTile, ...), into dst (z-fastest B-scan).
  void run_tile(std::size_t y, std::size_t tile, std::span<float> dst) const {
    const std::size_t x0 = tile * kTile;
    const std::size_t tw = std::min(kTile, dims_.nx - x0);
    const std::size_t nz = dims_.nz;
    const std::size_t nzp = nz + 2 * patch_.z;  // rows of the patch-extended tile
    const std::size_t twp = tw + 2 * patch_.x;

    std::vector<float> inv_h2(nz * tw);
    local_strength(y, x0, tw, inv_h2);

    std::vector<double> acc_w(nz * tw, 0.0), acc_wv(nz * tw, 0.0);
    std::vector<float> max_w(nz * tw, 0.0f);
    std::vector<float> dy(nzp * twp), dx(nzp * tw), d2(nz);
    bool any_neighbor = false;

    const auto sr_z = static_cast<std::int64_t>(search_.z);
    const auto sr_x = static_cast<std::int64_t>(search_.x);
    const auto sr_y = static_cast<std::int64_t>(search_.y);
    for (std::int64_t oy = -sr_y; oy <= sr_y; ++oy) {
      for (std::int64_t ox = -sr_x; ox <= sr_x; ++ox) {
        for (std::int64_t oz = -sr_z; oz <= sr_z; ++oz) {
          if (oz == 0 && ox == 0 && oy == 0) continue;
          any_neighbor = true;
          squared_diff_y(y, x0, twp, oz, ox, oy, dy);
          conv_x(dy, nzp, tw, dx);
          accumulate(y, x0, tw, oz, ox, oy, dx, inv_h2, acc_w, acc_wv, max_w, d2);
        }
      }
    }

    for (std::size_t xi = 0; xi < tw; ++xi) {
      const float* center = at(pad_.z, x0 + xi + pad_.x, y + pad_.y);
      for (std::size_t z = 0; z < nz; ++z) {
        const std::size_t i = z + nz * xi;
        const double self_w = any_neighbor ? static_cast<double>(max_w[i]) : 1.0;
        const double num = acc_wv[i] + self_w * static_cast<double>(center[z]);
        const double den = acc_w[i] + self_w;
        double out = den > 0.0 ? num / den : static_cast<double>(center[z]);
        dst[z + nz * (x0 + xi)] = static_cast<float>(std::clamp(out, 0.0, 1.0));
      }
    }
  }

  const Dims& dims() const { return dims_; }

private:
  static constexpr std::size_t kTile = 32;

  const float* at(std::size_t z, std::size_t x, std::size_t y) const { return &padded_[z + pz_ * (x + px_ * y)]; }

  // 1/h(p)^2 from the Gaussian-weighted local mean around p.
  void local_strength(std::size_t y, std::size_t x0, std::size_t tw, std::span<float> inv_h2) const {
    const std::size_t nz = dims_.nz;
    const double lower = window_.lower_db;
    const double width = window_.width();
    for (std::size_t xi = 0; xi < tw; ++xi) {
      for (std::size_t z = 0; z < nz; ++z) {
        double m = 0.0;
        for (std::size_t ky = 0; ky < gy_.size(); ++ky) {
          for (std::size_t kx = 0; kx < gx_.size(); ++kx) {
            const float* col = at(pad_.z - patch_.z + z, pad_.x - patch_.x + x0 + xi + kx, pad_.y - patch_.y + y + ky);
            const double gyx = static_cast<double>(gy_[ky]) * gx_[kx];
            for (std::size_t kz = 0; kz < gz_.size(); ++kz) m += gyx * gz_[kz] * col[kz];
          }
        }
        const double h = adaptive_h(lower + m * width, params_);
        inv_h2[z + nz * xi] = static_cast<float>(1.0 / (h * h));
      }
    }
  }

  // dy(z', x') = sum_k gy[k] (P(p + k) - P(p + o + k))^2 over the
  // patch-extended tile: z' in [-pz, nz + pz), x' in [x0 - px, x0 + tw + px).
  void squared_diff_y(std::size_t y, std::size_t x0, std::size_t twp, std::int64_t oz, std::int64_t ox,
                      std::int64_t oy, std::span<float> dy) const {
    const std::size_t nzp = dims_.nz + 2 * patch_.z;
    std::fill(dy.begin(), dy.end(), 0.0f);
    for (std::size_t ky = 0; ky < gy_.size(); ++ky) {
      const float g = gy_[ky];
      const std::size_t ya = pad_.y - patch_.y + y + ky;
      const auto yb = static_cast<std::size_t>(static_cast<std::int64_t>(ya) + oy);
      for (std::size_t xi = 0; xi < twp; ++xi) {
        const std::size_t xa = pad_.x - patch_.x + x0 + xi;
        const auto xb = static_cast<std::size_t>(static_cast<std::int64_t>(xa) + ox);
        const float* a = at(pad_.z - patch_.z, xa, ya);
        const float* b = at(static_cast<std::size_t>(static_cast<std::int64_t>(pad_.z - patch_.z) + oz), xb, yb);
        float* out = &dy[nzp * xi];
        for (std::size_t z = 0; z < nzp; ++z) {
          const float d = a[z] - b[z];
          out[z] += g * (d * d);
        }
      }
    }
  }

  void conv_x(std::span<const float> dy, std::size_t nzp, std::size_t tw, std::span<float> dx) const {
    for (std::size_t xi = 0; xi < tw; ++xi) {
      float* out = &dx[nzp * xi];
      std::fill(out, out + nzp, 0.0f);
      for (std::size_t kx = 0; kx < gx_.size(); ++kx) {
        const float g = gx_[kx];
        const float* in = &dy[nzp * (xi + kx)];
        for (std::size_t z = 0; z < nzp; ++z) out[z] += g * in[z];
      }
    }
  }

  void accumulate(std::size_t y, std::size_t x0, std::size_t tw, std::int64_t oz, std::int64_t ox, std::int64_t oy,
                  std::span<const float> dx, std::span<const float> inv_h2, std::span<double> acc_w,
                  std::span<double> acc_wv, std::span<float> max_w, std::span<float> d2) const {
    const std::size_t nz = dims_.nz;
    const std::size_t nzp = nz + 2 * patch_.z;
    const std::size_t taps = gz_.size();
    const float* g = gz_.data();
    for (std::size_t xi = 0; xi < tw; ++xi) {
      const float* col = &dx[nzp * xi];
      const float* q = at(static_cast<std::size_t>(static_cast<std::int64_t>(pad_.z) + oz),
                          static_cast<std::size_t>(static_cast<std::int64_t>(pad_.x + x0 + xi) + ox),
                          static_cast<std::size_t>(static_cast<std::int64_t>(pad_.y + y) + oy));
      const float* ih = &inv_h2[nz * xi];
      double* aw = &acc_w[nz * xi];
      double* awv = &acc_wv[nz * xi];
      float* mw = &max_w[nz * xi];
      std::fill(d2.begin(), d2.end(), 0.0f);
      for (std::size_t k = 0; k < taps; ++k) {
        const float gk = g[k];
        const float* c = col + k;
        for (std::size_t z = 0; z < nz; ++z) d2[z] += gk * c[z];
      }
      for (std::size_t z = 0; z < nz; ++z) {
        const float w = exp_neg(-d2[z] * ih[z]);
        aw[z] += static_cast<double>(w);
        awv[z] += static_cast<double>(w) * static_cast<double>(q[z]);
        mw[z] = mw[z] > w ? mw[z] : w;
      }
    }
  }

  Dims dims_;
  TNodeParams params_;
  ContrastWindow window_;
  Radii search_, patch_, pad_;
  std::vector<float> gz_, gx_, gy_;
  std::size_t pz_ = 0, px_ = 0, py_ = 0;
  std::vector<float> padded_;
};

} // namespace

PatchKernel::PatchKernel(const Radii& patch) : z(patch_taps(patch.z)), x(patch_taps(patch.x)), y(patch_taps(patch.y)) {}

double patch_distance(const Volume& v, Voxel p, Voxel q, const Radii& patch) {
  const PatchKernel g(patch);
  const Dims& d = v.dims();
  auto value = [&](std::int64_t z, std::int64_t x, std::int64_t y) {
    return static_cast<double>(v(mirror_index(z, d.nz), mirror_index(x, d.nx), mirror_index(y, d.ny)));
  };
  const auto rz = static_cast<std::int64_t>(patch.z);
  const auto rx = static_cast<std::int64_t>(patch.x);
  const auto ry = static_cast<std::int64_t>(patch.y);
  double acc = 0.0;
  for (std::int64_t oy = -ry; oy <= ry; ++oy) {
    for (std::int64_t ox = -rx; ox <= rx; ++ox) {
      for (std::int64_t oz = -rz; oz <= rz; ++oz) {
        const double w = g.z[static_cast<std::size_t>(oz + rz)] * g.x[static_cast<std::size_t>(ox + rx)] *
                         g.y[static_cast<std::size_t>(oy + ry)];
        const double diff = value(p.z + oz, p.x + ox, p.y + oy) - value(q.z + oz, q.x + ox, q.y + oy);
        acc += w * diff * diff;
      }
    }
  }
  return acc;
}

double adaptive_h(double intensity_db, const TNodeParams& params) {
  if (!params.noise_floor_db) throw ArgumentError("adaptive_h requires a resolved noise floor");
  if (!(params.snr_scale_db > 0.0)) throw ArgumentError("snr_scale_db must be > 0");
  const double above = std::max(0.0, intensity_db - *params.noise_floor_db);
  return params.h0 + params.h1 * std::exp(-above / params.snr_scale_db);
}

double resolve_noise_floor(const Volume& v, const TNodeParams& params, const ContrastWindow& window) {
  if (params.noise_floor_db) return *params.noise_floor_db;
  return pairs::noise_floor(convert_domain(v, Domain::LogDb, {.window = window}));
}

Volume despeckle(const Volume& v, const TNodeParams& params, const ContrastWindow& window) {
  const Engine engine(v, params, window);
  Volume out(v.dims(), Domain::Unit, v.pitch());
  const std::size_t tiles = engine.tiles_per_bscan();
  parallel_for(v.dims().ny * tiles, [&](std::size_t job) {
    const std::size_t y = job / tiles;
    engine.run_tile(y, job % tiles, out.bscan(y));
  });
  return out;
}

BScan despeckle_partial(const Volume& v, std::size_t center_y, const TNodeParams& params,
                        const ContrastWindow& window) {
  if (center_y >= v.dims().ny) {
    throw ArgumentError(fmt::format("center B-scan {} outside ny={}", center_y, v.dims().ny));
  }
  const Engine engine(v, params, window);
  BScan out(v.dims().nz, v.dims().nx);
  parallel_for(engine.tiles_per_bscan(), [&](std::size_t tile) { engine.run_tile(center_y, tile, out.data); });
  return out;
}

} // namespace octs::tnode
