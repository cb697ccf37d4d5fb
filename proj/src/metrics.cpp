#include "octs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "octs/errors.hpp"
#include "octs/kernels.hpp"
#include "octs/pairs.hpp"
#include "octs/parallel.hpp"

namespace octs::metrics {

using nlohmann::json;

void Roi::validate(const Dims& d) const {
  if (dz < 1 || dx < 1 || dy < 1) throw ArgumentError(fmt::format("ROI {} has an empty extent", to_string(*this)));
  if (z + dz > d.nz || x + dx > d.nx || y + dy > d.ny) {
    throw ArgumentError(fmt::format("ROI {} exceeds volume {}x{}x{}", to_string(*this), d.nz, d.nx, d.ny));
  }
}

bool Roi::overlaps(const Roi& o) const {
  auto hit = [](std::size_t a, std::size_t na, std::size_t b, std::size_t nb) { return a < b + nb && b < a + na; };
  return hit(z, dz, o.z, o.dz) && hit(x, dx, o.x, o.dx) && hit(y, dy, o.y, o.dy);
}

Roi parse_roi(const std::string& text) {
  std::vector<std::size_t> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long n = std::stoll(item, &used);
      if (used != item.size() || n < 0) throw std::invalid_argument(item);
      v.push_back(static_cast<std::size_t>(n));
    } catch (const std::exception&) {
      throw ArgumentError(fmt::format("ROI '{}': '{}' is not a non-negative integer", text, item));
    }
  }
  if (v.size() != 6) throw ArgumentError(fmt::format("ROI '{}': expected z,x,y,dz,dx,dy", text));
  return {v[0], v[1], v[2], v[3], v[4], v[5]};
}

std::string to_string(const Roi& r) { return fmt::format("{},{},{},{},{},{}", r.z, r.x, r.y, r.dz, r.dx, r.dy); }

Roi whole(const Dims& d) { return {0, 0, 0, d.nz, d.nx, d.ny}; }

RoiStats roi_stats(const Volume& v, const Roi& roi) {
  roi.validate(v.dims());
  double sum = 0.0;
  for (std::size_t y = roi.y; y < roi.y + roi.dy; ++y)
    for (std::size_t x = roi.x; x < roi.x + roi.dx; ++x)
      for (std::size_t z = roi.z; z < roi.z + roi.dz; ++z) sum += v(z, x, y);
  const auto n = static_cast<double>(roi.count());
  const double mean = sum / n;
  double ss = 0.0;
  for (std::size_t y = roi.y; y < roi.y + roi.dy; ++y)
    for (std::size_t x = roi.x; x < roi.x + roi.dx; ++x)
      for (std::size_t z = roi.z; z < roi.z + roi.dz; ++z) {
        const double e = v(z, x, y) - mean;
        ss += e * e;
      }
  return {mean, std::sqrt(ss / n), roi.count()};
}

Volume quantize(const Volume& v_db, const ContrastWindow& w) {
  if (v_db.domain() != Domain::LogDb) throw ArgumentError("quantize expects a log_db volume");
  const auto codes = pairs::quantize_uint16(v_db.values(), w);
  Volume out(v_db.dims(), Domain::Linear, v_db.pitch());
  std::copy(codes.begin(), codes.end(), out.values().begin());
  return out;
}

double psnr(std::span<const double> ref, std::span<const double> test) {
  if (ref.size() != test.size()) {
    throw ArgumentError(fmt::format("psnr: {} vs {} samples", ref.size(), test.size()));
  }
  if (ref.empty()) throw ArgumentError("psnr: empty input");
  constexpr double kMax = 65535.0;
  auto in_range = [](double v) { return v >= 0.0 && v <= kMax; };
  double se = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!in_range(ref[i]) || !in_range(test[i])) {
      throw ArgumentError(fmt::format("psnr: sample {} outside [0, 65535]", i));
    }
    const double e = ref[i] - test[i];
    se += e * e;
  }
  const double mse = se / static_cast<double>(ref.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(kMax * kMax / mse);
}

double psnr(const Volume& ref, const Volume& test) {
  if (ref.dims() != test.dims()) throw ArgumentError("psnr: dimension mismatch");
  std::vector<double> a(ref.values().begin(), ref.values().end());
  std::vector<double> b(test.values().begin(), test.values().end());
  return psnr(a, b);
}

double cnr(const Volume& v, const Roi& roi1, const Roi& roi2) {
  if (roi1.overlaps(roi2) && !(roi1 == roi2)) spdlog::warn("cnr: ROIs {} and {} overlap", to_string(roi1), to_string(roi2));
  const RoiStats a = roi_stats(v, roi1);
  const RoiStats b = roi_stats(v, roi2);
  const double denom = std::sqrt(a.sd * a.sd + b.sd * b.sd);
  if (denom == 0.0) throw DegenerateInput("cnr: both ROIs have zero variance");
  return (std::abs(b.mean) - std::abs(a.mean)) / denom;
}

double resolve_data_range(const Volume& ref, const SsimOptions& opts) {
  if (opts.data_range) {
    if (!(*opts.data_range > 0.0)) throw ArgumentError("data_range must be > 0");
    return *opts.data_range;
  }
  if (ref.domain() == Domain::Unit) return 1.0;
  if (ref.domain() == Domain::Signed) return 2.0;
  const auto [lo, hi] = std::minmax_element(ref.values().begin(), ref.values().end());
  const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
  return range > 0.0 ? range : 1.0;
}

namespace {

using Grid = std::vector<double>;

// Same-size Gaussian filtering along one axis with replicated borders.
Grid filter_axis(const Grid& src, const Dims& d, int axis, const std::vector<double>& taps) {
  Grid dst(src.size());
  const auto r = static_cast<std::int64_t>(taps.size() / 2);
  const std::size_t n = axis == 0 ? d.nz : axis == 1 ? d.nx : d.ny;
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? d.nz : d.plane();
  parallel_for(d.ny, [&](std::size_t y) {
    for (std::size_t x = 0; x < d.nx; ++x)
      for (std::size_t z = 0; z < d.nz; ++z) {
        const std::size_t idx = z + d.nz * (x + d.nx * y);
        const auto pos = static_cast<std::int64_t>(axis == 0 ? z : axis == 1 ? x : y);
        const std::size_t line0 = idx - static_cast<std::size_t>(pos) * stride;
        double acc = 0.0;
        for (std::int64_t k = -r; k <= r; ++k) {
          const auto j = static_cast<std::size_t>(std::clamp<std::int64_t>(pos + k, 0, static_cast<std::int64_t>(n) - 1));
          acc += taps[static_cast<std::size_t>(k + r)] * src[line0 + j * stride];
        }
        dst[idx] = acc;
      }
  });
  return dst;
}

Grid blur(Grid g, const Dims& d, const std::vector<double>& taps) {
  for (int axis = 0; axis < 3; ++axis) g = filter_axis(g, d, axis, taps);
  return g;
}

struct LocalTerms {
  Grid luminance;  // (2 mu_a mu_b + C1) / (mu_a^2 + mu_b^2 + C1)
  Grid cs;         // (2 s_ab + C2) / (s_a^2 + s_b^2 + C2)
};

LocalTerms local_terms(const Grid& a, const Grid& b, const Dims& d, double L, const SsimOptions& o) {
  if (o.window % 2 == 0 || o.window < 1) throw ArgumentError("SSIM window must be odd");
  const auto taps = normalized(gaussian_taps(o.sigma, o.window / 2));
  const double c1 = (o.k1 * L) * (o.k1 * L);
  const double c2 = (o.k2 * L) * (o.k2 * L);
  Grid aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const Grid mu_a = blur(a, d, taps), mu_b = blur(b, d, taps);
  const Grid e_aa = blur(std::move(aa), d, taps), e_bb = blur(std::move(bb), d, taps), e_ab = blur(std::move(ab), d, taps);
  LocalTerms t{Grid(a.size()), Grid(a.size())};
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    t.luminance[i] = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    t.cs[i] = (2.0 * cov + c2) / (va + vb + c2);
  }
  return t;
}

double mean_of(const Grid& g) {
  double s = 0.0;
  for (double v : g) s += v;
  return s / static_cast<double>(g.size());
}

void check_pair(const Volume& ref, const Volume& test, const char* what) {
  if (ref.dims() != test.dims()) {
    const Dims& a = ref.dims();
    const Dims& b = test.dims();
    throw ArgumentError(fmt::format("{}: dims {}x{}x{} vs {}x{}x{}", what, a.nz, a.nx, a.ny, b.nz, b.nx, b.ny));
  }
  if (ref.domain() != test.domain()) {
    throw ArgumentError(fmt::format("{}: domains {} vs {}", what, to_string(ref.domain()), to_string(test.domain())));
  }
}

Grid to_grid(const Volume& v) { return Grid(v.values().begin(), v.values().end()); }

// 2x2x2 block mean; axes of extent 1 are left alone.
Grid downsample(const Grid& g, Dims& d) {
  const std::size_t fz = d.nz > 1 ? 2 : 1, fx = d.nx > 1 ? 2 : 1, fy = d.ny > 1 ? 2 : 1;
  const Dims o{d.nz / fz, d.nx / fx, d.ny / fy};
  const double inv = 1.0 / static_cast<double>(fz * fx * fy);
  Grid out(o.count());
  for (std::size_t y = 0; y < o.ny; ++y)
    for (std::size_t x = 0; x < o.nx; ++x)
      for (std::size_t z = 0; z < o.nz; ++z) {
        double s = 0.0;
        for (std::size_t j = 0; j < fy; ++j)
          for (std::size_t i = 0; i < fx; ++i)
            for (std::size_t k = 0; k < fz; ++k) s += g[(z * fz + k) + d.nz * ((x * fx + i) + d.nx * (y * fy + j))];
        out[z + o.nz * (x + o.nx * y)] = s * inv;
      }
  d = o;
  return out;
}

double signed_pow(double v, double w) { return v < 0.0 ? -std::pow(-v, w) : std::pow(v, w); }

} // namespace

SsimResult ssim3d(const Volume& ref, const Volume& test, const SsimOptions& opts) {
  check_pair(ref, test, "ssim3d");
  const double L = resolve_data_range(ref, opts);
  const auto terms = local_terms(to_grid(ref), to_grid(test), ref.dims(), L, opts);
  Grid map(terms.cs.size());
  for (std::size_t i = 0; i < map.size(); ++i) map[i] = terms.luminance[i] * terms.cs[i];
  SsimResult r;
  r.score = mean_of(map);
  r.data_range = L;
  r.map = Volume(ref.dims(), Domain::Signed, ref.pitch());
  std::transform(map.begin(), map.end(), r.map.values().begin(), [](double v) { return static_cast<float>(v); });
  return r;
}

MsssimResult msssim3d(const Volume& ref, const Volume& test, std::size_t scales, const SsimOptions& opts) {
  check_pair(ref, test, "msssim3d");
  if (scales < 1 || scales > 5) throw ArgumentError(fmt::format("msssim3d: scales must be in [1, 5], got {}", scales));
  const Dims& d0 = ref.dims();
  std::size_t min_dim = std::numeric_limits<std::size_t>::max();
  for (std::size_t n : {d0.nz, d0.nx, d0.ny})
    if (n > 1) min_dim = std::min(min_dim, n);
  if (min_dim == std::numeric_limits<std::size_t>::max()) min_dim = 1;

  MsssimResult r;
  r.scales_requested = scales;
  std::size_t used = scales;
  while (used > 1 && min_dim < (std::size_t{1} << (used - 1)) * opts.window) --used;
  if (used != scales || min_dim < opts.window) {
    r.reduced = true;
    spdlog::warn("msssim3d: smallest axis {} supports {} of {} scales", min_dim, used, scales);
  }
  r.scales_used = used;

  double wsum = 0.0;
  for (std::size_t s = 0; s < used; ++s) wsum += kMsssimWeights[s];
  const double L = resolve_data_range(ref, opts);
  Grid a = to_grid(ref), b = to_grid(test);
  Dims d = d0;
  double score = 1.0;
  for (std::size_t s = 0; s < used; ++s) {
    const double w = kMsssimWeights[s] / wsum;
    const auto terms = local_terms(a, b, d, L, opts);
    double v;
    if (s + 1 < used) {
      v = mean_of(terms.cs);
      Dims db = d;
      a = downsample(a, d);
      b = downsample(b, db);
    } else {
      Grid m(terms.cs.size());
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = terms.luminance[i] * terms.cs[i];
      v = mean_of(m);
    }
    r.per_scale.push_back(v);
    r.weights.push_back(w);
    score *= signed_pow(v, w);
  }
  r.score = score;
  return r;
}

TTest ttest(std::span<const float> a, std::span<const float> b) {
  if (a.size() < 2 || b.size() < 2) throw ArgumentError("t-test needs at least 2 samples per group");
  auto moments = [](std::span<const float> v) {
    double s = 0.0;
    for (float x : v) s += x;
    const double m = s / static_cast<double>(v.size());
    double ss = 0.0;
    for (float x : v) ss += (x - m) * (x - m);
    return std::pair{m, ss};
  };
  const auto [ma, ssa] = moments(a);
  const auto [mb, ssb] = moments(b);
  const auto na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  TTest r;
  r.dof = na + nb - 2.0;
  const double sp2 = (ssa + ssb) / r.dof;
  const double se = std::sqrt(sp2 * (1.0 / na + 1.0 / nb));
  const double diff = ma - mb;
  if (diff == 0.0) return {0.0, 1.0, r.dof};
  if (se == 0.0) return {diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity(),
                         0.0, r.dof};
  r.t = diff / se;
  const boost::math::students_t dist(r.dof);
  r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))));
  return r;
}

TTest ssim_ttest(const Volume& map_a, const Volume& map_b) {
  if (map_a.dims() != map_b.dims()) throw ArgumentError("ssim_ttest: dimension mismatch");
  return ttest(map_a.values(), map_b.values());
}

double speckle_contrast(const Volume& v, const Roi& roi) {
  if (v.domain() != Domain::Linear) throw ArgumentError("speckle_contrast expects a linear volume");
  const RoiStats s = roi_stats(v, roi);
  if (!(s.mean > 0.0)) throw DegenerateInput(fmt::format("speckle_contrast: ROI mean {} is not positive", s.mean));
  return s.sd / s.mean;
}

json to_json(const MetricReport& r) {
  json j = json::object();
  if (r.psnr_db) {
    if (std::isinf(*r.psnr_db)) {
      j["psnr_db"] = "identical";
    } else {
      j["psnr_db"] = *r.psnr_db;
    }
  }
  if (r.cnr) j["cnr"] = *r.cnr;
  if (r.ssim) j["ssim"] = *r.ssim;
  if (r.ms_ssim) j["ms_ssim"] = *r.ms_ssim;
  if (r.speckle_contrast) j["speckle_contrast"] = *r.speckle_contrast;
  if (r.roi1) j["roi1"] = to_string(*r.roi1);
  if (r.roi2) j["roi2"] = to_string(*r.roi2);
  j["parameters"] = r.parameters;
  return j;
}

std::string format_report(const MetricReport& r) {
  std::string out;
  auto row = [&](const char* name, const std::optional<double>& v) {
    if (v) out += fmt::format("{:<18} {:.6f}\n", name, *v);
  };
  if (r.psnr_db) {
    if (std::isinf(*r.psnr_db)) {
      out += fmt::format("{:<18} {}\n", "psnr_db", "identical");
    } else {
      row("psnr_db", r.psnr_db);
    }
  }
  row("cnr", r.cnr);
  row("ssim", r.ssim);
  row("ms_ssim", r.ms_ssim);
  row("speckle_contrast", r.speckle_contrast);
  if (r.roi1) out += fmt::format("{:<18} {}\n", "roi1", to_string(*r.roi1));
  if (r.roi2) out += fmt::format("{:<18} {}\n", "roi2", to_string(*r.roi2));
  for (const auto& [k, v] : r.parameters.items()) out += fmt::format("{:<18} {}\n", k, v.dump());
  return out;
}

} // namespace octs::metrics
