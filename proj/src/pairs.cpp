#include "octs/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "octs/errors.hpp"
#include "octs/parallel.hpp"
#include "octs/volume_io.hpp"

namespace octs::pairs {

using nlohmann::json;

double noise_floor(const Volume& v) {
  std::vector<float> vals(v.values().begin(), v.values().end());
  const std::size_t k = std::max<std::size_t>(1, (vals.size() + 9) / 10);
  std::nth_element(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(k - 1), vals.end());
  // vals[0..k) now holds the lowest decile, unordered.
  auto mid = vals.begin() + static_cast<std::ptrdiff_t>(k / 2);
  std::nth_element(vals.begin(), mid, vals.begin() + static_cast<std::ptrdiff_t>(k));
  const double upper = *mid;
  if (k % 2 == 1) return upper;
  const double lower = *std::max_element(vals.begin(), mid);
  return 0.5 * (lower + upper);
}

void AugmentPolicy::validate() const {
  if (!(lower_jitter_min_db <= lower_jitter_max_db) || !(upper_jitter_min_db <= upper_jitter_max_db)) {
    throw ArgumentError("contrast jitter ranges must be ordered (min <= max)");
  }
  if (voi_z % 2 == 0 || voi_x % 2 == 0 || voi_y % 2 == 0) {
    throw ArgumentError(fmt::format("VOI extent must be odd per axis, got {}x{}x{}", voi_z, voi_x, voi_y));
  }
  if (!(crop_min_area > 0.0 && crop_min_area <= 1.0)) {
    throw ArgumentError(fmt::format("crop_min_area must be in (0, 1], got {}", crop_min_area));
  }
  if ((output_nz == 0) != (output_nx == 0)) throw ArgumentError("output size needs both output_nz and output_nx");
}

ContrastWindow window_from_draws(double floor_db, double voi_mean_db, double lower_jitter_db, double upper_jitter_db) {
  const double lower = floor_db + lower_jitter_db;
  const double upper = voi_mean_db + upper_jitter_db;
  if (!(upper > lower)) {
    throw DegenerateInput(fmt::format("contrast window [{}, {}] is not ordered", lower, upper));
  }
  return {lower, upper};
}

double voi_mean_at_max(const Volume& block, const AugmentPolicy& policy) {
  const auto vals = block.values();
  const auto at = static_cast<std::size_t>(std::max_element(vals.begin(), vals.end()) - vals.begin());
  const Dims& d = block.dims();
  const std::size_t cz = at % d.nz;
  const std::size_t cx = (at / d.nz) % d.nx;
  const std::size_t cy = at / d.plane();
  auto range = [](std::size_t c, std::size_t extent, std::size_t n) {
    const std::size_t half = extent / 2;
    return std::pair{c >= half ? c - half : 0, std::min(n, c + half + 1)};
  };
  const auto [z0, z1] = range(cz, policy.voi_z, d.nz);
  const auto [x0, x1] = range(cx, policy.voi_x, d.nx);
  const auto [y0, y1] = range(cy, policy.voi_y, d.ny);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x)
      for (std::size_t z = z0; z < z1; ++z) {
        sum += block(z, x, y);
        ++n;
      }
  return sum / static_cast<double>(n);
}

WindowDraw draw_contrast_window(const Volume& block, double floor_db, const AugmentPolicy& policy, Rng& rng) {
  constexpr int kMaxAttempts = 10;
  WindowDraw draw;
  draw.noise_floor_db = floor_db;
  draw.voi_mean_db = voi_mean_at_max(block, policy);
  draw.lower_jitter_db = rng.uniform(policy.lower_jitter_min_db, policy.lower_jitter_max_db);
  const double lower = floor_db + draw.lower_jitter_db;
  for (int attempt = 1; attempt <= kMaxAttempts; ++attempt) {
    draw.upper_jitter_db = rng.uniform(policy.upper_jitter_min_db, policy.upper_jitter_max_db);
    draw.attempts = attempt;
    if (draw.voi_mean_db + draw.upper_jitter_db > lower) {
      draw.window = window_from_draws(floor_db, draw.voi_mean_db, draw.lower_jitter_db, draw.upper_jitter_db);
      return draw;
    }
  }
  throw DegenerateInput(fmt::format("no ordered contrast window after {} draws (floor {:.2f} dB, VOI mean {:.2f} dB)",
                                    kMaxAttempts, floor_db, draw.voi_mean_db));
}

std::vector<std::uint16_t> quantize_uint16(std::span<const float> values_db, const ContrastWindow& w) {
  std::vector<std::uint16_t> out(values_db.size());
  const double l = w.lower_db;
  const double width = w.width();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double t = std::clamp((static_cast<double>(values_db[i]) - l) / width, 0.0, 1.0);
    out[i] = static_cast<std::uint16_t>(std::round(65535.0 * t));
  }
  return out;
}

json to_json(const Transform& t) {
  return json{{"flip_z", t.flip_z},   {"flip_x", t.flip_x},   {"rot90", t.rot90},       {"angle_deg", t.angle_deg},
              {"crop_z0", t.crop_z0}, {"crop_x0", t.crop_x0}, {"crop_nz", t.crop_nz},   {"crop_nx", t.crop_nx},
              {"out_nz", t.out_nz},   {"out_nx", t.out_nx},   {"seed", t.seed},         {"stream", t.stream}};
}

Transform transform_from_json(const json& j) {
  Transform t;
  j.at("flip_z").get_to(t.flip_z);
  j.at("flip_x").get_to(t.flip_x);
  j.at("rot90").get_to(t.rot90);
  j.at("angle_deg").get_to(t.angle_deg);
  j.at("crop_z0").get_to(t.crop_z0);
  j.at("crop_x0").get_to(t.crop_x0);
  j.at("crop_nz").get_to(t.crop_nz);
  j.at("crop_nx").get_to(t.crop_nx);
  j.at("out_nz").get_to(t.out_nz);
  j.at("out_nx").get_to(t.out_nx);
  j.at("seed").get_to(t.seed);
  j.at("stream").get_to(t.stream);
  return t;
}

Transform draw_transform(std::size_t nz, std::size_t nx, const AugmentPolicy& policy, Rng& rng) {
  policy.validate();
  Transform t;
  if (policy.flip) {
    t.flip_z = rng.coin();
    t.flip_x = rng.coin();
  }
  std::size_t rz = nz, rx = nx;
  if (policy.rotate) {
    if (policy.free_rotation) {
      t.angle_deg = rng.uniform(0.0, 360.0);
    } else {
      t.rot90 = static_cast<int>(rng.below(4));
      if (t.rot90 % 2 == 1) std::swap(rz, rx);
    }
  }
  if (policy.crop) {
    const double side = std::sqrt(rng.uniform(policy.crop_min_area, 1.0));
    t.crop_nz = static_cast<std::size_t>(std::lround(static_cast<double>(rz) * side));
    t.crop_nx = static_cast<std::size_t>(std::lround(static_cast<double>(rx) * side));
    if (t.crop_nz < 16 || t.crop_nx < 16) {
      throw ArgumentError(fmt::format("crop {}x{} is below the 16 px minimum per side", t.crop_nz, t.crop_nx));
    }
    t.crop_z0 = rng.below(rz - t.crop_nz + 1);
    t.crop_x0 = rng.below(rx - t.crop_nx + 1);
    t.out_nz = rz;
    t.out_nx = rx;
  }
  if (policy.output_nz != 0) {
    t.out_nz = policy.output_nz;
    t.out_nx = policy.output_nx;
  }
  return t;
}

namespace {

using Img = Plane<double>;

Img flip(const Img& in, bool along_z, bool along_x) {
  if (!along_z && !along_x) return in;
  Img out(in.nz, in.nx);
  for (std::size_t x = 0; x < in.nx; ++x)
    for (std::size_t z = 0; z < in.nz; ++z)
      out(along_z ? in.nz - 1 - z : z, along_x ? in.nx - 1 - x : x) = in(z, x);
  return out;
}

// One counter-clockwise quarter turn of the image with rows z, columns x.
Img rot90_once(const Img& in) {
  Img out(in.nx, in.nz);
  for (std::size_t i = 0; i < out.nz; ++i)
    for (std::size_t j = 0; j < out.nx; ++j) out(i, j) = in(j, in.nx - 1 - i);
  return out;
}

double bilinear(const Img& in, double z, double x) {
  const auto z0 = static_cast<std::size_t>(std::floor(z));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t z1 = std::min(z0 + 1, in.nz - 1);
  const std::size_t x1 = std::min(x0 + 1, in.nx - 1);
  const double fz = z - static_cast<double>(z0);
  const double fx = x - static_cast<double>(x0);
  return (1 - fz) * ((1 - fx) * in(z0, x0) + fx * in(z0, x1)) + fz * ((1 - fx) * in(z1, x0) + fx * in(z1, x1));
}

Img rotate_free(const Img& in, double angle_deg) {
  if (angle_deg == 0.0) return in;
  Img out(in.nz, in.nx);
  const double a = angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  const double cz = 0.5 * static_cast<double>(in.nz - 1);
  const double cx = 0.5 * static_cast<double>(in.nx - 1);
  for (std::size_t x = 0; x < in.nx; ++x)
    for (std::size_t z = 0; z < in.nz; ++z) {
      const double dz = static_cast<double>(z) - cz;
      const double dx = static_cast<double>(x) - cx;
      const double sz = c * dz + s * dx + cz;
      const double sx = -s * dz + c * dx + cx;
      const bool inside = sz >= 0.0 && sx >= 0.0 && sz <= static_cast<double>(in.nz - 1) &&
                          sx <= static_cast<double>(in.nx - 1);
      out(z, x) = inside ? bilinear(in, sz, sx) : 0.0;
    }
  return out;
}

Img crop(const Img& in, std::size_t z0, std::size_t x0, std::size_t cnz, std::size_t cnx) {
  if (z0 + cnz > in.nz || x0 + cnx > in.nx) throw ArgumentError("crop rectangle outside the image");
  Img out(cnz, cnx);
  for (std::size_t x = 0; x < cnx; ++x)
    for (std::size_t z = 0; z < cnz; ++z) out(z, x) = in(z0 + z, x0 + x);
  return out;
}

// Pixel-center aligned bilinear resize.
Img resize(const Img& in, std::size_t onz, std::size_t onx) {
  if (onz == in.nz && onx == in.nx) return in;
  Img out(onz, onx);
  const double scale_z = static_cast<double>(in.nz) / static_cast<double>(onz);
  const double scale_x = static_cast<double>(in.nx) / static_cast<double>(onx);
  for (std::size_t x = 0; x < onx; ++x) {
    const double sx = std::clamp((static_cast<double>(x) + 0.5) * scale_x - 0.5, 0.0, static_cast<double>(in.nx - 1));
    for (std::size_t z = 0; z < onz; ++z) {
      const double sz = std::clamp((static_cast<double>(z) + 0.5) * scale_z - 0.5, 0.0, static_cast<double>(in.nz - 1));
      out(z, x) = bilinear(in, sz, sx);
    }
  }
  return out;
}

Img transform_plane(Img img, const Transform& t) {
  img = flip(img, t.flip_z, t.flip_x);
  for (int k = 0; k < ((t.rot90 % 4) + 4) % 4; ++k) img = rot90_once(img);
  img = rotate_free(img, t.angle_deg);
  if (t.crop_nz != 0) img = crop(img, t.crop_z0, t.crop_x0, t.crop_nz, t.crop_nx);
  if (t.out_nz != 0) img = resize(img, t.out_nz, t.out_nx);
  return img;
}

QuantizedStack stack_of(std::vector<std::uint16_t> codes, std::size_t nz, std::size_t nx, std::size_t planes) {
  return QuantizedStack{nz, nx, planes, std::move(codes)};
}

void write_json_file(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("{}: cannot open for writing", path.string()));
  out << j.dump(2) << '\n';
  if (!out) throw IoError(fmt::format("{}: write failed", path.string()));
}

json policy_json(const AugmentPolicy& p) {
  return json{{"lower_jitter_db", {p.lower_jitter_min_db, p.lower_jitter_max_db}},
              {"upper_jitter_db", {p.upper_jitter_min_db, p.upper_jitter_max_db}},
              {"voi", {p.voi_z, p.voi_x, p.voi_y}},
              {"flip", p.flip},
              {"rotate", p.rotate},
              {"free_rotation", p.free_rotation},
              {"crop", p.crop},
              {"crop_min_area", p.crop_min_area},
              {"output_size", {p.output_nz, p.output_nx}}};
}

} // namespace

Volume apply_transform(const QuantizedStack& stack, const Transform& t, Pitch pitch) {
  if (stack.codes.size() != stack.nz * stack.nx * stack.planes) throw ArgumentError("quantized stack size mismatch");
  std::vector<Img> planes;
  planes.reserve(stack.planes);
  for (std::size_t p = 0; p < stack.planes; ++p) {
    Img img(stack.nz, stack.nx);
    const std::size_t base = p * stack.nz * stack.nx;
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = stack.codes[base + i];
    planes.push_back(transform_plane(std::move(img), t));
  }
  const std::size_t onz = planes.front().nz;
  const std::size_t onx = planes.front().nx;
  Volume out({onz, onx, stack.planes}, Domain::Signed, pitch);
  for (std::size_t p = 0; p < stack.planes; ++p) {
    auto dst = out.bscan(p);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      const double s = 2.0 * (planes[p].data[i] / 65535.0) - 1.0;
      dst[i] = static_cast<float>(std::clamp(s, -1.0, 1.0));
    }
  }
  return out;
}

Augmented augment(const QuantizedStack& input, const QuantizedStack& target, const AugmentPolicy& policy, Rng& rng,
                  Pitch pitch) {
  if (input.nz != target.nz || input.nx != target.nx) {
    throw ArgumentError("augment: input and target must share in-plane extent");
  }
  Transform t = draw_transform(input.nz, input.nx, policy, rng);
  return {apply_transform(input, t, pitch), apply_transform(target, t, pitch), t};
}

TrainingPair build_pair(const PairSource& src, const Volume& target_db, double floor_db, std::size_t center,
                        const ExportOptions& opts, std::uint64_t stream) {
  const std::size_t n = opts.half_width;
  const Dims& d = src.raw.dims();
  if (center < n || center + n >= d.ny) {
    throw ArgumentError(fmt::format("center B-scan {} leaves no room for half width {} in ny={}", center, n, d.ny));
  }
  Rng rng = Rng::stream(opts.seed, stream);
  TrainingPair pair;
  pair.center_index = center;
  pair.half_width = n;
  const Volume block = src.raw.slab(center - n, 2 * n + 1);
  pair.window = draw_contrast_window(block, floor_db, opts.policy, rng);
  const auto in = stack_of(quantize_uint16(block.values(), pair.window.window), d.nz, d.nx, 2 * n + 1);
  const auto tg = stack_of(quantize_uint16(target_db.bscan(center), pair.window.window), d.nz, d.nx, 1);
  auto aug = augment(in, tg, opts.policy, rng, src.raw.pitch());
  aug.transform.seed = opts.seed;
  aug.transform.stream = stream;
  pair.input = std::move(aug.input);
  pair.target = std::move(aug.target);
  pair.transform = aug.transform;
  return pair;
}

json export_pairs(const std::vector<PairSource>& sources, const ExportOptions& opts,
                  const std::filesystem::path& out_dir) {
  if (sources.empty()) throw ArgumentError("export_pairs: no sources");
  if (opts.count < 1) throw ArgumentError("export_pairs: count must be >= 1");
  opts.policy.validate();
  const std::size_t n = opts.half_width;

  struct Prepared {
    Volume target_db;
    double floor_db;
  };
  std::vector<Prepared> prepared;
  struct Job {
    std::size_t source, center;
    bool reused;
  };
  std::vector<Job> jobs;
  json source_info = json::array();

  for (std::size_t si = 0; si < sources.size(); ++si) {
    const PairSource& s = sources[si];
    const Dims& d = s.raw.dims();
    if (s.raw.domain() != Domain::LogDb) throw ArgumentError(fmt::format("source {}: raw volume must be log_db", si));
    if (d.ny < 2 * n + 1) {
      throw ArgumentError(fmt::format("source {}: ny={} is smaller than 2n+1={}", si, d.ny, 2 * n + 1));
    }
    if (s.despeckled.dims() != d) throw ArgumentError(fmt::format("source {}: raw/despeckled dims differ", si));
    Volume target_db;
    if (s.despeckled.domain() == Domain::LogDb) {
      target_db = s.despeckled;
    } else if (s.despeckled.domain() == Domain::Unit) {
      if (!s.despeckled_window) throw ArgumentError(fmt::format("source {}: unit target needs its window", si));
      target_db = convert_domain(s.despeckled, Domain::LogDb, {.window = s.despeckled_window});
    } else {
      throw ArgumentError(fmt::format("source {}: despeckled volume must be log_db or unit", si));
    }
    const double floor_db = s.noise_floor_db ? *s.noise_floor_db : noise_floor(s.raw);
    prepared.push_back({std::move(target_db), floor_db});

    // Centers without replacement; reshuffle once the candidates run out.
    std::vector<std::size_t> candidates;
    for (std::size_t c = n; c + n < d.ny; ++c) candidates.push_back(c);
    Rng pick = Rng::stream(opts.seed ^ 0x5ce7e5ULL, si);
    std::vector<std::size_t> order;
    bool reused = false;
    for (std::size_t k = 0; k < opts.count; ++k) {
      if (order.empty()) {
        if (k > 0) {
          reused = true;
          spdlog::info("source {}: {} candidate centers exhausted, reusing", si, candidates.size());
        }
        order = candidates;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[pick.below(i)]);
        std::reverse(order.begin(), order.end());
      }
      jobs.push_back({si, order.back(), reused});
      order.pop_back();
    }
    source_info.push_back({{"index", si},
                           {"name", s.name},
                           {"dims", {d.nz, d.nx, d.ny}},
                           {"noise_floor_db", floor_db},
                           {"noise_floor_override", s.noise_floor_db.has_value()}});
  }

  std::filesystem::create_directories(out_dir);
  std::vector<json> entries(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t k) {
    const Job& job = jobs[k];
    const auto& prep = prepared[job.source];
    const TrainingPair pair = build_pair(sources[job.source], prep.target_db, prep.floor_db, job.center, opts, k);
    const std::string in_name = fmt::format("pair_{:06d}_input.octv", k);
    const std::string tg_name = fmt::format("pair_{:06d}_target.octv", k);
    write_volume(pair.input, out_dir / in_name);
    write_volume(pair.target, out_dir / tg_name);
    const auto& w = pair.window;
    entries[k] = json{{"index", k},
                      {"source", job.source},
                      {"input_file", in_name},
                      {"target_file", tg_name},
                      {"center_index", job.center},
                      {"center_offset", n},
                      {"reused_center", job.reused},
                      {"input_dims", {pair.input.dims().nz, pair.input.dims().nx, pair.input.dims().ny}},
                      {"target_dims", {pair.target.dims().nz, pair.target.dims().nx, pair.target.dims().ny}},
                      {"contrast_window",
                       {{"lower_db", w.window.lower_db},
                        {"upper_db", w.window.upper_db},
                        {"noise_floor_db", w.noise_floor_db},
                        {"voi_mean_db", w.voi_mean_db},
                        {"lower_jitter_db", w.lower_jitter_db},
                        {"upper_jitter_db", w.upper_jitter_db},
                        {"attempts", w.attempts}}},
                      {"transform", to_json(pair.transform)},
                      {"seed_path", {opts.seed, k}}};
  });

  json manifest{{"version", kManifestVersion},
                {"n", n},
                {"block_bscans", 2 * n + 1},
                {"seed", opts.seed},
                {"count_per_source", opts.count},
                {"policy", policy_json(opts.policy)},
                {"sources", source_info},
                {"entries", entries}};
  write_json_file(manifest, out_dir / "manifest.json");
  return manifest;
}

} // namespace octs::pairs
