#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "octs/errors.hpp"
#include "octs/metrics.hpp"
#include "octs/pairs.hpp"
#include "octs/parallel.hpp"
#include "octs/volume_io.hpp"
#include "support.hpp"

using namespace octs;
using namespace octs::pairs;

namespace {

QuantizedStack ramp_stack(std::size_t nz, std::size_t nx, std::size_t planes) {
  QuantizedStack s{nz, nx, planes, std::vector<std::uint16_t>(nz * nx * planes)};
  for (std::size_t i = 0; i < s.codes.size(); ++i) s.codes[i] = static_cast<std::uint16_t>((i * 977) % 65536);
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> tree(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) out[e.path().filename().string()] = slurp(e.path());
  return out;
}

PairSource make_source(Dims d, std::uint64_t seed) {
  PairSource s;
  s.raw = testing::random_volume(d, Domain::LogDb, seed, -30.0, 20.0);
  s.despeckled = testing::random_volume(d, Domain::LogDb, seed + 1, -10.0, 10.0);
  s.name = "src" + std::to_string(seed);
  return s;
}

AugmentPolicy no_aug() {
  AugmentPolicy p;
  p.flip = p.rotate = p.crop = false;
  return p;
}

} // namespace

TEST_CASE("quantization boundary cases") {
  const ContrastWindow w(-10.0, 30.0);
  const std::vector<float> v{-50.0f, -10.0f, 10.0f, 30.0f, 90.0f, -9.9999f};
  const auto q = quantize_uint16(v, w);
  CHECK(q[0] == 0);
  CHECK(q[1] == 0);
  CHECK(q[2] == 32768);
  CHECK(q[3] == 65535);
  CHECK(q[4] == 65535);
  CHECK(q[5] == 0);
}

TEST_CASE("noise floor is the median of the lowest decile") {
  Volume v({100, 1, 1}, Domain::LogDb);
  for (std::size_t i = 0; i < 100; ++i) v.values()[i] = static_cast<float>(100 - i);
  CHECK(noise_floor(v) == doctest::Approx(5.5));
  Volume w({11, 1, 1}, Domain::LogDb);
  for (std::size_t i = 0; i < 11; ++i) w.values()[i] = static_cast<float>(i);
  CHECK(noise_floor(w) == doctest::Approx(0.5));  // k = 2
  Volume one({1, 1, 1}, Domain::LogDb, std::vector<float>{3.0f});
  CHECK(noise_floor(one) == 3.0);
}

TEST_CASE("contrast window draws") {
  CHECK(window_from_draws(-20.0, 10.0, 5.0, -3.0) == ContrastWindow(-15.0, 7.0));
  CHECK_THROWS_AS(window_from_draws(0.0, 1.0, 5.0, -4.0), DegenerateInput);

  Volume block({15, 15, 5}, Domain::LogDb);
  block(7, 7, 2) = 30.0f;
  AugmentPolicy p;
  p.voi_z = p.voi_x = 3;
  p.voi_y = 1;
  CHECK(voi_mean_at_max(block, p) == doctest::Approx(30.0 / 9.0));
  // VOI clipped at the border
  Volume corner({15, 15, 5}, Domain::LogDb);
  corner(0, 0, 0) = 8.0f;
  CHECK(voi_mean_at_max(corner, p) == doctest::Approx(2.0));

  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const WindowDraw d = draw_contrast_window(block, -20.0, {}, rng);
    CHECK(d.window.lower_db >= -20.0);
    CHECK(d.window.lower_db <= -10.0);
    CHECK(d.window.upper_db > d.window.lower_db);
    CHECK(d.window.lower_db == doctest::Approx(d.noise_floor_db + d.lower_jitter_db));
    CHECK(d.window.upper_db == doctest::Approx(d.voi_mean_db + d.upper_jitter_db));
  }
  Volume flat({15, 15, 5}, Domain::LogDb);
  AugmentPolicy tight;
  tight.lower_jitter_min_db = tight.lower_jitter_max_db = 5.0;
  tight.upper_jitter_min_db = -15.0;
  tight.upper_jitter_max_db = -10.0;
  CHECK_THROWS_AS(draw_contrast_window(flat, 0.0, tight, rng), DegenerateInput);
}

TEST_CASE("policy validation") {
  AugmentPolicy p;
  p.voi_z = 4;
  CHECK_THROWS_AS(p.validate(), ArgumentError);
  p = {};
  p.upper_jitter_min_db = 2.0;
  CHECK_THROWS_AS(p.validate(), ArgumentError);
  p = {};
  p.crop_min_area = 0.0;
  CHECK_THROWS_AS(p.validate(), ArgumentError);
  p = {};
  p.output_nz = 32;
  CHECK_THROWS_AS(p.validate(), ArgumentError);
}

TEST_CASE("quarter turns follow the array rot90 convention") {
  // rows z, columns x: [[0 1 2] [3 4 5]] -> [[2 5] [1 4] [0 3]]
  QuantizedStack s{2, 3, 1, {0, 3, 1, 4, 2, 5}};  // z-fastest
  Transform t;
  t.rot90 = 1;
  const Volume r = apply_transform(s, t, {});
  REQUIRE(r.dims() == Dims{3, 2, 1});
  const std::uint16_t expect[3][2] = {{2, 5}, {1, 4}, {0, 3}};
  for (std::size_t z = 0; z < 3; ++z)
    for (std::size_t x = 0; x < 2; ++x) CHECK(r(z, x, 0) == doctest::Approx(2.0 * expect[z][x] / 65535.0 - 1.0));
}

TEST_CASE("transforms compose to the identity where expected") {
  const auto s = ramp_stack(12, 12, 3);
  const Volume id = apply_transform(s, {}, {});
  Transform four;
  four.rot90 = 4;
  CHECK(apply_transform(s, four, {}) == id);
  Transform fz;
  fz.flip_z = true;
  Transform fzx = fz;
  fzx.flip_x = true;
  Transform r2;
  r2.rot90 = 2;
  CHECK(apply_transform(s, fzx, {}) == apply_transform(s, r2, {}));
  // free rotation by 90 degrees lands on the quarter turn up to interpolation
  Transform free90;
  free90.angle_deg = 90.0;
  Transform q1;
  q1.rot90 = 1;
  const Volume a = apply_transform(s, free90, {}), b = apply_transform(s, q1, {});
  for (std::size_t i = 0; i < a.values().size(); ++i) CHECK(std::abs(a.values()[i] - b.values()[i]) < 1e-3);
}

TEST_CASE("codes map to the signed range") {
  QuantizedStack s{2, 1, 1, {0, 65535}};
  const Volume v = apply_transform(s, {}, {});
  CHECK(v.domain() == Domain::Signed);
  CHECK(v.values()[0] == -1.0f);
  CHECK(v.values()[1] == 1.0f);
}

TEST_CASE("crop and resize") {
  const auto s = ramp_stack(20, 24, 1);
  Transform t;
  t.crop_z0 = 2;
  t.crop_x0 = 3;
  t.crop_nz = 10;
  t.crop_nx = 12;
  const Volume c = apply_transform(s, t, {});
  REQUIRE(c.dims() == Dims{10, 12, 1});
  CHECK(c(0, 0, 0) == doctest::Approx(2.0 * s.codes[2 + 20 * 3] / 65535.0 - 1.0));
  t.out_nz = 20;
  t.out_nx = 24;
  CHECK(apply_transform(s, t, {}).dims() == Dims{20, 24, 1});

  QuantizedStack flat{8, 8, 1, std::vector<std::uint16_t>(64, 1000)};
  Transform up;
  up.out_nz = 13;
  up.out_nx = 5;
  const Volume resized = apply_transform(flat, up, {});
  for (float v : resized.values()) CHECK(v == doctest::Approx(2.0 * 1000 / 65535.0 - 1.0));

  Transform bad;
  bad.crop_z0 = 15;
  bad.crop_nz = 10;
  bad.crop_nx = 10;
  CHECK_THROWS_AS(apply_transform(s, bad, {}), ArgumentError);
}

TEST_CASE("drawn crops below 16 px are rejected") {
  AugmentPolicy p;
  p.flip = p.rotate = false;
  Rng rng(4);
  CHECK_THROWS_AS(draw_transform(15, 64, p, rng), ArgumentError);
  for (int i = 0; i < 20; ++i) {
    const Transform t = draw_transform(64, 48, p, rng);
    CHECK(t.crop_nz >= 45);
    CHECK(t.crop_z0 + t.crop_nz <= 64);
    CHECK(t.crop_x0 + t.crop_nx <= 48);
    CHECK(t.out_nz == 64);
    CHECK(t.out_nx == 48);
  }
}

TEST_CASE("augmentation applies one transform to input and target") {
  const auto in = ramp_stack(32, 32, 5);
  QuantizedStack tg{32, 32, 1, std::vector<std::uint16_t>(in.codes.begin() + 2 * 1024, in.codes.begin() + 3 * 1024)};
  Rng rng(9);
  AugmentPolicy p;
  for (int i = 0; i < 10; ++i) {
    const Augmented a = augment(in, tg, p, rng);
    const Volume expect = apply_transform(tg, a.transform, {});
    CHECK(metrics::ssim3d(a.target, expect).score == doctest::Approx(1.0).epsilon(1e-6));
    // the center plane of the input is the target
    const auto c = a.input.bscan(2);
    CHECK(std::equal(c.begin(), c.end(), a.target.bscan(0).begin()));
  }
  CHECK_THROWS_AS(augment(in, QuantizedStack{16, 32, 1, std::vector<std::uint16_t>(512)}, p, rng), ArgumentError);
}

TEST_CASE("transform json round trip") {
  Transform t;
  t.flip_x = true;
  t.rot90 = 3;
  t.angle_deg = 12.5;
  t.crop_z0 = 4;
  t.crop_nz = 20;
  t.crop_nx = 21;
  t.out_nz = 32;
  t.out_nx = 33;
  t.seed = 77;
  t.stream = 5;
  CHECK(transform_from_json(to_json(t)) == t);
}

TEST_CASE("build_pair produces a 2n+1 block around the center") {
  const PairSource src = make_source({24, 20, 30}, 3);
  ExportOptions o;
  o.policy = no_aug();
  const TrainingPair p = build_pair(src, src.despeckled, -25.0, 12, o, 0);
  CHECK(p.input.dims() == Dims{24, 20, 17});
  CHECK(p.target.dims() == Dims{24, 20, 1});
  CHECK(p.input.domain() == Domain::Signed);
  // center plane of the input is the raw center B-scan under the drawn window
  const auto codes = quantize_uint16(src.raw.bscan(12), p.window.window);
  for (std::size_t i = 0; i < codes.size(); ++i)
    CHECK(p.input.bscan(8)[i] == doctest::Approx(2.0 * codes[i] / 65535.0 - 1.0));
  CHECK_THROWS_AS(build_pair(src, src.despeckled, -25.0, 7, o, 0), ArgumentError);
  CHECK_THROWS_AS(build_pair(src, src.despeckled, -25.0, 22, o, 0), ArgumentError);
  CHECK_NOTHROW(build_pair(src, src.despeckled, -25.0, 21, o, 0));
}

TEST_CASE("export is byte-identical across thread counts") {
  std::vector<PairSource> sources{make_source({24, 24, 20}, 1), make_source({24, 24, 18}, 5)};
  ExportOptions o;
  o.count = 6;
  o.seed = 1234;
  testing::TempDir a("exp1"), b("exp8");
  {
    ScopedThreadCount t(1);
    export_pairs(sources, o, a.path());
  }
  {
    ScopedThreadCount t(8);
    export_pairs(sources, o, b.path());
  }
  const auto ta = tree(a.path()), tb = tree(b.path());
  CHECK(ta.size() == 2 * 12 + 1);
  CHECK(ta == tb);
}

TEST_CASE("export manifest") {
  std::vector<PairSource> sources{make_source({40, 40, 19}, 1)};
  ExportOptions o;
  o.count = 4;  // 3 candidate centers for ny = 19, n = 8: forces reuse
  o.seed = 5;
  testing::TempDir dir("manifest");
  const auto m = export_pairs(sources, o, dir.path());
  CHECK(m["version"] == kManifestVersion);
  CHECK(m["n"] == 8);
  CHECK(m["block_bscans"] == 17);
  REQUIRE(m["entries"].size() == 4);
  std::set<std::size_t> first3;
  for (int i = 0; i < 3; ++i) first3.insert(m["entries"][i]["center_index"].get<std::size_t>());
  CHECK(first3 == std::set<std::size_t>{8, 9, 10});
  CHECK(m["entries"][3]["reused_center"] == true);
  CHECK(m["entries"][0]["reused_center"] == false);

  const auto& e = m["entries"][1];
  const Volume in = read_volume(dir / e["input_file"].get<std::string>());
  const Volume tg = read_volume(dir / e["target_file"].get<std::string>());
  CHECK(in.dims().ny == 17);
  CHECK(tg.dims().ny == 1);
  CHECK(in.domain() == Domain::Signed);
  const auto& w = e["contrast_window"];
  CHECK(w["lower_db"].get<double>() ==
        doctest::Approx(w["noise_floor_db"].get<double>() + w["lower_jitter_db"].get<double>()));
  CHECK(transform_from_json(e["transform"]).stream == 1);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  const auto reread = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(reread == m);
}

TEST_CASE("export errors") {
  testing::TempDir dir("experr");
  ExportOptions o;
  CHECK_THROWS_AS(export_pairs({}, o, dir.path()), ArgumentError);
  CHECK_THROWS_AS(export_pairs({make_source({16, 16, 16}, 1)}, o, dir.path()), ArgumentError);  // ny < 17
  o.count = 0;
  CHECK_THROWS_AS(export_pairs({make_source({16, 16, 20}, 1)}, o, dir.path()), ArgumentError);
  o.count = 1;
  PairSource unit = make_source({16, 16, 20}, 1);
  unit.despeckled = testing::random_volume({16, 16, 20}, Domain::Unit, 3);
  CHECK_THROWS_AS(export_pairs({unit}, o, dir.path()), ArgumentError);
  unit.despeckled_window = ContrastWindow(-30.0, 20.0);
  o.policy = no_aug();
  CHECK_NOTHROW(export_pairs({unit}, o, dir.path()));
}

TEST_CASE("noise floor and window worked examples") {
  Volume c({10, 10, 3}, Domain::LogDb);
  for (float& x : c.values()) x = 30.0f;
  CHECK(noise_floor(c) == 30.0);
  Volume bi({10, 10, 10}, Domain::LogDb);
  for (std::size_t i = 0; i < bi.values().size(); ++i) bi.values()[i] = i % 10 == 3 ? 0.0f : 40.0f;
  CHECK(noise_floor(bi) == 0.0);

  CHECK(window_from_draws(20.0, 60.0, 0.0, -15.0) == ContrastWindow(20.0, 45.0));
  CHECK(quantize_uint16(std::vector<float>{40.0f}, ContrastWindow(0.0, 80.0))[0] == 32768);

  Volume block = testing::random_volume({20, 20, 5}, Domain::LogDb, 3, 0.0, 50.0);
  Rng a(12), b(12);
  const WindowDraw da = draw_contrast_window(block, 5.0, {}, a), db = draw_contrast_window(block, 5.0, {}, b);
  CHECK(da.window == db.window);
  CHECK(da.lower_jitter_db == db.lower_jitter_db);
}

TEST_CASE("quantization is monotone") {
  std::vector<float> v(2001);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = -60.0f + 0.05f * static_cast<float>(i);
  const auto q = quantize_uint16(v, ContrastWindow(-33.3, 21.7));
  CHECK(std::is_sorted(q.begin(), q.end()));
}

TEST_CASE("augmentation toggles and replay") {
  const auto s = ramp_stack(40, 36, 3);
  QuantizedStack tg{40, 36, 1, std::vector<std::uint16_t>(s.codes.begin() + 1440, s.codes.begin() + 2880)};
  Rng rng(2);
  const Augmented off = augment(s, tg, no_aug(), rng);
  CHECK(off.transform == Transform{});
  for (std::size_t i = 0; i < s.codes.size(); ++i)
    CHECK(off.input.values()[i] == static_cast<float>(2.0 * (s.codes[i] / 65535.0) - 1.0));

  Transform fx;
  fx.flip_x = true;
  const Volume once = apply_transform(s, fx, {});
  QuantizedStack back{40, 36, 3, {}};
  for (float v : once.values()) back.codes.push_back(static_cast<std::uint16_t>(std::lround((v + 1.0) * 32767.5)));
  CHECK(apply_transform(back, fx, {}) == apply_transform(s, {}, {}));

  AugmentPolicy all;
  all.free_rotation = true;
  for (int i = 0; i < 5; ++i) {
    const Augmented a = augment(s, tg, all, rng);
    CHECK(apply_transform(s, a.transform, {}) == a.input);
    CHECK(apply_transform(s, transform_from_json(to_json(a.transform)), {}) == a.input);
  }
}

TEST_CASE("100 pairs from each of three volumes") {
  std::vector<PairSource> sources;
  for (std::uint64_t k = 0; k < 3; ++k) sources.push_back(make_source({32, 32, 40}, 10 + k));
  ExportOptions o;
  o.count = 100;
  o.policy.crop = false;
  testing::TempDir dir("exp300");
  const auto m = export_pairs(sources, o, dir.path());
  CHECK(m["entries"].size() == 300);
  for (const auto& e : m["entries"]) {
    CHECK(e["input_dims"][2] == 17);
    CHECK(e["center_offset"] == 8);
  }
}
