#include <doctest.h>

#include <cmath>
#include <limits>

#include "octs/errors.hpp"
#include "octs/metrics.hpp"
#include "octs/phantom.hpp"
#include "octs/tnode.hpp"
#include "support.hpp"

using namespace octs;
using namespace octs::metrics;

namespace {

// Direct per-voxel SSIM: explicit 11^3 Gaussian window, clamped indices.
double naive_local_ssim(const Volume& a, const Volume& b, std::size_t z, std::size_t x, std::size_t y, double L) {
  const Dims& d = a.dims();
  double g[11], gs = 0.0;
  for (int i = 0; i < 11; ++i) {
    g[i] = std::exp(-double((i - 5) * (i - 5)) / (2 * 1.5 * 1.5));
    gs += g[i];
  }
  auto cl = [](long i, std::size_t n) { return static_cast<std::size_t>(std::clamp<long>(i, 0, long(n) - 1)); };
  double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
  for (int j = 0; j < 11; ++j)
    for (int i = 0; i < 11; ++i)
      for (int k = 0; k < 11; ++k) {
        const double w = g[k] * g[i] * g[j] / (gs * gs * gs);
        const std::size_t zz = cl(long(z) + k - 5, d.nz), xx = cl(long(x) + i - 5, d.nx), yy = cl(long(y) + j - 5, d.ny);
        const double va = a(zz, xx, yy), vb = b(zz, xx, yy);
        ma += w * va;
        mb += w * vb;
        saa += w * va * va;
        sbb += w * vb * vb;
        sab += w * va * vb;
      }
  const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L), c3 = c2 / 2;
  const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
  const double sa = std::sqrt(std::max(va, 0.0)), sb = std::sqrt(std::max(vb, 0.0));
  const double l = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
  const double c = (2 * sa * sb + c2) / (va + vb + c2);
  const double s = (cov + c3) / (sa * sb + c3);
  return l * c * s;
}

Volume with_values(Dims d, Domain dom, std::vector<float> v) { return Volume(d, dom, std::move(v)); }

} // namespace

TEST_CASE("ssim3d identity and self-consistency") {
  const Volume v = testing::random_volume({13, 12, 9}, Domain::LogDb, 1, -40.0, 20.0);
  const auto r = ssim3d(v, v);
  CHECK(std::abs(r.score - 1.0) < 1e-9);
  for (float m : r.map.values()) CHECK(m == 1.0f);

  const Volume w = testing::random_volume({13, 12, 9}, Domain::LogDb, 2, -40.0, 20.0);
  const auto s = ssim3d(v, w);
  double mean = 0.0;
  for (float m : s.map.values()) mean += m;
  mean /= static_cast<double>(s.map.values().size());
  CHECK(std::abs(s.score - mean) < 1e-6);  // map is stored in float
  CHECK(s.score >= -1.0);
  CHECK(s.score <= 1.0);
}

TEST_CASE("ssim3d is symmetric") {
  const Volume a = testing::random_volume({12, 12, 12}, Domain::Unit, 3);
  const Volume b = testing::random_volume({12, 12, 12}, Domain::Unit, 4);
  CHECK(ssim3d(a, b).score == ssim3d(b, a).score);
  CHECK(msssim3d(a, b, 1).score == msssim3d(b, a, 1).score);
}

TEST_CASE("ssim3d matches the direct sliding-window reference") {
  const Volume a = testing::random_volume({14, 12, 11}, Domain::Unit, 5);
  Volume b = a;
  Rng rng(6);
  for (float& x : b.values()) x = static_cast<float>(std::clamp(0.7 * x + 0.2 + 0.05 * rng.normal(), 0.0, 1.0));
  const auto r = ssim3d(a, b);
  CHECK(r.data_range == 1.0);
  double mean = 0.0;
  for (std::size_t y = 0; y < 11; ++y)
    for (std::size_t x = 0; x < 12; ++x)
      for (std::size_t z = 0; z < 14; ++z) {
        const double ref = naive_local_ssim(a, b, z, x, y, 1.0);
        CHECK(std::abs(r.map(z, x, y) - ref) < 1e-6);
        mean += ref;
      }
  CHECK(std::abs(r.score - mean / (14 * 12 * 11)) < 1e-6);
}

TEST_CASE("ssim data range defaults") {
  CHECK(resolve_data_range(testing::random_volume({4, 4, 4}, Domain::Unit, 1), {}) == 1.0);
  CHECK(resolve_data_range(testing::random_volume({4, 4, 4}, Domain::Signed, 1, -1, 1), {}) == 2.0);
  Volume db({2, 1, 1}, Domain::LogDb, {-10.0f, 30.0f});
  CHECK(resolve_data_range(db, {}) == 40.0);
  SsimOptions o;
  o.data_range = 5.0;
  CHECK(resolve_data_range(db, o) == 5.0);
  CHECK_THROWS_AS(ssim3d(db, Volume({2, 1, 2}, Domain::LogDb)), ArgumentError);
  CHECK_THROWS_AS(ssim3d(db, Volume({2, 1, 1}, Domain::Linear)), ArgumentError);
}

TEST_CASE("msssim3d identity") {
  const Volume v = testing::random_volume({48, 48, 24}, Domain::Unit, 7);
  const auto r = msssim3d(v, v);
  CHECK(std::abs(r.score - 1.0) < 1e-9);
  CHECK(r.reduced);
  CHECK(r.scales_used == 2);
  double wsum = 0.0;
  for (double w : r.weights) wsum += w;
  CHECK(wsum == doctest::Approx(1.0));
}

TEST_CASE("msssim3d reduces scales on small volumes") {
  const Volume a = testing::random_volume({32, 32, 32}, Domain::Unit, 8);
  const Volume b = testing::random_volume({32, 32, 32}, Domain::Unit, 9);
  const auto r = msssim3d(a, b, 5);
  CHECK(r.reduced);
  CHECK(r.scales_used == 2);
  CHECK(r.score >= -1.0);
  CHECK(r.score <= 1.0);
  const auto full = msssim3d(testing::random_volume({176, 176, 1}, Domain::Unit, 1),
                             testing::random_volume({176, 176, 1}, Domain::Unit, 1), 5);
  CHECK_FALSE(full.reduced);
  CHECK(full.scales_used == 5);
}

TEST_CASE("msssim3d with one scale is ssim3d") {
  const Volume a = testing::random_volume({16, 16, 16}, Domain::Unit, 10);
  const Volume b = testing::random_volume({16, 16, 16}, Domain::Unit, 11);
  CHECK(msssim3d(a, b, 1).score == doctest::Approx(ssim3d(a, b).score).epsilon(1e-12));
  CHECK_THROWS_AS(msssim3d(a, b, 0), ArgumentError);
  CHECK_THROWS_AS(msssim3d(a, b, 6), ArgumentError);
}

TEST_CASE("psnr closed forms") {
  std::vector<double> ref(1000), plus1(1000), plus655(1000);
  Rng rng(1);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    ref[i] = std::round(rng.uniform(0.0, 60000.0));
    plus1[i] = ref[i] + 1.0;
    plus655[i] = ref[i] + 655.35;
  }
  CHECK(std::isinf(psnr(ref, ref)));
  CHECK(std::abs(psnr(ref, plus1) - 20.0 * std::log10(65535.0)) < 1e-3);
  CHECK(std::abs(psnr(ref, plus1) - 96.3295) < 1e-3);
  CHECK(std::abs(psnr(ref, plus655) - 40.0) < 1e-3);
  std::vector<double> short_ref(3);
  CHECK_THROWS_AS(psnr(short_ref, ref), ArgumentError);
  std::vector<double> out_of_range(1000, 70000.0);
  CHECK_THROWS_AS(psnr(ref, out_of_range), ArgumentError);
}

TEST_CASE("psnr decreases with noise amplitude") {
  Volume ref = testing::random_volume({16, 16, 16}, Domain::Linear, 2, 10000.0, 50000.0);
  double prev = std::numeric_limits<double>::infinity();
  for (double amp : {10.0, 100.0, 1000.0}) {
    Volume t = ref;
    Rng rng(3);
    for (float& x : t.values()) x = static_cast<float>(std::clamp(x + amp * rng.normal(), 0.0, 65535.0));
    const double p = psnr(ref, t);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("cnr") {
  // roi1: 7/13 alternating -> mean 10, sd 3; roi2: 16/24 -> mean 20, sd 4
  Volume v({4, 2, 1}, Domain::LogDb, {7, 13, 7, 13, 16, 24, 16, 24});
  const Roi r1{0, 0, 0, 4, 1, 1}, r2{0, 1, 0, 4, 1, 1};
  CHECK(std::abs(cnr(v, r1, r2) - 2.0) < 1e-6);
  CHECK(cnr(v, r1, r1) == 0.0);
  Volume flat({4, 2, 1}, Domain::LogDb, {1, 1, 1, 1, 2, 2, 2, 2});
  CHECK_THROWS_AS(cnr(flat, r1, r2), DegenerateInput);
  CHECK_THROWS_AS(cnr(v, r1, Roi{0, 1, 0, 5, 1, 1}), ArgumentError);
}

TEST_CASE("roi parsing and validation") {
  const Roi r = parse_roi("1,2,3,4,5,6");
  CHECK(r == Roi{1, 2, 3, 4, 5, 6});
  CHECK(to_string(r) == "1,2,3,4,5,6");
  CHECK_THROWS_AS(parse_roi("1,2,3"), ArgumentError);
  CHECK_THROWS_AS(parse_roi("1,2,3,4,5,x"), ArgumentError);
  CHECK_THROWS_AS(parse_roi("1,2,3,4,5,-6"), ArgumentError);
  CHECK_THROWS_AS((Roi{0, 0, 0, 0, 1, 1}.validate({4, 4, 4})), ArgumentError);
  CHECK(Roi{0, 0, 0, 2, 2, 2}.overlaps(Roi{1, 1, 1, 2, 2, 2}));
  CHECK_FALSE(Roi{0, 0, 0, 2, 2, 2}.overlaps(Roi{2, 0, 0, 2, 2, 2}));
}

TEST_CASE("t-test") {
  const Volume a = testing::random_volume({10, 10, 10}, Domain::Signed, 4, -1, 1);
  const auto same = ssim_ttest(a, a);
  CHECK(same.t == 0.0);
  CHECK(same.p == 1.0);

  std::vector<float> x{1, 2, 3, 4, 5}, y{2, 4, 6, 8, 10};
  const auto r = ttest(x, y);
  CHECK(r.t == doctest::Approx(-1.8973665961010275).epsilon(1e-12));
  CHECK(r.p == doctest::Approx(0.09434977284243756).epsilon(1e-9));
  CHECK(r.dof == 8.0);

  // 10^6 voxels, sd 0.1, shifted by 0.05
  Volume m({100, 100, 100}, Domain::Signed);
  Rng rng(5);
  for (float& v : m.values()) v = static_cast<float>(0.5 + 0.1 * rng.normal());
  Volume shifted = m;
  for (float& v : shifted.values()) v += 0.05f;
  const auto big = ssim_ttest(m, shifted);
  CHECK(big.p < 1e-6);
  CHECK(big.t < -300.0);

  std::vector<float> one{1.0f};
  CHECK_THROWS_AS(ttest(one, x), ArgumentError);
  CHECK_THROWS_AS(ssim_ttest(a, Volume({10, 10, 9}, Domain::Signed)), ArgumentError);
}

TEST_CASE("speckle contrast") {
  Volume c({4, 4, 4}, Domain::Linear);
  for (float& x : c.values()) x = 2.5f;
  CHECK(speckle_contrast(c, whole(c.dims())) == 0.0);
  Volume z({4, 4, 4}, Domain::Linear);
  CHECK_THROWS_AS(speckle_contrast(z, whole(z.dims())), DegenerateInput);
  Volume two({2, 1, 1}, Domain::Linear, {1.0f, 3.0f});
  CHECK(speckle_contrast(two, whole(two.dims())) == doctest::Approx(0.5));
}

TEST_CASE("quantize maps the window onto 16-bit codes") {
  const Volume db = with_values({4, 1, 1}, Domain::LogDb, {-20.0f, 0.0f, 10.0f, 40.0f});
  const Volume q = quantize(db, ContrastWindow(0.0, 20.0));
  CHECK(q.values()[0] == 0.0f);
  CHECK(q.values()[1] == 0.0f);
  CHECK(q.values()[2] == 32768.0f);
  CHECK(q.values()[3] == 65535.0f);
}

TEST_CASE("report rendering") {
  MetricReport r;
  r.psnr_db = std::numeric_limits<double>::infinity();
  r.ssim = 1.0;
  r.roi1 = Roi{0, 0, 0, 1, 1, 1};
  r.parameters["ref"] = "a.octv";
  const auto j = to_json(r);
  CHECK(j["psnr_db"] == "identical");
  CHECK(j["ssim"] == 1.0);
  CHECK(j["parameters"]["ref"] == "a.octv");
  const std::string t = format_report(r);
  CHECK(t.find("identical") != std::string::npos);
  CHECK(t.find("roi1") != std::string::npos);
}

TEST_CASE("despeckling raises CNR between two reflectivity levels") {
  phantom::PhantomSpec s;
  s.preset = phantom::Preset::Step;
  s.dims = {32, 48, 24};
  s.psf = {0.0, 0.0, 0.0};
  const Volume lin = phantom::speckle_realization(phantom::generate_incoherent(s), s.psf, 21).intensity;
  const Volume db = convert_domain(lin, Domain::LogDb);
  const ContrastWindow w = full_range_window(db);
  tnode::TNodeParams p;
  p.search = {4, 4, 4};
  const Volume out = convert_domain(tnode::despeckle(convert_domain(db, Domain::Unit, {.window = w}), p, w),
                                    Domain::LogDb, {.window = w});
  const Roi low{4, 4, 4, 24, 14, 16}, high{4, 30, 4, 24, 14, 16};
  const double before = cnr(db, low, high), after = cnr(out, low, high);
  CHECK(before > 0.0);
  CHECK(after > before);
}
