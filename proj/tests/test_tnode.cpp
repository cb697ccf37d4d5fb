#include <doctest.h>

#include <chrono>
#include <cmath>

#include "nlm_oracle.hpp"
#include "octs/errors.hpp"
#include "octs/parallel.hpp"
#include "octs/phantom.hpp"
#include "octs/tnode.hpp"
#include "support.hpp"

using namespace octs;
using namespace octs::tnode;

namespace {

const ContrastWindow kWindow(-30.0, 30.0);

double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - b[i]));
  return m;
}

Volume transpose_zx(const Volume& v) {
  const Dims& d = v.dims();
  Volume out({d.nx, d.nz, d.ny}, v.domain());
  for (std::size_t y = 0; y < d.ny; ++y)
    for (std::size_t x = 0; x < d.nx; ++x)
      for (std::size_t z = 0; z < d.nz; ++z) out(x, z, y) = v(z, x, y);
  return out;
}

Volume unit_speckle(Dims d, std::uint64_t seed, ContrastWindow* w) {
  phantom::PhantomSpec spec;
  spec.dims = d;
  spec.psf = {0.0, 0.0, 0.0};
  const auto real = phantom::speckle_realization(phantom::generate_incoherent(spec), spec.psf, seed);
  const Volume db = convert_domain(real.intensity, Domain::LogDb);
  *w = full_range_window(db);
  return convert_domain(db, Domain::Unit, {.window = *w});
}

double variance(std::span<const float> v) {
  double s = 0.0, ss = 0.0;
  for (float x : v) s += x;
  const double m = s / static_cast<double>(v.size());
  for (float x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size());
}

} // namespace

TEST_CASE("despeckle matches the brute-force reference") {
  const Volume v = testing::random_volume({16, 16, 9}, Domain::Unit, 101);
  TNodeParams p;
  p.noise_floor_db = -5.0;
  const Volume fast = despeckle(v, p, kWindow);
  const Volume ref = testing::nlm_oracle(v, p, kWindow);
  CHECK(max_abs_diff(fast.values(), ref.values()) < 1e-5);

  SUBCASE("anisotropic radii") {
    TNodeParams q;
    q.noise_floor_db = 0.0;
    q.search = {3, 2, 1};
    q.patch = {2, 1, 0};
    q.h0 = 0.15;
    CHECK(max_abs_diff(despeckle(v, q, kWindow).values(), testing::nlm_oracle(v, q, kWindow).values()) < 1e-5);
  }
  SUBCASE("estimated noise floor") {
    TNodeParams q;
    q.search = {2, 2, 2};
    TNodeParams resolved = q;
    resolved.noise_floor_db = resolve_noise_floor(v, q, kWindow);
    CHECK(max_abs_diff(despeckle(v, q, kWindow).values(), testing::nlm_oracle(v, resolved, kWindow).values()) <
          1e-5);
  }
}

TEST_CASE("despeckle_partial equals the full-volume slice bit for bit") {
  const Volume v = testing::random_volume({20, 40, 12}, Domain::Unit, 7);
  TNodeParams p;
  p.search = {4, 4, 3};
  const Volume full = despeckle(v, p, kWindow);
  for (std::size_t y : {std::size_t{0}, std::size_t{5}, std::size_t{11}}) {
    const BScan b = despeckle_partial(v, y, p, kWindow);
    const auto slice = full.bscan(y);
    CHECK(std::equal(slice.begin(), slice.end(), b.data.begin()));
  }
  CHECK_THROWS_AS(despeckle_partial(v, 12, p, kWindow), ArgumentError);
}

TEST_CASE("despeckle_partial is cheaper than the full volume") {
  const Volume v = testing::random_volume({32, 32, 24}, Domain::Unit, 8);
  TNodeParams p;
  p.search = {4, 4, 8};
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  (void)despeckle_partial(v, 12, p, kWindow);
  const auto t1 = Clock::now();
  (void)despeckle(v, p, kWindow);
  const auto t2 = Clock::now();
  CHECK(t1 - t0 < t2 - t1);
}

TEST_CASE("output does not depend on the thread count") {
  const Volume v = testing::random_volume({24, 70, 10}, Domain::Unit, 9);
  TNodeParams p;
  p.search = {3, 3, 3};
  Volume one, two, many;
  {
    ScopedThreadCount t(1);
    one = despeckle(v, p, kWindow);
  }
  {
    ScopedThreadCount t(2);
    two = despeckle(v, p, kWindow);
  }
  {
    ScopedThreadCount t(7);
    many = despeckle(v, p, kWindow);
  }
  CHECK(one == two);
  CHECK(one == many);
}

TEST_CASE("outputs are convex combinations of the search window") {
  const Volume v = testing::random_volume({12, 12, 6}, Domain::Unit, 10);
  TNodeParams p;
  p.search = {2, 2, 1};
  const Volume out = despeckle(v, p, kWindow);
  const Dims& d = v.dims();
  for (std::size_t y = 0; y < d.ny; ++y)
    for (std::size_t x = 0; x < d.nx; ++x)
      for (std::size_t z = 0; z < d.nz; ++z) {
        float lo = 1.0f, hi = 0.0f;
        for (int oy = -1; oy <= 1; ++oy)
          for (int ox = -2; ox <= 2; ++ox)
            for (int oz = -2; oz <= 2; ++oz) {
              const float q = v(testing::reflect(long(z) + oz, d.nz), testing::reflect(long(x) + ox, d.nx),
                                testing::reflect(long(y) + oy, d.ny));
              lo = std::min(lo, q);
              hi = std::max(hi, q);
            }
        CHECK(out(z, x, y) >= lo - 1e-6f);
        CHECK(out(z, x, y) <= hi + 1e-6f);
      }
}

TEST_CASE("swapping z and x commutes with the filter for isotropic radii") {
  const Volume v = testing::random_volume({14, 10, 5}, Domain::Unit, 11);
  TNodeParams p;
  p.search = {3, 3, 2};
  p.patch = {1, 1, 1};
  const Volume a = transpose_zx(despeckle(v, p, kWindow));
  const Volume b = despeckle(transpose_zx(v), p, kWindow);
  CHECK(max_abs_diff(a.values(), b.values()) < 1e-5);
}

TEST_CASE("larger h0 never increases output variance") {
  ContrastWindow w;
  const Volume v = unit_speckle({32, 32, 16}, 5, &w);
  TNodeParams p;
  p.search = {4, 4, 4};
  double prev = variance(v.values());
  for (double h0 : {0.02, 0.04, 0.08, 0.16, 0.32}) {
    p.h0 = h0;
    const double var = variance(despeckle(v, p, w).values());
    CHECK(var <= prev);
    prev = var;
  }
}

TEST_CASE("adaptive_h") {
  TNodeParams p;
  CHECK_THROWS_AS(adaptive_h(0.0, p), ArgumentError);
  p.noise_floor_db = 10.0;
  CHECK(adaptive_h(10.0, p) == doctest::Approx(0.12));
  CHECK(adaptive_h(-40.0, p) == doctest::Approx(0.12));
  CHECK(adaptive_h(20.0, p) == doctest::Approx(0.08 + 0.04 * std::exp(-1.0)));
  CHECK(adaptive_h(500.0, p) == doctest::Approx(0.08));
  // decreasing in intensity
  CHECK(adaptive_h(15.0, p) > adaptive_h(16.0, p));
}

TEST_CASE("patch_distance") {
  const Volume v = testing::random_volume({8, 8, 8}, Domain::Unit, 12);
  const Radii r{1, 1, 1};
  CHECK(patch_distance(v, {3, 3, 3}, {3, 3, 3}, r) == 0.0);
  CHECK(patch_distance(v, {3, 3, 3}, {5, 2, 4}, r) == doctest::Approx(patch_distance(v, {5, 2, 4}, {3, 3, 3}, r)));
  // direct sum with the reference taps
  const auto g = testing::oracle_taps(1);
  double d2 = 0.0;
  for (int ky = -1; ky <= 1; ++ky)
    for (int kx = -1; kx <= 1; ++kx)
      for (int kz = -1; kz <= 1; ++kz) {
        const double a = v(testing::reflect(0 + kz, 8), testing::reflect(2 + kx, 8), testing::reflect(7 + ky, 8));
        const double b = v(testing::reflect(4 + kz, 8), testing::reflect(5 + kx, 8), testing::reflect(1 + ky, 8));
        d2 += g[kz + 1] * g[kx + 1] * g[ky + 1] * (a - b) * (a - b);
      }
  CHECK(patch_distance(v, {0, 2, 7}, {4, 5, 1}, r) == doctest::Approx(d2).epsilon(1e-9));
}

TEST_CASE("parameter and input validation") {
  TNodeParams p;
  p.h0 = 0.0;
  CHECK_THROWS_AS(p.validate(), ArgumentError);
  p = {};
  p.patch = {9, 1, 1};
  CHECK_THROWS_AS(p.validate(), ArgumentError);
  p = {};
  p.snr_scale_db = 0.0;
  CHECK_THROWS_AS(p.validate(), ArgumentError);

  const Volume lin = testing::random_volume({8, 8, 8}, Domain::Linear, 1);
  CHECK_THROWS_AS(despeckle(lin, {}, kWindow), ArgumentError);
  const Volume tiny = testing::random_volume({2, 8, 8}, Domain::Unit, 1);
  CHECK_THROWS_AS(despeckle(tiny, {}, kWindow), ArgumentError);
}

TEST_CASE("zero search radius leaves the volume unchanged") {
  const Volume v = testing::random_volume({6, 6, 3}, Domain::Unit, 13);
  TNodeParams p;
  p.search = {0, 0, 0};
  p.patch = {0, 0, 0};
  const Volume out = despeckle(v, p, kWindow);
  CHECK(max_abs_diff(out.values(), v.values()) == 0.0);
}

TEST_CASE("constant input and the large-h limit") {
  Volume c({10, 10, 6}, Domain::Unit);
  for (float& x : c.values()) x = 0.375f;
  CHECK(despeckle(c, {}, kWindow) == c);

  const Volume v = testing::random_volume({10, 12, 7}, Domain::Unit, 14);
  TNodeParams p;
  p.h0 = 1e6;
  p.search = {2, 1, 1};
  const Volume out = despeckle(v, p, kWindow);
  const Dims& d = v.dims();
  double err = 0.0;
  for (std::size_t y = 0; y < d.ny; ++y)
    for (std::size_t x = 0; x < d.nx; ++x)
      for (std::size_t z = 0; z < d.nz; ++z) {
        double s = 0.0;
        for (int oy = -1; oy <= 1; ++oy)
          for (int ox = -1; ox <= 1; ++ox)
            for (int oz = -2; oz <= 2; ++oz)
              s += v(testing::reflect(long(z) + oz, d.nz), testing::reflect(long(x) + ox, d.nx),
                     testing::reflect(long(y) + oy, d.ny));
        err = std::max(err, std::abs(out(z, x, y) - s / 45.0));
      }
  CHECK(err < 1e-4);
}

TEST_CASE("single-voxel patch distance") {
  Volume v({4, 4, 4}, Domain::Unit);
  v(1, 1, 1) = 0.2f;
  v(2, 3, 0) = 0.5f;
  CHECK(patch_distance(v, {1, 1, 1}, {2, 3, 0}, {0, 0, 0}) == doctest::Approx(0.09));
  CHECK(patch_distance(v, {1, 1, 1}, {-3, 1, 1}, {0, 0, 0}) == doctest::Approx(0.04));  // mirrored to z = 2
}
