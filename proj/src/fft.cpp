#include "fft.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

#include <fftw3.h>

#include "octs/errors.hpp"

namespace octs::detail {
namespace {

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n) : ptr(fftw_alloc_complex(n)) {
    if (!ptr) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  fftw_complex* ptr;
};

struct PlanDeleter {
  void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
using Plan = std::unique_ptr<fftw_plan_s, PlanDeleter>;

// The FFTW planner is not reentrant; execution of an existing plan is.
std::mutex g_planner_mutex;
std::map<std::tuple<std::size_t, std::size_t, bool>, Plan> g_plans;

fftw_plan plan_for(std::size_t nz, std::size_t nx, bool inverse) {
  std::lock_guard lock(g_planner_mutex);
  auto key = std::make_tuple(nz, nx, inverse);
  auto it = g_plans.find(key);
  if (it != g_plans.end()) return it->second.get();
  FftwBuffer scratch(nz * nx);
  // FFTW is row-major: x is the slow (row) index, z the contiguous one.
  fftw_plan p = fftw_plan_dft_2d(static_cast<int>(nx), static_cast<int>(nz), scratch.ptr, scratch.ptr,
                                 inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE);
  if (!p) throw Error("FFTW failed to create a plan");
  return g_plans.emplace(key, Plan(p)).first->second.get();
}

} // namespace

void fft2(std::span<cdouble> plane, std::size_t nz, std::size_t nx, bool inverse) {
  if (plane.size() != nz * nx) throw ArgumentError("fft2: plane size does not match extents");
  fftw_plan p = plan_for(nz, nx, inverse);
  // fftw_malloc alignment matches the planning buffer, as new-array execution requires.
  FftwBuffer buf(plane.size());
  std::copy(plane.begin(), plane.end(), reinterpret_cast<cdouble*>(buf.ptr));
  fftw_execute_dft(p, buf.ptr, buf.ptr);
  std::copy_n(reinterpret_cast<const cdouble*>(buf.ptr), plane.size(), plane.begin());
}

} // namespace octs::detail
