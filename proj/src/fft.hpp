#pragma once

#include <complex>
#include <cstddef>
#include <span>

namespace octs::detail {

using cdouble = std::complex<double>;

// In-place unnormalized 2D DFT of an nz x nx plane stored z-fastest.
// forward: exp(-i...), inverse: exp(+i...). Safe to call concurrently.
void fft2(std::span<cdouble> plane, std::size_t nz, std::size_t nx, bool inverse);

} // namespace octs::detail
