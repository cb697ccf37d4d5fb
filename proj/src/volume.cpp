#include "octs/volume.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "octs/errors.hpp"

namespace octs {

std::string_view to_string(Domain d) {
  switch (d) {
    case Domain::Linear: return "linear";
    case Domain::LogDb: return "log_db";
    case Domain::Unit: return "unit";
    case Domain::Signed: return "signed";
  }
  return "?";
}

Domain parse_domain(std::string_view name) {
  for (auto d : {Domain::Linear, Domain::LogDb, Domain::Unit, Domain::Signed}) {
    if (name == to_string(d)) return d;
  }
  throw ArgumentError(fmt::format("unknown domain '{}'", name));
}

ContrastWindow::ContrastWindow(double lower, double upper) : lower_db(lower), upper_db(upper) {
  if (!(lower < upper)) {
    throw ArgumentError(fmt::format("contrast window requires lower < upper, got [{}, {}]", lower, upper));
  }
}

namespace {

void check_dims(const Dims& d) {
  if (d.nz == 0 || d.nx == 0 || d.ny == 0) {
    throw ArgumentError(fmt::format("volume dims must be >= 1, got {}x{}x{}", d.nz, d.nx, d.ny));
  }
}

void check_pitch(const Pitch& p) {
  if (!(p.dz > 0 && p.dx > 0 && p.dy > 0)) {
    throw ArgumentError(fmt::format("pitch must be positive, got ({}, {}, {})", p.dz, p.dx, p.dy));
  }
}

} // namespace

Volume::Volume(Dims dims, Domain domain, Pitch pitch) : dims_(dims), pitch_(pitch), domain_(domain) {
  check_dims(dims_);
  check_pitch(pitch_);
  data_.assign(dims_.count(), 0.0f);
}

Volume::Volume(Dims dims, Domain domain, std::vector<float> data, Pitch pitch)
    : dims_(dims), pitch_(pitch), domain_(domain), data_(std::move(data)) {
  check_dims(dims_);
  check_pitch(pitch_);
  if (data_.size() != dims_.count()) {
    throw ArgumentError(fmt::format("volume data length {} does not match dims {}x{}x{}", data_.size(),
                                    dims_.nz, dims_.nx, dims_.ny));
  }
}

void Volume::set_pitch(Pitch p) {
  check_pitch(p);
  pitch_ = p;
}

Volume Volume::slab(std::size_t y0, std::size_t count) const {
  if (count == 0 || y0 + count > dims_.ny) {
    throw ArgumentError(fmt::format("slab [{}, {}) outside ny={}", y0, y0 + count, dims_.ny));
  }
  const auto first = data_.begin() + static_cast<std::ptrdiff_t>(y0 * dims_.plane());
  std::vector<float> out(first, first + static_cast<std::ptrdiff_t>(count * dims_.plane()));
  return Volume({dims_.nz, dims_.nx, count}, domain_, std::move(out), pitch_);
}

BScan Volume::bscan_copy(std::size_t y) const {
  const auto b = bscan(y);
  return BScan(dims_.nz, dims_.nx, std::vector<float>(b.begin(), b.end()));
}

void Volume::set_bscan(std::size_t y, const BScan& b) {
  if (b.nz != dims_.nz || b.nx != dims_.nx) throw ArgumentError("set_bscan: B-scan extent mismatch");
  std::copy(b.data.begin(), b.data.end(), bscan(y).begin());
}

void validate_domain(const Volume& v) {
  const auto vals = v.values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const float x = vals[i];
    bool ok = true;
    switch (v.domain()) {
      case Domain::Linear: ok = x >= 0.0f; break;
      case Domain::LogDb: ok = !std::isnan(x); break;
      case Domain::Unit: ok = x >= 0.0f && x <= 1.0f; break;
      case Domain::Signed: ok = x >= -1.0f && x <= 1.0f; break;
    }
    if (!ok) {
      throw DataError(fmt::format("value {} at flat index {} violates {} domain", x, i, to_string(v.domain())));
    }
  }
}

ComplexTomogram::ComplexTomogram(Dims dims, std::size_t channels, Pitch pitch) : dims_(dims), pitch_(pitch) {
  check_dims(dims_);
  check_pitch(pitch_);
  if (channels < 1 || channels > 2) {
    throw ArgumentError(fmt::format("tomogram channel count must be 1 or 2, got {}", channels));
  }
  channels_.assign(channels, std::vector<cfloat>(dims_.count()));
}

ComplexBScan ComplexTomogram::bscan_copy(std::size_t c, std::size_t y) const {
  const auto b = bscan(c, y);
  return ComplexBScan(dims_.nz, dims_.nx, std::vector<cfloat>(b.begin(), b.end()));
}

void ComplexTomogram::set_bscan(std::size_t c, std::size_t y, const ComplexBScan& b) {
  if (b.nz != dims_.nz || b.nx != dims_.nx) throw ArgumentError("set_bscan: B-scan extent mismatch");
  std::copy(b.data.begin(), b.data.end(), bscan(c, y).begin());
}

ContrastWindow full_range_window(const Volume& v) {
  const auto [lo, hi] = std::minmax_element(v.values().begin(), v.values().end());
  double l = *lo;
  double u = *hi;
  if (!(l < u)) {
    l -= 0.5;
    u += 0.5;
  }
  return {l, u};
}

namespace {

Volume step_up(const Volume& v, const ConversionOptions& opts) {
  Volume out = v;
  auto dst = out.values();
  switch (v.domain()) {
    case Domain::Linear: {
      for (auto& x : dst) {
        double s = x;
        if (s <= 0.0 || (opts.log_floor && s < *opts.log_floor)) {
          if (!opts.log_floor) throw DataError("nonpositive linear value without a log floor");
          s = std::max(s, *opts.log_floor);
        }
        x = static_cast<float>(10.0 * std::log10(s));
      }
      out.set_domain(Domain::LogDb);
      break;
    }
    case Domain::LogDb: {
      if (!opts.window) throw ArgumentError("log_db -> unit conversion requires a contrast window");
      const double l = opts.window->lower_db;
      const double w = opts.window->width();
      for (auto& x : dst) x = static_cast<float>(std::clamp((x - l) / w, 0.0, 1.0));
      out.set_domain(Domain::Unit);
      break;
    }
    case Domain::Unit:
      for (auto& x : dst) x = 2.0f * x - 1.0f;
      out.set_domain(Domain::Signed);
      break;
    case Domain::Signed: break;
  }
  return out;
}

Volume step_down(const Volume& v, const ConversionOptions& opts) {
  Volume out = v;
  auto dst = out.values();
  switch (v.domain()) {
    case Domain::Signed:
      for (auto& x : dst) x = 0.5f * (x + 1.0f);
      out.set_domain(Domain::Unit);
      break;
    case Domain::Unit: {
      if (!opts.window) throw ArgumentError("unit -> log_db conversion requires a contrast window");
      const double l = opts.window->lower_db;
      const double w = opts.window->width();
      for (auto& x : dst) x = static_cast<float>(l + w * static_cast<double>(x));
      out.set_domain(Domain::LogDb);
      break;
    }
    case Domain::LogDb:
      for (auto& x : dst) x = static_cast<float>(std::pow(10.0, static_cast<double>(x) / 10.0));
      out.set_domain(Domain::Linear);
      break;
    case Domain::Linear: break;
  }
  return out;
}

} // namespace

Volume convert_domain(const Volume& v, Domain target, const ConversionOptions& opts) {
  Volume cur = v;
  while (cur.domain() != target) {
    cur = static_cast<int>(cur.domain()) < static_cast<int>(target) ? step_up(cur, opts) : step_down(cur, opts);
  }
  return cur;
}

} // namespace octs
