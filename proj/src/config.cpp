#include "octs/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <type_traits>

#include <fmt/format.h>

#include "octs/errors.hpp"

namespace octs {

std::string format_number(double v) {
  const std::string fixed = fmt::format("{:.3f}", v);
  if (std::strtod(fixed.c_str(), nullptr) == v) return fixed;
  return fmt::format("{}", v);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ArgumentError(fmt::format("{}: '{}' is not {}", key, value, expected));
}

double parse_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(d)) {
    bad_value(key, v, "a finite number");
  }
  return d;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  if (v.empty() || v[0] == '-' || v[0] == '+') bad_value(key, v, "a non-negative integer");
  const unsigned long long n = std::strtoull(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || errno == ERANGE) bad_value(key, v, "a non-negative integer");
  return n;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean (true/false)");
}

std::optional<double> parse_auto(const std::string& key, const std::string& v) {
  if (v == "auto") return std::nullopt;
  return parse_double(key, v);
}

std::string format_auto(const std::optional<double>& v) { return v ? format_number(*v) : "auto"; }

std::string format_bool(bool b) { return b ? "true" : "false"; }

template <typename F>
ConfigKey number(std::string name, std::string help, F field) {
  return {name, std::move(help), [field](const RunConfig& c) { return format_number(field(c)); },
          [field, name](RunConfig& c, const std::string& v) { field(c) = parse_double(name, v); }};
}

template <typename F>
ConfigKey optional_number(std::string name, std::string help, F field) {
  return {name, std::move(help), [field](const RunConfig& c) { return format_auto(field(c)); },
          [field, name](RunConfig& c, const std::string& v) { field(c) = parse_auto(name, v); }};
}

template <typename F>
ConfigKey integer(std::string name, std::string help, F field) {
  return {name, std::move(help), [field](const RunConfig& c) { return fmt::format("{}", field(c)); },
          [field, name](RunConfig& c, const std::string& v) {
            using T = std::remove_reference_t<decltype(field(c))>;
            const std::uint64_t n = parse_uint(name, v);
            if (n > static_cast<std::uint64_t>(std::numeric_limits<T>::max())) bad_value(name, v, "in range");
            field(c) = static_cast<T>(n);
          }};
}

template <typename F>
ConfigKey boolean(std::string name, std::string help, F field) {
  return {name, std::move(help), [field](const RunConfig& c) { return format_bool(field(c)); },
          [field, name](RunConfig& c, const std::string& v) { field(c) = parse_bool(name, v); }};
}

template <typename F>
ConfigKey text(std::string name, std::string help, F field) {
  return {name, std::move(help), [field](const RunConfig& c) { return std::string(field(c)); },
          [field](RunConfig& c, const std::string& v) { field(c) = v; }};
}

template <typename F>
ConfigKey axis_key(std::string name, std::string help, F field) {
  return {name, std::move(help), [field](const RunConfig& c) { return std::string(phantom::to_string(field(c))); },
          [field](RunConfig& c, const std::string& v) { field(c) = phantom::parse_axis(v); }};
}

ConfigKey radii_key(std::string name, std::string help, tnode::Radii tnode::TNodeParams::*member) {
  return {name, std::move(help),
          [member](const RunConfig& c) {
            const auto& r = c.tnode.*member;
            return fmt::format("{},{},{}", r.z, r.x, r.y);
          },
          [member, name](RunConfig& c, const std::string& v) {
            const auto parts = split(v, ',');
            if (parts.size() != 3) bad_value(name, v, "z,x,y");
            c.tnode.*member = {parse_uint(name, parts[0]), parse_uint(name, parts[1]), parse_uint(name, parts[2])};
          },
          false};
}

std::string format_layers(const std::vector<phantom::Layer>& layers) {
  std::string out;
  for (const auto& l : layers) out += fmt::format("{}{}:{}", out.empty() ? "" : ",", format_number(l.top),
                                                  format_number(l.reflectivity));
  return out;
}

std::vector<phantom::Layer> parse_layers(const std::string& key, const std::string& v) {
  std::vector<phantom::Layer> out;
  if (v.empty() || v == "none") return out;
  for (const auto& item : split(v, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 2) bad_value(key, v, "a list of top:reflectivity");
    out.push_back({parse_double(key, parts[0]), parse_double(key, parts[1])});
  }
  return out;
}

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> k;
  // paths
  k.push_back(text("input", "input OCTV file (export-pairs: comma list)", [](auto& c) -> auto& { return c.input; }));
  k.push_back(text("output", "output OCTV file or directory", [](auto& c) -> auto& { return c.output; }));
  k.push_back(text("ref", "metrics reference volume", [](auto& c) -> auto& { return c.ref; }));
  k.push_back(text("test", "metrics test volume", [](auto& c) -> auto& { return c.test; }));
  k.push_back(text("target", "export-pairs despeckled volumes, comma list matching input; empty runs the filter",
                   [](auto& c) -> auto& { return c.target; }));
  k.push_back(text("shift_log", "register trace file, - for stdout", [](auto& c) -> auto& { return c.shift_log; }));
  k.push_back(text("truth_output", "phantom reflectivity map file", [](auto& c) -> auto& { return c.truth_output; }));
  k.push_back(text("field_output", "phantom complex field file", [](auto& c) -> auto& { return c.field_output; }));
  // run
  k.push_back(integer("threads", "worker threads, 0 = all cores", [](auto& c) -> auto& { return c.threads; }));
  k.push_back(integer("seed", "random seed", [](auto& c) -> auto& { return c.seed; }));
  k.push_back({"log_level", "trace, debug, info, warn, error, off", [](const RunConfig& c) { return c.log_level; },
               [](RunConfig& c, const std::string& v) {
                 for (const char* l : {"trace", "debug", "info", "warn", "error", "off"})
                   if (v == l) {
                     c.log_level = v;
                     return;
                   }
                 bad_value("log_level", v, "a log level");
               }});
  // filter
  k.push_back(number("h0", "base filtering strength", [](auto& c) -> auto& { return c.tnode.h0; }));
  k.push_back(number("h1", "extra strength at the noise floor", [](auto& c) -> auto& { return c.tnode.h1; }));
  k.push_back(integer("search_rz", "search radius, depth", [](auto& c) -> auto& { return c.tnode.search.z; }));
  k.push_back(integer("search_rx", "search radius, fast axis", [](auto& c) -> auto& { return c.tnode.search.x; }));
  k.push_back(integer("search_ry", "search radius, slow axis", [](auto& c) -> auto& { return c.tnode.search.y; }));
  k.push_back(integer("patch_pz", "patch radius, depth", [](auto& c) -> auto& { return c.tnode.patch.z; }));
  k.push_back(integer("patch_px", "patch radius, fast axis", [](auto& c) -> auto& { return c.tnode.patch.x; }));
  k.push_back(integer("patch_py", "patch radius, slow axis", [](auto& c) -> auto& { return c.tnode.patch.y; }));
  k.push_back(radii_key("search", "search radii z,x,y", &tnode::TNodeParams::search));
  k.push_back(radii_key("patch", "patch radii z,x,y", &tnode::TNodeParams::patch));
  k.push_back(optional_number("noise_floor_db", "noise floor in dB, auto = estimate",
                              [](auto& c) -> auto& { return c.tnode.noise_floor_db; }));
  k.push_back(number("snr_scale_db", "SNR decay constant of the adaptive strength",
                     [](auto& c) -> auto& { return c.tnode.snr_scale_db; }));
  k.push_back(optional_number("window_lower_db", "contrast window lower bound, auto = volume min",
                              [](auto& c) -> auto& { return c.window_lower_db; }));
  k.push_back(optional_number("window_upper_db", "contrast window upper bound, auto = volume max",
                              [](auto& c) -> auto& { return c.window_upper_db; }));
  // preprocessing
  k.push_back(number("lowpass_sigma_z", "complex low-pass sigma, depth (px)",
                     [](auto& c) -> auto& { return c.preproc.sigma_z; }));
  k.push_back(number("lowpass_sigma_x", "complex low-pass sigma, fast axis (px)",
                     [](auto& c) -> auto& { return c.preproc.sigma_x; }));
  k.push_back(integer("upsample", "registration upsampling factor",
                      [](auto& c) -> auto& { return c.preproc.registration.upsample; }));
  k.push_back({"registration_source", "intensity or complex",
               [](const RunConfig& c) {
                 return std::string(c.preproc.registration.source == preproc::RegistrationSource::Complex ? "complex"
                                                                                                           : "intensity");
               },
               [](RunConfig& c, const std::string& v) {
                 if (v == "intensity") c.preproc.registration.source = preproc::RegistrationSource::Intensity;
                 else if (v == "complex") c.preproc.registration.source = preproc::RegistrationSource::Complex;
                 else bad_value("registration_source", v, "intensity or complex");
               }});
  k.push_back(boolean("register_bscans", "motion-correct B-scans during preprocessing",
                      [](auto& c) -> auto& { return c.preproc.register_bscans; }));
  // phantom
  k.push_back({"preset", "uniform, layers, vessel, step",
               [](const RunConfig& c) { return std::string(phantom::to_string(c.phantom.preset)); },
               [](RunConfig& c, const std::string& v) { c.phantom.preset = phantom::parse_preset(v); }});
  k.push_back(integer("nz", "phantom depth samples", [](auto& c) -> auto& { return c.phantom.dims.nz; }));
  k.push_back(integer("nx", "phantom fast-axis samples", [](auto& c) -> auto& { return c.phantom.dims.nx; }));
  k.push_back(integer("ny", "phantom slow-axis samples", [](auto& c) -> auto& { return c.phantom.dims.ny; }));
  k.push_back(number("psf_z", "PSF sigma, depth (px)", [](auto& c) -> auto& { return c.phantom.psf.z; }));
  k.push_back(number("psf_x", "PSF sigma, fast axis (px)", [](auto& c) -> auto& { return c.phantom.psf.x; }));
  k.push_back(number("psf_y", "PSF sigma, slow axis (px)", [](auto& c) -> auto& { return c.phantom.psf.y; }));
  k.push_back(number("level", "uniform / background reflectivity", [](auto& c) -> auto& { return c.phantom.level; }));
  k.push_back({"layers", "layer list top:reflectivity, tops as depth fractions",
               [](const RunConfig& c) { return format_layers(c.phantom.layers); },
               [](RunConfig& c, const std::string& v) { c.phantom.layers = parse_layers("layers", v); }});
  k.push_back(number("undulation_amplitude", "layer boundary undulation (px)",
                     [](auto& c) -> auto& { return c.phantom.undulation_amplitude; }));
  k.push_back(number("undulation_period", "layer boundary undulation period (px)",
                     [](auto& c) -> auto& { return c.phantom.undulation_period; }));
  k.push_back(axis_key("vessel_axis", "vessel direction z, x or y", [](auto& c) -> auto& { return c.phantom.vessel_axis; }));
  k.push_back(number("vessel_center_a", "vessel center, first cross-section axis (fraction)",
                     [](auto& c) -> auto& { return c.phantom.vessel_center_a; }));
  k.push_back(number("vessel_center_b", "vessel center, second cross-section axis (fraction)",
                     [](auto& c) -> auto& { return c.phantom.vessel_center_b; }));
  k.push_back(number("vessel_radius", "vessel radius (px)", [](auto& c) -> auto& { return c.phantom.vessel_radius; }));
  k.push_back(number("vessel_contrast", "vessel reflectivity relative to level",
                     [](auto& c) -> auto& { return c.phantom.vessel_contrast; }));
  k.push_back(axis_key("step_axis", "step direction z, x or y", [](auto& c) -> auto& { return c.phantom.step_axis; }));
  k.push_back(optional_number("step_position", "first high sample, auto = n/2",
                              [](auto& c) -> auto& { return c.phantom.step_position; }));
  k.push_back(number("step_low", "reflectivity below the step", [](auto& c) -> auto& { return c.phantom.step_levels.first; }));
  k.push_back(number("step_high", "reflectivity above the step",
                     [](auto& c) -> auto& { return c.phantom.step_levels.second; }));
  // metrics
  k.push_back(text("metric", "all or comma list of ssim, msssim, psnr, cnr, speckle_contrast",
                   [](auto& c) -> auto& { return c.metric; }));
  k.push_back(text("roi1", "z,x,y,dz,dx,dy", [](auto& c) -> auto& { return c.roi1; }));
  k.push_back(text("roi2", "z,x,y,dz,dx,dy", [](auto& c) -> auto& { return c.roi2; }));
  k.push_back(integer("scales", "MS-SSIM scales", [](auto& c) -> auto& { return c.scales; }));
  k.push_back(optional_number("data_range", "SSIM dynamic range, auto = by domain",
                              [](auto& c) -> auto& { return c.data_range; }));
  // export
  k.push_back(integer("half_width", "input block half width n (2n+1 B-scans)",
                      [](auto& c) -> auto& { return c.exporter.half_width; }));
  k.push_back(integer("count", "pairs per source", [](auto& c) -> auto& { return c.exporter.count; }));
  k.push_back(number("lower_jitter_min_db", "lower window jitter, min",
                     [](auto& c) -> auto& { return c.exporter.policy.lower_jitter_min_db; }));
  k.push_back(number("lower_jitter_max_db", "lower window jitter, max",
                     [](auto& c) -> auto& { return c.exporter.policy.lower_jitter_max_db; }));
  k.push_back(number("upper_jitter_min_db", "upper window jitter, min",
                     [](auto& c) -> auto& { return c.exporter.policy.upper_jitter_min_db; }));
  k.push_back(number("upper_jitter_max_db", "upper window jitter, max",
                     [](auto& c) -> auto& { return c.exporter.policy.upper_jitter_max_db; }));
  k.push_back(integer("voi_z", "window VOI extent, depth", [](auto& c) -> auto& { return c.exporter.policy.voi_z; }));
  k.push_back(integer("voi_x", "window VOI extent, fast axis", [](auto& c) -> auto& { return c.exporter.policy.voi_x; }));
  k.push_back(integer("voi_y", "window VOI extent, slow axis", [](auto& c) -> auto& { return c.exporter.policy.voi_y; }));
  k.push_back(boolean("flip", "random flips", [](auto& c) -> auto& { return c.exporter.policy.flip; }));
  k.push_back(boolean("rotate", "random rotation", [](auto& c) -> auto& { return c.exporter.policy.rotate; }));
  k.push_back(boolean("free_rotation", "arbitrary angles instead of quarter turns",
                      [](auto& c) -> auto& { return c.exporter.policy.free_rotation; }));
  k.push_back(boolean("crop", "random crop", [](auto& c) -> auto& { return c.exporter.policy.crop; }));
  k.push_back(number("crop_min_area", "smallest kept crop area fraction",
                     [](auto& c) -> auto& { return c.exporter.policy.crop_min_area; }));
  k.push_back(integer("output_nz", "pair output depth, 0 = keep", [](auto& c) -> auto& { return c.exporter.policy.output_nz; }));
  k.push_back(integer("output_nx", "pair output width, 0 = keep", [](auto& c) -> auto& { return c.exporter.policy.output_nx; }));
  // convert
  k.push_back({"to", "convert target domain: linear, log_db, unit, signed", [](const RunConfig& c) { return c.to; },
               [](RunConfig& c, const std::string& v) {
                 (void)parse_domain(v);
                 c.to = v;
               }});
  k.push_back(number("log_floor", "linear floor applied before the log", [](auto& c) -> auto& { return c.log_floor; }));
  return k;
}

} // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  const ConfigKey* k = find_key(key);
  if (!k) throw ArgumentError(fmt::format("unknown key '{}'", key));
  try {
    k->set(cfg, value);
  } catch (const ArgumentError&) {
    throw;
  } catch (const Error& e) {
    throw ArgumentError(fmt::format("{}: {}", key, e.what()));
  }
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ArgumentError(fmt::format("{}:{}: expected key=value", origin, lineno));
    try {
      set_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ArgumentError& e) {
      throw ArgumentError(fmt::format("{}:{}: {}", origin, lineno, e.what()));
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError(fmt::format("{}: cannot open config file", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str(), path.string());
}

std::string dump_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : config_keys()) {
    if (k.dumped) out += fmt::format("{}={}\n", k.name, k.get(cfg));
  }
  return out;
}

} // namespace octs
