// octspeckle: command-line front end for the despeckling toolkit.
//
// Exit codes: 0 success, 1 usage error (bad flags, config keys or
// parameters), 2 data error (unreadable, malformed or degenerate input).

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "octs/config.hpp"
#include "octs/errors.hpp"
#include "octs/metrics.hpp"
#include "octs/pairs.hpp"
#include "octs/parallel.hpp"
#include "octs/phantom.hpp"
#include "octs/preproc.hpp"
#include "octs/tnode.hpp"
#include "octs/version.hpp"
#include "octs/volume_io.hpp"

namespace {

using namespace octs;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void require(const std::string& value, const char* key) {
  if (value.empty()) throw ArgumentError(fmt::format("--{} is required", key));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::optional<ContrastWindow> configured_window(const RunConfig& cfg) {
  if (cfg.window_lower_db.has_value() != cfg.window_upper_db.has_value()) {
    throw ArgumentError("--window_lower_db and --window_upper_db must be given together");
  }
  if (!cfg.window_lower_db) return std::nullopt;
  return ContrastWindow(*cfg.window_lower_db, *cfg.window_upper_db);
}

ConversionOptions conversion(const RunConfig& cfg, std::optional<ContrastWindow> w) {
  return {.window = w, .log_floor = cfg.log_floor};
}

// LogDb view of any scalar volume. Unit and Signed need the configured window.
Volume to_db(const Volume& v, const RunConfig& cfg, const char* what) {
  if (v.domain() == Domain::LogDb) return v;
  if (v.domain() == Domain::Linear) return convert_domain(v, Domain::LogDb, conversion(cfg, std::nullopt));
  const auto w = configured_window(cfg);
  if (!w) {
    throw ArgumentError(fmt::format("{} is {}; --window_lower_db/--window_upper_db are needed to map it to dB", what,
                                    to_string(v.domain())));
  }
  return convert_domain(v, Domain::LogDb, conversion(cfg, w));
}

void ensure_parent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent)) {
    throw IoError(fmt::format("{}: output directory does not exist", parent.string()));
  }
}

// Runs the filter on a LogDb volume under the configured or full-range window.
Volume despeckle_db(const Volume& db, const RunConfig& cfg, ContrastWindow* used = nullptr) {
  const ContrastWindow w = configured_window(cfg).value_or(full_range_window(db));
  const Volume unit = convert_domain(db, Domain::Unit, {.window = w});
  tnode::TNodeParams params = cfg.tnode;
  params.noise_floor_db = tnode::resolve_noise_floor(unit, params, w);
  spdlog::info("window [{:.2f}, {:.2f}] dB, noise floor {:.2f} dB", w.lower_db, w.upper_db, *params.noise_floor_db);
  if (used) *used = w;
  return convert_domain(tnode::despeckle(unit, params, w), Domain::LogDb, {.window = w});
}

int cmd_despeckle(const RunConfig& cfg) {
  require(cfg.input, "input");
  require(cfg.output, "output");
  cfg.tnode.validate();
  const auto w = configured_window(cfg);
  const Volume v = read_volume(cfg.input);
  ensure_parent(cfg.output);
  const auto t0 = Clock::now();
  Volume out;
  if (v.domain() == Domain::Unit || v.domain() == Domain::Signed) {
    if (!w) throw ArgumentError(fmt::format("{} is {}; give the window it was normalized with", cfg.input,
                                            to_string(v.domain())));
    const Volume unit = convert_domain(v, Domain::Unit);
    tnode::TNodeParams params = cfg.tnode;
    params.noise_floor_db = tnode::resolve_noise_floor(unit, params, *w);
    out = convert_domain(tnode::despeckle(unit, params, *w), v.domain());
  } else {
    const Volume db = to_db(v, cfg, cfg.input.c_str());
    out = despeckle_db(db, cfg);
    if (v.domain() == Domain::Linear) out = convert_domain(out, Domain::Linear);
  }
  const Dims& d = v.dims();
  spdlog::info("despeckled {}x{}x{} in {:.2f} s on {} threads", d.nz, d.nx, d.ny, seconds_since(t0), thread_count());
  write_volume(out, cfg.output);
  return 0;
}

void emit_shift_log(const RunConfig& cfg, const std::vector<preproc::ShiftRecord>& trace) {
  const std::string text = preproc::format_shift_log(trace);
  if (cfg.shift_log.empty() || cfg.shift_log == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(cfg.shift_log);
  if (!out) throw IoError(fmt::format("{}: cannot open for writing", cfg.shift_log));
  out << text;
}

int cmd_register(const RunConfig& cfg) {
  require(cfg.input, "input");
  require(cfg.output, "output");
  if (cfg.preproc.registration.upsample < 1) throw ArgumentError("--upsample must be >= 1");
  const OctvHeader h = read_header(cfg.input);
  ensure_parent(cfg.output);
  const auto t0 = Clock::now();
  if (h.complex) {
    const auto res = preproc::preprocess(read_tomogram(cfg.input), cfg.preproc);
    write_volume(res.log_intensity, cfg.output);
    emit_shift_log(cfg, res.trace);
  } else {
    const auto res = preproc::register_volume(read_volume(cfg.input), cfg.preproc.registration.upsample);
    write_volume(res.volume, cfg.output);
    emit_shift_log(cfg, res.trace);
  }
  spdlog::info("registered in {:.2f} s", seconds_since(t0));
  return 0;
}

int cmd_phantom(const RunConfig& cfg) {
  require(cfg.output, "output");
  phantom::PhantomSpec spec = cfg.phantom;
  spec.seed = cfg.seed;
  spec.validate();
  for (const auto& p : {cfg.output, cfg.truth_output, cfg.field_output})
    if (!p.empty()) ensure_parent(p);
  const auto t0 = Clock::now();
  const Volume truth = phantom::generate_incoherent(spec);
  const auto real = phantom::speckle_realization(truth, spec.psf, spec.seed);
  write_volume(real.intensity, cfg.output);
  if (!cfg.truth_output.empty()) write_volume(truth, cfg.truth_output);
  if (!cfg.field_output.empty()) write_tomogram(real.field, cfg.field_output);
  spdlog::info("{} phantom {}x{}x{} in {:.2f} s", phantom::to_string(spec.preset), spec.dims.nz, spec.dims.nx,
               spec.dims.ny, seconds_since(t0));
  return 0;
}

// Unit-interval view used for image metrics when domains differ.
Volume to_unit(const Volume& v, const RunConfig& cfg, const ContrastWindow& w, const char* what) {
  if (v.domain() == Domain::Unit) return v;
  if (v.domain() == Domain::Signed) return convert_domain(v, Domain::Unit);
  return convert_domain(to_db(v, cfg, what), Domain::Unit, {.window = w});
}

std::string bare(double v) {
  if (std::isinf(v)) return "identical";
  std::string s = fmt::format("{}", v);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

int cmd_metrics(const RunConfig& cfg, bool as_json) {
  require(cfg.ref, "ref");
  require(cfg.test, "test");
  std::vector<std::string> wanted = split_list(cfg.metric);
  if (wanted.empty()) throw ArgumentError("--metric is empty");
  const bool all = wanted.size() == 1 && wanted[0] == "all";
  for (const auto& m : wanted) {
    if (m != "all" && m != "ssim" && m != "msssim" && m != "psnr" && m != "cnr" && m != "speckle_contrast") {
      throw ArgumentError(fmt::format("unknown metric '{}'", m));
    }
  }
  auto want = [&](const char* m) { return all || std::find(wanted.begin(), wanted.end(), m) != wanted.end(); };
  std::optional<metrics::Roi> roi1, roi2;
  if (!cfg.roi1.empty()) roi1 = metrics::parse_roi(cfg.roi1);
  if (!cfg.roi2.empty()) roi2 = metrics::parse_roi(cfg.roi2);
  if (!all && want("cnr") && !(roi1 && roi2)) throw ArgumentError("cnr needs --roi1 and --roi2");
  if (cfg.scales < 1 || cfg.scales > 5) throw ArgumentError("--scales must be in [1, 5]");

  Volume ref = read_volume(cfg.ref);
  Volume test = read_volume(cfg.test);
  if (ref.dims() != test.dims()) throw DataError(fmt::format("{} and {} differ in size", cfg.ref, cfg.test));

  metrics::MetricReport report;
  report.roi1 = roi1;
  report.roi2 = roi2;
  auto& params = report.parameters;
  params["ref"] = cfg.ref;
  params["test"] = cfg.test;

  // Image metrics compare like with like: the stored values when the domains
  // agree, otherwise both mapped to the unit interval under one window.
  std::optional<ContrastWindow> unit_window;
  auto common = [&](const Volume& v, const char* what) {
    if (!unit_window) {
      unit_window = configured_window(cfg);
      if (!unit_window) unit_window = full_range_window(to_db(ref, cfg, cfg.ref.c_str()));
    }
    return to_unit(v, cfg, *unit_window, what);
  };
  const bool same_domain = ref.domain() == test.domain();
  metrics::SsimOptions so;
  so.data_range = cfg.data_range;
  if (want("ssim") || want("msssim")) {
    const Volume a = same_domain ? ref : common(ref, cfg.ref.c_str());
    const Volume b = same_domain ? test : common(test, cfg.test.c_str());
    if (want("ssim")) {
      const auto s = metrics::ssim3d(a, b, so);
      report.ssim = s.score;
      params["ssim_data_range"] = s.data_range;
    }
    if (want("msssim")) {
      const auto m = metrics::msssim3d(a, b, cfg.scales, so);
      report.ms_ssim = m.score;
      params["msssim_scales_used"] = m.scales_used;
    }
    params["ssim_domain"] = to_string(a.domain());
  }
  if (want("psnr")) {
    auto codes = [&](const Volume& v, const char* what) {
      Volume u = common(v, what);
      for (float& x : u.values()) x = static_cast<float>(std::round(65535.0 * std::clamp(static_cast<double>(x), 0.0, 1.0)));
      return u;
    };
    report.psnr_db = metrics::psnr(codes(ref, cfg.ref.c_str()), codes(test, cfg.test.c_str()));
    params["psnr_window_db"] = {unit_window->lower_db, unit_window->upper_db};
  }
  if (want("cnr") && roi1 && roi2) {
    report.cnr = metrics::cnr(to_db(test, cfg, cfg.test.c_str()), *roi1, *roi2);
    params["cnr_domain"] = "log_db";
  }
  if (want("speckle_contrast")) {
    const Volume lin = test.domain() == Domain::Linear ? test : convert_domain(to_db(test, cfg, cfg.test.c_str()),
                                                                               Domain::Linear);
    report.speckle_contrast = metrics::speckle_contrast(lin, roi1.value_or(metrics::whole(test.dims())));
  }

  if (as_json) {
    std::cout << metrics::to_json(report).dump(2) << '\n';
  } else if (!all && wanted.size() == 1) {
    const std::optional<double>* v = nullptr;
    if (wanted[0] == "ssim") v = &report.ssim;
    if (wanted[0] == "msssim") v = &report.ms_ssim;
    if (wanted[0] == "psnr") v = &report.psnr_db;
    if (wanted[0] == "cnr") v = &report.cnr;
    if (wanted[0] == "speckle_contrast") v = &report.speckle_contrast;
    std::cout << bare(**v) << '\n';
  } else {
    std::cout << metrics::format_report(report);
  }
  return 0;
}

int cmd_export(const RunConfig& cfg) {
  require(cfg.input, "input");
  require(cfg.output, "output");
  cfg.exporter.policy.validate();
  cfg.tnode.validate();
  const auto raws = split_list(cfg.input);
  const auto targets = split_list(cfg.target);
  if (!targets.empty() && targets.size() != raws.size()) {
    throw ArgumentError(fmt::format("--target lists {} files for {} inputs", targets.size(), raws.size()));
  }
  const auto t0 = Clock::now();
  std::vector<pairs::PairSource> sources;
  for (std::size_t i = 0; i < raws.size(); ++i) {
    pairs::PairSource s;
    s.name = std::filesystem::path(raws[i]).filename().string();
    s.raw = to_db(read_volume(raws[i]), cfg, raws[i].c_str());
    if (targets.empty()) {
      spdlog::info("despeckling {}", raws[i]);
      s.despeckled = despeckle_db(s.raw, cfg);
    } else {
      Volume t = read_volume(targets[i]);
      if (t.domain() == Domain::Unit) {
        s.despeckled_window = configured_window(cfg);
        s.despeckled = std::move(t);
      } else {
        s.despeckled = to_db(t, cfg, targets[i].c_str());
      }
    }
    s.noise_floor_db = cfg.tnode.noise_floor_db;
    sources.push_back(std::move(s));
  }
  pairs::ExportOptions opts = cfg.exporter;
  opts.seed = cfg.seed;
  const auto manifest = pairs::export_pairs(sources, opts, cfg.output);
  spdlog::info("{} pairs written to {} in {:.2f} s", manifest["entries"].size(), cfg.output, seconds_since(t0));
  return 0;
}

int cmd_convert(const RunConfig& cfg) {
  require(cfg.input, "input");
  require(cfg.output, "output");
  const Domain to = parse_domain(cfg.to);
  auto w = configured_window(cfg);
  const Volume v = read_volume(cfg.input);
  ensure_parent(cfg.output);
  const bool needs_window = (v.domain() == Domain::Linear || v.domain() == Domain::LogDb) !=
                            (to == Domain::Linear || to == Domain::LogDb);
  if (needs_window && !w) {
    if (v.domain() == Domain::Unit || v.domain() == Domain::Signed) {
      throw ArgumentError("converting to dB needs --window_lower_db and --window_upper_db");
    }
    w = full_range_window(v.domain() == Domain::LogDb ? v : convert_domain(v, Domain::LogDb, conversion(cfg, {})));
    spdlog::info("window [{}, {}] dB from the input range", format_number(w->lower_db), format_number(w->upper_db));
  }
  write_volume(convert_domain(v, to, conversion(cfg, w)), cfg.output);
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Volumetric OCT speckle suppression toolkit"};
  app.name("octspeckle");
  std::string config_path;
  bool dump = false, version = false, as_json = false;
  app.add_option("--config", config_path, "key=value config file; flags override it");
  app.add_flag("--dump-config", dump, "print every key=value and exit");
  app.add_flag("--version", version, "print toolkit and format versions");
  app.add_flag("--json", as_json, "metrics: JSON report");

  std::map<std::string, std::string> given;
  for (const auto& k : config_keys()) app.add_option("--" + k.name, given[k.name], k.help);

  const std::vector<std::pair<std::string, std::string>> commands{
      {"despeckle", "filter a volume"},
      {"register", "motion-correct B-scans (complex input: full preprocessing)"},
      {"phantom", "generate a speckle phantom"},
      {"metrics", "compare two volumes"},
      {"export-pairs", "write training pairs and manifest"},
      {"convert", "change value domain"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();
  app.require_subcommand(0, 1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "octspeckle: " << e.what() << '\n';
    return 1;
  }

  if (version) {
    std::cout << fmt::format("octspeckle {} (OCTV format {}, pairs manifest {})\n", kToolkitVersion, kOctvVersion,
                             pairs::kManifestVersion);
    return 0;
  }

  RunConfig cfg;
  try {
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    for (const auto& k : config_keys()) {
      if (app.get_option("--" + k.name)->count() > 0) set_key(cfg, k.name, given[k.name]);
    }
  } catch (const Error& e) {
    std::cerr << "octspeckle: " << e.what() << '\n';
    return 1;
  }

  if (dump) {
    std::cout << dump_config(cfg);
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 1;
  }

  auto logger = spdlog::stderr_color_mt("octspeckle");
  logger->set_pattern("%n: %^%l%$: %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(cfg.log_level));
  set_thread_count(cfg.threads);

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "despeckle") return cmd_despeckle(cfg);
    if (cmd == "register") return cmd_register(cfg);
    if (cmd == "phantom") return cmd_phantom(cfg);
    if (cmd == "metrics") return cmd_metrics(cfg, as_json);
    if (cmd == "export-pairs") return cmd_export(cfg);
    if (cmd == "convert") return cmd_convert(cfg);
  } catch (const ArgumentError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 1;
}

} // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "octspeckle: internal error: " << e.what() << '\n';
    return 3;
  }
}
