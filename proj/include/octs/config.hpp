#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "octs/pairs.hpp"
#include "octs/phantom.hpp"
#include "octs/preproc.hpp"
#include "octs/tnode.hpp"

namespace octs {

// Everything a CLI run can be parameterized with. Each field is reachable
// through exactly one key (see config_keys), and the same key works as a
// --flag and as a line in a key=value config file.
struct RunConfig {
  std::string input;
  std::string output;
  std::string ref;
  std::string test;
  std::string target;        // export-pairs: despeckled volumes matching `input`
  std::string shift_log;     // register: trace destination, "-" for stdout
  std::string truth_output;  // phantom: reflectivity map
  std::string field_output;  // phantom: complex field

  unsigned threads = 0;
  std::uint64_t seed = 0;
  std::string log_level = "info";

  tnode::TNodeParams tnode{};
  std::optional<double> window_lower_db;  // disengaged: input [min, max]
  std::optional<double> window_upper_db;

  preproc::PreprocOptions preproc{};

  phantom::PhantomSpec phantom{};

  std::string metric = "all";  // comma list of ssim, msssim, psnr, cnr, speckle_contrast
  std::string roi1;
  std::string roi2;
  std::size_t scales = 5;
  std::optional<double> data_range;

  pairs::ExportOptions exporter{};

  std::string to = "log_db";  // convert: target domain
  double log_floor = 1e-12;
};

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
  bool dumped = true;  // shorthand keys (search, patch) are accepted but not dumped
};

const std::vector<ConfigKey>& config_keys();
const ConfigKey* find_key(const std::string& name);

// Sets one key; throws ArgumentError naming the key on unknown keys or
// unparsable values.
void set_key(RunConfig& cfg, const std::string& key, const std::string& value);

// key=value lines; blank lines and '#' comments ignored.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin = "<config>");
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

// Every key with its current value, one key=value per line.
std::string dump_config(const RunConfig& cfg);

// Doubles print with three decimals when that reads back exactly,
// otherwise with the shortest round-trip form.
std::string format_number(double v);

} // namespace octs
