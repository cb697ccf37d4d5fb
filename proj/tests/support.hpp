#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "octs/rng.hpp"
#include "octs/volume.hpp"

namespace testing {

inline octs::Volume random_volume(octs::Dims d, octs::Domain domain, std::uint64_t seed, double lo = 0.0,
                                  double hi = 1.0) {
  octs::Volume v(d, domain);
  octs::Rng rng(seed);
  for (float& x : v.values()) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("octs_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

} // namespace testing
