#pragma once

#include <filesystem>
#include <ostream>
#include <string>

#include <doctest.h>

#include "hierprobe/error.hpp"
#include "hierprobe/planted.hpp"

namespace hierprobe {

// Lets doctest print codes by name.
inline std::ostream& operator<<(std::ostream& os, ErrorCode code) { return os << to_string(code); }

}  // namespace hierprobe

namespace hierprobe::test {

// Scratch directory removed on destruction; unique per test name.
class TempDir {
public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("hierprobe_test_" + name)) {
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

inline PlantedOptions small_options(std::uint64_t seed = 3) {
  PlantedOptions o;
  o.seed = seed;
  o.num_layers = 8;
  o.per_layer_dim = 4;
  return o;
}

inline ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Config;
}

}  // namespace hierprobe::test
