#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "de/dataspace.hpp"
#include "de/errors.hpp"

namespace test {

// Scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("de_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

template <typename F>
std::optional<de::Errc> error_code_of(F&& fn) {
  try {
    fn();
  } catch (const de::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

inline de::DataProduct make_product(const std::string& name, de::Value value,
                                    const std::string& by = "test") {
  de::DataProduct p;
  p.name = name;
  p.value = std::move(value);
  p.produced_by = by;
  return p;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace test
