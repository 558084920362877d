#pragma once

#include <filesystem>
#include <fstream>
#include <string>

namespace testutil {

/// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / ("stagg_test_" + name)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& f) const { return (path / f).string(); }
};

inline void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

}  // namespace testutil
