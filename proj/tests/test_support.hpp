#pragma once

#include <filesystem>
#include <random>
#include <string>

namespace testing_support {

/// Unique scratch directory, removed on destruction. Prefers tmpfs so the
/// fsync in every atomic write does not dominate test time.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    std::error_code ec;
    const std::filesystem::path shm = "/dev/shm";
    const auto base = std::filesystem::is_directory(shm, ec) ? shm : std::filesystem::temp_directory_path();
    path_ = base / ("latentprobe-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing_support
