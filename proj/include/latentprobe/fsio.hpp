#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace latentprobe {

/// Writes `bytes` to a sibling temp file, syncs it, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Whole file as bytes; NotFoundError when absent.
std::string read_file(const std::filesystem::path& path);

/// Exclusive advisory lock on a file, released on destruction.
class FileLock {
 public:
  explicit FileLock(const std::filesystem::path& path);
  ~FileLock();
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace latentprobe
