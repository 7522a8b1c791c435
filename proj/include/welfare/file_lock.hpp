#pragma once

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <filesystem>
#include <string>
#include <utility>

#include "welfare/error.hpp"

namespace welfare {

class LockHeldError : public Error {
 public:
  using Error::Error;
};

// Advisory flock() held for the object's lifetime.
class FileLock {
 public:
  enum class Mode { kTry, kWait };

  FileLock(const std::filesystem::path& path, Mode mode) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error("cannot open lock file " + path.string());
    if (::flock(fd_, LOCK_EX | (mode == Mode::kTry ? LOCK_NB : 0)) != 0) {
      ::close(fd_);
      fd_ = -1;
      throw LockHeldError("lock already held: " + path.string());
    }
  }
  ~FileLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }
  FileLock(FileLock&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  FileLock& operator=(FileLock&&) = delete;
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace welfare
