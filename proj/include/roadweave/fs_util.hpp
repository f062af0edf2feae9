#pragma once

// Small file helpers: whole-file reads, atomic replace via rename, and the
// "no silent clobber" write used by every artifact writer.

#include <roadweave/errors.hpp>

#include <atomic>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <thread>

#include <fcntl.h>
#include <unistd.h>

namespace roadweave {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string data;
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  if (size > 0) {
    data.resize(static_cast<std::size_t>(size));
    in.seekg(0);
    in.read(data.data(), size);
  }
  if (!in && !in.eof()) throw IoError("read failed for " + path.string());
  return data;
}

namespace detail {
inline std::string temp_suffix() {
  static std::atomic<std::uint64_t> counter{0};
  return ".tmp." + std::to_string(::getpid()) + "." +
         std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()) % 100000) + "." +
         std::to_string(counter.fetch_add(1));
}
}  // namespace detail

/// Writes `bytes` to a sibling temp file, fsyncs, then renames over `path`.
/// Readers never observe a truncated file.
inline void write_file_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + detail::temp_suffix();
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("cannot create " + tmp.string() + ": " + std::strerror(errno));
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      ::unlink(tmp.c_str());
      throw IoError("write failed for " + path.string() + ": " + std::strerror(err));
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) {
    ::unlink(tmp.c_str());
    throw IoError("flush failed for " + path.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    ::unlink(tmp.c_str());
    throw IoError("rename failed for " + path.string() + ": " + ec.message());
  }
}

enum class WriteOutcome { kWritten, kUnchanged };

/// Atomic write that refuses to replace different existing content unless
/// `force` is set. Identical content is left untouched.
inline WriteOutcome write_artifact(const fs::path& path, std::string_view bytes, bool force) {
  std::error_code ec;
  if (fs::exists(path, ec)) {
    if (fs::file_size(path, ec) == bytes.size() && read_file(path) == bytes) {
      return WriteOutcome::kUnchanged;
    }
    if (!force) {
      throw ClobberError(path.string() + " exists with different content (use --force)");
    }
  }
  write_file_atomic(path, bytes);
  return WriteOutcome::kWritten;
}

}  // namespace roadweave
