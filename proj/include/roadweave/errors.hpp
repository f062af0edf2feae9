#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace roadweave {

/// Base of every error the library throws. `kind()` is a stable,
/// machine-parseable tag used by the CLI error line.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual std::string_view kind() const noexcept { return "error"; }
};

class DomainError : public Error {
 public:
  using Error::Error;
  std::string_view kind() const noexcept override { return "domain"; }
};

class OutOfFrameError : public Error {
 public:
  using Error::Error;
  std::string_view kind() const noexcept override { return "out-of-frame"; }
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::int64_t byte_offset)
      : Error(what + " at byte " + std::to_string(byte_offset)),
        byte_offset_(byte_offset) {}
  std::int64_t byte_offset() const noexcept { return byte_offset_; }
  std::string_view kind() const noexcept override { return "parse"; }

 private:
  std::int64_t byte_offset_;
};

class FormatError : public Error {
 public:
  using Error::Error;
  std::string_view kind() const noexcept override { return "format"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  std::string_view kind() const noexcept override { return "io"; }
};

class FetchError : public Error {
 public:
  FetchError(const std::string& what, int attempts)
      : Error(what), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }
  std::string_view kind() const noexcept override { return "fetch"; }

 private:
  int attempts_;
};

class CorruptTileError : public Error {
 public:
  using Error::Error;
  std::string_view kind() const noexcept override { return "corrupt-tile"; }
};

class PartialFrameError : public Error {
 public:
  PartialFrameError(const std::string& what, std::vector<std::string> missing)
      : Error(what), missing_(std::move(missing)) {}
  /// Keys ("z/x/y") of the member tiles that could not be obtained.
  const std::vector<std::string>& missing() const noexcept { return missing_; }
  std::string_view kind() const noexcept override { return "partial-frame"; }

 private:
  std::vector<std::string> missing_;
};

class DuplicateKeyError : public Error {
 public:
  using Error::Error;
  std::string_view kind() const noexcept override { return "duplicate-key"; }
};

class ClobberError : public Error {
 public:
  using Error::Error;
  std::string_view kind() const noexcept override { return "would-overwrite"; }
};

class UsageError : public Error {
 public:
  using Error::Error;
  std::string_view kind() const noexcept override { return "usage"; }
};

}  // namespace roadweave
