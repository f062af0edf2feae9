#pragma once

#include <roadweave/errors.hpp>

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>

namespace roadweave {

/// Incremental SHA-256; hex digests name content throughout the pipeline.
class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw Error("sha256 init failed");
    }
  }

  Sha256& update(const void* data, std::size_t n) {
    if (n != 0 && EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw Error("sha256 update failed");
    return *this;
  }
  Sha256& update(std::string_view s) { return update(s.data(), s.size()); }
  Sha256& update(std::span<const std::uint8_t> s) { return update(s.data(), s.size()); }

  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> out{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), out.data(), &len) != 1) throw Error("sha256 final failed");
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    s.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
      s.push_back(digits[out[i] >> 4]);
      s.push_back(digits[out[i] & 0xF]);
    }
    return s;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

inline std::string sha256_hex(std::string_view s) { return Sha256().update(s).hex(); }
inline std::string sha256_hex(std::span<const std::uint8_t> s) { return Sha256().update(s).hex(); }

}  // namespace roadweave
