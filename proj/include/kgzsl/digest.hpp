#pragma once

#include <cstdint>
#include <string>

namespace kgzsl {

// Streaming FNV-1a (64-bit) content digest; used for artifact provenance
// chains, not for anything adversarial.
class Digest {
 public:
  Digest& update(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ull;
    }
    return *this;
  }

  Digest& update(const std::string& s) { return update(s.data(), s.size()); }

  std::string hex() const {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    std::uint64_t v = state_;
    for (int i = 15; i >= 0; --i) {
      out[static_cast<std::size_t>(i)] = digits[v & 0xf];
      v >>= 4;
    }
    return out;
  }

  static std::string of_string(const std::string& s) { return Digest().update(s).hex(); }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ull;
};

}  // namespace kgzsl
