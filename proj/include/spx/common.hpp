#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace spx {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;
using Key32 = std::array<std::uint8_t, 32>;

enum class ErrorCode {
  InvalidPoint,
  AuthFailure,
  Truncated,
  UnknownTag,
  Oversized,
  ForeignKey,
  NotFound,
  ProtocolViolation,
  NoNonce,
  CertMismatch,
  FinishedMismatch,
  AttestationInvalid,
  OutOfTurn,
  UnsupportedPattern,
  Timeout,
  Deadlock,
  Config,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

std::string to_hex(ByteView data);
Bytes from_hex(std::string_view hex);

inline ByteView view(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

template <std::size_t N>
Bytes to_bytes(const std::array<std::uint8_t, N>& a) {
  return Bytes(a.begin(), a.end());
}

template <std::size_t N>
std::array<std::uint8_t, N> to_array(ByteView v) {
  if (v.size() != N) throw Error(ErrorCode::Truncated, "expected " + std::to_string(N) + " bytes");
  std::array<std::uint8_t, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

inline void append(Bytes& out, ByteView v) { out.insert(out.end(), v.begin(), v.end()); }

inline void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

inline std::uint16_t get_u16(ByteView v, std::size_t at) {
  return static_cast<std::uint16_t>((v[at] << 8) | v[at + 1]);
}

inline std::uint32_t get_u32(ByteView v, std::size_t at) {
  return (std::uint32_t{v[at]} << 24) | (std::uint32_t{v[at + 1]} << 16) |
         (std::uint32_t{v[at + 2]} << 8) | std::uint32_t{v[at + 3]};
}

// Sequential reader over a byte view; every short read throws Truncated.
class Reader {
 public:
  explicit Reader(ByteView data) : data_(data) {}

  ByteView take(std::size_t n) {
    if (remaining() < n) throw Error(ErrorCode::Truncated, "need " + std::to_string(n) + " bytes");
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() { return get_u16(take(2), 0); }
  std::uint32_t u32() { return get_u32(take(4), 0); }
  template <std::size_t N>
  std::array<std::uint8_t, N> array() {
    return to_array<N>(take(N));
  }
  ByteView rest() { return take(remaining()); }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool empty() const { return remaining() == 0; }

 private:
  ByteView data_;
  std::size_t pos_ = 0;
};

// True when needle occurs anywhere in haystack.
bool contains(ByteView haystack, ByteView needle);

}  // namespace spx
