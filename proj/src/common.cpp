#include "spx/common.hpp"

#include <algorithm>

namespace spx {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidPoint: return "InvalidPoint";
    case ErrorCode::AuthFailure: return "AuthFailure";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::UnknownTag: return "UnknownTag";
    case ErrorCode::Oversized: return "Oversized";
    case ErrorCode::ForeignKey: return "ForeignKey";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::NoNonce: return "NoNonce";
    case ErrorCode::CertMismatch: return "CertMismatch";
    case ErrorCode::FinishedMismatch: return "FinishedMismatch";
    case ErrorCode::AttestationInvalid: return "AttestationInvalid";
    case ErrorCode::OutOfTurn: return "OutOfTurn";
    case ErrorCode::UnsupportedPattern: return "UnsupportedPattern";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::Deadlock: return "Deadlock";
    case ErrorCode::Config: return "Config";
  }
  return "Unknown";
}

std::string to_hex(ByteView data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2 != 0) throw Error(ErrorCode::Config, "odd-length hex string");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(ErrorCode::Config, "bad hex digit");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

bool contains(ByteView haystack, ByteView needle) {
  if (needle.empty()) return true;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

}  // namespace spx
