#pragma once

// Frame codec shared by TLX, NoiXe and SPX messages, and the handshake
// transcript. A frame is: tag (1) | flags (1) | length (4, big-endian) | payload.

#include <cstdint>
#include <optional>
#include <string_view>

#include "spx/common.hpp"
#include "spx/crypto.hpp"

namespace spx::wire {

inline constexpr std::size_t kHeaderLen = 6;
inline constexpr std::size_t kMaxPayload = 16u << 20;

enum class MsgType : std::uint8_t {
  ClientHello = 0x01,
  ServerHello = 0x02,
  Certificate = 0x0b,
  ServerKeyExchange = 0x0c,
  ServerHelloDone = 0x0e,
  ClientKeyExchange = 0x10,
  ChangeCipherSpec = 0x13,
  Finished = 0x14,
  Alert = 0x15,
  ApplicationData = 0x17,
  Prologue = 0x20,
  NoiseHandshake = 0x21,
  NoiseTransport = 0x22,
  SpxAttestation = 0x30,
  SpxGrant = 0x31,
};

inline constexpr std::uint8_t kFlagSpxInternal = 0x01;

bool is_registered(std::uint8_t tag);
std::string_view name(MsgType type);

struct WireMessage {
  MsgType type = MsgType::Alert;
  std::uint8_t flags = 0;
  Bytes payload;

  bool spx_internal() const { return (flags & kFlagSpxInternal) != 0; }
  std::size_t wire_size() const { return kHeaderLen + payload.size(); }

  friend bool operator==(const WireMessage&, const WireMessage&) = default;
};

inline WireMessage make(MsgType type, Bytes payload, std::uint8_t flags = 0) {
  return {type, flags, std::move(payload)};
}

Bytes encode(const WireMessage& msg);

// Decodes one frame from the front of `data`; `consumed` receives 6 + length.
WireMessage decode(ByteView data, std::size_t* consumed = nullptr);

// Length of the complete frame at the front of `data`, or nullopt if more
// bytes are needed. Validates tag and size limits from the header alone.
std::optional<std::size_t> frame_length(ByteView data);

// Running SHA-256 over the encodings of all absorbed non-SPX messages.
class Transcript {
 public:
  Transcript absorb(const WireMessage& msg) const;
  crypto::Digest digest() const { return running_.finish(); }
  std::size_t count() const { return count_; }

 private:
  crypto::Sha256 running_;
  std::size_t count_ = 0;
};

// Trailing TLV extensions inside Hello / Prologue payloads:
// type (1) | length (2, big-endian) | value.
inline constexpr std::uint8_t kExtSpxRequest = 0xe0;
inline constexpr std::uint8_t kExtSpxResponse = 0xe1;
inline constexpr std::size_t kExtHeaderLen = 3;

struct Extension {
  std::uint8_t type = 0;
  Bytes value;
  friend bool operator==(const Extension&, const Extension&) = default;
};

Bytes encode_extensions(const std::vector<Extension>& exts);
std::vector<Extension> decode_extensions(ByteView data);

}  // namespace spx::wire
