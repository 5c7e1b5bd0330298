#pragma once

#include <optional>
#include <string>

#include "spx/common.hpp"
#include "spx/crypto.hpp"

namespace spx {

enum class ProtocolId : std::uint8_t { None = 0, Tlx = 1, NoiXe = 2 };

std::string_view to_string(ProtocolId p);

// Edge-side session registered after a successful grant.
struct SpxSession {
  std::string session_id;
  ProtocolId protocol = ProtocolId::None;
  // TLX: the record key. NoiXe: initiator-to-responder transport key.
  crypto::SymmetricKey session_key;
  // NoiXe only: responder-to-initiator transport key.
  std::optional<crypto::SymmetricKey> reverse_key;
  std::string client_id;
  std::string server_id;
  std::optional<Bytes> resume_blob;

  friend bool operator==(const SpxSession&, const SpxSession&) = default;
};

Bytes serialize(const SpxSession& s);
SpxSession deserialize_session(ByteView data);

}  // namespace spx
