#include "spx/session.hpp"

namespace spx {
namespace {

void put_string(Bytes& out, std::string_view s) {
  put_u16(out, static_cast<std::uint16_t>(s.size()));
  append(out, view(s));
}

std::string get_string(Reader& r) {
  auto len = r.u16();
  auto v = r.take(len);
  return {v.begin(), v.end()};
}

void put_key(Bytes& out, const crypto::SymmetricKey& k) {
  out.push_back(static_cast<std::uint8_t>(k.algo));
  append(out, k.bytes);
}

crypto::SymmetricKey get_key(Reader& r) {
  crypto::SymmetricKey k;
  k.algo = static_cast<crypto::AeadAlgo>(r.u8());
  k.bytes = r.array<32>();
  return k;
}

}  // namespace

std::string_view to_string(ProtocolId p) {
  switch (p) {
    case ProtocolId::None: return "none";
    case ProtocolId::Tlx: return "tlx";
    case ProtocolId::NoiXe: return "noixe";
  }
  return "unknown";
}

Bytes serialize(const SpxSession& s) {
  Bytes out;
  out.push_back(static_cast<std::uint8_t>(s.protocol));
  put_string(out, s.session_id);
  put_string(out, s.client_id);
  put_string(out, s.server_id);
  put_key(out, s.session_key);
  out.push_back(s.reverse_key ? 1 : 0);
  if (s.reverse_key) put_key(out, *s.reverse_key);
  out.push_back(s.resume_blob ? 1 : 0);
  if (s.resume_blob) {
    put_u16(out, static_cast<std::uint16_t>(s.resume_blob->size()));
    append(out, *s.resume_blob);
  }
  return out;
}

SpxSession deserialize_session(ByteView data) {
  Reader r(data);
  SpxSession s;
  s.protocol = static_cast<ProtocolId>(r.u8());
  s.session_id = get_string(r);
  s.client_id = get_string(r);
  s.server_id = get_string(r);
  s.session_key = get_key(r);
  if (r.u8()) s.reverse_key = get_key(r);
  if (r.u8()) {
    auto len = r.u16();
    auto v = r.take(len);
    s.resume_blob = Bytes(v.begin(), v.end());
  }
  if (!r.empty()) throw Error(ErrorCode::ProtocolViolation, "trailing bytes in session record");
  return s;
}

}  // namespace spx
