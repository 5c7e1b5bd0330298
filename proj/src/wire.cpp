#include "spx/wire.hpp"

namespace spx::wire {

bool is_registered(std::uint8_t tag) {
  switch (static_cast<MsgType>(tag)) {
    case MsgType::ClientHello:
    case MsgType::ServerHello:
    case MsgType::Certificate:
    case MsgType::ServerKeyExchange:
    case MsgType::ServerHelloDone:
    case MsgType::ClientKeyExchange:
    case MsgType::ChangeCipherSpec:
    case MsgType::Finished:
    case MsgType::Alert:
    case MsgType::ApplicationData:
    case MsgType::Prologue:
    case MsgType::NoiseHandshake:
    case MsgType::NoiseTransport:
    case MsgType::SpxAttestation:
    case MsgType::SpxGrant:
      return true;
  }
  return false;
}

std::string_view name(MsgType type) {
  switch (type) {
    case MsgType::ClientHello: return "ClientHello";
    case MsgType::ServerHello: return "ServerHello";
    case MsgType::Certificate: return "Certificate";
    case MsgType::ServerKeyExchange: return "ServerKeyExchange";
    case MsgType::ServerHelloDone: return "ServerHelloDone";
    case MsgType::ClientKeyExchange: return "ClientKeyExchange";
    case MsgType::ChangeCipherSpec: return "ChangeCipherSpec";
    case MsgType::Finished: return "Finished";
    case MsgType::Alert: return "Alert";
    case MsgType::ApplicationData: return "ApplicationData";
    case MsgType::Prologue: return "Prologue";
    case MsgType::NoiseHandshake: return "NoiseHandshake";
    case MsgType::NoiseTransport: return "NoiseTransport";
    case MsgType::SpxAttestation: return "SpxAttestation";
    case MsgType::SpxGrant: return "SpxGrant";
  }
  return "Unknown";
}

Bytes encode(const WireMessage& msg) {
  if (msg.payload.size() > kMaxPayload) throw Error(ErrorCode::Oversized, "payload exceeds 16 MiB");
  Bytes out;
  out.reserve(kHeaderLen + msg.payload.size());
  out.push_back(static_cast<std::uint8_t>(msg.type));
  out.push_back(msg.flags);
  put_u32(out, static_cast<std::uint32_t>(msg.payload.size()));
  append(out, msg.payload);
  return out;
}

std::optional<std::size_t> frame_length(ByteView data) {
  if (data.size() < kHeaderLen) return std::nullopt;
  if (!is_registered(data[0])) throw Error(ErrorCode::UnknownTag, "tag " + std::to_string(data[0]));
  std::uint32_t len = get_u32(data, 2);
  if (len > kMaxPayload) throw Error(ErrorCode::Oversized, "declared length " + std::to_string(len));
  if (data.size() < kHeaderLen + len) return std::nullopt;
  return kHeaderLen + len;
}

WireMessage decode(ByteView data, std::size_t* consumed) {
  if (data.size() < kHeaderLen) throw Error(ErrorCode::Truncated, "short header");
  auto total = frame_length(data);
  if (!total) throw Error(ErrorCode::Truncated, "declared length exceeds available bytes");
  WireMessage msg;
  msg.type = static_cast<MsgType>(data[0]);
  msg.flags = data[1];
  msg.payload.assign(data.begin() + kHeaderLen, data.begin() + static_cast<std::ptrdiff_t>(*total));
  if (consumed) *consumed = *total;
  return msg;
}

Transcript Transcript::absorb(const WireMessage& msg) const {
  if (msg.spx_internal()) return *this;
  Transcript next = *this;
  next.running_.update(encode(msg));
  ++next.count_;
  return next;
}

Bytes encode_extensions(const std::vector<Extension>& exts) {
  Bytes out;
  for (const auto& e : exts) {
    if (e.value.size() > 0xffff) throw Error(ErrorCode::Oversized, "extension value too long");
    out.push_back(e.type);
    put_u16(out, static_cast<std::uint16_t>(e.value.size()));
    append(out, e.value);
  }
  return out;
}

std::vector<Extension> decode_extensions(ByteView data) {
  std::vector<Extension> out;
  Reader r(data);
  while (!r.empty()) {
    Extension e;
    e.type = r.u8();
    auto len = r.u16();
    auto v = r.take(len);
    e.value.assign(v.begin(), v.end());
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace spx::wire
