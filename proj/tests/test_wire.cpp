#include <gtest/gtest.h>

#include "spx/wire.hpp"

using namespace spx;
using namespace spx::wire;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::Config;
}

}  // namespace

TEST(Wire, FrameLayoutIsTagFlagsLengthPayload) {
  auto bytes = encode(make(MsgType::Finished, {0xaa, 0xbb}, kFlagSpxInternal));
  EXPECT_EQ(to_hex(bytes), "140100000002aabb");
}

TEST(Wire, RoundTripsEveryRegisteredTag) {
  for (int tag = 0; tag < 256; ++tag) {
    if (!is_registered(static_cast<std::uint8_t>(tag))) continue;
    auto msg = make(static_cast<MsgType>(tag), Bytes(static_cast<std::size_t>(tag), 0x5c));
    auto enc = encode(msg);
    std::size_t used = 0;
    EXPECT_EQ(decode(enc, &used), msg);
    EXPECT_EQ(used, enc.size());
  }
}

TEST(Wire, DecodeErrors) {
  EXPECT_EQ(code_of([] { decode(from_hex("1400")); }), ErrorCode::Truncated);
  EXPECT_EQ(code_of([] { decode(from_hex("14000000000501")); }), ErrorCode::Truncated);
  EXPECT_EQ(code_of([] { decode(from_hex("7f0000000000")); }), ErrorCode::UnknownTag);
  EXPECT_EQ(code_of([] { decode(from_hex("140001000001")); }), ErrorCode::Oversized);
  EXPECT_EQ(code_of([] { encode(make(MsgType::ApplicationData, Bytes(kMaxPayload + 1))); }), ErrorCode::Oversized);
}

TEST(Wire, MaxPayloadIsAccepted) {
  auto msg = make(MsgType::ApplicationData, Bytes(kMaxPayload, 1));
  auto enc = encode(msg);
  EXPECT_EQ(frame_length(enc), enc.size());
  EXPECT_EQ(decode(enc).payload.size(), kMaxPayload);
}

TEST(Wire, FrameLengthNeedsWholeFrame) {
  auto enc = encode(make(MsgType::ClientHello, Bytes(10, 1)));
  for (std::size_t n = 0; n < enc.size(); ++n) EXPECT_FALSE(frame_length(ByteView(enc).first(n)).has_value());
  EXPECT_EQ(frame_length(enc), 16u);
}

TEST(Wire, TranscriptSkipsSpxFrames) {
  auto a = make(MsgType::ClientHello, {1, 2, 3});
  auto b = make(MsgType::ServerHello, {4});
  auto spx = make(MsgType::SpxAttestation, Bytes(512, 9), kFlagSpxInternal);
  auto plain = Transcript{}.absorb(a).absorb(b);
  auto with_spx = Transcript{}.absorb(a).absorb(spx).absorb(b);
  EXPECT_EQ(plain.digest(), with_spx.digest());
  EXPECT_EQ(with_spx.count(), 2u);
  Bytes both = encode(a);
  append(both, encode(b));
  EXPECT_EQ(plain.digest(), crypto::hash(both));
}

TEST(Wire, ExtensionsRoundTrip) {
  std::vector<Extension> exts{{kExtSpxRequest, {}}, {0x10, {1, 2}}, {kExtSpxResponse, Bytes(512, 7)}};
  auto enc = encode_extensions(exts);
  EXPECT_EQ(enc.size(), 3 * kExtHeaderLen + 2 + 512);
  EXPECT_EQ(decode_extensions(enc), exts);
  enc.pop_back();
  EXPECT_THROW(decode_extensions(enc), Error);
}
