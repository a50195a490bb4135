// Copyright 2026 The tatrack Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tatrack/messages.hpp"

#include <gtest/gtest.h>

#include <random>

#include "support/random_messages.hpp"

namespace tatrack {
namespace {

std::vector<std::uint8_t> bytes(std::string_view hex) { return from_hex(hex); }

DecodeErrorKind decode_error_kind(std::string_view hex) {
  try {
    decode(bytes(hex));
  } catch (const DecodeError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decoded without error: " << hex;
  return DecodeErrorKind::invalid_field;
}

TEST(Golden, IdentityRequestImsi) {
  EXPECT_EQ(to_hex(encode(IdentityRequest{IdentityType::imsi})), "0a000101");
}

TEST(Golden, RandomAccessResponse) {
  const Message m = RandomAccessResponse{Rnti{0x004A}, TaIndex(6), UlGrant{0x0123, 5}};
  EXPECT_EQ(to_hex(encode(m)), "020007004a0006012305");
  EXPECT_EQ(decode(bytes("020007004a0006012305")), m);
}

TEST(Golden, ConnectionRequestWithTmsi) {
  const Message m = RrcConnectionRequest{Tmsi{0xDEADBEEF}, true, 3};
  EXPECT_EQ(to_hex(encode(m)), "06000601deadbeef03");
}

TEST(Golden, TaCommandIsOffsetBy31) {
  EXPECT_EQ(to_hex(encode(MacTaCommand{0})), "0500011f");
  EXPECT_EQ(to_hex(encode(MacTaCommand{-31})), "05000100");
  EXPECT_EQ(to_hex(encode(MacTaCommand{32})), "0500013f");
}

TEST(Golden, IdentityResponseBcd) {
  const Message m = IdentityResponse{Imsi("001010123456789")};
  EXPECT_EQ(to_hex(encode(m)), "0b0008001010123456789f");
  EXPECT_EQ(decode(bytes("0b0008001010123456789f")), m);
}

TEST(Golden, AttachRequestLengths) {
  AttachRequest with_tmsi{Tmsi{7}, {}};
  const auto a = encode(with_tmsi);
  EXPECT_EQ(a.size(), 3u + 37u);
  EXPECT_EQ(a[1], 0x00);
  EXPECT_EQ(a[2], 37);
  AttachRequest with_imsi{Imsi("262011234567890"), {}};
  EXPECT_EQ(encode(with_imsi).size(), 3u + 41u);
}

TEST(Encode, RejectsOutOfRangeFields) {
  EXPECT_THROW(encode(RandomAccessPreamble{64}), InvalidArgument);
  EXPECT_THROW(encode(DciFormat0{Rnti{1}, 16, 0, 0}), InvalidArgument);
  EXPECT_THROW(encode(DciFormat1{Rnti{1}, 0, 32}), InvalidArgument);
  EXPECT_THROW(encode(MacTaCommand{33}), InvalidArgument);
  EXPECT_THROW(encode(MacTaCommand{-32}), InvalidArgument);
  EXPECT_THROW(encode(Ack{8}), InvalidArgument);
  EXPECT_THROW(encode(RrcConnectionRequest{Tmsi{1}, true, 8}), InvalidArgument);
}

TEST(Decode, DistinctErrorKinds) {
  EXPECT_EQ(decode_error_kind(""), DecodeErrorKind::truncated);
  EXPECT_EQ(decode_error_kind("ff000101"), DecodeErrorKind::unknown_tag);
  EXPECT_EQ(decode_error_kind("00000101"), DecodeErrorKind::unknown_tag);
  EXPECT_EQ(decode_error_kind("0a0002"), DecodeErrorKind::truncated);
  EXPECT_EQ(decode_error_kind("0a00020101"), DecodeErrorKind::bad_length);
  EXPECT_EQ(decode_error_kind("0a0000"), DecodeErrorKind::bad_length);
  EXPECT_EQ(decode_error_kind("0a00010101"), DecodeErrorKind::trailing_bytes);
  EXPECT_EQ(decode_error_kind("0a000105"), DecodeErrorKind::invalid_field);
}

TEST(Decode, TruncatedRarNamesMissingField) {
  try {
    decode(bytes("020007004a0006"));
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.kind(), DecodeErrorKind::truncated);
    EXPECT_EQ(e.field(), "ul_grant.rb_alloc");
  }
}

TEST(Decode, RejectsTaAboveRange) {
  EXPECT_EQ(decode_error_kind("020007004a0503012305"), DecodeErrorKind::invalid_field);
}

TEST(Decode, RejectsBadImsiNibbles) {
  EXPECT_EQ(decode_error_kind("0b0008001010123456789a"), DecodeErrorKind::invalid_field);
  EXPECT_EQ(decode_error_kind("0b00080010101234567a9f"), DecodeErrorKind::invalid_field);
}

TEST(RoundTrip, RandomValidMessages) {
  testing::MessageGen gen(2026);
  for (int i = 0; i < 20'000; ++i) {
    const Message m = gen.next();
    const auto b = encode(m);
    const Message back = decode(b);
    ASSERT_EQ(back, m) << to_json(m).dump();
    ASSERT_EQ(encode(back), b);
  }
}

TEST(Fuzz, DecodeIsTotal) {
  std::mt19937_64 rng(404);
  testing::MessageGen gen(405);
  std::size_t ok = 0;
  for (int i = 0; i < 50'000; ++i) {
    std::vector<std::uint8_t> in;
    if (i % 2 == 0) {
      in = encode(gen.next());
      // flip, cut or extend a valid frame
      switch (rng() % 3) {
        case 0: in[rng() % in.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8)); break;
        case 1: in.resize(rng() % in.size()); break;
        default: in.push_back(static_cast<std::uint8_t>(rng())); break;
      }
    } else {
      in.resize(rng() % 48);
      for (auto& b : in) b = static_cast<std::uint8_t>(rng());
    }
    try {
      const Message m = decode(in);
      ASSERT_EQ(encode(m), in);
      ++ok;
    } catch (const DecodeError&) {
    }
  }
  EXPECT_GT(ok, 0u);
}

TEST(Rnti, OfRar) {
  const Message rar = RandomAccessResponse{Rnti{0x004A}, TaIndex(6), {}};
  EXPECT_EQ(rnti_of_rar(rar).value, 0x004A);
  EXPECT_THROW(rnti_of_rar(RandomAccessResponse{Rnti{0xFFF4}, TaIndex(0), {}}), InvalidArgument);
  EXPECT_THROW(rnti_of_rar(RandomAccessResponse{Rnti{0}, TaIndex(0), {}}), InvalidArgument);
  EXPECT_THROW(rnti_of_rar(Ack{1}), InvalidArgument);
}

TEST(Imsi, ValidatesDigits) {
  EXPECT_NO_THROW(Imsi("001010000000001"));
  EXPECT_THROW(Imsi("00101000000000"), InvalidArgument);
  EXPECT_THROW(Imsi("0010100000000012"), InvalidArgument);
  EXPECT_THROW(Imsi("00101000000000x"), InvalidArgument);
}

TEST(Capabilities, HexLayoutAndHamming) {
  CapabilityVector v;
  v.set(0);
  v.set(255);
  const std::string hex = v.to_hex();
  ASSERT_EQ(hex.size(), 64u);
  EXPECT_EQ(hex.substr(0, 2), "80");
  EXPECT_EQ(hex.substr(62, 2), "01");
  EXPECT_EQ(CapabilityVector::from_hex(hex), v);
  CapabilityVector w = v;
  w.flip(3);
  w.flip(100);
  EXPECT_EQ(hamming(v, w), 2u);
  EXPECT_THROW(CapabilityVector::from_hex("00"), InvalidArgument);
}

TEST(Json, CarriesTypeAndFields) {
  const auto j = to_json(RandomAccessResponse{Rnti{74}, TaIndex(6), UlGrant{3, 4}});
  EXPECT_EQ(j["type"], "RandomAccessResponse");
  EXPECT_EQ(j["rnti"], 74);
  EXPECT_EQ(j["ta"], 6);
  EXPECT_EQ(j["ul_grant"]["mcs"], 4);
}

TEST(Hex, RejectsMalformed) {
  EXPECT_THROW(from_hex("abc"), InvalidArgument);
  EXPECT_THROW(from_hex("zz"), InvalidArgument);
  EXPECT_EQ(from_hex("00ff"), (std::vector<std::uint8_t>{0x00, 0xff}));
}

}  // namespace
}  // namespace tatrack
