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

// Sniffable MAC/RRC/NAS control-plane messages and their wire codec.
//
// Frame layout: tag (1 byte) | payload length (2 bytes, big endian) |
// payload. Payload fields are fixed width, big endian, in declaration
// order. See docs/wire_format.md for the per-message table.

#pragma once

#include <bitset>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "tatrack/errors.hpp"
#include "tatrack/timebase.hpp"

namespace tatrack {

/// Radio Network Temporary Identifier.
struct Rnti {
  std::uint16_t value = 0;
  /// UE-dedicated C-RNTI range 0x0001..0xFFF3.
  constexpr bool is_dedicated() const { return value >= 0x0001 && value <= 0xFFF3; }
  friend constexpr auto operator<=>(Rnti, Rnti) = default;
};

struct Tmsi {
  std::uint32_t value = 0;
  friend constexpr auto operator<=>(Tmsi, Tmsi) = default;
};

/// 15-digit subscriber identity.
class Imsi {
 public:
  Imsi() = default;
  /// Throws InvalidArgument unless `digits` is exactly 15 decimal digits.
  explicit Imsi(std::string digits);
  const std::string& digits() const { return digits_; }
  friend auto operator<=>(const Imsi&, const Imsi&) = default;

 private:
  std::string digits_ = "000000000000000";
};

/// 256-bit UE capability bitmap sent in clear with the Attach Request.
class CapabilityVector {
 public:
  static constexpr std::size_t kBits = 256;
  static constexpr std::size_t kBytes = kBits / 8;

  CapabilityVector() = default;
  explicit CapabilityVector(const std::bitset<kBits>& bits) : bits_(bits) {}

  /// 64 hex digits, bit 0 is the MSB of the first byte.
  static CapabilityVector from_hex(std::string_view hex);
  std::string to_hex() const;

  bool test(std::size_t i) const { return bits_.test(i); }
  void set(std::size_t i, bool v = true) { bits_.set(i, v); }
  void flip(std::size_t i) { bits_.flip(i); }
  const std::bitset<kBits>& bits() const { return bits_; }

  friend std::size_t hamming(const CapabilityVector& a, const CapabilityVector& b) {
    return (a.bits_ ^ b.bits_).count();
  }
  friend bool operator==(const CapabilityVector&, const CapabilityVector&) = default;

 private:
  std::bitset<kBits> bits_;
};

enum class IdentityType : std::uint8_t { imsi = 1, imei = 2, imeisv = 3, tmsi = 4 };

struct UlGrant {
  std::uint16_t rb_alloc = 0;
  std::uint8_t mcs = 0;
  friend bool operator==(const UlGrant&, const UlGrant&) = default;
};

struct RandomAccessPreamble {
  std::uint8_t preamble_id = 0;  // 0..63
  friend bool operator==(const RandomAccessPreamble&, const RandomAccessPreamble&) = default;
};

struct RandomAccessResponse {
  Rnti rnti;
  TaIndex ta;
  UlGrant ul_grant;  // Msg3 allocation, six subframes later
  friend bool operator==(const RandomAccessResponse&, const RandomAccessResponse&) = default;
};

/// Uplink grant for subframe n + subframe_offset.
struct DciFormat0 {
  Rnti rnti;
  std::uint8_t subframe_offset = 4;  // 0..15
  std::uint16_t rb_alloc = 0;
  std::uint8_t mcs = 0;  // 0..31
  friend bool operator==(const DciFormat0&, const DciFormat0&) = default;
};

/// Downlink assignment in the same subframe.
struct DciFormat1 {
  Rnti rnti;
  std::uint16_t rb_alloc = 0;
  std::uint8_t mcs = 0;  // 0..31
  friend bool operator==(const DciFormat1&, const DciFormat1&) = default;
};

/// Relative TA adjustment; on the wire as adjust + 31 in 6 bits.
struct MacTaCommand {
  std::int8_t adjust = 0;  // -31..32
  friend bool operator==(const MacTaCommand&, const MacTaCommand&) = default;
};

struct RrcConnectionRequest {
  /// TMSI when `has_tmsi`, otherwise a random 32-bit value.
  Tmsi tmsi_or_random;
  bool has_tmsi = true;
  std::uint8_t establishment_cause = 0;  // 0..7
  friend bool operator==(const RrcConnectionRequest&, const RrcConnectionRequest&) = default;
};

struct RrcConnectionSetup {
  std::uint8_t config_id = 0;
  friend bool operator==(const RrcConnectionSetup&, const RrcConnectionSetup&) = default;
};

struct AttachRequest {
  std::variant<Tmsi, Imsi> id;
  CapabilityVector capabilities;
  friend bool operator==(const AttachRequest&, const AttachRequest&) = default;
};

struct ServiceRequest {
  Tmsi tmsi;
  friend bool operator==(const ServiceRequest&, const ServiceRequest&) = default;
};

struct IdentityRequest {
  IdentityType id_type = IdentityType::imsi;
  friend bool operator==(const IdentityRequest&, const IdentityRequest&) = default;
};

struct IdentityResponse {
  Imsi imsi;
  friend bool operator==(const IdentityResponse&, const IdentityResponse&) = default;
};

/// HARQ acknowledgement; harq_id is the acknowledged downlink subframe mod 8.
struct Ack {
  std::uint8_t harq_id = 0;  // 0..7
  friend bool operator==(const Ack&, const Ack&) = default;
};

/// Cause 9: "UE identity cannot be derived by the network".
struct ServiceReject {
  std::uint8_t cause = 9;
  friend bool operator==(const ServiceReject&, const ServiceReject&) = default;
};

/// Uplink user-plane transmission; only its timing is of interest.
struct UplinkData {
  std::uint16_t length = 0;
  friend bool operator==(const UplinkData&, const UplinkData&) = default;
};

/// NAS payload the sniffer cannot or need not read: ciphered messages such
/// as a TMSI reallocation, or the network's authentication challenge.
enum class OpaqueKind : std::uint8_t { authentication = 0, tmsi_reallocation = 1, other = 2 };

struct OpaqueNas {
  OpaqueKind kind = OpaqueKind::other;
  std::uint16_t length = 0;
  friend bool operator==(const OpaqueNas&, const OpaqueNas&) = default;
};

using Message = std::variant<RandomAccessPreamble, RandomAccessResponse, DciFormat0, DciFormat1,
                             MacTaCommand, RrcConnectionRequest, RrcConnectionSetup,
                             AttachRequest, ServiceRequest, IdentityRequest, IdentityResponse,
                             Ack, ServiceReject, UplinkData, OpaqueNas>;

/// Wire tag of each variant; 0x01 + variant index.
enum class MessageTag : std::uint8_t {
  random_access_preamble = 0x01,
  random_access_response = 0x02,
  dci_format0 = 0x03,
  dci_format1 = 0x04,
  mac_ta_command = 0x05,
  rrc_connection_request = 0x06,
  rrc_connection_setup = 0x07,
  attach_request = 0x08,
  service_request = 0x09,
  identity_request = 0x0A,
  identity_response = 0x0B,
  ack = 0x0C,
  service_reject = 0x0D,
  uplink_data = 0x0E,
  opaque_nas = 0x0F,
};

MessageTag tag_of(const Message& m);
std::string_view message_name(const Message& m);

enum class DecodeErrorKind {
  truncated,       // input ends inside a field
  unknown_tag,
  bad_length,      // declared length disagrees with the variant layout
  trailing_bytes,  // bytes after the declared payload
  invalid_field,   // value outside its range
};

std::string_view to_string(DecodeErrorKind kind);

class DecodeError : public Error {
 public:
  DecodeError(DecodeErrorKind kind, std::string field, const std::string& detail);
  DecodeErrorKind kind() const { return kind_; }
  /// Name of the offending field, or "header".
  const std::string& field() const { return field_; }

 private:
  DecodeErrorKind kind_;
  std::string field_;
};

/// Throws InvalidArgument when a field is out of range.
std::vector<std::uint8_t> encode(const Message& msg);

/// Inverse of encode. Throws DecodeError and nothing else.
Message decode(std::span<const std::uint8_t> bytes);

/// The RNTI assigned by a Random Access Response. Throws InvalidArgument for
/// other variants and for RNTIs outside the dedicated range.
Rnti rnti_of_rar(const Message& msg);

/// Field-by-field JSON view, used for the "decoded" member of log lines.
nlohmann::json to_json(const Message& msg);

std::string to_hex(std::span<const std::uint8_t> bytes);
/// Throws InvalidArgument on odd length or non-hex characters.
std::vector<std::uint8_t> from_hex(std::string_view hex);

}  // namespace tatrack
