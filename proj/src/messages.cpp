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

#include <algorithm>
#include <array>

namespace tatrack {

namespace {

constexpr std::array<std::string_view, std::variant_size_v<Message>> kNames{
    "RandomAccessPreamble", "RandomAccessResponse", "DciFormat0",       "DciFormat1",
    "MacTaCommand",         "RrcConnectionRequest", "RrcConnectionSetup", "AttachRequest",
    "ServiceRequest",       "IdentityRequest",      "IdentityResponse", "Ack",
    "ServiceReject",        "UplinkData",           "OpaqueNas"};

constexpr std::uint8_t kAttachIdImsi = 1;
constexpr std::uint8_t kAttachIdTmsi = 4;

void require(bool ok, const char* what) {
  if (!ok) throw InvalidArgument(std::string("cannot encode: ") + what);
}

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v));
  }
  void u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v >> 16));
    u16(static_cast<std::uint16_t>(v));
  }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

/// Reads payload fields; an underflow names the missing field.
class Reader {
 public:
  Reader(std::span<const std::uint8_t> region, bool cut_short)
      : region_(region), cut_short_(cut_short) {}

  std::uint8_t u8(const char* field) {
    need(1, field);
    return region_[pos_++];
  }
  std::uint16_t u16(const char* field) {
    need(2, field);
    const auto v = static_cast<std::uint16_t>((region_[pos_] << 8) | region_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | region_[pos_ + i];
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* field) {
    need(n, field);
    auto s = region_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* field) const {
    if (region_.size() - pos_ < n) {
      // Input shorter than the declared length is a truncation; otherwise the
      // declared length itself is too small for the layout.
      throw DecodeError(cut_short_ ? DecodeErrorKind::truncated : DecodeErrorKind::bad_length,
                        field, "payload ends inside field");
    }
  }

  std::span<const std::uint8_t> region_;
  bool cut_short_;
  std::size_t pos_ = 0;
};

[[noreturn]] void invalid(const char* field, const std::string& detail) {
  throw DecodeError(DecodeErrorKind::invalid_field, field, detail);
}

std::array<std::uint8_t, 8> pack_imsi(const Imsi& imsi) {
  std::array<std::uint8_t, 8> out{};
  const std::string& d = imsi.digits();
  for (std::size_t k = 0; k < 8; ++k) {
    const std::uint8_t hi = static_cast<std::uint8_t>(d[2 * k] - '0');
    const std::uint8_t lo = 2 * k + 1 < d.size() ? static_cast<std::uint8_t>(d[2 * k + 1] - '0')
                                                 : std::uint8_t{0xF};
    out[k] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

Imsi unpack_imsi(std::span<const std::uint8_t> b, const char* field) {
  std::string digits;
  for (std::size_t k = 0; k < 8; ++k) {
    const int hi = b[k] >> 4;
    const int lo = b[k] & 0xF;
    if (hi > 9) invalid(field, "non-decimal IMSI digit");
    digits.push_back(static_cast<char>('0' + hi));
    if (k == 7) {
      if (lo != 0xF) invalid(field, "missing IMSI filler nibble");
    } else {
      if (lo > 9) invalid(field, "non-decimal IMSI digit");
      digits.push_back(static_cast<char>('0' + lo));
    }
  }
  return Imsi(digits);
}

void encode_payload(Writer& w, const RandomAccessPreamble& m) {
  require(m.preamble_id <= 63, "preamble_id > 63");
  w.u8(m.preamble_id);
}
void encode_payload(Writer& w, const RandomAccessResponse& m) {
  require(m.ul_grant.mcs <= 31, "ul_grant.mcs > 31");
  w.u16(m.rnti.value);
  w.u16(m.ta.value());
  w.u16(m.ul_grant.rb_alloc);
  w.u8(m.ul_grant.mcs);
}
void encode_payload(Writer& w, const DciFormat0& m) {
  require(m.subframe_offset <= 15, "subframe_offset > 15");
  require(m.mcs <= 31, "mcs > 31");
  w.u16(m.rnti.value);
  w.u8(m.subframe_offset);
  w.u16(m.rb_alloc);
  w.u8(m.mcs);
}
void encode_payload(Writer& w, const DciFormat1& m) {
  require(m.mcs <= 31, "mcs > 31");
  w.u16(m.rnti.value);
  w.u16(m.rb_alloc);
  w.u8(m.mcs);
}
void encode_payload(Writer& w, const MacTaCommand& m) {
  require(m.adjust >= -31 && m.adjust <= 32, "TA adjustment outside [-31, 32]");
  w.u8(static_cast<std::uint8_t>(m.adjust + 31));
}
void encode_payload(Writer& w, const RrcConnectionRequest& m) {
  require(m.establishment_cause <= 7, "establishment_cause > 7");
  w.u8(m.has_tmsi ? 1 : 0);
  w.u32(m.tmsi_or_random.value);
  w.u8(m.establishment_cause);
}
void encode_payload(Writer& w, const RrcConnectionSetup& m) { w.u8(m.config_id); }
void encode_payload(Writer& w, const AttachRequest& m) {
  if (const auto* t = std::get_if<Tmsi>(&m.id)) {
    w.u8(kAttachIdTmsi);
    w.u32(t->value);
  } else {
    w.u8(kAttachIdImsi);
    w.bytes(pack_imsi(std::get<Imsi>(m.id)));
  }
  w.bytes(from_hex(m.capabilities.to_hex()));
}
void encode_payload(Writer& w, const ServiceRequest& m) { w.u32(m.tmsi.value); }
void encode_payload(Writer& w, const IdentityRequest& m) {
  const auto v = static_cast<std::uint8_t>(m.id_type);
  require(v >= 1 && v <= 4, "unknown identity type");
  w.u8(v);
}
void encode_payload(Writer& w, const IdentityResponse& m) { w.bytes(pack_imsi(m.imsi)); }
void encode_payload(Writer& w, const Ack& m) {
  require(m.harq_id <= 7, "harq_id > 7");
  w.u8(m.harq_id);
}
void encode_payload(Writer& w, const ServiceReject& m) { w.u8(m.cause); }
void encode_payload(Writer& w, const UplinkData& m) { w.u16(m.length); }
void encode_payload(Writer& w, const OpaqueNas& m) {
  require(static_cast<std::uint8_t>(m.kind) <= 2, "unknown opaque kind");
  w.u8(static_cast<std::uint8_t>(m.kind));
  w.u16(m.length);
}

std::uint8_t checked_mcs(std::uint8_t v, const char* field) {
  if (v > 31) invalid(field, "mcs > 31");
  return v;
}

Message decode_payload(MessageTag tag, Reader& r) {
  switch (tag) {
    case MessageTag::random_access_preamble: {
      const auto id = r.u8("preamble_id");
      if (id > 63) invalid("preamble_id", "preamble_id > 63");
      return RandomAccessPreamble{id};
    }
    case MessageTag::random_access_response: {
      RandomAccessResponse m;
      m.rnti = Rnti{r.u16("rnti")};
      const auto ta = r.u16("ta");
      if (ta > kMaxTaIndex) invalid("ta", "TA index above 1282");
      m.ta = TaIndex(ta);
      m.ul_grant.rb_alloc = r.u16("ul_grant.rb_alloc");
      m.ul_grant.mcs = checked_mcs(r.u8("ul_grant.mcs"), "ul_grant.mcs");
      return m;
    }
    case MessageTag::dci_format0: {
      DciFormat0 m;
      m.rnti = Rnti{r.u16("rnti")};
      m.subframe_offset = r.u8("subframe_offset");
      if (m.subframe_offset > 15) invalid("subframe_offset", "subframe_offset > 15");
      m.rb_alloc = r.u16("rb_alloc");
      m.mcs = checked_mcs(r.u8("mcs"), "mcs");
      return m;
    }
    case MessageTag::dci_format1: {
      DciFormat1 m;
      m.rnti = Rnti{r.u16("rnti")};
      m.rb_alloc = r.u16("rb_alloc");
      m.mcs = checked_mcs(r.u8("mcs"), "mcs");
      return m;
    }
    case MessageTag::mac_ta_command: {
      const auto v = r.u8("adjust");
      if (v > 63) invalid("adjust", "TA command above 63");
      return MacTaCommand{static_cast<std::int8_t>(static_cast<int>(v) - 31)};
    }
    case MessageTag::rrc_connection_request: {
      RrcConnectionRequest m;
      const auto flags = r.u8("flags");
      if (flags > 1) invalid("flags", "reserved flag bits set");
      m.has_tmsi = flags == 1;
      m.tmsi_or_random = Tmsi{r.u32("tmsi_or_random")};
      m.establishment_cause = r.u8("establishment_cause");
      if (m.establishment_cause > 7) invalid("establishment_cause", "cause > 7");
      return m;
    }
    case MessageTag::rrc_connection_setup:
      return RrcConnectionSetup{r.u8("config_id")};
    case MessageTag::attach_request: {
      AttachRequest m;
      const auto kind = r.u8("id_type");
      if (kind == kAttachIdTmsi) {
        m.id = Tmsi{r.u32("tmsi")};
      } else if (kind == kAttachIdImsi) {
        m.id = unpack_imsi(r.take(8, "imsi"), "imsi");
      } else {
        invalid("id_type", "attach identity must be IMSI or TMSI");
      }
      m.capabilities = CapabilityVector::from_hex(
          to_hex(r.take(CapabilityVector::kBytes, "capabilities")));
      return m;
    }
    case MessageTag::service_request:
      return ServiceRequest{Tmsi{r.u32("tmsi")}};
    case MessageTag::identity_request: {
      const auto v = r.u8("id_type");
      if (v < 1 || v > 4) invalid("id_type", "unknown identity type");
      return IdentityRequest{static_cast<IdentityType>(v)};
    }
    case MessageTag::identity_response:
      return IdentityResponse{unpack_imsi(r.take(8, "imsi"), "imsi")};
    case MessageTag::ack: {
      const auto v = r.u8("harq_id");
      if (v > 7) invalid("harq_id", "harq_id > 7");
      return Ack{v};
    }
    case MessageTag::service_reject:
      return ServiceReject{r.u8("cause")};
    case MessageTag::uplink_data:
      return UplinkData{r.u16("length")};
    case MessageTag::opaque_nas: {
      const auto kind = r.u8("kind");
      if (kind > 2) invalid("kind", "unknown opaque kind");
      return OpaqueNas{static_cast<OpaqueKind>(kind), r.u16("length")};
    }
  }
  throw DecodeError(DecodeErrorKind::unknown_tag, "header", "unknown tag");
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

Imsi::Imsi(std::string digits) : digits_(std::move(digits)) {
  if (digits_.size() != 15 ||
      !std::all_of(digits_.begin(), digits_.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw InvalidArgument("IMSI must be 15 decimal digits: '" + digits_ + "'");
  }
}

CapabilityVector CapabilityVector::from_hex(std::string_view hex) {
  const auto bytes = tatrack::from_hex(hex);
  if (bytes.size() != kBytes) {
    throw InvalidArgument("capability vector needs " + std::to_string(kBytes * 2) +
                          " hex digits");
  }
  CapabilityVector v;
  for (std::size_t i = 0; i < kBits; ++i) {
    v.bits_.set(i, (bytes[i / 8] & (0x80u >> (i % 8))) != 0);
  }
  return v;
}

std::string CapabilityVector::to_hex() const {
  std::array<std::uint8_t, kBytes> bytes{};
  for (std::size_t i = 0; i < kBits; ++i) {
    if (bits_.test(i)) bytes[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
  }
  return tatrack::to_hex(bytes);
}

MessageTag tag_of(const Message& m) { return static_cast<MessageTag>(m.index() + 1); }

std::string_view message_name(const Message& m) { return kNames[m.index()]; }

std::string_view to_string(DecodeErrorKind kind) {
  switch (kind) {
    case DecodeErrorKind::truncated: return "truncated";
    case DecodeErrorKind::unknown_tag: return "unknown_tag";
    case DecodeErrorKind::bad_length: return "bad_length";
    case DecodeErrorKind::trailing_bytes: return "trailing_bytes";
    case DecodeErrorKind::invalid_field: return "invalid_field";
  }
  return "?";
}

DecodeError::DecodeError(DecodeErrorKind kind, std::string field, const std::string& detail)
    : Error(std::string(to_string(kind)) + " (" + field + "): " + detail),
      kind_(kind),
      field_(std::move(field)) {}

std::vector<std::uint8_t> encode(const Message& msg) {
  Writer payload;
  std::visit([&](const auto& m) { encode_payload(payload, m); }, msg);
  Writer frame;
  frame.u8(static_cast<std::uint8_t>(tag_of(msg)));
  frame.u16(static_cast<std::uint16_t>(payload.data().size()));
  frame.bytes(payload.data());
  return std::move(frame.data());
}

Message decode(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw DecodeError(DecodeErrorKind::truncated, "header", "empty input");
  const std::uint8_t raw_tag = bytes[0];
  if (raw_tag < 0x01 || raw_tag > 0x0F) {
    throw DecodeError(DecodeErrorKind::unknown_tag, "header",
                      "tag 0x" + to_hex(bytes.first(1)));
  }
  if (bytes.size() < 3) throw DecodeError(DecodeErrorKind::truncated, "length", "short header");
  const std::size_t declared = (std::size_t{bytes[1]} << 8) | bytes[2];
  const std::size_t available = bytes.size() - 3;
  const bool cut_short = available < declared;
  Reader r(bytes.subspan(3, std::min(declared, available)), cut_short);
  Message m = decode_payload(static_cast<MessageTag>(raw_tag), r);
  if (r.pos() < declared) {
    if (cut_short) throw DecodeError(DecodeErrorKind::truncated, "payload", "input ends early");
    throw DecodeError(DecodeErrorKind::bad_length, "length",
                      "declared " + std::to_string(declared) + " bytes, layout uses " +
                          std::to_string(r.pos()));
  }
  if (available > declared) {
    throw DecodeError(DecodeErrorKind::trailing_bytes, "payload",
                      std::to_string(available - declared) + " bytes after payload");
  }
  return m;
}

Rnti rnti_of_rar(const Message& msg) {
  const auto* rar = std::get_if<RandomAccessResponse>(&msg);
  if (!rar) {
    throw InvalidArgument("expected RandomAccessResponse, got " + std::string(message_name(msg)));
  }
  if (!rar->rnti.is_dedicated()) {
    throw InvalidArgument("RAR assigns RNTI " + std::to_string(rar->rnti.value) +
                          " outside the dedicated range");
  }
  return rar->rnti;
}

nlohmann::json to_json(const Message& msg) {
  using nlohmann::json;
  json j = std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, RandomAccessPreamble>) {
          return {{"preamble_id", m.preamble_id}};
        } else if constexpr (std::is_same_v<T, RandomAccessResponse>) {
          return {{"rnti", m.rnti.value},
                  {"ta", m.ta.value()},
                  {"ul_grant", {{"rb_alloc", m.ul_grant.rb_alloc}, {"mcs", m.ul_grant.mcs}}}};
        } else if constexpr (std::is_same_v<T, DciFormat0>) {
          return {{"rnti", m.rnti.value},
                  {"subframe_offset", m.subframe_offset},
                  {"rb_alloc", m.rb_alloc},
                  {"mcs", m.mcs}};
        } else if constexpr (std::is_same_v<T, DciFormat1>) {
          return {{"rnti", m.rnti.value}, {"rb_alloc", m.rb_alloc}, {"mcs", m.mcs}};
        } else if constexpr (std::is_same_v<T, MacTaCommand>) {
          return {{"adjust", m.adjust}};
        } else if constexpr (std::is_same_v<T, RrcConnectionRequest>) {
          return {{"tmsi_or_random", m.tmsi_or_random.value},
                  {"has_tmsi", m.has_tmsi},
                  {"establishment_cause", m.establishment_cause}};
        } else if constexpr (std::is_same_v<T, RrcConnectionSetup>) {
          return {{"config_id", m.config_id}};
        } else if constexpr (std::is_same_v<T, AttachRequest>) {
          json id;
          if (const auto* t = std::get_if<Tmsi>(&m.id)) {
            id = {{"tmsi", t->value}};
          } else {
            id = {{"imsi", std::get<Imsi>(m.id).digits()}};
          }
          return {{"id", id}, {"capabilities", m.capabilities.to_hex()}};
        } else if constexpr (std::is_same_v<T, ServiceRequest>) {
          return {{"tmsi", m.tmsi.value}};
        } else if constexpr (std::is_same_v<T, IdentityRequest>) {
          return {{"id_type", static_cast<int>(m.id_type)}};
        } else if constexpr (std::is_same_v<T, IdentityResponse>) {
          return {{"imsi", m.imsi.digits()}};
        } else if constexpr (std::is_same_v<T, Ack>) {
          return {{"harq_id", m.harq_id}};
        } else if constexpr (std::is_same_v<T, ServiceReject>) {
          return {{"cause", m.cause}};
        } else if constexpr (std::is_same_v<T, UplinkData>) {
          return {{"length", m.length}};
        } else {
          return {{"kind", static_cast<int>(m.kind)}, {"length", m.length}};
        }
      },
      msg);
  j["type"] = std::string(message_name(msg));
  return j;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    s.push_back(kDigits[b >> 4]);
    s.push_back(kDigits[b & 0xF]);
  }
  return s;
}

std::vector<std::uint8_t> from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw InvalidArgument("odd-length hex string");
  std::vector<std::uint8_t> out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    const int hi = hex_value(hex[i]);
    const int lo = hex_value(hex[i + 1]);
    if (hi < 0 || lo < 0) throw InvalidArgument("invalid hex digit");
    out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
  }
  return out;
}

}  // namespace tatrack
