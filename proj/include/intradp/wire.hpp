#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace intradp::wire {

enum class MsgType : std::uint8_t { Hello = 1, PlanSelect = 2, Units = 3, Done = 4, Error = 5 };

inline constexpr std::array<char, 4> kMagic{'I', 'D', 'P', '1'};
inline constexpr std::size_t kHeaderSize = 4 + 1 + 4 + 4 + 4 + 4 + 4;
inline constexpr std::uint32_t kMaxPayload = 1u << 28;
// HELLO with this plan id is a bandwidth probe that the server echoes.
inline constexpr std::uint32_t kProbePlanId = 0xFFFFFFFFu;

/// Little-endian framed message:
///   magic[4] | type u8 | plan_id u32 | node_id u32 | range_lo u32 | range_hi u32 | payload_len u32 | payload
struct Frame {
  MsgType type = MsgType::Hello;
  std::uint32_t plan_id = 0;
  std::uint32_t node_id = 0;
  std::uint32_t range_lo = 0;
  std::uint32_t range_hi = 0;
  std::vector<std::uint8_t> payload;

  friend bool operator==(const Frame&, const Frame&) = default;
};

namespace detail {

inline void put_u32(std::uint8_t* p, std::uint32_t v) {
  p[0] = static_cast<std::uint8_t>(v);
  p[1] = static_cast<std::uint8_t>(v >> 8);
  p[2] = static_cast<std::uint8_t>(v >> 16);
  p[3] = static_cast<std::uint8_t>(v >> 24);
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

struct Header {
  MsgType type;
  std::uint32_t plan_id, node_id, range_lo, range_hi, payload_len;
};

inline std::array<std::uint8_t, kHeaderSize> encode_header(const Frame& f) {
  std::array<std::uint8_t, kHeaderSize> h{};
  std::memcpy(h.data(), kMagic.data(), 4);
  h[4] = static_cast<std::uint8_t>(f.type);
  detail::put_u32(&h[5], f.plan_id);
  detail::put_u32(&h[9], f.node_id);
  detail::put_u32(&h[13], f.range_lo);
  detail::put_u32(&h[17], f.range_hi);
  detail::put_u32(&h[21], static_cast<std::uint32_t>(f.payload.size()));
  return h;
}

inline Header decode_header(std::span<const std::uint8_t> h) {
  if (h.size() < kHeaderSize) throw Error(Errc::ProtocolViolation, "truncated frame header");
  if (std::memcmp(h.data(), kMagic.data(), 4) != 0) throw Error(Errc::ProtocolViolation, "bad magic");
  const std::uint8_t t = h[4];
  if (t < 1 || t > 5) throw Error(Errc::ProtocolViolation, "unknown message type " + std::to_string(t));
  Header out{static_cast<MsgType>(t), detail::get_u32(&h[5]), detail::get_u32(&h[9]),
             detail::get_u32(&h[13]), detail::get_u32(&h[17]), detail::get_u32(&h[21])};
  if (out.payload_len > kMaxPayload) throw Error(Errc::ProtocolViolation, "payload too large");
  if (out.type == MsgType::Units) {
    if (out.range_hi < out.range_lo) throw Error(Errc::ProtocolViolation, "inverted unit range");
    if (out.payload_len % 4 != 0) throw Error(Errc::ProtocolViolation, "UNITS payload is not whole floats");
  }
  return out;
}

inline std::vector<std::uint8_t> encode(const Frame& f) {
  const auto h = encode_header(f);
  std::vector<std::uint8_t> out(h.begin(), h.end());
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  return out;
}

/// Decodes one complete frame; trailing or missing bytes are a violation.
inline Frame decode(std::span<const std::uint8_t> bytes) {
  const Header h = decode_header(bytes);
  if (bytes.size() != kHeaderSize + h.payload_len) {
    throw Error(Errc::ProtocolViolation, "frame length does not match payload_len");
  }
  Frame f{h.type, h.plan_id, h.node_id, h.range_lo, h.range_hi,
          std::vector<std::uint8_t>(bytes.begin() + kHeaderSize, bytes.end())};
  return f;
}

inline std::vector<std::uint8_t> pack_floats(std::span<const float> xs) {
  std::vector<std::uint8_t> out(xs.size() * 4);
  for (std::size_t i = 0; i < xs.size(); ++i) detail::put_u32(&out[4 * i], std::bit_cast<std::uint32_t>(xs[i]));
  return out;
}

inline std::vector<float> unpack_floats(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 4 != 0) throw Error(Errc::ProtocolViolation, "payload is not whole floats");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<float>(detail::get_u32(&bytes[4 * i]));
  return out;
}

inline std::vector<std::uint8_t> pack_text(std::string_view s) { return {s.begin(), s.end()}; }
inline std::string unpack_text(std::span<const std::uint8_t> b) { return {b.begin(), b.end()}; }

}  // namespace intradp::wire
