#pragma once

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "ringtrain/errors.hpp"

namespace ringtrain::wire {

// Frame: "RTRN" | tag u32 BE | length u32 BE | payload (length bytes).
// Float payloads are little-endian IEEE-754 binary32.
inline constexpr std::array<std::uint8_t, 4> kMagic{0x52, 0x54, 0x52, 0x4E};
inline constexpr std::size_t kHeaderSize = 12;
inline constexpr std::uint32_t kMaxPayload = 0xFFFFFFFFu;

struct FrameHeader {
  std::uint32_t tag = 0;
  std::uint32_t length = 0;
};

inline void put_u32_be(std::uint8_t* out, std::uint32_t v) {
  out[0] = static_cast<std::uint8_t>(v >> 24);
  out[1] = static_cast<std::uint8_t>(v >> 16);
  out[2] = static_cast<std::uint8_t>(v >> 8);
  out[3] = static_cast<std::uint8_t>(v);
}

inline std::uint32_t get_u32_be(const std::uint8_t* in) {
  return (std::uint32_t{in[0]} << 24) | (std::uint32_t{in[1]} << 16) |
         (std::uint32_t{in[2]} << 8) | std::uint32_t{in[3]};
}

inline std::array<std::uint8_t, kHeaderSize> encode_header(std::uint32_t tag,
                                                           std::uint32_t length) {
  std::array<std::uint8_t, kHeaderSize> h{};
  std::memcpy(h.data(), kMagic.data(), 4);
  put_u32_be(h.data() + 4, tag);
  put_u32_be(h.data() + 8, length);
  return h;
}

inline FrameHeader decode_header(std::span<const std::uint8_t, kHeaderSize> h) {
  if (std::memcmp(h.data(), kMagic.data(), 4) != 0)
    throw ProtocolError("bad frame magic");
  return {get_u32_be(h.data() + 4), get_u32_be(h.data() + 8)};
}

inline std::vector<std::uint8_t> encode_frame(std::uint32_t tag,
                                              std::span<const std::uint8_t> payload) {
  if (payload.size() > kMaxPayload) throw ProtocolError("payload too large");
  std::vector<std::uint8_t> out(kHeaderSize + payload.size());
  const auto h = encode_header(tag, static_cast<std::uint32_t>(payload.size()));
  std::memcpy(out.data(), h.data(), kHeaderSize);
  if (!payload.empty())
    std::memcpy(out.data() + kHeaderSize, payload.data(), payload.size());
  return out;
}

struct Frame {
  std::uint32_t tag = 0;
  std::vector<std::uint8_t> payload;
};

// Decodes one complete frame; trailing bytes are a protocol error.
inline Frame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) throw ProtocolError("truncated frame header");
  const auto h = decode_header(bytes.first<kHeaderSize>());
  if (bytes.size() != kHeaderSize + h.length)
    throw ProtocolError("frame length field does not match payload");
  return {h.tag, {bytes.begin() + kHeaderSize, bytes.end()}};
}

inline std::vector<std::uint8_t> floats_to_bytes(std::span<const float> v) {
  if constexpr (std::endian::native == std::endian::little) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
    return std::vector<std::uint8_t>(p, p + v.size_bytes());
  } else {
    std::vector<std::uint8_t> out(v.size() * 4);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto u = std::bit_cast<std::uint32_t>(v[i]);
      for (int b = 0; b < 4; ++b)
        out[i * 4 + b] = static_cast<std::uint8_t>(u >> (8 * b));
    }
    return out;
  }
}

inline void bytes_to_floats(std::span<const std::uint8_t> bytes,
                            std::span<float> out) {
  if (bytes.size() != out.size() * 4)
    throw ProtocolError("float payload of " + std::to_string(bytes.size()) +
                        " bytes, expected " + std::to_string(out.size() * 4));
  if constexpr (std::endian::native == std::endian::little) {
    if (!out.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= std::uint32_t{bytes[i * 4 + b]} << (8 * b);
      out[i] = std::bit_cast<float>(u);
    }
  }
}

}  // namespace ringtrain::wire
