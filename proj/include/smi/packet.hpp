#pragma once

// Wire format of the transport layer.
//
// A network packet is 32 bytes: a 4-byte header followed by 28 bytes of
// payload. Header layout:
//
//   byte 0  source rank
//   byte 1  destination rank
//   byte 2  port
//   byte 3  op (bits 7..5) | valid element count (bits 4..0)
//
// Elements are stored contiguously in the payload, little-endian.

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "smi/errors.hpp"

namespace smi {

inline constexpr std::size_t kPacketBytes = 32;
inline constexpr std::size_t kHeaderBytes = 4;
inline constexpr std::size_t kPayloadBytes = kPacketBytes - kHeaderBytes;
inline constexpr int kMaxRanks = 256;
inline constexpr int kMaxPorts = 256;

enum class DataType : std::uint8_t { kChar, kShort, kInt, kFloat, kDouble };

inline constexpr std::array<DataType, 5> kAllDataTypes = {DataType::kChar, DataType::kShort, DataType::kInt,
                                                          DataType::kFloat, DataType::kDouble};

constexpr std::size_t size_bytes(DataType t) {
  switch (t) {
    case DataType::kChar: return 1;
    case DataType::kShort: return 2;
    case DataType::kInt: return 4;
    case DataType::kFloat: return 4;
    case DataType::kDouble: return 8;
  }
  return 0;
}

constexpr std::size_t max_elems_per_packet(DataType t) { return kPayloadBytes / size_bytes(t); }

constexpr std::string_view to_string(DataType t) {
  switch (t) {
    case DataType::kChar: return "char";
    case DataType::kShort: return "short";
    case DataType::kInt: return "int";
    case DataType::kFloat: return "float";
    case DataType::kDouble: return "double";
  }
  return "?";
}

inline DataType parse_data_type(std::string_view s) {
  for (DataType t : kAllDataTypes) {
    if (to_string(t) == s) return t;
  }
  throw ParseError("unknown data type '" + std::string(s) + "'");
}

// Element types usable on channels.
template <class T>
struct dtype_of;
template <>
struct dtype_of<char> : std::integral_constant<DataType, DataType::kChar> {};
template <>
struct dtype_of<std::int16_t> : std::integral_constant<DataType, DataType::kShort> {};
template <>
struct dtype_of<std::int32_t> : std::integral_constant<DataType, DataType::kInt> {};
template <>
struct dtype_of<float> : std::integral_constant<DataType, DataType::kFloat> {};
template <>
struct dtype_of<double> : std::integral_constant<DataType, DataType::kDouble> {};

template <class T>
concept Element = requires { dtype_of<T>::value; } && (sizeof(T) == size_bytes(dtype_of<T>::value));

template <Element T>
inline constexpr DataType dtype_v = dtype_of<T>::value;

template <Element T>
inline constexpr std::size_t max_elems_v = max_elems_per_packet(dtype_v<T>);

// Three-bit operation code. Codes 3..7 are reserved.
enum class OpType : std::uint8_t { kData = 0, kSyncReady = 1, kCredit = 2 };

constexpr std::string_view to_string(OpType op) {
  switch (op) {
    case OpType::kData: return "DATA";
    case OpType::kSyncReady: return "SYNC_READY";
    case OpType::kCredit: return "CREDIT";
  }
  return "?";
}

struct PacketHeader {
  std::uint8_t src_rank = 0;
  std::uint8_t dst_rank = 0;
  std::uint8_t port = 0;
  OpType op = OpType::kData;
  std::uint8_t valid_count = 0;  // 5 bits

  friend bool operator==(const PacketHeader&, const PacketHeader&) = default;
};

using HeaderBytes = std::array<std::uint8_t, kHeaderBytes>;
using PacketBytes = std::array<std::uint8_t, kPacketBytes>;

inline HeaderBytes encode_header(const PacketHeader& h) {
  if (h.valid_count >= 32) throw ContractViolation("valid_count does not fit in 5 bits");
  const auto op = static_cast<std::uint8_t>(h.op);
  if (op > 2) throw ContractViolation("op code is not assigned");
  return {h.src_rank, h.dst_rank, h.port, static_cast<std::uint8_t>((op << 5) | h.valid_count)};
}

inline PacketHeader decode_header(std::span<const std::uint8_t, kHeaderBytes> b) {
  const std::uint8_t op = b[3] >> 5;
  if (op > 2) throw MalformedPacket("unassigned op code " + std::to_string(op));
  return PacketHeader{b[0], b[1], b[2], static_cast<OpType>(op), static_cast<std::uint8_t>(b[3] & 0x1F)};
}

struct NetworkPacket {
  PacketHeader header;
  std::array<std::uint8_t, kPayloadBytes> payload{};

  friend bool operator==(const NetworkPacket&, const NetworkPacket&) = default;
};

inline PacketBytes encode_packet(const NetworkPacket& p) {
  PacketBytes out{};
  const HeaderBytes h = encode_header(p.header);
  std::memcpy(out.data(), h.data(), kHeaderBytes);
  std::memcpy(out.data() + kHeaderBytes, p.payload.data(), kPayloadBytes);
  return out;
}

inline NetworkPacket decode_packet(std::span<const std::uint8_t, kPacketBytes> b) {
  NetworkPacket p;
  p.header = decode_header(b.first<kHeaderBytes>());
  std::memcpy(p.payload.data(), b.data() + kHeaderBytes, kPayloadBytes);
  return p;
}

/// Control packet (SYNC_READY / CREDIT) with an empty payload.
inline NetworkPacket make_control(OpType op, int src, int dst, int port) {
  NetworkPacket p;
  p.header = PacketHeader{static_cast<std::uint8_t>(src), static_cast<std::uint8_t>(dst),
                          static_cast<std::uint8_t>(port), op, 0};
  return p;
}

namespace detail {

template <Element T>
using bits_of = std::conditional_t<sizeof(T) == 1, std::uint8_t,
                                   std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                      std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;

template <Element T>
void store_le(std::uint8_t* dst, T v) {
  auto bits = std::bit_cast<bits_of<T>>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    dst[i] = static_cast<std::uint8_t>(bits & 0xFF);
    if constexpr (sizeof(T) > 1) bits >>= 8;
  }
}

template <Element T>
T load_le(const std::uint8_t* src) {
  bits_of<T> bits = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) {
    if constexpr (sizeof(T) > 1) bits <<= 8;
    bits |= static_cast<bits_of<T>>(src[i]);
  }
  return std::bit_cast<T>(bits);
}

}  // namespace detail

/// Packs 1..max_elems elements into a DATA packet built from `proto`.
template <Element T>
NetworkPacket pack_elements(std::span<const T> elems, const PacketHeader& proto) {
  if (elems.empty() || elems.size() > max_elems_v<T>) {
    throw ContractViolation("pack_elements: " + std::to_string(elems.size()) + " elements of " +
                            std::string(to_string(dtype_v<T>)) + " do not fit one packet");
  }
  NetworkPacket p;
  p.header = proto;
  p.header.valid_count = static_cast<std::uint8_t>(elems.size());
  for (std::size_t i = 0; i < elems.size(); ++i) detail::store_le(p.payload.data() + i * sizeof(T), elems[i]);
  return p;
}

/// Writes the packet's valid elements to `out` and returns how many were written.
template <Element T>
std::size_t unpack_elements(const NetworkPacket& p, std::span<T> out) {
  const std::size_t n = p.header.valid_count;
  if (n > max_elems_v<T> || n > out.size()) {
    throw MalformedPacket("valid_count " + std::to_string(n) + " exceeds capacity for " +
                          std::string(to_string(dtype_v<T>)));
  }
  for (std::size_t i = 0; i < n; ++i) out[i] = detail::load_le<T>(p.payload.data() + i * sizeof(T));
  return n;
}

template <Element T>
std::vector<T> unpack_elements(const NetworkPacket& p) {
  std::vector<T> out(max_elems_v<T>);
  out.resize(unpack_elements<T>(p, std::span<T>(out)));
  return out;
}

inline std::string describe(const PacketHeader& h) {
  return "src=" + std::to_string(h.src_rank) + " dst=" + std::to_string(h.dst_rank) +
         " port=" + std::to_string(h.port) + " op=" + std::string(to_string(h.op)) +
         " n=" + std::to_string(h.valid_count);
}

}  // namespace smi
