#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

#include "pfs/bytes.hpp"
#include "pfs/error.hpp"

namespace pfs::frame {

// Wire layout (all integers big-endian):
//
//   magic "PF" (2) | version (1) | type (1) | stream_id (4) |
//   payload_len (4) | mac (4) | payload (payload_len)
//
// The MAC is the payload length and nothing else. Anyone on path can
// recompute it for a rewritten payload. This is the weakness the attack
// tooling exploits; do not "fix" it.

inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 16;
inline constexpr std::size_t kMaxPayload = 1u << 20;

enum class FrameType : std::uint8_t {
  DataRequest = 1,
  DataResponse = 2,
  Heartbeat = 3,
  ControlUpdate = 4,
};

const char* to_string(FrameType type);

enum class CodecErrc { Oversize, Invalid, NeedMoreData, BadHeader, BadMac };

using CodecError = BasicError<CodecErrc>;

struct TunnelFrame {
  std::uint8_t version = kVersion;
  FrameType frame_type = FrameType::DataRequest;
  std::uint32_t stream_id = 0;
  Bytes payload;
  std::uint32_t mac = 0;

  bool operator==(const TunnelFrame&) const = default;
};

std::uint32_t compute_mac(ByteView payload);

// Builds a frame with a correct MAC.
TunnelFrame make_frame(FrameType type, std::uint32_t stream_id, Bytes payload);

Bytes encode_frame(const TunnelFrame& frame);

struct Decoded {
  TunnelFrame frame;
  std::size_t consumed = 0;
};

Decoded decode_frame(ByteView bytes);

// Incremental decoder for a byte stream carrying back-to-back frames.
class FrameReader {
 public:
  void feed(ByteView bytes);

  // Returns the next complete frame, or nullopt if more bytes are needed.
  // Throws CodecError on a malformed frame; the reader is then poisoned
  // and must be reset.
  std::optional<TunnelFrame> next();

  void reset() { buffer_.clear(); }
  std::size_t buffered() const { return buffer_.size(); }

 private:
  Bytes buffer_;
};

}  // namespace pfs::frame
