#include "pfs/frame.hpp"

#include <string>

namespace pfs::frame {

namespace {

constexpr std::uint8_t kMagic0 = 'P';
constexpr std::uint8_t kMagic1 = 'F';

bool known_type(std::uint8_t t) { return t >= 1 && t <= 4; }

}  // namespace

const char* to_string(FrameType type) {
  switch (type) {
    case FrameType::DataRequest: return "DataRequest";
    case FrameType::DataResponse: return "DataResponse";
    case FrameType::Heartbeat: return "Heartbeat";
    case FrameType::ControlUpdate: return "ControlUpdate";
  }
  return "Unknown";
}

std::uint32_t compute_mac(ByteView payload) {
  if (payload.size() > kMaxPayload) {
    throw CodecError(CodecErrc::Oversize,
                     "payload of " + std::to_string(payload.size()) + " bytes exceeds 1 MiB");
  }
  return static_cast<std::uint32_t>(payload.size());
}

TunnelFrame make_frame(FrameType type, std::uint32_t stream_id, Bytes payload) {
  TunnelFrame f;
  f.frame_type = type;
  f.stream_id = stream_id;
  f.mac = compute_mac(payload);
  f.payload = std::move(payload);
  return f;
}

Bytes encode_frame(const TunnelFrame& frame) {
  if (frame.version != kVersion || !known_type(static_cast<std::uint8_t>(frame.frame_type))) {
    throw CodecError(CodecErrc::Invalid, "bad version or frame type");
  }
  if (frame.payload.size() > kMaxPayload) {
    throw CodecError(CodecErrc::Invalid, "payload exceeds 1 MiB");
  }
  if (frame.mac != compute_mac(frame.payload)) {
    throw CodecError(CodecErrc::Invalid, "mac does not match payload");
  }
  Bytes out;
  out.reserve(kHeaderSize + frame.payload.size());
  out.push_back(kMagic0);
  out.push_back(kMagic1);
  out.push_back(frame.version);
  out.push_back(static_cast<std::uint8_t>(frame.frame_type));
  put_u32be(out, frame.stream_id);
  put_u32be(out, static_cast<std::uint32_t>(frame.payload.size()));
  put_u32be(out, frame.mac);
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  return out;
}

Decoded decode_frame(ByteView bytes) {
  // Header fields are checked as soon as they are available so garbage is
  // rejected without waiting for a full header.
  if (bytes.size() >= 1 && bytes[0] != kMagic0) throw CodecError(CodecErrc::BadHeader, "bad magic");
  if (bytes.size() >= 2 && bytes[1] != kMagic1) throw CodecError(CodecErrc::BadHeader, "bad magic");
  if (bytes.size() >= 3 && bytes[2] != kVersion) throw CodecError(CodecErrc::BadHeader, "bad version");
  if (bytes.size() >= 4 && !known_type(bytes[3])) throw CodecError(CodecErrc::BadHeader, "bad frame type");
  if (bytes.size() < kHeaderSize) throw CodecError(CodecErrc::NeedMoreData, "incomplete header");

  const std::uint32_t len = get_u32be(bytes.data() + 8);
  if (len > kMaxPayload) throw CodecError(CodecErrc::BadHeader, "payload length exceeds 1 MiB");
  if (bytes.size() < kHeaderSize + len) throw CodecError(CodecErrc::NeedMoreData, "incomplete payload");

  Decoded d;
  d.frame.version = bytes[2];
  d.frame.frame_type = static_cast<FrameType>(bytes[3]);
  d.frame.stream_id = get_u32be(bytes.data() + 4);
  d.frame.mac = get_u32be(bytes.data() + 12);
  d.frame.payload.assign(bytes.begin() + kHeaderSize, bytes.begin() + kHeaderSize + len);
  if (d.frame.mac != compute_mac(d.frame.payload)) throw CodecError(CodecErrc::BadMac, "mac mismatch");
  d.consumed = kHeaderSize + len;
  return d;
}

void FrameReader::feed(ByteView bytes) { buffer_.insert(buffer_.end(), bytes.begin(), bytes.end()); }

std::optional<TunnelFrame> FrameReader::next() {
  if (buffer_.empty()) return std::nullopt;
  try {
    Decoded d = decode_frame(buffer_);
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(d.consumed));
    return std::move(d.frame);
  } catch (const CodecError& e) {
    if (e.code() == CodecErrc::NeedMoreData) return std::nullopt;
    throw;
  }
}

}  // namespace pfs::frame
