#pragma once

#include <string_view>

#include <json.hpp>

#include "pfs/frame.hpp"

// Helpers for the JSON control messages carried in ControlUpdate frames.
namespace pfs::wire {

using Json = nlohmann::ordered_json;

inline Bytes control_frame(const Json& msg) {
  return frame::encode_frame(frame::make_frame(frame::FrameType::ControlUpdate, 0, to_bytes(msg.dump())));
}

inline Bytes data_frame(frame::FrameType type, std::uint32_t stream, std::string_view payload) {
  return frame::encode_frame(frame::make_frame(type, stream, to_bytes(payload)));
}

}  // namespace pfs::wire
