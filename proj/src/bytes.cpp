#include "pfs/bytes.hpp"

namespace pfs {

std::string escape_bytes(ByteView b, std::size_t max_len) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(std::min(b.size(), max_len));
  for (std::size_t i = 0; i < b.size() && i < max_len; ++i) {
    const std::uint8_t c = b[i];
    if (c >= 0x20 && c < 0x7f && c != '\\') {
      out.push_back(static_cast<char>(c));
    } else if (c == '\\') {
      out += "\\\\";
    } else if (c == '\r') {
      out += "\\r";
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out += "\\x";
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xf]);
    }
  }
  if (b.size() > max_len) out += "...";
  return out;
}

}  // namespace pfs
