#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace pfs {

// Exception carrying a module-specific error code. Each module defines its own
// code enum and aliases BasicError<Code> as its error type.
template <typename Code>
class BasicError : public std::runtime_error {
 public:
  BasicError(Code code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

}  // namespace pfs
