#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace evonas {

// Malformed binary input; `offset` is the byte position where decoding stopped.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace evonas
