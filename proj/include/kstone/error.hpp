#pragma once

#include <stdexcept>
#include <string>

namespace kstone {

// Every failure carries a short machine-readable code next to the message.
// The CLI prints both on a single line.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

namespace errc {
inline constexpr const char* kInvalidArgument = "invalid_argument";
inline constexpr const char* kIo = "io";
inline constexpr const char* kParse = "parse";
inline constexpr const char* kDimensionMismatch = "dimension_mismatch";
inline constexpr const char* kUnknownToken = "unknown_token";
inline constexpr const char* kCorrupt = "corrupt";
inline constexpr const char* kVersion = "version_mismatch";
inline constexpr const char* kDegenerate = "degenerate";
inline constexpr const char* kOversample = "oversample_exhausted";
}  // namespace errc

[[noreturn]] inline void fail(const char* code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace kstone
