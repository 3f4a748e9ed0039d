#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tritok {

enum class ErrorKind {
    kConfig,
    kShape,
    kOutOfRange,
    kIo,
    kNumeric,
    kGradCheck,
};

std::string_view to_string(ErrorKind kind);

// Every failure surfaced by the library carries a kind so the CLI can emit a
// machine-parsable line.
class Error : public std::runtime_error {
   public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

   private:
    ErrorKind kind_;
};

inline Error config_error(const std::string& msg) { return {ErrorKind::kConfig, msg}; }
inline Error shape_error(const std::string& msg) { return {ErrorKind::kShape, msg}; }
inline Error range_error(const std::string& msg) { return {ErrorKind::kOutOfRange, msg}; }
inline Error io_error(const std::string& msg) { return {ErrorKind::kIo, msg}; }
inline Error numeric_error(const std::string& msg) { return {ErrorKind::kNumeric, msg}; }

}  // namespace tritok
