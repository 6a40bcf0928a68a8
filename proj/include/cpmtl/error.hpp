#ifndef CPMTL_ERROR_HPP_
#define CPMTL_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace cpmtl {

enum class ErrorKind {
  Shape,
  NonFinite,
  InvalidArgument,
  VersionMismatch,
  Truncated,
  DigestMismatch,
  Io,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the library. `where` names the offending segment,
// layer, coordinate or field when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::string where = {})
      : std::runtime_error(message), kind_(kind), where_(std::move(where)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& where() const noexcept { return where_; }

 private:
  ErrorKind kind_;
  std::string where_;
};

}  // namespace cpmtl

#endif  // CPMTL_ERROR_HPP_
