#pragma once

#include <stdexcept>
#include <string>

namespace ahsl {

enum class errc {
  io_failure,
  bad_magic,
  bad_header,
  payload_mismatch,
  unknown_dtype,
  bad_argument,
  inconsistent_labels,
  empty_region,
  out_of_range,
  non_finite,
};

/// Library-wide exception carrying a machine-checkable error code.
class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw Error(code, what); }

}  // namespace ahsl
