#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace commbot {

enum class ErrorKind {
  parse,
  missing_field,
  invariant_violation,
  empty_input,
  bad_fraction,
  insufficient_data,
  single_class,
  dimension,
  unknown_user,
  bad_lambda,
  bad_temperature,
  empty_validation,
  key_mismatch,
  empty_community,
  config,
  infeasible_target,
  io,
  version,
};

std::string_view to_string(ErrorKind kind);

/// Every failure in the library surfaces as this exception; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace commbot
