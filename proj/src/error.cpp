#include "commbot/error.hpp"

namespace commbot {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "ParseError";
    case ErrorKind::missing_field: return "MissingField";
    case ErrorKind::invariant_violation: return "InvariantViolation";
    case ErrorKind::empty_input: return "EmptyInput";
    case ErrorKind::bad_fraction: return "BadFraction";
    case ErrorKind::insufficient_data: return "InsufficientData";
    case ErrorKind::single_class: return "SingleClassError";
    case ErrorKind::dimension: return "DimensionError";
    case ErrorKind::unknown_user: return "UnknownUser";
    case ErrorKind::bad_lambda: return "BadLambda";
    case ErrorKind::bad_temperature: return "BadTemperature";
    case ErrorKind::empty_validation: return "EmptyValidation";
    case ErrorKind::key_mismatch: return "KeyMismatch";
    case ErrorKind::empty_community: return "EmptyCommunity";
    case ErrorKind::config: return "ConfigError";
    case ErrorKind::infeasible_target: return "InfeasibleTarget";
    case ErrorKind::io: return "IoError";
    case ErrorKind::version: return "VersionError";
  }
  return "Error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace commbot
