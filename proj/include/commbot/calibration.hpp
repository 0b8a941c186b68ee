#pragma once

#include <span>

#include "commbot/types.hpp"

namespace commbot {

/// Softmax temperature; always finite and > 0.
class Temperature {
 public:
  explicit Temperature(double t = 1.0);
  double value() const { return t_; }

 private:
  double t_;
};

inline constexpr double kMinTemperature = 0.05;
inline constexpr double kMaxTemperature = 20.0;
inline constexpr std::size_t kMinValidationSize = 10;

ProbPair apply_temperature(const LogitPair& z, Temperature t);

/// Mean negative log-likelihood of softmax(z / T).
double temperature_nll(std::span<const LogitPair> z, std::span<const Label> y, double t);

/// Golden-section search on log T over [log 0.05, log 20], tolerance 1e-4.
Temperature fit_temperature(std::span<const LogitPair> z, std::span<const Label> y);

/// Equal-width bins on max-class probability; empty bins are skipped.
double expected_calibration_error(std::span<const ProbPair> p, std::span<const Label> y, int bins = 10);

}  // namespace commbot
