#include "commbot/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "commbot/error.hpp"

namespace commbot {

Temperature::Temperature(double t) : t_(t) {
  if (!(t > 0.0) || !std::isfinite(t)) fail(ErrorKind::bad_temperature, "temperature must be finite and > 0");
}

ProbPair apply_temperature(const LogitPair& z, Temperature t) {
  return softmax({z.human / t.value(), z.bot / t.value()});
}

double temperature_nll(std::span<const LogitPair> z, std::span<const Label> y, double t) {
  if (z.size() != y.size()) fail(ErrorKind::dimension, "logits and labels differ in length");
  if (z.empty()) fail(ErrorKind::empty_validation, "no validation samples");
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += cross_entropy({z[i].human / t, z[i].bot / t}, y[i]);
  return s / static_cast<double>(z.size());
}

Temperature fit_temperature(std::span<const LogitPair> z, std::span<const Label> y) {
  if (z.size() != y.size()) fail(ErrorKind::dimension, "logits and labels differ in length");
  if (z.size() < kMinValidationSize)
    fail(ErrorKind::empty_validation, "temperature fitting needs at least " + std::to_string(kMinValidationSize) + " samples");
  if (!has_both_classes(y)) fail(ErrorKind::single_class, "temperature fitting needs both classes");

  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(kMinTemperature), b = std::log(kMaxTemperature);
  auto f = [&](double log_t) { return temperature_nll(z, y, std::exp(log_t)); };
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > 1e-4) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return Temperature(std::exp((a + b) / 2.0));
}

double expected_calibration_error(std::span<const ProbPair> p, std::span<const Label> y, int bins) {
  if (bins < 1) fail(ErrorKind::config, "bins must be >= 1");
  if (p.size() != y.size()) fail(ErrorKind::dimension, "probabilities and labels differ in length");
  if (p.empty()) return 0.0;
  std::vector<double> count(static_cast<std::size_t>(bins)), correct(static_cast<std::size_t>(bins)),
      conf(static_cast<std::size_t>(bins));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double c = p[i].confidence();
    const auto b = static_cast<std::size_t>(std::clamp(static_cast<int>(std::floor(c * bins)), 0, bins - 1));
    count[b] += 1.0;
    conf[b] += c;
    correct[b] += p[i].argmax() == y[i] ? 1.0 : 0.0;
  }
  double ece = 0.0;
  const double n = static_cast<double>(p.size());
  for (std::size_t b = 0; b < count.size(); ++b) {
    if (count[b] == 0.0) continue;
    ece += (count[b] / n) * std::abs(correct[b] / count[b] - conf[b] / count[b]);
  }
  return ece;
}

}  // namespace commbot
