#include <cmath>
#include <random>

#include "commbot/calibration.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace commbot;

namespace {

// Overconfident logits: true probability of bot is sigmoid(s), logits claim sigmoid(3s).
void overconfident(std::size_t n, std::uint64_t seed, std::vector<LogitPair>& z, std::vector<Label>& y) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.5);
  std::uniform_real_distribution<double> u;
  z.clear();
  y.clear();
  for (std::size_t i = 0; i < n; ++i) {
    const double s = g(rng);
    z.push_back({0.0, 3.0 * s});
    y.push_back(u(rng) < 1.0 / (1.0 + std::exp(-s)) ? Label::bot : Label::human);
  }
}

double ece_oracle(const std::vector<ProbPair>& p, const std::vector<Label>& y, int bins) {
  double total = 0.0;
  for (int b = 0; b < bins; ++b) {
    const double lo = static_cast<double>(b) / bins, hi = static_cast<double>(b + 1) / bins;
    double n = 0, acc = 0, conf = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double c = std::max(p[i].human, p[i].bot);
      const bool in = c >= lo && (c < hi || (b == bins - 1 && c <= hi));
      if (!in) continue;
      ++n;
      conf += c;
      acc += (p[i].bot > p[i].human ? Label::bot : Label::human) == y[i];
    }
    if (n > 0) total += n / static_cast<double>(p.size()) * std::abs(acc / n - conf / n);
  }
  return total;
}

}  // namespace

TEST_CASE("temperature scaling examples") {
  const LogitPair z{0.0, 2.0};
  const auto p1 = apply_temperature(z, Temperature(1.0));
  CHECK(p1.bot == doctest::Approx(softmax(z).bot));
  const auto p2 = apply_temperature(z, Temperature(2.0));
  CHECK(p2.bot == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
  CHECK(apply_temperature(z, Temperature(1e6)).bot == doctest::Approx(0.5).epsilon(1e-5));
  CHECK(apply_temperature({1.0, 1.0}, Temperature(0.1)).bot == 0.5);

  CHECK_ERROR_KIND(Temperature(0.0), ErrorKind::bad_temperature);
  CHECK_ERROR_KIND(Temperature(-1.0), ErrorKind::bad_temperature);
  CHECK_ERROR_KIND(Temperature(std::nan("")), ErrorKind::bad_temperature);
  CHECK_ERROR_KIND(Temperature(INFINITY), ErrorKind::bad_temperature);
}

TEST_CASE("fitted temperature matches a dense grid") {
  for (std::uint64_t seed : {1, 2, 3}) {
    std::vector<LogitPair> z;
    std::vector<Label> y;
    overconfident(400, seed, z, y);
    const double t = fit_temperature(z, y).value();
    double best = INFINITY;
    for (int k = 0; k <= 4000; ++k) {
      const double lt = std::log(kMinTemperature) + (std::log(kMaxTemperature) - std::log(kMinTemperature)) * k / 4000.0;
      best = std::min(best, temperature_nll(z, y, std::exp(lt)));
    }
    CHECK(temperature_nll(z, y, t) <= best + 1e-6);
    CHECK(t > 1.5);  // overconfident logits get softened
    CHECK(temperature_nll(z, y, t) <= temperature_nll(z, y, 1.0));
    for (std::size_t i = 0; i < z.size(); ++i)
      CHECK(apply_temperature(z[i], Temperature(t)).argmax() == softmax(z[i]).argmax());
  }
}

TEST_CASE("duplicating the validation set keeps the temperature") {
  std::vector<LogitPair> z;
  std::vector<Label> y;
  overconfident(150, 9, z, y);
  auto z2 = z;
  auto y2 = y;
  z2.insert(z2.end(), z.begin(), z.end());
  y2.insert(y2.end(), y.begin(), y.end());
  CHECK(fit_temperature(z2, y2).value() == doctest::Approx(fit_temperature(z, y).value()).epsilon(1e-9));
}

TEST_CASE("temperature fitting errors") {
  std::vector<LogitPair> z(9, LogitPair{0.0, 1.0});
  std::vector<Label> y(9, Label::bot);
  y[0] = Label::human;
  CHECK_ERROR_KIND(fit_temperature(z, y), ErrorKind::empty_validation);
  z.resize(12, LogitPair{0.0, 1.0});
  y.resize(12, Label::bot);
  CHECK_ERROR_KIND(fit_temperature(z, std::vector<Label>(12, Label::bot)), ErrorKind::single_class);
  CHECK_ERROR_KIND(fit_temperature(z, std::vector<Label>(3, Label::bot)), ErrorKind::dimension);
  CHECK_ERROR_KIND(temperature_nll({}, {}, 1.0), ErrorKind::empty_validation);
}

TEST_CASE("expected calibration error") {
  const std::vector<ProbPair> p(4, ProbPair{0.2, 0.8});
  const std::vector<Label> y{Label::bot, Label::bot, Label::bot, Label::human};
  CHECK(expected_calibration_error(p, y) == doctest::Approx(0.05));

  const std::vector<ProbPair> perfect{{0.0, 1.0}, {1.0, 0.0}};
  CHECK(expected_calibration_error(perfect, std::vector<Label>{Label::bot, Label::human}) == 0.0);
  CHECK(expected_calibration_error({}, {}) == 0.0);
  CHECK_ERROR_KIND(expected_calibration_error(p, y, 0), ErrorKind::config);

  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u;
  for (int t = 0; t < 50; ++t) {
    std::vector<ProbPair> q;
    std::vector<Label> lab;
    for (int i = 0; i < 60; ++i) {
      const double b = u(rng);
      q.push_back({1.0 - b, b});
      lab.push_back(u(rng) < 0.5 ? Label::bot : Label::human);
    }
    for (int bins : {1, 5, 10}) {
      const double e = expected_calibration_error(q, lab, bins);
      CHECK(e == doctest::Approx(ece_oracle(q, lab, bins)).epsilon(1e-12));
      CHECK(e >= 0.0);
      CHECK(e <= 1.0);
    }
  }
}

TEST_CASE("temperature scaling reduces ECE on overconfident scores") {
  std::vector<LogitPair> z, zt;
  std::vector<Label> y, yt;
  overconfident(2000, 21, z, y);
  overconfident(2000, 22, zt, yt);
  const Temperature t = fit_temperature(z, y);
  std::vector<ProbPair> raw, cal;
  for (const auto& zi : zt) {
    raw.push_back(softmax(zi));
    cal.push_back(apply_temperature(zi, t));
  }
  CHECK(expected_calibration_error(cal, yt) < expected_calibration_error(raw, yt));
}
