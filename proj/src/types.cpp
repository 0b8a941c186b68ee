#include "commbot/types.hpp"

#include <cmath>

namespace commbot {

std::string_view to_string(Label l) { return l == Label::bot ? "bot" : "human"; }

std::optional<Label> parse_label(std::string_view s) {
  if (s == "bot" || s == "1") return Label::bot;
  if (s == "human" || s == "0") return Label::human;
  return std::nullopt;
}

ProbPair softmax(const LogitPair& z) {
  const double m = std::max(z.human, z.bot);
  const double eh = std::exp(z.human - m);
  const double eb = std::exp(z.bot - m);
  const double s = eh + eb;
  return {eh / s, eb / s};
}

double cross_entropy(const LogitPair& z, Label y) {
  const double m = std::max(z.human, z.bot);
  const double lse = m + std::log(std::exp(z.human - m) + std::exp(z.bot - m));
  return lse - z[class_index(y)];
}

bool has_both_classes(std::span<const Label> y) {
  bool h = false, b = false;
  for (Label l : y) (l == Label::bot ? b : h) = true;
  return h && b;
}

}  // namespace commbot
