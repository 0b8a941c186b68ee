#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace commbot {

enum class Label : std::uint8_t { human = 0, bot = 1 };

inline int class_index(Label l) { return static_cast<int>(l); }
inline Label label_from_index(int i) { return i == 0 ? Label::human : Label::bot; }

/// Derives an independent stream seed for component k.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t k) { return seed + 0x9E3779B97F4A7C15ULL * (k + 1); }

std::string_view to_string(Label l);
std::optional<Label> parse_label(std::string_view s);

/// Raw two-way model output (human, bot).
struct LogitPair {
  double human = 0.0;
  double bot = 0.0;

  double operator[](int c) const { return c == 0 ? human : bot; }
};

/// Two-way probability vector (human, bot); sums to 1.
struct ProbPair {
  double human = 0.5;
  double bot = 0.5;

  double operator[](int c) const { return c == 0 ? human : bot; }
  /// Argmax with exact ties resolved to human.
  Label argmax() const { return bot > human ? Label::bot : Label::human; }
  double confidence() const { return human >= bot ? human : bot; }
};

/// Numerically stable softmax of a logit pair.
ProbPair softmax(const LogitPair& z);

/// Cross-entropy -log p[y] for a single logit pair.
double cross_entropy(const LogitPair& z, Label y);

bool has_both_classes(std::span<const Label> y);

}  // namespace commbot
