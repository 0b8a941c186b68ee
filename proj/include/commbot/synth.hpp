#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "commbot/ingest.hpp"

namespace commbot {

struct SynthConfig {
  std::size_t n_users = 1000;
  double bot_fraction = 0.5;
  std::uint64_t seed = 1;
  /// Class separation; 0 makes bots and humans identically distributed.
  double separation = 1.25;
  /// Probability that an edge joins two accounts of the same class.
  double homophily = 0.8;
  double mean_degree = 8.0;
  /// Id prefix; defaults to "s<seed>_".
  std::string id_prefix;
};

/// Throws Error(config) on out-of-range settings.
void validate(const SynthConfig& cfg);

struct SynthCommunity {
  UserStore users;  // labels set on every record
  EdgeList edges;
};

/// Exactly round(n_users * bot_fraction) bots. Bit-reproducible for a given config.
SynthCommunity generate_community(const SynthConfig& cfg);

struct ResampleStep {
  std::string id;
  /// Visited node the BFS reached this one from; empty for a start node.
  std::string via;
};

struct Resample {
  UserStore community;
  /// Accepted users in acceptance order.
  std::vector<ResampleStep> trace;
};

/// Breadth-first expansion over the undirected follow graph from a seeded
/// start, accepting labeled users while their class quota is open. Restarts from
/// an unvisited user when the frontier runs dry. Bot count is exactly
/// round(size * target_fraction). Throws Error(infeasible_target) when the pool
/// cannot supply either class count.
Resample resample_by_proximity(const UserStore& pool, const EdgeList& edges, double target_fraction, std::size_t size,
                               std::uint64_t seed);

}  // namespace commbot
