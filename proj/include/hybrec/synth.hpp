#pragma once

#include <cstdint>
#include <string>

#include "hybrec/data_model.hpp"

namespace hybrec {

// Planted Markov-chain data. Items form clusters arranged as rings; each
// step moves to the ring successor with probability p_successor, to a
// random item of the same cluster with probability p_cluster, and
// otherwise jumps to a Zipf-distributed item anywhere in the catalog.
// Titles share a cluster vocabulary plus "link" words that an item has in
// common with its successor.
struct SynthConfig {
  std::size_t sessions = 5000;
  std::size_t items = 300;
  std::size_t clusters = 30;
  double p_successor = 0.6;
  double p_cluster = 0.25;
  double zipf_exponent = 1.0;
  std::size_t min_length = 2;
  std::size_t max_length = 8;
  std::string locale = "UK";
  std::uint64_t seed = 2024;

  void validate() const;
};

struct SynthData {
  Catalog catalog;
  SessionList sessions;  // every session labeled
};

SynthData generate_synthetic(const SynthConfig& config);

}  // namespace hybrec
