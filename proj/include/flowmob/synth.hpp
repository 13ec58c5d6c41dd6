#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "flowmob/seqdata.hpp"

namespace flowmob {

struct LogNormalSpec {
  double mu = 0.0;
  double sigma2 = 1.0;
};

/// Ground-truth generator: a Markov chain over categories where the gap and
/// travel distance to the next event are log-normal given the current
/// event's category.
struct SynthSpec {
  std::size_t num_sequences = 1000;
  std::size_t min_length = 20;
  std::size_t max_length = 40;
  std::vector<std::vector<double>> transition;  // |C| x |C|, row-stochastic
  std::vector<LogNormalSpec> time;              // per category, raw time units
  std::vector<LogNormalSpec> distance;          // per category, km
  bool spatial = true;
  std::uint64_t seed = 0;

  int num_categories() const { return static_cast<int>(transition.size()); }
};

/// |C| categories, self-transition weight `self_weight` with the rest spread
/// uniformly. Gap medians grow geometrically from 1 to 4 across categories.
SynthSpec default_synth_spec(int num_categories, double self_weight, std::uint64_t seed,
                             std::size_t num_sequences = 1000);

void validate(const SynthSpec& spec);

/// Adds delta_mu to every per-category time mean (distances unchanged).
SynthSpec shift(SynthSpec spec, double delta_mu);

/// Deterministic per seed; normalized exactly like ingested data.
RegionDataset generate(const SynthSpec& spec);

/// Raw (unnormalized) sequences as drawn, before dataset construction.
std::vector<RawSequence> generate_raw(const SynthSpec& spec);

}  // namespace flowmob
