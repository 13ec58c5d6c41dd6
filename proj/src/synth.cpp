#include "flowmob/synth.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "flowmob/flows.hpp"

namespace flowmob {

SynthSpec default_synth_spec(int num_categories, double self_weight, std::uint64_t seed,
                             std::size_t num_sequences) {
  if (num_categories < 1) throw Error("synth: need at least one category");
  SynthSpec spec;
  spec.num_sequences = num_sequences;
  spec.seed = seed;
  const auto c = static_cast<std::size_t>(num_categories);
  spec.transition.assign(c, std::vector<double>(c, 0.0));
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      if (c == 1) {
        spec.transition[i][j] = 1.0;
      } else {
        spec.transition[i][j] = i == j ? self_weight : (1.0 - self_weight) / double(c - 1);
      }
    }
  }
  for (std::size_t i = 0; i < c; ++i) {
    const double frac = c > 1 ? double(i) / double(c - 1) : 0.0;
    spec.time.push_back({std::log(4.0) * frac, 0.25});
    spec.distance.push_back({std::log(2.0) + 0.5 * frac, 0.5});
  }
  return spec;
}

void validate(const SynthSpec& spec) {
  const std::size_t c = spec.transition.size();
  if (c == 0) throw Error("synth: empty transition matrix");
  if (spec.time.size() != c || (spec.spatial && spec.distance.size() != c)) {
    throw Error("synth: per-category parameter count differs from |C|");
  }
  for (const auto& row : spec.transition) {
    if (row.size() != c) throw Error("synth: transition matrix is not square");
    double sum = 0.0;
    for (double x : row) {
      if (!(x >= 0.0)) throw Error("synth: negative transition weight");
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error("synth: transition rows must sum to 1");
  }
  for (const auto& p : spec.time) {
    if (!(p.sigma2 > 0.0) || !std::isfinite(p.mu)) throw Error("synth: invalid time parameters");
  }
  if (spec.spatial) {
    for (const auto& p : spec.distance) {
      if (!(p.sigma2 > 0.0) || !std::isfinite(p.mu)) {
        throw Error("synth: invalid distance parameters");
      }
    }
  }
  if (spec.min_length < 2 || spec.max_length < spec.min_length) {
    throw Error("synth: sequence lengths must satisfy 2 <= min <= max");
  }
  if (spec.num_sequences == 0) throw Error("synth: need at least one sequence");
}

SynthSpec shift(SynthSpec spec, double delta_mu) {
  for (auto& p : spec.time) p.mu += delta_mu;
  return spec;
}

std::vector<RawSequence> generate_raw(const SynthSpec& spec) {
  validate(spec);
  const int c = spec.num_categories();
  std::vector<RawSequence> out;
  out.reserve(spec.num_sequences);
  for (std::size_t j = 0; j < spec.num_sequences; ++j) {
    Rng rng(derive_seed(spec.seed, j));
    std::uniform_int_distribution<std::size_t> length(spec.min_length, spec.max_length);
    std::uniform_int_distribution<int> first(0, c - 1);
    const std::size_t n = length(rng);
    char id[32];
    std::snprintf(id, sizeof(id), "u%07zu", j);
    RawSequence seq;
    seq.user_id = id;
    int cat = first(rng);
    double t = sample({spec.time[cat].mu, spec.time[cat].sigma2}, rng);
    double dist = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      seq.categories.push_back(cat);
      seq.raw_times.push_back(t);
      seq.cum_distance.push_back(dist);
      const auto& tp = spec.time[static_cast<std::size_t>(cat)];
      t += sample({tp.mu, tp.sigma2}, rng);
      if (spec.spatial) {
        const auto& dp = spec.distance[static_cast<std::size_t>(cat)];
        dist += sample({dp.mu, dp.sigma2}, rng);
      }
      const auto& row = spec.transition[static_cast<std::size_t>(cat)];
      cat = std::discrete_distribution<int>(row.begin(), row.end())(rng);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

RegionDataset generate(const SynthSpec& spec) {
  std::vector<std::string> vocabulary;
  for (int i = 0; i < spec.num_categories(); ++i) vocabulary.push_back(std::to_string(i));
  RegionDataset ds = build_dataset(generate_raw(spec), spec.num_categories(),
                                   std::move(vocabulary), spec.spatial);
  ds.provenance = {{"source", "synth"},
                   {"seed", spec.seed},
                   {"num_sequences", spec.num_sequences},
                   {"min_length", spec.min_length},
                   {"max_length", spec.max_length},
                   {"spatial", spec.spatial}};
  nlohmann::json time = nlohmann::json::array();
  for (const auto& p : spec.time) time.push_back({p.mu, p.sigma2});
  ds.provenance["time_params"] = time;
  if (spec.spatial) {
    nlohmann::json dist = nlohmann::json::array();
    for (const auto& p : spec.distance) dist.push_back({p.mu, p.sigma2});
    ds.provenance["distance_params"] = dist;
  }
  ds.provenance["transition"] = spec.transition;
  return ds;
}

}  // namespace flowmob
