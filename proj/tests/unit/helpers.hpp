#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "flowmob/model.hpp"
#include "flowmob/seqdata.hpp"

namespace flowmob::testing {

// Sequence with the given normalized times; distances default to 1 km steps.
inline Sequence make_sequence(std::string user, std::vector<int> categories,
                              std::vector<double> times, std::vector<double> cum_distance = {}) {
  Sequence seq;
  seq.user_id = std::move(user);
  for (std::size_t i = 0; i < categories.size(); ++i) {
    const double d = cum_distance.empty() ? double(i) : cum_distance[i];
    seq.events.push_back({categories[i], times[i], d});
  }
  seq.split_index = split_index_for(seq.size());
  compute_deltas(seq);
  seq.cluster = 0;
  return seq;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("flowmob_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace flowmob::testing
