#include "flowmob/clusters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace flowmob {

int ClusterModel::assign(double median) const {
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (median < thresholds[i]) return static_cast<int>(i);
  }
  return m - 1;
}

double sequence_median(const Sequence& seq) {
  const std::size_t n = std::min(seq.split_index, seq.events.size());
  if (n == 0) throw Error("sequence_median: empty training prefix for '" + seq.user_id + "'");
  std::vector<double> times;
  times.reserve(n);
  for (std::size_t k = 0; k < n; ++k) times.push_back(seq.events[k].time);
  // Times are sorted already, but keep this independent of that invariant.
  std::sort(times.begin(), times.end());
  return n % 2 == 1 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
}

ClusterModel fit_thresholds(std::vector<double> medians, int m) {
  if (m < 1) throw Error("fit_thresholds: need at least one cluster");
  if (medians.size() < static_cast<std::size_t>(m)) {
    throw Error("fit_thresholds: " + std::to_string(medians.size()) +
                " medians cannot fill " + std::to_string(m) + " clusters");
  }
  std::sort(medians.begin(), medians.end());
  const std::size_t n = medians.size();
  ClusterModel model;
  model.m = m;
  for (int i = 1; i < m; ++i) {
    const std::size_t idx = (static_cast<std::size_t>(i) * n + static_cast<std::size_t>(m) - 1) /
                            static_cast<std::size_t>(m);
    double cut = medians[idx];
    if (!model.thresholds.empty() && !(cut > model.thresholds.back())) {
      cut = std::nextafter(model.thresholds.back(), std::numeric_limits<double>::infinity());
    }
    model.thresholds.push_back(cut);
  }
  return model;
}

ClusterModel fit_clusters(RegionDataset& dataset, int m) {
  std::vector<double> medians;
  medians.reserve(dataset.sequences.size());
  for (const auto& seq : dataset.sequences) medians.push_back(sequence_median(seq));
  ClusterModel model = fit_thresholds(medians, m);
  assign_clusters(dataset, model);
  return model;
}

void assign_clusters(RegionDataset& dataset, const ClusterModel& model) {
  for (auto& seq : dataset.sequences) seq.cluster = model.assign(sequence_median(seq));
  dataset.num_clusters = model.m;
  dataset.cluster_thresholds = model.thresholds;
}

}  // namespace flowmob
