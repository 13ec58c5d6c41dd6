#pragma once

#include <vector>

#include "flowmob/seqdata.hpp"

namespace flowmob {

/// Routes sequences to one of `m` flow-parameter sets by the median of their
/// training-prefix event times.
struct ClusterModel {
  int m = 1;
  std::vector<double> thresholds;  // m - 1 strictly increasing cut points

  /// Smallest i with median < thresholds[i], otherwise m - 1.
  int assign(double median) const;
};

/// Median of the normalized times in the training prefix.
double sequence_median(const Sequence& seq);

/// Cut points at the i/m empirical quantiles of the medians. Cluster i holds
/// medians in [thresholds[i-1], thresholds[i]).
ClusterModel fit_thresholds(std::vector<double> medians, int m);

/// Fits thresholds on every sequence's training prefix and assigns clusters.
ClusterModel fit_clusters(RegionDataset& dataset, int m);

/// Assigns clusters with an existing model (e.g. thresholds from a checkpoint).
void assign_clusters(RegionDataset& dataset, const ClusterModel& model);

}  // namespace flowmob
