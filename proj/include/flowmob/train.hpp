#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "flowmob/checkpoint.hpp"
#include "flowmob/eval.hpp"
#include "flowmob/grad.hpp"
#include "json.hpp"

namespace flowmob {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t batch_size = 32;
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 0;
  int embed_dim = 64;
  int hidden_dim = 64;
  int num_clusters = 3;
  double validation_fraction = 0.1;
  bool per_cluster_weights = false;
  // Transfer only.
  double initial_phi = 0.5;
  bool freeze_phi = false;
  bool warm_start_trunk = false;
  PointMode eval_mode = PointMode::mean;
  // Execution only; not part of the echoed configuration.
  int threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
  /// Overlays the keys present in `j` onto `base`.
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
  static TrainConfig from_json(const nlohmann::json& j);
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  static AdamState for_params(const ModelParams& p);
};

/// Bias-corrected Adam update of every trainable tensor. Frozen tensors
/// (origin anchors, a frozen phi) are left untouched.
void adam_step(ModelParams& p, const GradientSet& g, AdamState& state, const TrainConfig& config);

struct TrainingCurve {
  std::vector<CurveRow> rows;  // one per completed epoch, starting at 1
  CurveRow initial;            // epoch 0, before any update
  int best_epoch = 0;
  bool stopped_early = false;
  bool diverged = false;
  std::string divergence;
};

struct TrainResult {
  Checkpoint checkpoint;  // parameters of the best validation epoch
  TrainingCurve curve;
};

/// Fits clusters on the dataset's own training prefixes, then runs Adam on
/// the mean per-step NLL with seeded shuffling. The last validation_fraction
/// of sequences is held out for early stopping. With `transfer_from`, the
/// origin's per-cluster flow intercepts are installed as frozen anchors.
TrainResult train_region(RegionDataset dataset, const TrainConfig& config,
                         const Checkpoint* transfer_from = nullptr);

/// Mean per-step NLL of the training prefixes with deterministic fusion.
double eval_nll(const ModelParams& p, const RegionDataset& ds, std::span<const std::size_t> indices,
                const FusionPolicy& fusion, int threads);

}  // namespace flowmob
