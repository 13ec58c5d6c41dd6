#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "flowmob/clusters.hpp"
#include "flowmob/model.hpp"
#include "json.hpp"

namespace flowmob {

inline constexpr int kCheckpointFormatVersion = 1;

/// Per-cluster flow intercepts (mean and variance pre-activation) of a
/// trained model; this is what crosses from an origin region to a target.
struct AnchorTable {
  int clusters = 0;
  bool spatial = false;
  std::vector<double> t_mu, t_rho;
  std::vector<double> d_mu, d_rho;  // empty unless spatial
};

/// Effective per-cluster intercepts: b + cluster offset (+ phi * anchor).
AnchorTable flow_anchors(const ModelParams& p);

struct DatasetMeta {
  int num_categories = 0;
  double t_min = 0.0;
  double t_max = 1.0;
  bool spatial_mode = true;
  std::vector<std::string> vocabulary;
};

DatasetMeta dataset_meta(const RegionDataset& ds);

struct Checkpoint {
  int version = kCheckpointFormatVersion;
  ModelParams params;
  DatasetMeta dataset;
  ClusterModel clusters;
  AnchorTable anchors;
  nlohmann::json provenance = nlohmann::json::object();
};

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws Error on a format or version mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws unless the dataset matches the checkpoint's vocabulary size, time
/// bounds and spatial mode.
void check_compatible(const Checkpoint& ckpt, const RegionDataset& ds);

}  // namespace flowmob
