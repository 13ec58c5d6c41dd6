#pragma once

#include <vector>

#include "flowmob/checkpoint.hpp"

namespace flowmob {

/// Anchor table of an origin checkpoint (as stored at save time).
AnchorTable extract_anchors(const Checkpoint& origin);

/// Turns a freshly initialised head into a transfer-mode head: the target
/// keeps its own weights and offsets and adds phi * anchor[cluster] to both
/// the mean and the variance pre-activation. Origin cluster i pairs with
/// target cluster i.
FlowHead build_target_head(std::span<const double> anchor_mu, std::span<const double> anchor_rho,
                           FlowHead own, double phi, bool phi_trainable = true);

struct TransferOptions {
  double initial_phi = 0.5;
  bool freeze_phi = false;
  bool warm_start_trunk = false;
};

/// Installs the origin anchors into `target` (both flows when the target is
/// spatial). Throws when cluster counts differ or the target needs spatial
/// anchors the origin does not have.
void apply_transfer(ModelParams& target, const Checkpoint& origin, const TransferOptions& options);

/// Copies the recurrent trunk (embedding except category columns when the
/// vocabularies differ, recurrence, fusion) from the origin.
void warm_start_trunk(ModelParams& target, const ModelParams& origin);

}  // namespace flowmob
