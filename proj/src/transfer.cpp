#include "flowmob/transfer.hpp"

#include <string>

namespace flowmob {

AnchorTable extract_anchors(const Checkpoint& origin) {
  const AnchorTable& a = origin.anchors;
  const auto m = static_cast<std::size_t>(a.clusters);
  if (a.clusters < 1 || a.t_mu.size() != m || a.t_rho.size() != m ||
      (a.spatial && (a.d_mu.size() != m || a.d_rho.size() != m))) {
    throw Error("extract_anchors: origin checkpoint has an inconsistent anchor table");
  }
  return a;
}

FlowHead build_target_head(std::span<const double> anchor_mu, std::span<const double> anchor_rho,
                           FlowHead own, double phi, bool phi_trainable) {
  const auto m = static_cast<std::size_t>(own.clusters());
  if (anchor_mu.size() != m || anchor_rho.size() != m) {
    throw Error("build_target_head: origin has " + std::to_string(anchor_mu.size()) +
                " clusters, target has " + std::to_string(m));
  }
  own.transfer = true;
  own.anchor_mu = Eigen::Map<const Eigen::VectorXd>(anchor_mu.data(), own.clusters());
  own.anchor_rho = Eigen::Map<const Eigen::VectorXd>(anchor_rho.data(), own.clusters());
  own.phi = phi;
  own.phi_trainable = phi_trainable;
  return own;
}

void apply_transfer(ModelParams& target, const Checkpoint& origin, const TransferOptions& options) {
  const AnchorTable anchors = extract_anchors(origin);
  if (anchors.clusters != target.dims.num_clusters) {
    throw Error("transfer: origin was trained with M=" + std::to_string(anchors.clusters) +
                " clusters but the target uses M=" + std::to_string(target.dims.num_clusters));
  }
  if (target.spatial() && !anchors.spatial) {
    throw Error("transfer: origin checkpoint is non-spatial and has no spatial flow to transfer "
                "into a spatial target");
  }
  target.t_flow = build_target_head(anchors.t_mu, anchors.t_rho, std::move(target.t_flow),
                                    options.initial_phi, !options.freeze_phi);
  if (target.d_flow) {
    target.d_flow = build_target_head(anchors.d_mu, anchors.d_rho, std::move(*target.d_flow),
                                      options.initial_phi, !options.freeze_phi);
  }
  if (options.warm_start_trunk) warm_start_trunk(target, origin.params);
}

void warm_start_trunk(ModelParams& target, const ModelParams& origin) {
  if (target.dims.embed_dim != origin.dims.embed_dim ||
      target.dims.hidden_dim != origin.dims.hidden_dim) {
    throw Error("warm_start_trunk: origin and target dimensions differ");
  }
  if (target.dims.num_categories == origin.dims.num_categories) {
    target.embed.W_c = origin.embed.W_c;
  }
  target.embed.w_t = origin.embed.w_t;
  target.embed.b_v = origin.embed.b_v;
  target.rnn.G_s = origin.rnn.G_s;
  target.rnn.G_v = origin.rnn.G_v;
  target.rnn.g_t = origin.rnn.g_t;
  target.rnn.b_s = origin.rnn.b_s;
  if (target.spatial() && origin.spatial()) {
    target.embed.w_d = origin.embed.w_d;
    target.rnn.g_d = origin.rnn.g_d;
  }
  target.fuse = origin.fuse;
}

}  // namespace flowmob
