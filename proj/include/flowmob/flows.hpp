#pragma once

#include <random>
#include <string_view>

#include <Eigen/Dense>

#include "flowmob/common.hpp"

namespace flowmob {

using Rng = std::mt19937_64;

/// Parameters of a log-normal over a positive delta: ln x ~ N(mu, sigma2).
struct FlowParams {
  double mu = 0.0;
  double sigma2 = 1.0;
};

enum class PointMode { mean, median, sample };

PointMode parse_point_mode(std::string_view name);
std::string_view to_string(PointMode mode);

/// Conditional log-normal head: maps a hidden state and a cluster id to
/// FlowParams. The variance pre-activation rho goes through softplus plus a
/// small floor, so sigma2 stays positive for any input.
///
/// In transfer mode the head adds phi * anchor for the sequence's cluster to
/// both the mean and the variance pre-activation. Anchors come from an origin
/// checkpoint and are never trained; phi is a single scalar shared by every
/// cluster.
struct FlowHead {
  Eigen::MatrixXd w_mu;   // H x K, K = 1 (shared) or M (per-cluster weights)
  double b_mu = 0.0;
  Eigen::MatrixXd w_rho;  // H x K
  double b_rho = 0.0;
  Eigen::VectorXd cluster_mu;   // M
  Eigen::VectorXd cluster_rho;  // M

  bool transfer = false;
  Eigen::VectorXd anchor_mu;   // M, frozen
  Eigen::VectorXd anchor_rho;  // M, frozen
  double phi = 0.5;
  bool phi_trainable = true;

  static FlowHead zeros(Eigen::Index hidden, int clusters, bool per_cluster_weights = false);

  int clusters() const { return static_cast<int>(cluster_mu.size()); }
  Eigen::Index hidden() const { return w_mu.rows(); }
  bool per_cluster_weights() const { return w_mu.cols() > 1; }
  Eigen::Index weight_column(int cluster) const { return per_cluster_weights() ? cluster : 0; }
};

/// Head output with the pre-activation kept for the backward pass.
struct HeadOutput {
  double mu = 0.0;
  double rho = 0.0;
  double sigma2 = 1.0;

  FlowParams params() const { return {mu, sigma2}; }
};

double softplus(double x);
double sigmoid(double x);

/// Throws Error naming `group` when the result is not finite.
HeadOutput head_forward(const FlowHead& head, const Eigen::VectorXd& s, int cluster,
                        std::string_view group = "flow");
FlowParams head_params(const FlowHead& head, const Eigen::VectorXd& s, int cluster);

/// Exact log-normal log-density. x must be positive.
double log_pdf(const FlowParams& p, double x);

double standard_normal(Rng& rng);

/// exp(mu + sqrt(sigma2) * z) with z ~ N(0, 1).
double sample(const FlowParams& p, Rng& rng);

/// mean: exp(mu + sigma2/2); median: exp(mu); sample: one draw from `rng`.
double point_estimate(const FlowParams& p, PointMode mode, Rng* rng = nullptr);

}  // namespace flowmob
