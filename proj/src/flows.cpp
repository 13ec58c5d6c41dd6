#include "flowmob/flows.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace flowmob {

PointMode parse_point_mode(std::string_view name) {
  if (name == "mean") return PointMode::mean;
  if (name == "median") return PointMode::median;
  if (name == "sample") return PointMode::sample;
  throw Error("unknown prediction mode '" + std::string(name) + "' (mean, median, sample)");
}

std::string_view to_string(PointMode mode) {
  switch (mode) {
    case PointMode::mean: return "mean";
    case PointMode::median: return "median";
    case PointMode::sample: return "sample";
  }
  return "mean";
}

FlowHead FlowHead::zeros(Eigen::Index hidden, int clusters, bool per_cluster_weights) {
  if (clusters < 1) throw Error("FlowHead: need at least one cluster");
  FlowHead h;
  const Eigen::Index cols = per_cluster_weights ? clusters : 1;
  h.w_mu = Eigen::MatrixXd::Zero(hidden, cols);
  h.w_rho = Eigen::MatrixXd::Zero(hidden, cols);
  h.cluster_mu = Eigen::VectorXd::Zero(clusters);
  h.cluster_rho = Eigen::VectorXd::Zero(clusters);
  return h;
}

double softplus(double x) {
  // log(1 + e^x) without overflow.
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

HeadOutput head_forward(const FlowHead& head, const Eigen::VectorXd& s, int cluster,
                        std::string_view group) {
  if (s.size() != head.hidden()) throw Error(std::string(group) + ": hidden size mismatch");
  if (cluster < 0 || cluster >= head.clusters()) {
    throw Error(std::string(group) + ": cluster " + std::to_string(cluster) + " out of range");
  }
  const Eigen::Index col = head.weight_column(cluster);
  HeadOutput out;
  out.mu = head.w_mu.col(col).dot(s) + head.b_mu + head.cluster_mu[cluster];
  out.rho = head.w_rho.col(col).dot(s) + head.b_rho + head.cluster_rho[cluster];
  if (head.transfer) {
    out.mu += head.phi * head.anchor_mu[cluster];
    out.rho += head.phi * head.anchor_rho[cluster];
  }
  out.sigma2 = softplus(out.rho) + kSigmaFloor;
  if (!std::isfinite(out.mu)) throw Error(std::string(group) + ": non-finite mean");
  if (!std::isfinite(out.sigma2)) throw Error(std::string(group) + ": non-finite variance");
  return out;
}

FlowParams head_params(const FlowHead& head, const Eigen::VectorXd& s, int cluster) {
  return head_forward(head, s, cluster).params();
}

double log_pdf(const FlowParams& p, double x) {
  if (!(x > 0.0)) throw Error("log_pdf: x must be positive");
  const double lx = std::log(x);
  const double r = lx - p.mu;
  return -lx - 0.5 * std::log(p.sigma2) - 0.5 * std::log(2.0 * std::numbers::pi) -
         r * r / (2.0 * p.sigma2);
}

double standard_normal(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  return normal(rng);
}

double sample(const FlowParams& p, Rng& rng) {
  return std::exp(p.mu + std::sqrt(p.sigma2) * standard_normal(rng));
}

double point_estimate(const FlowParams& p, PointMode mode, Rng* rng) {
  switch (mode) {
    case PointMode::mean: return std::exp(p.mu + 0.5 * p.sigma2);
    case PointMode::median: return std::exp(p.mu);
    case PointMode::sample:
      if (!rng) throw Error("point_estimate: sample mode needs a random source");
      return sample(p, *rng);
  }
  return std::exp(p.mu);
}

}  // namespace flowmob
