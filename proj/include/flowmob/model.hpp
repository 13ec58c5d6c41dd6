#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "flowmob/flows.hpp"
#include "flowmob/seqdata.hpp"

namespace flowmob {

struct ModelDims {
  int embed_dim = 64;
  int hidden_dim = 64;
  int num_categories = 0;
  int num_clusters = 3;
  bool spatial = true;
  bool per_cluster_weights = false;
};

/// Every trainable tensor of the recurrent point-process model.
///
/// Non-spatial models carry no distance tensors at all: embed.w_d, rnn.g_d
/// are empty and d_flow is absent.
struct ModelParams {
  ModelDims dims;

  struct Embedding {
    Eigen::MatrixXd W_c;  // D x |C|, column c is the category embedding
    Eigen::VectorXd w_t;  // D
    Eigen::VectorXd w_d;  // D (spatial only)
    Eigen::VectorXd b_v;  // D
  } embed;

  struct Recurrent {
    Eigen::MatrixXd G_s;  // H x H
    Eigen::MatrixXd G_v;  // H x D
    Eigen::VectorXd g_t;  // H
    Eigen::VectorXd g_d;  // H (spatial only)
    Eigen::VectorXd b_s;  // H
  } rnn;

  struct Fusion {
    double alpha = 0.0;
    Eigen::VectorXd w_f;  // H
  } fuse;

  struct Marks {
    Eigen::MatrixXd V_s;  // |C| x H
    Eigen::VectorXd b_c;  // |C|
  } mark;

  FlowHead t_flow;
  std::optional<FlowHead> d_flow;

  static ModelParams zeros(const ModelDims& dims);
  bool spatial() const { return d_flow.has_value(); }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
ModelParams init_params(const ModelDims& dims, std::uint64_t seed);

template <class T>
struct TensorRef {
  std::string_view name;
  std::span<T> data;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  bool trainable = true;
};

namespace detail {

template <class T, class M>
TensorRef<T> tensor_ref(std::string_view name, M& m, bool trainable = true) {
  return {name, std::span<T>(m.data(), static_cast<std::size_t>(m.size())), m.rows(), m.cols(),
          trainable};
}

template <class T, class S>
TensorRef<T> scalar_ref(std::string_view name, S& x, bool trainable = true) {
  return {name, std::span<T>(&x, 1), 1, 1, trainable};
}

template <class T, class H, class Fn>
void visit_head(H& head, bool spatial_head, Fn& fn) {
  const bool t = !spatial_head;
  fn(tensor_ref<T>(t ? "t_flow.w_mu" : "d_flow.w_mu", head.w_mu));
  fn(scalar_ref<T>(t ? "t_flow.b_mu" : "d_flow.b_mu", head.b_mu));
  fn(tensor_ref<T>(t ? "t_flow.w_rho" : "d_flow.w_rho", head.w_rho));
  fn(scalar_ref<T>(t ? "t_flow.b_rho" : "d_flow.b_rho", head.b_rho));
  fn(tensor_ref<T>(t ? "t_flow.cluster_mu" : "d_flow.cluster_mu", head.cluster_mu));
  fn(tensor_ref<T>(t ? "t_flow.cluster_rho" : "d_flow.cluster_rho", head.cluster_rho));
  if (head.transfer) {
    fn(scalar_ref<T>(t ? "t_flow.phi" : "d_flow.phi", head.phi, head.phi_trainable));
    fn(tensor_ref<T>(t ? "t_flow.anchor_mu" : "d_flow.anchor_mu", head.anchor_mu, false));
    fn(tensor_ref<T>(t ? "t_flow.anchor_rho" : "d_flow.anchor_rho", head.anchor_rho, false));
  }
}

}  // namespace detail

/// Visits every tensor in a fixed order. `fn` receives a TensorRef<double>
/// (or TensorRef<const double> for const params). Distance tensors are skipped
/// for non-spatial models; phi and anchors only exist in transfer mode.
template <class P, class Fn>
void for_each_tensor(P& p, Fn&& fn) {
  using T = std::conditional_t<std::is_const_v<P>, const double, double>;
  const bool spatial = p.d_flow.has_value();
  fn(detail::tensor_ref<T>("embed.W_c", p.embed.W_c));
  fn(detail::tensor_ref<T>("embed.w_t", p.embed.w_t));
  if (spatial) fn(detail::tensor_ref<T>("embed.w_d", p.embed.w_d));
  fn(detail::tensor_ref<T>("embed.b_v", p.embed.b_v));
  fn(detail::tensor_ref<T>("rnn.G_s", p.rnn.G_s));
  fn(detail::tensor_ref<T>("rnn.G_v", p.rnn.G_v));
  fn(detail::tensor_ref<T>("rnn.g_t", p.rnn.g_t));
  if (spatial) fn(detail::tensor_ref<T>("rnn.g_d", p.rnn.g_d));
  fn(detail::tensor_ref<T>("rnn.b_s", p.rnn.b_s));
  fn(detail::scalar_ref<T>("fuse.alpha", p.fuse.alpha));
  fn(detail::tensor_ref<T>("fuse.w_f", p.fuse.w_f));
  fn(detail::tensor_ref<T>("mark.V_s", p.mark.V_s));
  fn(detail::tensor_ref<T>("mark.b_c", p.mark.b_c));
  detail::visit_head<T>(p.t_flow, false, fn);
  if (spatial) detail::visit_head<T>(*p.d_flow, true, fn);
}

std::size_t parameter_count(const ModelParams& p);

// ---------------------------------------------------------------------------
// Single-step building blocks

/// v = W_c[:, category] + w_t * dt + w_d * dd + b_v
Eigen::VectorXd embed_event(const ModelParams& p, int category, double dt, double dd);

/// s = tanh(G_s s_prev + G_v v + g_t dt + g_d dd + b_s)
Eigen::VectorXd rnn_step(const ModelParams& p, const Eigen::VectorXd& s_prev,
                         const Eigen::VectorXd& v, double dt, double dd);

/// The head whose delta feeds the fusion: distance when spatial, time otherwise.
const FlowHead& fusion_head(const ModelParams& p);

/// s* = s + alpha * w_f * delta
Eigen::VectorXd fuse(const ModelParams& p, const Eigen::VectorXd& s, double delta);

/// Log-softmax of V_s s* + b_c.
Eigen::VectorXd mark_log_probs(const ModelParams& p, const Eigen::VectorXd& s_star);

// ---------------------------------------------------------------------------
// Sequence likelihood

enum class ScoreRange { train, test, all };

/// How the delta fed into the fusion is chosen. `sample` draws
/// exp(mu + sigma z) with z from a stream seeded by (seed, user id); the
/// deterministic modes use the flow's point estimate.
struct FusionPolicy {
  PointMode mode = PointMode::mean;
  std::uint64_t seed = 0;
};

/// Seed of the per-sequence random stream.
std::uint64_t sequence_seed(std::uint64_t seed, const Sequence& seq);

struct StepNll {
  double mark = 0.0;
  double time = 0.0;
  double dist = 0.0;

  double total() const { return mark + time + dist; }
};

/// Intermediates of one scored prediction step (event `step` predicts
/// event `step + 1`).
struct StepCache {
  std::size_t step = 0;
  bool train = true;
  HeadOutput t_head;
  HeadOutput d_head;
  double z = 0.0;             // standard normal draw used for the fusion delta
  double fusion_delta = 0.0;  // delta fed into the fusion
  Eigen::VectorXd fused;
  Eigen::VectorXd probs;
  StepNll nll;
};

struct ForwardTrace {
  std::vector<Eigen::VectorXd> inputs;  // v_k for every rolled event
  std::vector<Eigen::VectorXd> hidden;  // s_k for every rolled event
  std::vector<StepCache> steps;         // scored steps only
};

struct NllResult {
  double total = 0.0;
  double train_part = 0.0;
  double test_part = 0.0;
  std::size_t steps = 0;
  bool empty = true;  // nothing scored in the requested range
  ForwardTrace trace;
};

/// Rolls the recurrence over the sequence and sums the negative
/// log-likelihood of every prediction in `range`, routing flow offsets by
/// seq.cluster. For `all`, total is exactly train_part + test_part.
NllResult sequence_nll(const ModelParams& p, const Sequence& seq, ScoreRange range,
                       const FusionPolicy& fusion = {}, bool keep_trace = true);

/// Index range [begin, end) of scored steps.
std::pair<std::size_t, std::size_t> scored_steps(const Sequence& seq, ScoreRange range);

}  // namespace flowmob
