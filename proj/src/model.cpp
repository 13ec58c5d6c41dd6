#include "flowmob/model.hpp"

#include <cmath>
#include <string>

namespace flowmob {

namespace {

void check_dims(const ModelDims& d) {
  if (d.embed_dim < 1 || d.hidden_dim < 1) throw Error("model: dimensions must be positive");
  if (d.num_categories < 1) throw Error("model: vocabulary must be non-empty");
  if (d.num_clusters < 1) throw Error("model: need at least one cluster");
}

void fill_uniform(Eigen::Ref<Eigen::MatrixXd> m, double fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(fan_in);
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
  }
}

int cluster_of(const ModelParams& p, const Sequence& seq) {
  if (seq.cluster < 0) {
    if (p.dims.num_clusters == 1) return 0;
    throw Error("sequence '" + seq.user_id + "' has no cluster assignment");
  }
  if (seq.cluster >= p.dims.num_clusters) {
    throw Error("sequence '" + seq.user_id + "' cluster exceeds the model's cluster count");
  }
  return seq.cluster;
}

}  // namespace

ModelParams ModelParams::zeros(const ModelDims& dims) {
  check_dims(dims);
  const Eigen::Index D = dims.embed_dim;
  const Eigen::Index H = dims.hidden_dim;
  const Eigen::Index C = dims.num_categories;
  ModelParams p;
  p.dims = dims;
  p.embed.W_c = Eigen::MatrixXd::Zero(D, C);
  p.embed.w_t = Eigen::VectorXd::Zero(D);
  p.embed.w_d = Eigen::VectorXd::Zero(dims.spatial ? D : 0);
  p.embed.b_v = Eigen::VectorXd::Zero(D);
  p.rnn.G_s = Eigen::MatrixXd::Zero(H, H);
  p.rnn.G_v = Eigen::MatrixXd::Zero(H, D);
  p.rnn.g_t = Eigen::VectorXd::Zero(H);
  p.rnn.g_d = Eigen::VectorXd::Zero(dims.spatial ? H : 0);
  p.rnn.b_s = Eigen::VectorXd::Zero(H);
  p.fuse.alpha = 0.0;
  p.fuse.w_f = Eigen::VectorXd::Zero(H);
  p.mark.V_s = Eigen::MatrixXd::Zero(C, H);
  p.mark.b_c = Eigen::VectorXd::Zero(C);
  p.t_flow = FlowHead::zeros(H, dims.num_clusters, dims.per_cluster_weights);
  if (dims.spatial) p.d_flow = FlowHead::zeros(H, dims.num_clusters, dims.per_cluster_weights);
  return p;
}

ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
  ModelParams p = ModelParams::zeros(dims);
  Rng rng(derive_seed(seed, 0x1417));
  const double D = dims.embed_dim;
  const double H = dims.hidden_dim;
  // The embedding and the recurrence are affine maps of concatenated inputs,
  // so every weight block shares the layer's total fan-in.
  const double scalar_inputs = dims.spatial ? 2.0 : 1.0;
  const double embed_fan_in = dims.num_categories + scalar_inputs;
  const double rnn_fan_in = H + D + scalar_inputs;
  fill_uniform(p.embed.W_c, embed_fan_in, rng);
  fill_uniform(p.embed.w_t, embed_fan_in, rng);
  if (dims.spatial) fill_uniform(p.embed.w_d, embed_fan_in, rng);
  fill_uniform(p.rnn.G_s, rnn_fan_in, rng);
  fill_uniform(p.rnn.G_v, rnn_fan_in, rng);
  fill_uniform(p.rnn.g_t, rnn_fan_in, rng);
  if (dims.spatial) fill_uniform(p.rnn.g_d, rnn_fan_in, rng);
  {
    Eigen::Matrix<double, 1, 1> a;
    fill_uniform(a, 1.0, rng);
    p.fuse.alpha = a(0, 0);
  }
  fill_uniform(p.fuse.w_f, 1.0, rng);
  fill_uniform(p.mark.V_s, H, rng);
  auto init_head = [&](FlowHead& h) {
    fill_uniform(h.w_mu, H, rng);
    fill_uniform(h.w_rho, H, rng);
  };
  init_head(p.t_flow);
  if (p.d_flow) init_head(*p.d_flow);
  return p;
}

std::size_t parameter_count(const ModelParams& p) {
  std::size_t n = 0;
  for_each_tensor(p, [&](const TensorRef<const double>& t) { n += t.data.size(); });
  return n;
}

Eigen::VectorXd embed_event(const ModelParams& p, int category, double dt, double dd) {
  if (category < 0 || category >= p.embed.W_c.cols()) {
    throw Error("embed_event: category " + std::to_string(category) + " outside vocabulary of " +
                std::to_string(p.embed.W_c.cols()));
  }
  Eigen::VectorXd v = p.embed.W_c.col(category) + p.embed.w_t * dt + p.embed.b_v;
  if (p.spatial()) v += p.embed.w_d * dd;
  return v;
}

Eigen::VectorXd rnn_step(const ModelParams& p, const Eigen::VectorXd& s_prev,
                         const Eigen::VectorXd& v, double dt, double dd) {
  if (s_prev.size() != p.rnn.G_s.cols() || v.size() != p.rnn.G_v.cols()) {
    throw Error("rnn_step: shape mismatch");
  }
  Eigen::VectorXd pre = p.rnn.G_s * s_prev + p.rnn.G_v * v + p.rnn.g_t * dt + p.rnn.b_s;
  if (p.spatial()) pre += p.rnn.g_d * dd;
  return pre.array().tanh().matrix();
}

const FlowHead& fusion_head(const ModelParams& p) { return p.d_flow ? *p.d_flow : p.t_flow; }

Eigen::VectorXd fuse(const ModelParams& p, const Eigen::VectorXd& s, double delta) {
  return s + p.fuse.alpha * delta * p.fuse.w_f;
}

Eigen::VectorXd mark_log_probs(const ModelParams& p, const Eigen::VectorXd& s_star) {
  if (s_star.size() != p.mark.V_s.cols()) throw Error("mark_log_probs: shape mismatch");
  Eigen::VectorXd logits = p.mark.V_s * s_star + p.mark.b_c;
  const double top = logits.maxCoeff();
  const double lse = top + std::log((logits.array() - top).exp().sum());
  return (logits.array() - lse).matrix();
}

std::uint64_t sequence_seed(std::uint64_t seed, const Sequence& seq) {
  return derive_seed(seed, stable_hash(seq.user_id));
}

std::pair<std::size_t, std::size_t> scored_steps(const Sequence& seq, ScoreRange range) {
  const std::size_t k = seq.events.size();
  if (k < 2) return {0, 0};
  const std::size_t predictable = k - 1;
  const std::size_t boundary = std::min(seq.split_index == 0 ? 0 : seq.split_index - 1, predictable);
  switch (range) {
    case ScoreRange::train: return {0, boundary};
    case ScoreRange::test: return {boundary, predictable};
    case ScoreRange::all: return {0, predictable};
  }
  return {0, 0};
}

NllResult sequence_nll(const ModelParams& p, const Sequence& seq, ScoreRange range,
                       const FusionPolicy& fusion, bool keep_trace) {
  NllResult out;
  const auto [begin, end] = scored_steps(seq, range);
  if (begin >= end) return out;
  out.empty = false;
  const int cluster = cluster_of(p, seq);
  const std::size_t train_end = scored_steps(seq, ScoreRange::train).second;
  const bool spatial = p.spatial();

  Rng rng(sequence_seed(fusion.seed, seq));
  Eigen::VectorXd s = Eigen::VectorXd::Zero(p.dims.hidden_dim);
  if (keep_trace) {
    out.trace.inputs.reserve(end);
    out.trace.hidden.reserve(end);
    out.trace.steps.reserve(end - begin);
  }
  for (std::size_t i = 0; i < end; ++i) {
    // One draw per step from the start of the sequence, so step i always sees
    // the same z whatever range is scored.
    const double z = fusion.mode == PointMode::sample ? standard_normal(rng) : 0.0;
    const Eigen::VectorXd v =
        embed_event(p, seq.events[i].category, seq.delta_t[i], seq.delta_d[i]);
    s = rnn_step(p, s, v, seq.delta_t[i], seq.delta_d[i]);
    if (keep_trace) {
      out.trace.inputs.push_back(v);
      out.trace.hidden.push_back(s);
    }
    if (i < begin) continue;

    StepCache step;
    step.step = i;
    step.train = i < train_end;
    step.z = z;
    step.t_head = head_forward(p.t_flow, s, cluster, "t_flow");
    step.nll.time = -log_pdf(step.t_head.params(), seq.delta_t[i + 1]);
    if (spatial) {
      step.d_head = head_forward(*p.d_flow, s, cluster, "d_flow");
      step.nll.dist = -log_pdf(step.d_head.params(), seq.delta_d[i + 1]);
    }
    const HeadOutput& fh = spatial ? step.d_head : step.t_head;
    step.fusion_delta = fusion.mode == PointMode::sample
                            ? std::exp(fh.mu + std::sqrt(fh.sigma2) * z)
                            : point_estimate(fh.params(), fusion.mode);
    step.fused = fuse(p, s, step.fusion_delta);
    const Eigen::VectorXd logp = mark_log_probs(p, step.fused);
    step.nll.mark = -logp[seq.events[i + 1].category];
    const double total = step.nll.total();
    if (!std::isfinite(total)) {
      throw Error("sequence_nll: non-finite loss at step " + std::to_string(i) + " of '" +
                  seq.user_id + "'");
    }
    (step.train ? out.train_part : out.test_part) += total;
    ++out.steps;
    if (keep_trace) {
      step.probs = logp.array().exp().matrix();
      out.trace.steps.push_back(std::move(step));
    }
  }
  out.total = out.train_part + out.test_part;
  return out;
}

}  // namespace flowmob
