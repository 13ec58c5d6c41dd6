#include "flowmob/grad.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "flowmob/parallel.hpp"

namespace flowmob {

namespace {

int cluster_index(const ModelParams& p, const Sequence& seq) {
  if (seq.cluster < 0 && p.dims.num_clusters == 1) return 0;
  return seq.cluster;  // sequence_nll has already rejected anything invalid
}

// d(-log_pdf)/d(mu) and d(-log_pdf)/d(sigma2) of the log-normal at x.
struct LogNormalGrad {
  double mu = 0.0;
  double sigma2 = 0.0;
};

LogNormalGrad nll_grad(const HeadOutput& h, double x) {
  const double r = std::log(x) - h.mu;
  return {-r / h.sigma2, 0.5 / h.sigma2 - r * r / (2.0 * h.sigma2 * h.sigma2)};
}

void head_backward(const FlowHead& head, FlowHead& grad, const Eigen::VectorXd& s, int cluster,
                   double g_mu, double g_rho, Eigen::VectorXd& g_s) {
  const Eigen::Index col = head.weight_column(cluster);
  grad.w_mu.col(col) += g_mu * s;
  grad.b_mu += g_mu;
  grad.cluster_mu[cluster] += g_mu;
  grad.w_rho.col(col) += g_rho * s;
  grad.b_rho += g_rho;
  grad.cluster_rho[cluster] += g_rho;
  if (head.transfer && head.phi_trainable) {
    grad.phi += g_mu * head.anchor_mu[cluster] + g_rho * head.anchor_rho[cluster];
  }
  g_s += g_mu * head.w_mu.col(col) + g_rho * head.w_rho.col(col);
}

void require_finite(double value, std::string_view group, std::size_t step,
                    const Sequence& seq) {
  if (!std::isfinite(value)) {
    throw Error("backward: non-finite gradient in " + std::string(group) + " at step " +
                std::to_string(step) + " of '" + seq.user_id + "'");
  }
}

}  // namespace

GradientSet GradientSet::zeros_like(const ModelParams& p) {
  GradientSet g{p};
  for_each_tensor(g.tensors, [](const TensorRef<double>& t) {
    std::fill(t.data.begin(), t.data.end(), 0.0);
  });
  return g;
}

void GradientSet::add(const GradientSet& other) {
  std::vector<std::span<const double>> src;
  for_each_tensor(other.tensors, [&](const TensorRef<const double>& t) { src.push_back(t.data); });
  std::size_t i = 0;
  for_each_tensor(tensors, [&](const TensorRef<double>& t) {
    const auto& o = src.at(i++);
    if (o.size() != t.data.size()) throw Error("GradientSet::add: shape mismatch in " +
                                               std::string(t.name));
    for (std::size_t k = 0; k < t.data.size(); ++k) t.data[k] += o[k];
  });
  if (i != src.size()) throw Error("GradientSet::add: layout mismatch");
}

void GradientSet::scale(double factor) {
  for_each_tensor(tensors, [&](const TensorRef<double>& t) {
    for (double& x : t.data) x *= factor;
  });
}

std::vector<double> GradientSet::flat() const {
  std::vector<double> out;
  for_each_tensor(tensors, [&](const TensorRef<const double>& t) {
    out.insert(out.end(), t.data.begin(), t.data.end());
  });
  return out;
}

void GradientSet::check_finite(std::string_view context) const {
  for_each_tensor(tensors, [&](const TensorRef<const double>& t) {
    for (double x : t.data) {
      if (!std::isfinite(x)) {
        throw Error(std::string(context) + ": non-finite gradient in " + std::string(t.name));
      }
    }
  });
}

SequenceGradient sequence_backward(const ModelParams& p, const Sequence& seq, std::uint64_t seed) {
  SequenceGradient out{0.0, 0, GradientSet::zeros_like(p)};
  const NllResult fwd =
      sequence_nll(p, seq, ScoreRange::train, FusionPolicy{PointMode::sample, seed}, true);
  if (fwd.empty) return out;
  out.nll = fwd.total;
  out.steps = fwd.steps;

  ModelParams& g = out.grads.tensors;
  const int cluster = cluster_index(p, seq);
  const bool spatial = p.spatial();
  const Eigen::Index H = p.dims.hidden_dim;
  const auto& hidden = fwd.trace.hidden;
  const auto& inputs = fwd.trace.inputs;
  std::vector<Eigen::VectorXd> g_hidden(hidden.size(), Eigen::VectorXd::Zero(H));

  for (const StepCache& st : fwd.trace.steps) {
    const std::size_t i = st.step;
    const Eigen::VectorXd& s = hidden[i];

    // Mark head: softmax cross-entropy.
    Eigen::VectorXd g_logits = st.probs;
    g_logits[seq.events[i + 1].category] -= 1.0;
    g.mark.V_s.noalias() += g_logits * st.fused.transpose();
    g.mark.b_c += g_logits;
    const Eigen::VectorXd g_fused = p.mark.V_s.transpose() * g_logits;

    // Fusion s* = s + alpha * w_f * x.
    const double wf_dot = p.fuse.w_f.dot(g_fused);
    g.fuse.alpha += wf_dot * st.fusion_delta;
    g.fuse.w_f += (p.fuse.alpha * st.fusion_delta) * g_fused;
    g_hidden[i] += g_fused;
    const double g_x = p.fuse.alpha * wf_dot;
    // x = exp(mu + sqrt(sigma2) z): dx/dmu = x, dx/dsigma2 = x z / (2 sqrt(sigma2)).
    const HeadOutput& fh = spatial ? st.d_head : st.t_head;
    const double fuse_g_mu = g_x * st.fusion_delta;
    const double fuse_g_sigma2 = g_x * st.fusion_delta * st.z / (2.0 * std::sqrt(fh.sigma2));

    LogNormalGrad tg = nll_grad(st.t_head, seq.delta_t[i + 1]);
    if (!spatial) {
      tg.mu += fuse_g_mu;
      tg.sigma2 += fuse_g_sigma2;
    }
    const double t_rho = tg.sigma2 * sigmoid(st.t_head.rho);
    require_finite(tg.mu, "t_flow", i, seq);
    require_finite(t_rho, "t_flow", i, seq);
    head_backward(p.t_flow, g.t_flow, s, cluster, tg.mu, t_rho, g_hidden[i]);

    if (spatial) {
      LogNormalGrad dg = nll_grad(st.d_head, seq.delta_d[i + 1]);
      dg.mu += fuse_g_mu;
      dg.sigma2 += fuse_g_sigma2;
      const double d_rho = dg.sigma2 * sigmoid(st.d_head.rho);
      require_finite(dg.mu, "d_flow", i, seq);
      require_finite(d_rho, "d_flow", i, seq);
      head_backward(*p.d_flow, *g.d_flow, s, cluster, dg.mu, d_rho, g_hidden[i]);
    }
    require_finite(g_x, "fuse", i, seq);
  }

  // Backpropagation through time, newest event first.
  Eigen::VectorXd carry = Eigen::VectorXd::Zero(H);
  for (std::size_t idx = hidden.size(); idx-- > 0;) {
    const Eigen::VectorXd& s = hidden[idx];
    const Eigen::VectorXd g_pre =
        ((g_hidden[idx] + carry).array() * (1.0 - s.array().square())).matrix();
    if (idx > 0) g.rnn.G_s.noalias() += g_pre * hidden[idx - 1].transpose();
    g.rnn.G_v.noalias() += g_pre * inputs[idx].transpose();
    const double dt = seq.delta_t[idx];
    const double dd = seq.delta_d[idx];
    g.rnn.g_t += dt * g_pre;
    if (spatial) g.rnn.g_d += dd * g_pre;
    g.rnn.b_s += g_pre;

    const Eigen::VectorXd g_v = p.rnn.G_v.transpose() * g_pre;
    g.embed.W_c.col(seq.events[idx].category) += g_v;
    g.embed.w_t += dt * g_v;
    if (spatial) g.embed.w_d += dd * g_v;
    g.embed.b_v += g_v;
    carry.noalias() = p.rnn.G_s.transpose() * g_pre;
    require_finite(carry.sum(), "rnn", idx, seq);
  }
  return out;
}

BatchGradient backward(const ModelParams& p, std::span<const Sequence* const> batch,
                       std::uint64_t seed, int threads) {
  if (batch.empty()) throw Error("backward: empty batch");
  std::vector<SequenceGradient> parts(batch.size());
  parallel_for(batch.size(), threads,
               [&](std::size_t i) { parts[i] = sequence_backward(p, *batch[i], seed); });

  BatchGradient out{0.0, 0, GradientSet::zeros_like(p)};
  double total = 0.0;
  for (const auto& part : parts) {
    total += part.nll;
    out.steps += part.steps;
    out.grads.add(part.grads);
  }
  if (out.steps > 0) {
    out.nll = total / static_cast<double>(out.steps);
    out.grads.scale(1.0 / static_cast<double>(out.steps));
  }
  out.grads.check_finite("backward");
  return out;
}

BatchGradient backward(const ModelParams& p, std::span<const Sequence> batch, std::uint64_t seed,
                       int threads) {
  std::vector<const Sequence*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& s : batch) ptrs.push_back(&s);
  return backward(p, std::span<const Sequence* const>(ptrs), seed, threads);
}

double batch_nll(const ModelParams& p, std::span<const Sequence* const> batch, std::uint64_t seed,
                 int threads) {
  std::vector<NllResult> parts(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    parts[i] = sequence_nll(p, *batch[i], ScoreRange::train, FusionPolicy{PointMode::sample, seed},
                            false);
  });
  double total = 0.0;
  std::size_t steps = 0;
  for (const auto& r : parts) {
    total += r.total;
    steps += r.steps;
  }
  return steps > 0 ? total / static_cast<double>(steps) : 0.0;
}

GradCheckReport finite_diff_check(const ModelParams& p, std::span<const Sequence* const> batch,
                                  std::uint64_t seed, double step, Stencil stencil) {
  GradCheckReport report;
  report.step = step;
  report.stencil = stencil;
  const std::vector<double> analytic = backward(p, batch, seed, 1).grads.flat();

  ModelParams probe = p;
  std::size_t offset = 0;
  for_each_tensor(probe, [&](const TensorRef<double>& t) {
    TensorCheck check;
    check.name = std::string(t.name);
    check.size = t.data.size();
    check.frozen = !t.trainable;
    for (std::size_t k = 0; k < t.data.size(); ++k) {
      const double a = analytic[offset + k];
      check.max_abs_analytic = std::max(check.max_abs_analytic, std::abs(a));
      if (check.frozen) continue;
      const double saved = t.data[k];
      auto f = [&](double offset_steps) {
        t.data[k] = saved + offset_steps * step;
        return batch_nll(probe, batch, seed);
      };
      double numeric = 0.0;
      if (stencil == Stencil::two_point) {
        numeric = (f(1) - f(-1)) / (2.0 * step);
      } else {
        numeric = (8.0 * (f(1) - f(-1)) - (f(2) - f(-2))) / (12.0 * step);
      }
      t.data[k] = saved;
      const double abs_err = std::abs(a - numeric);
      const double rel_err = abs_err / std::max({std::abs(a), std::abs(numeric), 1e-8});
      check.max_abs_error = std::max(check.max_abs_error, abs_err);
      check.max_rel_error = std::max(check.max_rel_error, rel_err);
    }
    offset += t.data.size();
    if (!check.frozen) report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.tensors.push_back(std::move(check));
  });
  return report;
}

std::string GradCheckReport::to_string() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-20s %8s %14s %14s\n", "tensor", "size", "max_rel_err",
                "max_abs_err");
  os << line;
  for (const auto& t : tensors) {
    if (t.frozen) {
      std::snprintf(line, sizeof(line), "%-20s %8zu %14s %14.3e  (frozen, |analytic| max)\n",
                    t.name.c_str(), t.size, "-", t.max_abs_analytic);
    } else {
      std::snprintf(line, sizeof(line), "%-20s %8zu %14.3e %14.3e\n", t.name.c_str(), t.size,
                    t.max_rel_error, t.max_abs_error);
    }
    os << line;
  }
  std::snprintf(line, sizeof(line), "step=%.3g stencil=%d max_rel_error=%.6e\n", step,
                stencil == Stencil::two_point ? 2 : 4, max_rel_error);
  os << line;
  return os.str();
}

}  // namespace flowmob
