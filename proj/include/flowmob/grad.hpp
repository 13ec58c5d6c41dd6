#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flowmob/model.hpp"

namespace flowmob {

/// Gradients laid out exactly like ModelParams.
struct GradientSet {
  ModelParams tensors;

  static GradientSet zeros_like(const ModelParams& p);

  void add(const GradientSet& other);
  void scale(double factor);
  /// Every entry in for_each_tensor order.
  std::vector<double> flat() const;
  /// Throws Error naming the first tensor with a non-finite entry.
  void check_finite(std::string_view context) const;
};

struct SequenceGradient {
  double nll = 0.0;  // summed over scored steps
  std::size_t steps = 0;
  GradientSet grads;  // gradient of the summed nll
};

/// Exact gradient of the training-prefix NLL of one sequence. The fusion
/// delta is the reparameterized draw exp(mu + sigma z) with z from the
/// stream seeded by (seed, user id). Only the training prefix is ever scored.
SequenceGradient sequence_backward(const ModelParams& p, const Sequence& seq, std::uint64_t seed);

struct BatchGradient {
  double nll = 0.0;  // mean per scored step
  std::size_t steps = 0;
  GradientSet grads;  // gradient of the mean
};

/// Mean per-step NLL over the batch and its gradient. Per-sequence results
/// are reduced in batch order, so the output is bit-identical for any
/// thread count.
BatchGradient backward(const ModelParams& p, std::span<const Sequence* const> batch,
                       std::uint64_t seed, int threads = 1);
BatchGradient backward(const ModelParams& p, std::span<const Sequence> batch, std::uint64_t seed,
                       int threads = 1);

/// Forward-only counterpart of backward(): mean training-prefix NLL per step.
double batch_nll(const ModelParams& p, std::span<const Sequence* const> batch, std::uint64_t seed,
                 int threads = 1);

struct TensorCheck {
  std::string name;
  std::size_t size = 0;
  bool frozen = false;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  double max_abs_analytic = 0.0;
};

/// two_point: (f(x+h) - f(x-h)) / 2h, error O(h^2).
/// four_point: (8[f(x+h) - f(x-h)] - [f(x+2h) - f(x-2h)]) / 12h, error O(h^4).
enum class Stencil { two_point, four_point };

struct GradCheckReport {
  double step = 0.0;
  Stencil stencil = Stencil::two_point;
  double max_rel_error = 0.0;  // over trainable tensors
  std::vector<TensorCheck> tensors;

  std::string to_string() const;
};

/// Central differences on every scalar parameter, compared to backward().
/// Relative error uses max(|a|, |b|, 1e-8) as denominator. Frozen tensors are
/// not perturbed; their analytic gradient is reported instead.
GradCheckReport finite_diff_check(const ModelParams& p, std::span<const Sequence* const> batch,
                                  std::uint64_t seed, double step,
                                  Stencil stencil = Stencil::two_point);

}  // namespace flowmob
