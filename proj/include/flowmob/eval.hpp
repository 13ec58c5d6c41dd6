#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "flowmob/model.hpp"

namespace flowmob {

struct Prediction {
  int category = 0;
  double time = 0.0;      // t_last + predicted delta
  double delta_t = 0.0;
  double distance = 0.0;  // predicted travel distance, 0 when non-spatial
};

/// Next-event prediction from a hidden state. The fusion delta is the
/// predicted distance (spatial) or predicted time gap (non-spatial); the
/// category is the argmax of the mark distribution on the fused state, ties
/// going to the smallest id. In sample mode the time draw precedes the
/// distance draw.
Prediction predict_from_state(const ModelParams& p, const Eigen::VectorXd& s, int cluster,
                              double t_last, PointMode mode, Rng* rng);

/// Rolls the recurrence over events[0, prefix_len) and predicts event
/// prefix_len.
Prediction predict_next(const ModelParams& p, const Sequence& seq, std::size_t prefix_len,
                        int cluster, PointMode mode = PointMode::mean, std::uint64_t seed = 0);

struct EvalOptions {
  PointMode mode = PointMode::mean;
  std::uint64_t seed = 0;
  int threads = 1;
  bool rollout = false;  // feed predictions back instead of the true history
};

/// One scored event. `step` is the index of the predicted event.
struct PredictionRow {
  std::size_t sequence = 0;
  std::size_t step = 0;
  double true_time = 0.0;
  double pred_time = 0.0;
  double true_dt = 0.0;
  double pred_dt = 0.0;
  int true_category = 0;
  int pred_category = 0;
};

struct EvalResult {
  double mae = 0.0;  // normalized time units
  double mpa = 0.0;
  std::size_t count = 0;
  std::vector<PredictionRow> rows;
};

/// One-step-ahead predictions for the scored steps of the listed sequences.
/// Returns zero metrics when nothing is scored.
EvalResult evaluate_range(const ModelParams& p, const RegionDataset& ds,
                          std::span<const std::size_t> indices, ScoreRange range,
                          const EvalOptions& options);

/// Test-suffix evaluation over every sequence. Throws on an empty test set.
EvalResult evaluate(const ModelParams& p, const RegionDataset& ds, const EvalOptions& options = {});

/// Recomputes MAE/MPA from rows alone.
EvalResult summarize_rows(std::vector<PredictionRow> rows);

struct CurveRow {
  int epoch = 0;
  double train_nll = 0.0;
  double val_nll = 0.0;
  double val_mae = 0.0;
};

std::string curve_csv(std::span<const CurveRow> rows);
std::string predictions_csv(std::span<const PredictionRow> rows);
std::vector<CurveRow> parse_curve_csv(const std::string& text);
std::vector<PredictionRow> parse_predictions_csv(const std::string& text);

struct ReportPaths {
  std::filesystem::path curve;
  std::filesystem::path predictions;
};

/// Writes curve.csv and predictions.csv under out_dir (created if missing).
/// Either input may be empty, in which case that file is skipped.
ReportPaths emit_reports(std::span<const CurveRow> curve, std::span<const PredictionRow> rows,
                         const std::filesystem::path& out_dir);

std::string summary_line(const EvalResult& r);

}  // namespace flowmob
