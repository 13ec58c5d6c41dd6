#include "flowmob/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "flowmob/io.hpp"
#include "flowmob/parallel.hpp"

namespace flowmob {

namespace {

int resolve_cluster(const ModelParams& p, const Sequence& seq) {
  if (seq.cluster >= 0 && seq.cluster < p.dims.num_clusters) return seq.cluster;
  if (seq.cluster < 0 && p.dims.num_clusters == 1) return 0;
  throw Error("sequence '" + seq.user_id + "' has no valid cluster assignment");
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
T parse_number(std::string_view s) {
  T value{};
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw Error("csv: cannot parse '" + std::string(s) + "'");
  }
  return value;
}

std::vector<std::vector<std::string_view>> csv_records(const std::string& text,
                                                       std::string_view header,
                                                       std::size_t columns) {
  std::vector<std::vector<std::string_view>> out;
  std::string_view rest(text);
  bool first = true;
  while (!rest.empty()) {
    const std::size_t nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view() : rest.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (first) {
      if (line != header) throw Error("csv: unexpected header '" + std::string(line) + "'");
      first = false;
      continue;
    }
    if (line.empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != columns) throw Error("csv: wrong column count");
    out.push_back(std::move(fields));
  }
  if (first) throw Error("csv: missing header");
  return out;
}

constexpr std::string_view kCurveHeader = "epoch,train_nll,val_nll,val_mae";
constexpr std::string_view kPredictionHeader =
    "sequence,step,true_time,pred_time,true_dt,pred_dt,true_category,pred_category";

}  // namespace

Prediction predict_from_state(const ModelParams& p, const Eigen::VectorXd& s, int cluster,
                              double t_last, PointMode mode, Rng* rng) {
  Prediction out;
  const FlowParams tp = head_params(p.t_flow, s, cluster);
  out.delta_t = point_estimate(tp, mode, rng);
  out.time = t_last + out.delta_t;
  if (p.d_flow) out.distance = point_estimate(head_params(*p.d_flow, s, cluster), mode, rng);
  const double fusion_delta = p.d_flow ? out.distance : out.delta_t;
  const Eigen::VectorXd logp = mark_log_probs(p, fuse(p, s, fusion_delta));
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < logp.size(); ++c) {
    if (logp[c] > logp[best]) best = c;
  }
  out.category = static_cast<int>(best);
  return out;
}

Prediction predict_next(const ModelParams& p, const Sequence& seq, std::size_t prefix_len,
                        int cluster, PointMode mode, std::uint64_t seed) {
  if (prefix_len == 0 || prefix_len > seq.events.size()) {
    throw Error("predict_next: prefix length must be in [1, " +
                std::to_string(seq.events.size()) + "]");
  }
  Eigen::VectorXd s = Eigen::VectorXd::Zero(p.dims.hidden_dim);
  for (std::size_t i = 0; i < prefix_len; ++i) {
    s = rnn_step(p, s, embed_event(p, seq.events[i].category, seq.delta_t[i], seq.delta_d[i]),
                 seq.delta_t[i], seq.delta_d[i]);
  }
  Rng rng(sequence_seed(seed, seq));
  return predict_from_state(p, s, cluster, seq.events[prefix_len - 1].time, mode, &rng);
}

EvalResult summarize_rows(std::vector<PredictionRow> rows) {
  EvalResult r;
  r.count = rows.size();
  double abs_sum = 0.0;
  std::size_t hits = 0;
  for (const auto& row : rows) {
    abs_sum += std::abs(row.true_time - row.pred_time);
    hits += row.true_category == row.pred_category ? 1 : 0;
  }
  if (r.count > 0) {
    r.mae = abs_sum / static_cast<double>(r.count);
    r.mpa = static_cast<double>(hits) / static_cast<double>(r.count);
  }
  r.rows = std::move(rows);
  return r;
}

EvalResult evaluate_range(const ModelParams& p, const RegionDataset& ds,
                          std::span<const std::size_t> indices, ScoreRange range,
                          const EvalOptions& options) {
  if (ds.num_categories != p.dims.num_categories) {
    throw Error("evaluate: vocabulary mismatch (model " + std::to_string(p.dims.num_categories) +
                ", dataset " + std::to_string(ds.num_categories) + ")");
  }
  std::vector<std::vector<PredictionRow>> parts(indices.size());
  parallel_for(indices.size(), options.threads, [&](std::size_t n) {
    const std::size_t idx = indices[n];
    const Sequence& seq = ds.sequences.at(idx);
    const auto [begin, end] = scored_steps(seq, range);
    if (begin >= end) return;
    const int cluster = resolve_cluster(p, seq);
    Rng rng(sequence_seed(options.seed, seq));
    Eigen::VectorXd s = Eigen::VectorXd::Zero(p.dims.hidden_dim);
    Prediction prev;
    auto& rows = parts[n];
    rows.reserve(end - begin);
    for (std::size_t i = 0; i < end; ++i) {
      const bool predicted_input = options.rollout && i > begin;
      const int cat = predicted_input ? prev.category : seq.events[i].category;
      const double dt = predicted_input ? prev.delta_t : seq.delta_t[i];
      const double dd =
          predicted_input ? std::max(prev.distance, kDistanceFloorKm) : seq.delta_d[i];
      s = rnn_step(p, s, embed_event(p, cat, dt, dd), dt, dd);
      if (i < begin) continue;
      const double t_last = predicted_input ? prev.time : seq.events[i].time;
      prev = predict_from_state(p, s, cluster, t_last, options.mode, &rng);
      rows.push_back({idx, i + 1, seq.events[i + 1].time, prev.time, seq.delta_t[i + 1],
                      prev.delta_t, seq.events[i + 1].category, prev.category});
    }
  });
  std::vector<PredictionRow> all;
  for (auto& part : parts) all.insert(all.end(), part.begin(), part.end());
  return summarize_rows(std::move(all));
}

EvalResult evaluate(const ModelParams& p, const RegionDataset& ds, const EvalOptions& options) {
  std::vector<std::size_t> indices(ds.sequences.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  EvalResult r = evaluate_range(p, ds, indices, ScoreRange::test, options);
  if (r.count == 0) throw Error("evaluate: the dataset has no test events");
  return r;
}

std::string curve_csv(std::span<const CurveRow> rows) {
  std::ostringstream os;
  os << kCurveHeader << '\n';
  for (const auto& r : rows) {
    os << r.epoch << ',' << format_double(r.train_nll) << ',' << format_double(r.val_nll) << ','
       << format_double(r.val_mae) << '\n';
  }
  return os.str();
}

std::string predictions_csv(std::span<const PredictionRow> rows) {
  std::ostringstream os;
  os << kPredictionHeader << '\n';
  for (const auto& r : rows) {
    os << r.sequence << ',' << r.step << ',' << format_double(r.true_time) << ','
       << format_double(r.pred_time) << ',' << format_double(r.true_dt) << ','
       << format_double(r.pred_dt) << ',' << r.true_category << ',' << r.pred_category << '\n';
  }
  return os.str();
}

std::vector<CurveRow> parse_curve_csv(const std::string& text) {
  std::vector<CurveRow> out;
  for (const auto& f : csv_records(text, kCurveHeader, 4)) {
    out.push_back({parse_number<int>(f[0]), parse_number<double>(f[1]),
                   parse_number<double>(f[2]), parse_number<double>(f[3])});
  }
  return out;
}

std::vector<PredictionRow> parse_predictions_csv(const std::string& text) {
  std::vector<PredictionRow> out;
  for (const auto& f : csv_records(text, kPredictionHeader, 8)) {
    out.push_back({parse_number<std::size_t>(f[0]), parse_number<std::size_t>(f[1]),
                   parse_number<double>(f[2]), parse_number<double>(f[3]),
                   parse_number<double>(f[4]), parse_number<double>(f[5]),
                   parse_number<int>(f[6]), parse_number<int>(f[7])});
  }
  return out;
}

ReportPaths emit_reports(std::span<const CurveRow> curve, std::span<const PredictionRow> rows,
                         const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("emit_reports: cannot create '" + out_dir.string() + "': " + ec.message());
  ReportPaths paths;
  if (!curve.empty()) {
    paths.curve = out_dir / "curve.csv";
    write_text_file(paths.curve, curve_csv(curve));
  }
  if (!rows.empty()) {
    paths.predictions = out_dir / "predictions.csv";
    write_text_file(paths.predictions, predictions_csv(rows));
  }
  return paths;
}

std::string summary_line(const EvalResult& r) {
  return "MPA=" + format_double(r.mpa) + " MAE=" + format_double(r.mae);
}

}  // namespace flowmob
