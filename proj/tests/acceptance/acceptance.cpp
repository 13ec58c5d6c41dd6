// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails. Pass criterion ids (A1 ... A8) as
// arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "flowmob/checkpoint.hpp"
#include "flowmob/clusters.hpp"
#include "flowmob/eval.hpp"
#include "flowmob/grad.hpp"
#include "flowmob/io.hpp"
#include "flowmob/synth.hpp"
#include "flowmob/train.hpp"

#ifndef FLOWMOB_CLI_PATH
#define FLOWMOB_CLI_PATH "flowmob"
#endif

namespace fs = std::filesystem;
using namespace flowmob;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double x, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << x;
  return os.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

fs::path work_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("flowmob_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto start = Clock::now();
  double worst = 0.0;
  int failures = 0;
  for (std::uint64_t i = 0; i < 10; ++i) {
    ModelDims dims;
    dims.embed_dim = dims.hidden_dim = 8;
    dims.num_categories = 5;
    dims.num_clusters = 3;
    dims.spatial = i % 3 != 2;
    dims.per_cluster_weights = i % 2 == 1;
    ModelParams p = init_params(dims, 1000 + i);

    // Random biases, offsets and (for some instances) transfer anchors, so
    // that every path of the model carries a nonzero signal.
    Rng rng(derive_seed(42, i));
    std::uniform_real_distribution<double> bias(-0.5, 0.5);
    if (i % 4 == 3) {
      for (FlowHead* h : {&p.t_flow, p.d_flow ? &*p.d_flow : nullptr}) {
        if (!h) continue;
        h->transfer = true;
        h->anchor_mu = Eigen::VectorXd::NullaryExpr(3, [&] { return 2.0 * bias(rng); });
        h->anchor_rho = Eigen::VectorXd::NullaryExpr(3, [&] { return 2.0 * bias(rng); });
        h->phi = 0.5 + bias(rng);
      }
    }
    for_each_tensor(p, [&](const TensorRef<double>& t) {
      const std::string_view n = t.name;
      const bool bias_like = n.find(".b_") != std::string_view::npos ||
                             n.find("cluster_") != std::string_view::npos;
      if (bias_like && t.trainable) {
        for (double& x : t.data) x = bias(rng);
      }
    });

    SynthSpec spec = default_synth_spec(5, 0.4, 2000 + i, 1);
    spec.min_length = spec.max_length = 3;
    spec.spatial = dims.spatial;
    RegionDataset ds = generate(spec);
    ds.sequences[0].cluster = static_cast<int>(i % 3);
    const std::vector<const Sequence*> batch{&ds.sequences[0]};

    const GradCheckReport r = finite_diff_check(p, batch, i, 1e-5);
    worst = std::max(worst, r.max_rel_error);
    if (!(r.max_rel_error < 1e-4)) ++failures;
  }
  const double elapsed = seconds_since(start);
  return {failures == 0 && elapsed < 60.0,
          "10 instances, step 1e-5, max relative error " + fmt(worst, 3) + ", " +
              std::to_string(failures) + " over 1e-4, " + fmt(elapsed, 3) + " s"};
}

// ---------------------------------------------------------------------------

Outcome flow_correctness() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> mu_dist(-3, 3), s2_dist(0.01, 4), lx_dist(-6, 6);

  double worst_pdf = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double mu = mu_dist(rng), s2 = s2_dist(rng), x = std::exp(lx_dist(rng));
    const double r = std::log(x) - mu;
    const double reference = -std::log(x) - 0.5 * std::log(2.0 * M_PI * s2) - r * r / (2.0 * s2);
    worst_pdf = std::max(worst_pdf, std::abs(log_pdf({mu, s2}, x) - reference));
  }

  Rng sampler(11);
  const FlowParams p{0.4, 0.8};
  const int n = 100000;
  std::vector<double> xs(n);
  for (auto& x : xs) x = sample(p, sampler);
  std::sort(xs.begin(), xs.end());
  double ks = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = (std::log(xs[std::size_t(i)]) - p.mu) / std::sqrt(p.sigma2);
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    ks = std::max({ks, std::abs(cdf - double(i) / n), std::abs(cdf - double(i + 1) / n)});
  }

  // Simpson's rule in u = ln x over +-12 standard deviations
  double worst_mass = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const FlowParams q{mu_dist(rng), s2_dist(rng)};
    const double sd = std::sqrt(q.sigma2), a = q.mu - 12 * sd, b = q.mu + 12 * sd;
    const int panels = 4000;
    const double h = (b - a) / panels;
    auto f = [&](double u) { return std::exp(log_pdf(q, std::exp(u)) + u); };
    double sum = f(a) + f(b);
    for (int k = 1; k < panels; ++k) sum += f(a + k * h) * (k % 2 ? 4.0 : 2.0);
    worst_mass = std::max(worst_mass, std::abs(sum * h / 3.0 - 1.0));
  }

  const bool pass = worst_pdf < 1e-10 && ks < 0.01 && worst_mass < 1e-6;
  return {pass, "log-pdf max error " + fmt(worst_pdf, 3) + ", KS " + fmt(ks, 3) +
                    ", normalization error " + fmt(worst_mass, 3)};
}

// ---------------------------------------------------------------------------

TrainConfig experiment_config(std::uint64_t seed) {
  TrainConfig c;
  c.learning_rate = 1e-2;
  c.batch_size = 32;
  c.seed = seed;
  c.embed_dim = c.hidden_dim = 64;
  c.num_clusters = 3;
  return c;
}

Outcome parameter_recovery() {
  const auto start = Clock::now();
  const SynthSpec spec = default_synth_spec(10, 0.9, 31, 2000);
  RegionDataset ds = generate(spec);

  TrainConfig cfg = experiment_config(5);
  cfg.max_epochs = 40;
  cfg.patience = 8;
  const TrainResult trained = train_region(ds, cfg);
  const ModelParams& p = trained.checkpoint.params;
  assign_clusters(ds, trained.checkpoint.clusters);

  // Conditional median gap after an event of category c, in raw time units,
  // from every held-out prediction step.
  const double scale = ds.t_max - ds.t_min;
  std::vector<std::vector<double>> medians(10);
  for (const Sequence& seq : ds.sequences) {
    const NllResult r = sequence_nll(p, seq, ScoreRange::test);
    for (const StepCache& step : r.trace.steps) {
      const auto c = static_cast<std::size_t>(seq.events[step.step].category);
      medians[c].push_back(std::exp(step.t_head.mu) * scale);
    }
  }
  double worst = 0.0;
  for (std::size_t c = 0; c < 10; ++c) {
    const double truth = std::exp(spec.time[c].mu);
    worst = std::max(worst, std::abs(median(medians[c]) - truth) / truth);
  }
  const EvalResult eval = evaluate(p, ds);
  const double elapsed = seconds_since(start);
  const bool pass = worst < 0.10 && eval.mpa > 0.5 && elapsed < 600.0;
  return {pass, "worst per-category median error " + fmt(100 * worst, 3) + "%, test MPA " +
                    fmt(eval.mpa) + ", " + std::to_string(trained.curve.rows.size()) +
                    " epochs, " + fmt(elapsed, 3) + " s"};
}

// ---------------------------------------------------------------------------

Outcome transfer_advantage() {
  const auto start = Clock::now();
  const double shift_mu = 0.5;
  const SynthSpec origin_spec = default_synth_spec(10, 0.9, 101, 5000);
  TrainConfig origin_cfg = experiment_config(1);
  origin_cfg.max_epochs = 15;
  origin_cfg.patience = 5;
  const TrainResult origin = train_region(generate(origin_spec), origin_cfg);

  std::vector<double> scratch_reach, transfer_reach, scratch_e5, transfer_e5;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const RegionDataset target =
        generate(shift(default_synth_spec(10, 0.9, 200 + s, 200), shift_mu));
    // Target runs use the library's default optimizer settings and stopping rule.
    TrainConfig cfg;
    cfg.seed = 10 + s;
    cfg.num_clusters = 3;
    const TrainResult scratch = train_region(target, cfg);
    const TrainResult transfer = train_region(target, cfg, &origin.checkpoint);

    const auto& sr = scratch.curve.rows;
    const auto& tr = transfer.curve.rows;
    const auto best = std::min_element(sr.begin(), sr.end(), [](const auto& a, const auto& b) {
      return a.val_mae < b.val_mae;
    });
    scratch_reach.push_back(best->epoch);
    double reach = std::numeric_limits<double>::infinity();
    for (const auto& row : tr) {
      if (row.val_mae <= best->val_mae) {
        reach = row.epoch;
        break;
      }
    }
    transfer_reach.push_back(reach);
    scratch_e5.push_back(sr.at(4).val_mae);
    transfer_e5.push_back(tr.at(4).val_mae);
  }
  const double ms = median(scratch_reach), mt = median(transfer_reach);
  const double s5 = median(scratch_e5), t5 = median(transfer_e5);
  const bool pass = mt <= 0.5 * ms && t5 < s5;
  return {pass, "median epochs to scratch-best MAE: transfer " + fmt(mt) + " vs scratch " +
                    fmt(ms) + "; median epoch-5 MAE: transfer " + fmt(t5) + " vs scratch " +
                    fmt(s5) + "; " + fmt(seconds_since(start), 3) + " s"};
}

// ---------------------------------------------------------------------------

template <class Fn>
void for_each_own_tensor(const ModelParams& p, Fn&& fn) {
  for_each_tensor(p, [&](const TensorRef<const double>& t) {
    const std::string_view n = t.name;
    if (n.find("anchor") == std::string_view::npos && n.find("phi") == std::string_view::npos) {
      fn(t);
    }
  });
}

Outcome reduction_property() {
  SynthSpec spec = default_synth_spec(6, 0.7, 61, 300);
  spec.min_length = 10;
  spec.max_length = 20;
  const RegionDataset origin_data = generate(spec);
  const RegionDataset target = generate(shift(default_synth_spec(6, 0.7, 62, 120), 0.3));

  TrainConfig cfg = experiment_config(4);
  cfg.embed_dim = cfg.hidden_dim = 16;
  cfg.max_epochs = 6;
  const TrainResult origin = train_region(origin_data, cfg);

  TrainConfig tcfg = cfg;
  tcfg.initial_phi = 0.0;
  tcfg.freeze_phi = true;
  const TrainResult scratch = train_region(target, cfg);
  const TrainResult transfer = train_region(target, tcfg, &origin.checkpoint);

  std::vector<double> a, b;
  for_each_own_tensor(scratch.checkpoint.params,
                      [&](const auto& t) { a.insert(a.end(), t.data.begin(), t.data.end()); });
  for_each_own_tensor(transfer.checkpoint.params,
                      [&](const auto& t) { b.insert(b.end(), t.data.begin(), t.data.end()); });
  bool params_equal = a.size() == b.size() &&
                      std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
  const auto& sr = scratch.curve.rows;
  const auto& tr = transfer.curve.rows;
  bool curves_equal = sr.size() == tr.size();
  for (std::size_t i = 0; curves_equal && i < sr.size(); ++i) {
    curves_equal = std::memcmp(&sr[i], &tr[i], sizeof(CurveRow)) == 0;
  }
  const bool pass = params_equal && curves_equal && transfer.checkpoint.params.t_flow.phi == 0.0;
  return {pass, std::to_string(a.size()) + " parameters " +
                    (params_equal ? "bit-identical" : "differ") + ", " +
                    std::to_string(sr.size()) + "-epoch curves " +
                    (curves_equal ? "bit-identical" : "differ")};
}

// ---------------------------------------------------------------------------

Outcome non_spatial_mode() {
  const fs::path dir = work_dir("a6");
  SynthSpec spec = default_synth_spec(6, 0.8, 71, 400);
  spec.spatial = false;
  spec.min_length = 10;
  spec.max_length = 20;
  save_dataset(generate(spec), dir / "d.fmd");
  RegionDataset ds = load_dataset(dir / "d.fmd");

  TrainConfig cfg = experiment_config(6);
  cfg.embed_dim = cfg.hidden_dim = 32;
  cfg.max_epochs = 5;
  cfg.patience = 5;
  const TrainResult r = train_region(ds, cfg);
  bool decreasing = r.curve.rows.size() == 5;
  double prev = r.curve.initial.train_nll;
  for (const auto& row : r.curve.rows) {
    decreasing = decreasing && row.train_nll < prev - 1e-6;
    prev = row.train_nll;
  }

  save_checkpoint(r.checkpoint, dir / "m.ckpt");
  const Checkpoint back = load_checkpoint(dir / "m.ckpt");
  const nlohmann::json doc = checkpoint_to_json(back);
  std::size_t spatial_tensors = 0;
  for (const auto& item : doc.at("tensors").items()) {
    const std::string& n = item.key();
    if (n.rfind("d_flow", 0) == 0 || n == "embed.w_d" || n == "rnn.g_d") ++spatial_tensors;
  }
  const bool no_spatial = spatial_tensors == 0 && !back.params.spatial() && !back.anchors.spatial &&
                          back.anchors.d_mu.empty();

  assign_clusters(ds, back.clusters);
  const EvalResult e = evaluate(back.params, ds);
  const bool pass = decreasing && no_spatial && e.count > 0;
  return {pass, "train NLL " + fmt(r.curve.initial.train_nll) + " -> " + fmt(prev) +
                    (decreasing ? " (strictly decreasing)" : " (not decreasing)") + ", " +
                    std::to_string(spatial_tensors) + " spatial tensors in checkpoint, test MPA " +
                    fmt(e.mpa)};
}

// ---------------------------------------------------------------------------

int run(const std::string& args, const fs::path& cwd = {}) {
  const std::string prefix = cwd.empty() ? "" : "cd '" + cwd.string() + "' && ";
  const std::string cmd = prefix + FLOWMOB_CLI_PATH + " " + args + " >/dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::string capture(const std::string& args) {
  const std::string cmd = std::string(FLOWMOB_CLI_PATH) + " " + args + " 2>/dev/null";
  std::string out;
  if (FILE* pipe = popen(cmd.c_str(), "r")) {
    char buf[512];
    while (std::fgets(buf, sizeof(buf), pipe)) out += buf;
    pclose(pipe);
  }
  return out;
}

// Runs the full command-line pipeline inside `dir` (relative paths, so the
// echoed configs match across directories) and returns the produced files.
std::vector<fs::path> cli_pipeline(const fs::path& dir, int threads) {
  const std::string t = " --threads " + std::to_string(threads);
  bool ok = run("synth --seed 5 --sequences 300 --min-length 10 --max-length 20 --out origin.fmd",
                dir) == 0;
  ok = ok && run("synth --seed 6 --sequences 80 --min-length 10 --max-length 20 --shift 0.5"
                 " --out target.fmd", dir) == 0;
  ok = ok && run("train --data origin.fmd --out origin.ckpt --epochs 3 --dims 16 --lr 0.01"
                 " --seed 9 --report-dir train" + t, dir) == 0;
  ok = ok && run("transfer --origin-ckpt origin.ckpt --target target.fmd --out target.ckpt"
                 " --epochs 3 --dims 16 --lr 0.01 --seed 9 --report-dir transfer" + t, dir) == 0;
  ok = ok && run("eval --ckpt target.ckpt --data target.fmd --report-dir eval"
                 " --predict-mode sample --seed 3" + t, dir) == 0;
  if (!ok) return {};
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
  }
  std::sort(files.begin(), files.end());
  return files;
}

Outcome determinism() {
  std::vector<std::vector<fs::path>> listings;
  std::vector<fs::path> dirs;
  for (int threads : {1, 4}) {
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path dir = work_dir("a7_t" + std::to_string(threads) + "_" + std::to_string(rep));
      listings.push_back(cli_pipeline(dir, threads));
      dirs.push_back(dir);
    }
  }
  if (listings[0].empty()) return {false, "CLI pipeline failed to run (" FLOWMOB_CLI_PATH ")"};
  std::size_t compared = 0, mismatched = 0;
  for (std::size_t k = 1; k < dirs.size(); ++k) {
    if (listings[k] != listings[0]) return {false, "runs produced different file sets"};
    for (const auto& f : listings[0]) {
      ++compared;
      if (read_file_bytes(dirs[0] / f) != read_file_bytes(dirs[k] / f)) ++mismatched;
    }
  }
  return {mismatched == 0, std::to_string(listings[0].size()) +
                               " artifacts x 4 runs (threads 1 and 4, rerun each); " +
                               std::to_string(mismatched) + " of " + std::to_string(compared) +
                               " comparisons differ"};
}

// ---------------------------------------------------------------------------

Outcome metric_consistency() {
  const fs::path dir = work_dir("a8");
  const std::string d = dir.string();
  bool ok = run("synth --seed 8 --sequences 150 --min-length 10 --max-length 25 --out " + d +
                "/d.fmd") == 0;
  ok = ok && run("train --data " + d + "/d.fmd --out " + d + "/m.ckpt --epochs 3 --dims 16 --lr 0.01") == 0;
  if (!ok) return {false, "CLI pipeline failed to run"};

  double worst = 0.0;
  std::size_t rows = 0;
  for (const std::string mode : {"mean", "median", "sample"}) {
    const std::string out = capture("eval --ckpt " + d + "/m.ckpt --data " + d + "/d.fmd --report-dir " +
                                    d + "/" + mode + " --predict-mode " + mode);
    double mpa = 0.0, mae = 0.0;
    if (std::sscanf(out.c_str(), "MPA=%lf MAE=%lf", &mpa, &mae) != 2) {
      return {false, "could not parse eval output '" + out + "'"};
    }
    std::ifstream in(dir / mode / "predictions.csv");
    std::stringstream text;
    text << in.rdbuf();
    const auto parsed = parse_predictions_csv(text.str());
    rows += parsed.size();
    double abs_sum = 0.0, hits = 0.0;
    for (const auto& r : parsed) {
      abs_sum += std::abs(r.true_time - r.pred_time);
      hits += r.true_category == r.pred_category ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(parsed.size());
    worst = std::max({worst, std::abs(abs_sum / n - mae), std::abs(hits / n - mpa)});
  }
  return {worst <= 1e-9 && rows > 0,
          std::to_string(rows) + " rows over 3 prediction modes, max deviation " + fmt(worst, 3)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"A1", gradient_correctness}, {"A2", flow_correctness},   {"A3", parameter_recovery},
      {"A4", transfer_advantage},   {"A5", reduction_property}, {"A6", non_spatial_mode},
      {"A7", determinism},          {"A8", metric_consistency},
  };
  std::set<std::string> selected(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [id, check] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << id << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
