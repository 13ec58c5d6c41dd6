#include "flowmob/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flowmob/clusters.hpp"
#include "flowmob/eval.hpp"
#include "flowmob/io.hpp"
#include "flowmob/synth.hpp"
#include "flowmob/train.hpp"

namespace flowmob {

namespace {

// Values of the options shared by train and transfer. Each is only applied
// when the flag was given, so a config file can sit underneath.
struct TrainFlags {
  int dims = 64;
  int clusters = 3;
  double lr = 1e-3;
  std::size_t batch = 32;
  int epochs = 100;
  int patience = 10;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string predict_mode = "mean";
  std::string config_file;
  std::string report_dir;
  bool non_spatial = false;
  bool per_cluster_weights = false;
  std::vector<CLI::Option*> opts;

  void attach(CLI::App* cmd) {
    opts = {
        cmd->add_option("--dims", dims, "Embedding and hidden dimension")->check(CLI::PositiveNumber),
        cmd->add_option("--clusters", clusters, "Number of median-time clusters (M)")
            ->check(CLI::PositiveNumber),
        cmd->add_option("--lr", lr, "Adam learning rate")->check(CLI::NonNegativeNumber),
        cmd->add_option("--batch", batch, "Sequences per mini-batch")->check(CLI::PositiveNumber),
        cmd->add_option("--epochs", epochs, "Maximum epochs")->check(CLI::NonNegativeNumber),
        cmd->add_option("--patience", patience, "Early-stopping patience in epochs")
            ->check(CLI::PositiveNumber),
        cmd->add_option("--seed", seed, "Random seed"),
        cmd->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber),
        cmd->add_option("--predict-mode", predict_mode, "Point estimate: mean, median or sample")
            ->check(CLI::IsMember({"mean", "median", "sample"})),
        cmd->add_flag("--per-cluster-weights", per_cluster_weights,
                      "Independent flow weights per cluster"),
    };
    cmd->add_option("--config", config_file, "JSON file with training settings")
        ->check(CLI::ExistingFile);
    cmd->add_option("--report-dir", report_dir, "Directory for curve.csv and run.json");
    cmd->add_flag("--non-spatial", non_spatial, "Drop the distance channel (temporal fusion)");
  }

  bool given(std::size_t i) const { return opts[i]->count() > 0; }

  TrainConfig resolve() const {
    TrainConfig c;
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw Error("config file '" + config_file + "': " + e.what());
      }
      c = TrainConfig::from_json(j, c);
    }
    if (given(0)) c.embed_dim = c.hidden_dim = dims;
    if (given(1)) c.num_clusters = clusters;
    if (given(2)) c.learning_rate = lr;
    if (given(3)) c.batch_size = batch;
    if (given(4)) c.max_epochs = epochs;
    if (given(5)) c.patience = patience;
    if (given(6)) c.seed = seed;
    if (given(7)) c.threads = threads;
    if (given(8)) c.eval_mode = parse_point_mode(predict_mode);
    if (given(9)) c.per_cluster_weights = per_cluster_weights;
    c.validate();
    return c;
  }
};

void log_run(std::ostream& err, std::string_view command, const nlohmann::json& config) {
  err << "[flowmob] version=" << build_version() << " command=" << command
      << " config=" << config.dump() << '\n';
}

RegionDataset load_for_training(const std::string& path, bool non_spatial) {
  RegionDataset ds = load_dataset(path);
  return non_spatial ? without_distances(std::move(ds)) : ds;
}

void write_run_json(const std::string& dir, std::string_view command, const nlohmann::json& config) {
  std::filesystem::create_directories(dir);
  nlohmann::json run = {{"command", std::string(command)},
                        {"config", config},
                        {"build_version", std::string(build_version())}};
  write_text_file(std::filesystem::path(dir) / "run.json", run.dump(2) + "\n");
}

int finish_training(const TrainResult& result, const std::string& out_path,
                    const std::string& report_dir, std::string_view command,
                    const TrainConfig& config, std::ostream& out, std::ostream& err) {
  save_checkpoint(result.checkpoint, out_path);
  if (!report_dir.empty()) {
    emit_reports(result.curve.rows, {}, report_dir);
    write_run_json(report_dir, command, config.to_json());
  }
  const auto& curve = result.curve;
  out << "epochs=" << curve.rows.size() << " best_epoch=" << curve.best_epoch
      << " best_val_nll=" << format_double(result.checkpoint.provenance.at("best_val_nll").get<double>())
      << '\n';
  if (curve.diverged) {
    err << "[flowmob] training diverged (" << curve.divergence
        << "); wrote the last good checkpoint\n";
    return 3;
  }
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Recurrent log-normal flow point process with cross-region flow transfer"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(build_version()));

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Build a dataset from delimited check-in records");
  std::string ingest_input, ingest_out, delimiter = ",";
  IngestConfig icfg;
  bool ingest_non_spatial = false;
  ingest_cmd->add_option("--input", ingest_input, "Check-in file (- for stdin)")->required();
  ingest_cmd->add_option("--out", ingest_out, "Dataset file to write")->required();
  ingest_cmd->add_option("--delimiter", delimiter, "Field delimiter (use \\t for tab)");
  ingest_cmd->add_flag("--header", icfg.has_header, "Skip the first line");
  ingest_cmd->add_option("--user-col", icfg.user_column, "Column of the user id");
  ingest_cmd->add_option("--category-col", icfg.category_column, "Column of the category");
  ingest_cmd->add_option("--time-col", icfg.timestamp_column, "Column of the epoch timestamp");
  ingest_cmd->add_option("--lat-col", icfg.latitude_column, "Column of the latitude");
  ingest_cmd->add_option("--lon-col", icfg.longitude_column, "Column of the longitude");
  ingest_cmd->add_option("--min-length", icfg.min_length, "Drop users with fewer check-ins");
  ingest_cmd->add_flag("--non-spatial", ingest_non_spatial, "Records carry no coordinates");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic ground-truth dataset");
  std::string synth_out;
  std::uint64_t synth_seed = 0;
  std::size_t synth_sequences = 1000, synth_min = 20, synth_max = 40;
  int synth_categories = 10;
  double synth_self = 0.9, synth_shift = 0.0;
  bool synth_non_spatial = false;
  synth_cmd->add_option("--out", synth_out, "Dataset file to write")->required();
  synth_cmd->add_option("--seed", synth_seed, "Generator seed");
  synth_cmd->add_option("--sequences", synth_sequences, "Number of sequences");
  synth_cmd->add_option("--categories", synth_categories, "Number of categories")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--self-weight", synth_self, "Self-transition probability")
      ->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--min-length", synth_min, "Minimum sequence length");
  synth_cmd->add_option("--max-length", synth_max, "Maximum sequence length");
  synth_cmd->add_option("--shift", synth_shift, "Offset added to every log-gap mean");
  synth_cmd->add_flag("--non-spatial", synth_non_spatial, "No travel distances");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train on an origin region");
  TrainFlags train_flags;
  std::string train_data, train_out;
  train_cmd->add_option("--origin,--data", train_data, "Dataset file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_out, "Checkpoint to write")->required();
  train_flags.attach(train_cmd);

  // transfer
  auto* transfer_cmd = app.add_subcommand("transfer", "Fine-tune on a target region from an origin checkpoint");
  TrainFlags transfer_flags;
  std::string origin_ckpt, target_data, transfer_out;
  double phi = 0.5;
  bool freeze_phi = false, warm_start = false;
  transfer_cmd->add_option("--origin-ckpt", origin_ckpt, "Origin checkpoint")->required()->check(CLI::ExistingFile);
  transfer_cmd->add_option("--target", target_data, "Target dataset")->required()->check(CLI::ExistingFile);
  transfer_cmd->add_option("--out", transfer_out, "Checkpoint to write")->required();
  auto* phi_opt = transfer_cmd->add_option("--phi", phi, "Initial attention on the origin anchors");
  auto* freeze_opt = transfer_cmd->add_flag("--freeze-phi", freeze_phi, "Keep phi fixed");
  auto* warm_opt = transfer_cmd->add_flag("--warm-start", warm_start, "Copy the origin recurrent trunk");
  transfer_flags.attach(transfer_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate next-event prediction on the test suffixes");
  std::string eval_ckpt, eval_data, eval_reports, eval_mode = "mean";
  std::uint64_t eval_seed = 0;
  int eval_threads = 1;
  bool eval_rollout = false;
  eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval_data, "Dataset")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--report-dir", eval_reports, "Directory for predictions.csv");
  eval_cmd->add_option("--predict-mode", eval_mode, "mean, median or sample")
      ->check(CLI::IsMember({"mean", "median", "sample"}));
  eval_cmd->add_option("--seed", eval_seed, "Seed for sample mode");
  eval_cmd->add_option("--threads", eval_threads, "Worker threads")->check(CLI::PositiveNumber);
  eval_cmd->add_flag("--rollout", eval_rollout, "Feed predictions back instead of true history");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Predict the event after a sequence prefix");
  std::string pred_ckpt, pred_data, pred_mode = "mean";
  std::size_t pred_index = 0, pred_prefix = 0;
  std::uint64_t pred_seed = 0;
  predict_cmd->add_option("--ckpt", pred_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--data", pred_data, "Dataset")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--sequence", pred_index, "Sequence index");
  predict_cmd->add_option("--prefix", pred_prefix, "Prefix length (default: training prefix)");
  predict_cmd->add_option("--predict-mode", pred_mode, "mean, median or sample")
      ->check(CLI::IsMember({"mean", "median", "sample"}));
  predict_cmd->add_option("--seed", pred_seed, "Seed for sample mode");

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients to finite differences");
  std::uint64_t gc_seed = 0;
  int gc_dims = 8, gc_categories = 4, gc_clusters = 3, gc_stencil = 2;
  std::size_t gc_sequences = 1, gc_length = 3;
  std::vector<double> gc_steps;
  bool gc_non_spatial = false;
  std::string gc_ckpt, gc_data;
  grad_cmd->add_option("--seed", gc_seed, "Seed for parameters and data");
  grad_cmd->add_option("--dims", gc_dims, "Embedding and hidden dimension")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--categories", gc_categories, "Vocabulary size")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--clusters", gc_clusters, "Number of clusters")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--sequences", gc_sequences, "Synthetic sequences in the batch");
  grad_cmd->add_option("--length", gc_length, "Events per synthetic sequence");
  grad_cmd->add_option("--step", gc_steps, "Finite-difference step (repeatable)")
      ->check(CLI::Range(1e-8, 1e-3));
  grad_cmd->add_option("--stencil", gc_stencil, "Central-difference points: 2 or 4")
      ->check(CLI::IsMember({2, 4}));
  grad_cmd->add_flag("--non-spatial", gc_non_spatial, "Check the temporal-fusion variant");
  grad_cmd->add_option("--ckpt", gc_ckpt, "Use this checkpoint's parameters")->check(CLI::ExistingFile);
  grad_cmd->add_option("--data", gc_data, "Use sequences from this dataset")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*ingest_cmd) {
      icfg.delimiter = delimiter == "\\t" ? '\t' : delimiter.empty() ? ',' : delimiter[0];
      icfg.spatial = !ingest_non_spatial;
      IngestReport report;
      RegionDataset ds;
      if (ingest_input == "-") {
        ds = ingest(std::cin, icfg, &report);
      } else {
        std::ifstream in(ingest_input);
        if (!in) throw Error("cannot open '" + ingest_input + "'");
        ds = ingest(in, icfg, &report);
      }
      log_run(err, "ingest", ds.provenance);
      save_dataset(ds, ingest_out);
      out << "accepted=" << report.accepted << " rejected=" << report.rejected
          << " dropped_short=" << report.dropped_short_sequences
          << " sequences=" << ds.sequences.size() << " categories=" << ds.num_categories << '\n';
      for (const auto& e : report.sample_errors) err << "[flowmob] rejected " << e << '\n';
      return 0;
    }

    if (*synth_cmd) {
      SynthSpec spec = default_synth_spec(synth_categories, synth_self, synth_seed, synth_sequences);
      spec.min_length = synth_min;
      spec.max_length = synth_max;
      spec.spatial = !synth_non_spatial;
      spec = shift(spec, synth_shift);
      RegionDataset ds = generate(spec);
      ds.provenance["shift"] = synth_shift;
      log_run(err, "synth", ds.provenance);
      save_dataset(ds, synth_out);
      out << "sequences=" << ds.sequences.size() << " categories=" << ds.num_categories << '\n';
      return 0;
    }

    if (*train_cmd) {
      const TrainConfig config = train_flags.resolve();
      log_run(err, "train", config.to_json());
      const RegionDataset ds = load_for_training(train_data, train_flags.non_spatial);
      return finish_training(train_region(ds, config), train_out, train_flags.report_dir, "train",
                             config, out, err);
    }

    if (*transfer_cmd) {
      TrainConfig config = transfer_flags.resolve();
      if (phi_opt->count()) config.initial_phi = phi;
      if (freeze_opt->count()) config.freeze_phi = freeze_phi;
      if (warm_opt->count()) config.warm_start_trunk = warm_start;
      log_run(err, "transfer", config.to_json());
      const Checkpoint origin = load_checkpoint(origin_ckpt);
      const RegionDataset ds = load_for_training(target_data, transfer_flags.non_spatial);
      return finish_training(train_region(ds, config, &origin), transfer_out,
                             transfer_flags.report_dir, "transfer", config, out, err);
    }

    if (*eval_cmd) {
      const EvalOptions options{parse_point_mode(eval_mode), eval_seed, eval_threads, eval_rollout};
      const nlohmann::json echoed = {{"ckpt", eval_ckpt},
                                     {"data", eval_data},
                                     {"predict_mode", eval_mode},
                                     {"seed", eval_seed},
                                     {"rollout", eval_rollout}};
      log_run(err, "eval", echoed);
      const Checkpoint ckpt = load_checkpoint(eval_ckpt);
      RegionDataset ds = load_dataset(eval_data);
      if (ckpt.dataset.spatial_mode != ds.spatial_mode && !ckpt.dataset.spatial_mode) {
        ds = without_distances(std::move(ds));
      }
      check_compatible(ckpt, ds);
      assign_clusters(ds, ckpt.clusters);
      const EvalResult result = evaluate(ckpt.params, ds, options);
      if (!eval_reports.empty()) {
        emit_reports({}, result.rows, eval_reports);
        write_run_json(eval_reports, "eval", echoed);
      }
      out << summary_line(result) << '\n';
      return 0;
    }

    if (*predict_cmd) {
      const Checkpoint ckpt = load_checkpoint(pred_ckpt);
      RegionDataset ds = load_dataset(pred_data);
      if (ckpt.dataset.spatial_mode != ds.spatial_mode && !ckpt.dataset.spatial_mode) {
        ds = without_distances(std::move(ds));
      }
      check_compatible(ckpt, ds);
      assign_clusters(ds, ckpt.clusters);
      if (pred_index >= ds.sequences.size()) throw Error("sequence index out of range");
      const Sequence& seq = ds.sequences[pred_index];
      const std::size_t prefix = pred_prefix == 0 ? seq.split_index : pred_prefix;
      const Prediction p = predict_next(ckpt.params, seq, prefix, seq.cluster,
                                        parse_point_mode(pred_mode), pred_seed);
      out << "user=" << seq.user_id << " prefix=" << prefix << " category=" << p.category
          << " category_label=" << ds.vocabulary.at(static_cast<std::size_t>(p.category))
          << " time=" << format_double(p.time) << " delta_t=" << format_double(p.delta_t);
      if (ckpt.params.spatial()) out << " distance=" << format_double(p.distance);
      out << '\n';
      return 0;
    }

    if (*grad_cmd) {
      if (gc_steps.empty()) gc_steps.push_back(1e-5);
      ModelParams params;
      std::vector<Sequence> sequences;
      if (!gc_ckpt.empty()) {
        if (gc_data.empty()) throw Error("gradcheck: --ckpt needs --data");
        Checkpoint ckpt = load_checkpoint(gc_ckpt);
        RegionDataset ds = load_dataset(gc_data);
        check_compatible(ckpt, ds);
        assign_clusters(ds, ckpt.clusters);
        params = std::move(ckpt.params);
        for (std::size_t i = 0; i < std::min(gc_sequences, ds.sequences.size()); ++i) {
          sequences.push_back(ds.sequences[i]);
        }
      } else {
        SynthSpec spec = default_synth_spec(gc_categories, 1.0 / gc_categories, gc_seed, gc_sequences);
        spec.min_length = spec.max_length = gc_length;
        spec.spatial = !gc_non_spatial;
        RegionDataset ds = generate(spec);
        ModelDims dims{gc_dims, gc_dims, gc_categories, gc_clusters, spec.spatial, false};
        params = init_params(dims, gc_seed);
        for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
          ds.sequences[i].cluster = static_cast<int>((gc_seed + i) % static_cast<std::size_t>(gc_clusters));
          sequences.push_back(ds.sequences[i]);
        }
      }
      std::vector<const Sequence*> batch;
      for (const auto& s : sequences) batch.push_back(&s);
      log_run(err, "gradcheck", {{"seed", gc_seed}, {"parameters", parameter_count(params)}});
      double worst = 0.0;
      for (double step : gc_steps) {
        const GradCheckReport report =
            finite_diff_check(params, batch, gc_seed, step,
                              gc_stencil == 4 ? Stencil::four_point : Stencil::two_point);
        out << report.to_string();
        worst = std::max(worst, report.max_rel_error);
      }
      out << "max_rel_error=" << format_double(worst) << (worst < 1e-4 ? " PASS" : " FAIL") << '\n';
      return worst < 1e-4 ? 0 : 1;
    }
  } catch (const Error& e) {
    err << "flowmob: error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "flowmob: unexpected error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace flowmob
