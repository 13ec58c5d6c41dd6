#include "flowmob/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "flowmob/clusters.hpp"
#include "flowmob/parallel.hpp"
#include "flowmob/transfer.hpp"

namespace flowmob {

namespace {

bool params_finite(const ModelParams& p) {
  bool ok = true;
  for_each_tensor(p, [&](const TensorRef<const double>& t) {
    for (double x : t.data) ok = ok && std::isfinite(x);
  });
  return ok;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw Error("config: learning rate must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error("config: Adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw Error("config: Adam epsilon must be positive");
  if (batch_size == 0) throw Error("config: batch size must be positive");
  if (max_epochs < 0) throw Error("config: epochs must be non-negative");
  if (patience < 1) throw Error("config: patience must be positive");
  if (embed_dim < 1 || hidden_dim < 1) throw Error("config: dimensions must be positive");
  if (num_clusters < 1) throw Error("config: need at least one cluster");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw Error("config: validation fraction must lie in [0, 1)");
  }
  if (threads < 1) throw Error("config: threads must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"beta1", beta1},
          {"beta2", beta2},
          {"adam_epsilon", adam_epsilon},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"patience", patience},
          {"seed", seed},
          {"embed_dim", embed_dim},
          {"hidden_dim", hidden_dim},
          {"num_clusters", num_clusters},
          {"validation_fraction", validation_fraction},
          {"per_cluster_weights", per_cluster_weights},
          {"initial_phi", initial_phi},
          {"freeze_phi", freeze_phi},
          {"warm_start_trunk", warm_start_trunk},
          {"eval_mode", std::string(to_string(eval_mode))}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
  static const std::set<std::string> known = {
      "learning_rate", "beta1",           "beta2",       "adam_epsilon",        "batch_size",
      "max_epochs",    "patience",        "seed",        "embed_dim",           "hidden_dim",
      "num_clusters",  "validation_fraction", "per_cluster_weights", "initial_phi", "freeze_phi",
      "warm_start_trunk", "threads",      "eval_mode"};
  if (!j.is_object()) throw Error("config: expected a JSON object");
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) throw Error("config: unknown key '" + item.key() + "'");
  }
  try {
    auto take = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    take("learning_rate", c.learning_rate);
    take("beta1", c.beta1);
    take("beta2", c.beta2);
    take("adam_epsilon", c.adam_epsilon);
    take("batch_size", c.batch_size);
    take("max_epochs", c.max_epochs);
    take("patience", c.patience);
    take("seed", c.seed);
    take("embed_dim", c.embed_dim);
    take("hidden_dim", c.hidden_dim);
    take("num_clusters", c.num_clusters);
    take("validation_fraction", c.validation_fraction);
    take("per_cluster_weights", c.per_cluster_weights);
    take("initial_phi", c.initial_phi);
    take("freeze_phi", c.freeze_phi);
    take("warm_start_trunk", c.warm_start_trunk);
    take("threads", c.threads);
    if (j.contains("eval_mode")) c.eval_mode = parse_point_mode(j.at("eval_mode").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  return c;
}

AdamState AdamState::for_params(const ModelParams& p) {
  const std::size_t n = parameter_count(p);
  return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0};
}

void adam_step(ModelParams& p, const GradientSet& g, AdamState& state, const TrainConfig& config) {
  const std::vector<double> grads = g.flat();
  if (grads.size() != state.m.size() || grads.size() != parameter_count(p)) {
    throw Error("adam_step: optimizer state does not match the parameter layout");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  std::size_t offset = 0;
  for_each_tensor(p, [&](const TensorRef<double>& tensor) {
    if (tensor.trainable) {
      for (std::size_t k = 0; k < tensor.data.size(); ++k) {
        const std::size_t i = offset + k;
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grads[i];
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        tensor.data[k] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
      }
    }
    offset += tensor.data.size();
  });
}

double eval_nll(const ModelParams& p, const RegionDataset& ds, std::span<const std::size_t> indices,
                const FusionPolicy& fusion, int threads) {
  std::vector<NllResult> parts(indices.size());
  parallel_for(indices.size(), threads, [&](std::size_t n) {
    parts[n] = sequence_nll(p, ds.sequences.at(indices[n]), ScoreRange::train, fusion, false);
  });
  double total = 0.0;
  std::size_t steps = 0;
  for (const auto& r : parts) {
    total += r.total;
    steps += r.steps;
  }
  return steps > 0 ? total / static_cast<double>(steps) : 0.0;
}

TrainResult train_region(RegionDataset dataset, const TrainConfig& config,
                         const Checkpoint* transfer_from) {
  config.validate();
  validate(dataset);
  const ClusterModel clusters = fit_clusters(dataset, config.num_clusters);

  const std::size_t n = dataset.sequences.size();
  std::size_t n_val = 0;
  if (n >= 2 && config.validation_fraction > 0.0) {
    n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(n))));
  }
  std::vector<std::size_t> train_idx(n - n_val);
  std::iota(train_idx.begin(), train_idx.end(), 0);
  std::vector<std::size_t> val_idx(n_val);
  std::iota(val_idx.begin(), val_idx.end(), n - n_val);

  ModelDims dims;
  dims.embed_dim = config.embed_dim;
  dims.hidden_dim = config.hidden_dim;
  dims.num_categories = dataset.num_categories;
  dims.num_clusters = config.num_clusters;
  dims.spatial = dataset.spatial_mode;
  dims.per_cluster_weights = config.per_cluster_weights;
  ModelParams params = init_params(dims, config.seed);
  if (transfer_from) {
    apply_transfer(params, *transfer_from,
                   {config.initial_phi, config.freeze_phi, config.warm_start_trunk});
  }

  const FusionPolicy eval_fusion{config.eval_mode, config.seed};
  const EvalOptions eval_options{config.eval_mode, config.seed, config.threads, false};
  const std::span<const std::size_t> monitor =
      val_idx.empty() ? std::span<const std::size_t>(train_idx) : std::span<const std::size_t>(val_idx);
  auto measure = [&](int epoch) {
    CurveRow row;
    row.epoch = epoch;
    row.train_nll = eval_nll(params, dataset, train_idx, eval_fusion, config.threads);
    row.val_nll = eval_nll(params, dataset, monitor, eval_fusion, config.threads);
    row.val_mae = evaluate_range(params, dataset, monitor, ScoreRange::train, eval_options).mae;
    return row;
  };

  TrainResult result;
  TrainingCurve& curve = result.curve;
  curve.initial = measure(0);
  ModelParams best = params;
  double best_val = curve.initial.val_nll;
  int since_best = 0;

  AdamState adam = AdamState::for_params(params);
  std::vector<std::size_t> order = train_idx;
  std::vector<const Sequence*> batch;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(config.seed, 0x5eed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    try {
      std::size_t batch_no = 0;
      for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_no) {
        batch.clear();
        const std::size_t stop = std::min(order.size(), start + config.batch_size);
        for (std::size_t i = start; i < stop; ++i) batch.push_back(&dataset.sequences[order[i]]);
        const BatchGradient bg =
            backward(params, batch, derive_seed(config.seed, static_cast<std::uint64_t>(epoch), batch_no),
                     config.threads);
        if (bg.steps == 0) continue;
        adam_step(params, bg.grads, adam, config);
        if (!params_finite(params)) throw Error("parameters became non-finite");
      }
      const CurveRow row = measure(epoch);
      if (!std::isfinite(row.train_nll) || !std::isfinite(row.val_nll)) {
        throw Error("non-finite NLL at epoch " + std::to_string(epoch));
      }
      curve.rows.push_back(row);
      if (row.val_nll < best_val) {
        best_val = row.val_nll;
        best = params;
        curve.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= config.patience) {
        curve.stopped_early = true;
        break;
      }
    } catch (const Error& e) {
      curve.diverged = true;
      curve.divergence = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
  }

  Checkpoint& ckpt = result.checkpoint;
  ckpt.params = std::move(best);
  ckpt.dataset = dataset_meta(dataset);
  ckpt.clusters = clusters;
  ckpt.anchors = flow_anchors(ckpt.params);
  ckpt.provenance = {
      {"config", config.to_json()},
      {"epochs_run", static_cast<int>(curve.rows.size())},
      {"best_epoch", curve.best_epoch},
      {"best_val_nll", best_val},
      {"final_train_nll", curve.rows.empty() ? curve.initial.train_nll : curve.rows.back().train_nll},
      {"stopped_early", curve.stopped_early},
      {"diverged", curve.diverged},
      {"transfer", transfer_from != nullptr},
      {"build_version", std::string(build_version())},
  };
  if (transfer_from) {
    ckpt.provenance["origin_config"] = transfer_from->provenance.value("config", nlohmann::json());
  }
  return result;
}

}  // namespace flowmob
