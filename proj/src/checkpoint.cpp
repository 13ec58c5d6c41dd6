#include "flowmob/checkpoint.hpp"

#include "flowmob/io.hpp"

namespace flowmob {

namespace {

nlohmann::json anchors_to_json(const AnchorTable& a) {
  nlohmann::json j = {{"clusters", a.clusters}, {"spatial", a.spatial},
                      {"t_mu", a.t_mu},         {"t_rho", a.t_rho}};
  if (a.spatial) {
    j["d_mu"] = a.d_mu;
    j["d_rho"] = a.d_rho;
  }
  return j;
}

AnchorTable anchors_from_json(const nlohmann::json& j) {
  AnchorTable a;
  a.clusters = j.at("clusters").get<int>();
  a.spatial = j.at("spatial").get<bool>();
  a.t_mu = j.at("t_mu").get<std::vector<double>>();
  a.t_rho = j.at("t_rho").get<std::vector<double>>();
  if (a.spatial) {
    a.d_mu = j.at("d_mu").get<std::vector<double>>();
    a.d_rho = j.at("d_rho").get<std::vector<double>>();
  }
  return a;
}

nlohmann::json head_flags(const FlowHead& h) {
  return {{"transfer", h.transfer}, {"phi_trainable", h.phi_trainable}};
}

void apply_head_flags(FlowHead& h, const nlohmann::json& j) {
  h.transfer = j.at("transfer").get<bool>();
  h.phi_trainable = j.at("phi_trainable").get<bool>();
  if (h.transfer) {
    h.anchor_mu = Eigen::VectorXd::Zero(h.clusters());
    h.anchor_rho = Eigen::VectorXd::Zero(h.clusters());
  }
}

}  // namespace

AnchorTable flow_anchors(const ModelParams& p) {
  AnchorTable a;
  a.clusters = p.dims.num_clusters;
  a.spatial = p.spatial();
  auto fill = [&](const FlowHead& h, std::vector<double>& mu, std::vector<double>& rho) {
    for (int m = 0; m < h.clusters(); ++m) {
      double am = h.b_mu + h.cluster_mu[m];
      double ar = h.b_rho + h.cluster_rho[m];
      if (h.transfer) {
        am += h.phi * h.anchor_mu[m];
        ar += h.phi * h.anchor_rho[m];
      }
      mu.push_back(am);
      rho.push_back(ar);
    }
  };
  fill(p.t_flow, a.t_mu, a.t_rho);
  if (p.d_flow) fill(*p.d_flow, a.d_mu, a.d_rho);
  return a;
}

DatasetMeta dataset_meta(const RegionDataset& ds) {
  return {ds.num_categories, ds.t_min, ds.t_max, ds.spatial_mode, ds.vocabulary};
}

nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  const ModelDims& d = c.params.dims;
  nlohmann::json tensors = nlohmann::json::object();
  for_each_tensor(c.params, [&](const TensorRef<const double>& t) {
    tensors[std::string(t.name)] = {{"rows", t.rows},
                                    {"cols", t.cols},
                                    {"data", std::vector<double>(t.data.begin(), t.data.end())}};
  });
  nlohmann::json heads = {{"t_flow", head_flags(c.params.t_flow)}};
  if (c.params.d_flow) heads["d_flow"] = head_flags(*c.params.d_flow);
  return {
      {"dims",
       {{"embed_dim", d.embed_dim},
        {"hidden_dim", d.hidden_dim},
        {"num_categories", d.num_categories},
        {"num_clusters", d.num_clusters},
        {"spatial", d.spatial},
        {"per_cluster_weights", d.per_cluster_weights}}},
      {"heads", heads},
      {"tensors", tensors},
      {"dataset",
       {{"num_categories", c.dataset.num_categories},
        {"t_min", c.dataset.t_min},
        {"t_max", c.dataset.t_max},
        {"spatial_mode", c.dataset.spatial_mode},
        {"vocabulary", c.dataset.vocabulary}}},
      {"clusters", {{"m", c.clusters.m}, {"thresholds", c.clusters.thresholds}}},
      {"anchors", anchors_to_json(c.anchors)},
      {"provenance", c.provenance},
  };
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  Checkpoint c;
  try {
    const auto& jd = j.at("dims");
    ModelDims d;
    d.embed_dim = jd.at("embed_dim").get<int>();
    d.hidden_dim = jd.at("hidden_dim").get<int>();
    d.num_categories = jd.at("num_categories").get<int>();
    d.num_clusters = jd.at("num_clusters").get<int>();
    d.spatial = jd.at("spatial").get<bool>();
    d.per_cluster_weights = jd.at("per_cluster_weights").get<bool>();
    c.params = ModelParams::zeros(d);
    apply_head_flags(c.params.t_flow, j.at("heads").at("t_flow"));
    if (c.params.d_flow) apply_head_flags(*c.params.d_flow, j.at("heads").at("d_flow"));

    const auto& jt = j.at("tensors");
    std::size_t seen = 0;
    for_each_tensor(c.params, [&](const TensorRef<double>& t) {
      const std::string name(t.name);
      if (!jt.contains(name)) throw Error("checkpoint: missing tensor " + name);
      const auto& e = jt.at(name);
      const auto data = e.at("data").get<std::vector<double>>();
      if (e.at("rows").get<Eigen::Index>() != t.rows || e.at("cols").get<Eigen::Index>() != t.cols ||
          data.size() != t.data.size()) {
        throw Error("checkpoint: shape mismatch for tensor " + name);
      }
      std::copy(data.begin(), data.end(), t.data.begin());
      ++seen;
    });
    if (seen != jt.size()) throw Error("checkpoint: unexpected extra tensors");

    const auto& jds = j.at("dataset");
    c.dataset.num_categories = jds.at("num_categories").get<int>();
    c.dataset.t_min = jds.at("t_min").get<double>();
    c.dataset.t_max = jds.at("t_max").get<double>();
    c.dataset.spatial_mode = jds.at("spatial_mode").get<bool>();
    c.dataset.vocabulary = jds.at("vocabulary").get<std::vector<std::string>>();
    c.clusters.m = j.at("clusters").at("m").get<int>();
    c.clusters.thresholds = j.at("clusters").at("thresholds").get<std::vector<double>>();
    c.anchors = anchors_from_json(j.at("anchors"));
    c.provenance = j.at("provenance");
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: malformed document: ") + e.what());
  }
  return c;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  return encode_document("flowmob-checkpoint", kCheckpointFormatVersion, checkpoint_to_json(ckpt));
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(decode_document(read_file_bytes(path), "flowmob-checkpoint",
                                              kCheckpointFormatVersion, path));
}

void check_compatible(const Checkpoint& ckpt, const RegionDataset& ds) {
  if (ckpt.dataset.num_categories != ds.num_categories) {
    throw Error("vocabulary mismatch: checkpoint has " +
                std::to_string(ckpt.dataset.num_categories) + " categories, dataset has " +
                std::to_string(ds.num_categories));
  }
  if (ckpt.dataset.spatial_mode != ds.spatial_mode) {
    throw Error("spatial mode mismatch between checkpoint and dataset");
  }
  if (ckpt.dataset.t_min != ds.t_min || ckpt.dataset.t_max != ds.t_max) {
    throw Error("time normalization mismatch: dataset was not the one this checkpoint was "
                "trained on");
  }
}

}  // namespace flowmob
