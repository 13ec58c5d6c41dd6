#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>

#include "flowmob/checkpoint.hpp"
#include "flowmob/clusters.hpp"
#include "flowmob/eval.hpp"
#include "flowmob/grad.hpp"
#include "flowmob/synth.hpp"
#include "flowmob/train.hpp"

namespace py = pybind11;
using namespace flowmob;

namespace {

// Python dicts cross the boundary as JSON text.
nlohmann::json to_json(const py::object& obj) {
  if (obj.is_none()) return nlohmann::json::object();
  const auto text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
  return nlohmann::json::parse(text);
}

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

py::dict curve_row(const CurveRow& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["train_nll"] = r.train_nll;
  d["val_nll"] = r.val_nll;
  d["val_mae"] = r.val_mae;
  return d;
}

py::dict eval_dict(const EvalResult& r) {
  py::dict d;
  d["mae"] = r.mae;
  d["mpa"] = r.mpa;
  d["count"] = r.count;
  return d;
}

RegionDataset ingest_file(const std::string& path, char delimiter, bool header, bool spatial,
                          std::size_t min_length) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  IngestConfig cfg;
  cfg.delimiter = delimiter;
  cfg.has_header = header;
  cfg.spatial = spatial;
  cfg.min_length = min_length;
  return ingest(in, cfg);
}

}  // namespace

PYBIND11_MODULE(_flowmob, m) {
  m.doc() = "Neural temporal point process models for check-in sequences";
  m.attr("__version__") = std::string(build_version());

  py::register_exception<Error>(m, "FlowmobError", PyExc_ValueError);

  py::class_<RegionDataset>(m, "Dataset")
      .def_property_readonly("num_sequences", [](const RegionDataset& d) { return d.sequences.size(); })
      .def_readonly("num_categories", &RegionDataset::num_categories)
      .def_readonly("vocabulary", &RegionDataset::vocabulary)
      .def_readonly("t_min", &RegionDataset::t_min)
      .def_readonly("t_max", &RegionDataset::t_max)
      .def_readonly("spatial", &RegionDataset::spatial_mode)
      .def("sequence_lengths",
           [](const RegionDataset& d) {
             std::vector<std::size_t> n;
             for (const auto& s : d.sequences) n.push_back(s.size());
             return n;
           })
      .def("save", [](const RegionDataset& d, const std::filesystem::path& p) { save_dataset(d, p); })
      .def("__repr__", [](const RegionDataset& d) {
        return "<Dataset sequences=" + std::to_string(d.sequences.size()) +
               " categories=" + std::to_string(d.num_categories) + ">";
      });

  m.def("load_dataset", [](const std::filesystem::path& p) { return load_dataset(p); });
  m.def("ingest", &ingest_file, py::arg("path"), py::arg("delimiter") = ',',
        py::arg("header") = false, py::arg("spatial") = true, py::arg("min_length") = 2);
  m.def("without_distances", &without_distances);

  m.def(
      "synthesize",
      [](int categories, std::size_t sequences, std::uint64_t seed, double self_weight, double shift_mu,
         bool spatial, std::size_t min_length, std::size_t max_length) {
        SynthSpec spec = default_synth_spec(categories, self_weight, seed, sequences);
        spec.spatial = spatial;
        spec.min_length = min_length;
        spec.max_length = max_length;
        return generate(shift(spec, shift_mu));
      },
      py::arg("categories") = 10, py::arg("sequences") = 500, py::arg("seed") = 0,
      py::arg("self_weight") = 0.9, py::arg("shift") = 0.0, py::arg("spatial") = true,
      py::arg("min_length") = 20, py::arg("max_length") = 40);

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_property_readonly("provenance", [](const Checkpoint& c) { return to_python(c.provenance); })
      .def_property_readonly("spatial", [](const Checkpoint& c) { return c.params.spatial(); })
      .def_property_readonly("num_parameters", [](const Checkpoint& c) { return parameter_count(c.params); })
      .def_property_readonly("cluster_thresholds", [](const Checkpoint& c) { return c.clusters.thresholds; })
      .def("save", [](const Checkpoint& c, const std::filesystem::path& p) { save_checkpoint(c, p); })
      .def("to_bytes", [](const Checkpoint& c) {
        const auto bytes = encode_checkpoint(c);
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      });

  m.def("load_checkpoint", [](const std::filesystem::path& p) { return load_checkpoint(p); });

  m.def(
      "train",
      [](const RegionDataset& ds, const py::object& config, const Checkpoint* origin) {
        const TrainConfig cfg = TrainConfig::from_json(to_json(config));
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train_region(ds, cfg, origin);
        }
        py::list rows;
        for (const auto& row : r.curve.rows) rows.append(curve_row(row));
        py::dict curve;
        curve["initial"] = curve_row(r.curve.initial);
        curve["rows"] = rows;
        curve["best_epoch"] = r.curve.best_epoch;
        curve["stopped_early"] = r.curve.stopped_early;
        curve["diverged"] = r.curve.diverged;
        return py::make_tuple(std::move(r.checkpoint), curve);
      },
      py::arg("dataset"), py::arg("config") = py::none(), py::arg("origin") = nullptr,
      "Train a region model. `config` is a dict of training options; passing an "
      "origin checkpoint trains in transfer mode. Returns (checkpoint, curve).");

  m.def(
      "evaluate",
      [](const Checkpoint& ckpt, RegionDataset ds, const std::string& mode, std::uint64_t seed,
         int threads, bool rollout) {
        check_compatible(ckpt, ds);
        assign_clusters(ds, ckpt.clusters);
        EvalOptions opt{parse_point_mode(mode), seed, threads, rollout};
        py::gil_scoped_release release;
        const EvalResult r = evaluate(ckpt.params, ds, opt);
        py::gil_scoped_acquire acquire;
        return eval_dict(r);
      },
      py::arg("checkpoint"), py::arg("dataset"), py::arg("mode") = "mean", py::arg("seed") = 0,
      py::arg("threads") = 1, py::arg("rollout") = false);

  m.def(
      "predict",
      [](const Checkpoint& ckpt, RegionDataset ds, std::size_t sequence, std::size_t prefix,
         const std::string& mode, std::uint64_t seed) {
        check_compatible(ckpt, ds);
        assign_clusters(ds, ckpt.clusters);
        const Sequence& seq = ds.sequences.at(sequence);
        const std::size_t n = prefix == 0 ? seq.split_index : prefix;
        const Prediction p = predict_next(ckpt.params, seq, n, seq.cluster, parse_point_mode(mode), seed);
        py::dict d;
        d["category"] = p.category;
        d["time"] = p.time;
        d["delta_t"] = p.delta_t;
        d["distance"] = p.distance;
        return d;
      },
      py::arg("checkpoint"), py::arg("dataset"), py::arg("sequence") = 0, py::arg("prefix") = 0,
      py::arg("mode") = "mean", py::arg("seed") = 0);

  m.def(
      "gradcheck",
      [](std::uint64_t seed, int dims, int categories, int clusters, std::size_t length, double step,
         bool spatial) {
        SynthSpec spec = default_synth_spec(categories, 1.0 / categories, seed, 1);
        spec.min_length = spec.max_length = length;
        spec.spatial = spatial;
        RegionDataset ds = generate(spec);
        ds.sequences[0].cluster = static_cast<int>(seed % static_cast<std::uint64_t>(clusters));
        const ModelParams p = init_params({dims, dims, categories, clusters, spatial, false}, seed);
        const std::vector<const Sequence*> batch{&ds.sequences[0]};
        return finite_diff_check(p, batch, seed, step).max_rel_error;
      },
      py::arg("seed") = 0, py::arg("dims") = 8, py::arg("categories") = 4, py::arg("clusters") = 3,
      py::arg("length") = 3, py::arg("step") = 1e-5, py::arg("spatial") = true,
      "Maximum entry-wise relative error between analytic and central-difference gradients.");

  m.def(
      "log_pdf", [](double mu, double sigma2, double x) { return log_pdf({mu, sigma2}, x); },
      py::arg("mu"), py::arg("sigma2"), py::arg("x"));
}
