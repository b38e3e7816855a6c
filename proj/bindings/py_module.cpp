#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tcl/data.hpp"
#include "tcl/engine.hpp"
#include "tcl/errors.hpp"
#include "tcl/metrics.hpp"

namespace py = pybind11;

namespace {

std::string value_to_string(const std::string& key, const py::handle& v) {
  if (py::isinstance<py::str>(v)) return v.cast<std::string>();
  if (py::isinstance<py::bool_>(v))
    throw tcl::ConfigError("config: no boolean keys ('" + key + "')");
  if (py::isinstance<py::int_>(v))
    return std::to_string(v.cast<long long>());
  if (py::isinstance<py::float_>(v)) {
    std::ostringstream out;
    out.precision(17);
    out << v.cast<double>();
    return out.str();
  }
  if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
    std::string joined;
    for (const py::handle& item : v) {
      if (!joined.empty()) joined += ",";
      joined += value_to_string(key, item);
    }
    return joined;
  }
  throw tcl::ConfigError("config: unsupported value type for '" + key + "'");
}

tcl::RunConfig config_from_kwargs(const py::kwargs& kwargs) {
  tcl::RunConfig config;
  for (const auto& item : kwargs) {
    std::string key = item.first.cast<std::string>();
    for (char& c : key)
      if (c == '_') c = '-';
    tcl::apply_config_entry(config, key, value_to_string(key, item.second));
  }
  config.validate();
  return config;
}

tcl::Dataset make_dataset(const tcl::Matrix& x,
                          const std::optional<std::vector<int>>& labels,
                          const std::optional<std::vector<std::int64_t>>& ids) {
  tcl::Dataset ds;
  ds.x = x;
  if (labels) ds.labels = *labels;
  if (ids) {
    ds.ids = *ids;
  } else {
    ds.ids.resize(static_cast<std::size_t>(x.rows()));
    for (tcl::Index i = 0; i < x.rows(); ++i)
      ds.ids[static_cast<std::size_t>(i)] = i;
  }
  ds.validate();
  return ds;
}

py::dict epoch_dict(const tcl::EpochLoss& e) {
  py::dict d;
  d["instance"] = e.instance;
  d["cluster"] = e.cluster;
  d["entropy"] = e.entropy;
  d["total"] = e.total;
  return d;
}

py::dict boost_epoch_dict(const tcl::BoostEpochLoss& e) {
  py::dict d;
  d["scl"] = e.scl;
  d["sl"] = e.sl;
  d["total"] = e.total;
  d["pseudo_labels"] = e.store_size;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Twin contrastive clustering core";

  py::register_exception<tcl::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<tcl::DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<tcl::NumericError>(m, "NumericError",
                                            PyExc_ArithmeticError);

  py::class_<tcl::Dataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("x"),
           py::arg("labels") = py::none(), py::arg("ids") = py::none())
      .def_readonly("x", &tcl::Dataset::x)
      .def_readonly("labels", &tcl::Dataset::labels)
      .def_readonly("ids", &tcl::Dataset::ids)
      .def_property_readonly("n", &tcl::Dataset::n)
      .def_property_readonly("dim", &tcl::Dataset::dim)
      .def("__len__", &tcl::Dataset::n);

  py::class_<tcl::Report>(m, "Report")
      .def_readonly("metrics", &tcl::Report::metrics)
      .def_readonly("cluster_sizes", &tcl::Report::cluster_sizes)
      .def_readonly("seconds", &tcl::Report::seconds)
      .def_property_readonly("train_history",
                             [](const tcl::Report& r) {
                               py::list out;
                               for (const auto& e : r.train_history)
                                 out.append(epoch_dict(e));
                               return out;
                             })
      .def_property_readonly("boost_history",
                             [](const tcl::Report& r) {
                               py::list out;
                               for (const auto& e : r.boost_history)
                                 out.append(boost_epoch_dict(e));
                               return out;
                             })
      .def("to_text", &tcl::Report::to_text);

  py::class_<tcl::Checkpoint>(m, "Checkpoint")
      .def_property_readonly("epochs_trained",
                             [](const tcl::Checkpoint& c) {
                               return c.epochs_trained;
                             })
      .def_property_readonly("epochs_boosted",
                             [](const tcl::Checkpoint& c) {
                               return c.epochs_boosted;
                             })
      .def_property_readonly("clusters",
                             [](const tcl::Checkpoint& c) {
                               return c.network.cluster_count;
                             })
      .def_property_readonly("input_dim",
                             [](const tcl::Checkpoint& c) {
                               return c.network.input_dim;
                             })
      .def_property_readonly("pseudo_labels",
                             [](const tcl::Checkpoint& c) {
                               return c.store.entries.size();
                             })
      .def("dumps", &tcl::checkpoint_to_string);

  m.def("gen_blobs", &tcl::generate_blobs, py::arg("k"), py::arg("n"),
        py::arg("d"), py::arg("sep") = 8.0, py::arg("seed") = 1);

  m.def("load_vectors",
        [](const std::string& path, const std::string& format) {
          return tcl::load_vectors(path, tcl::parse_format(format));
        },
        py::arg("path"), py::arg("format") = "csv");
  m.def("save_vectors",
        [](const tcl::Dataset& ds, const std::string& path,
           const std::string& format) {
          tcl::save_vectors(ds, path, tcl::parse_format(format));
        },
        py::arg("dataset"), py::arg("path"), py::arg("format") = "csv");

  m.def("save_checkpoint", &tcl::save_checkpoint, py::arg("checkpoint"),
        py::arg("path"));
  m.def("load_checkpoint", &tcl::load_checkpoint, py::arg("path"));

  m.def("train",
        [](const tcl::Dataset& ds, const py::kwargs& kwargs) {
          tcl::TrainResult r = tcl::run_training(config_from_kwargs(kwargs), ds);
          return py::make_tuple(std::move(r.checkpoint), std::move(r.report));
        },
        py::arg("dataset"));

  m.def("boost",
        [](const tcl::Checkpoint& ck, const tcl::Dataset& ds,
           const py::kwargs& kwargs) {
          tcl::TrainResult r =
              tcl::run_boosting(config_from_kwargs(kwargs), ck, ds);
          return py::make_tuple(std::move(r.checkpoint), std::move(r.report));
        },
        py::arg("checkpoint"), py::arg("dataset"));

  m.def("assign",
        [](const tcl::Checkpoint& ck, const tcl::Matrix& x) {
          tcl::Model model = tcl::build_model(ck);
          std::vector<int> labels;
          std::vector<double> confidences;
          labels.reserve(static_cast<std::size_t>(x.rows()));
          confidences.reserve(static_cast<std::size_t>(x.rows()));
          for (tcl::Index i = 0; i < x.rows(); ++i) {
            auto [label, confidence] = tcl::assign_one(model, x.row(i));
            labels.push_back(label);
            confidences.push_back(confidence);
          }
          return py::make_tuple(std::move(labels), std::move(confidences));
        },
        py::arg("checkpoint"), py::arg("x"));

  m.def("evaluate",
        [](const tcl::Checkpoint& ck, const tcl::Dataset& ds) {
          return tcl::evaluate(tcl::build_model(ck), ds);
        },
        py::arg("checkpoint"), py::arg("dataset"));

  m.def("nmi", &tcl::nmi, py::arg("a"), py::arg("b"));
  m.def("clustering_accuracy", &tcl::clustering_accuracy, py::arg("pred"),
        py::arg("truth"));
  m.def("adjusted_rand_index", &tcl::adjusted_rand_index, py::arg("a"),
        py::arg("b"));
  m.def("majority_vote_accuracy", &tcl::majority_vote_accuracy,
        py::arg("pred"), py::arg("truth"));
}
