#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "vcfl/campaign.hpp"
#include "vcfl/error.hpp"
#include "vcfl/experiment.hpp"
#include "vcfl/macro.hpp"
#include "vcfl/partition.hpp"
#include "vcfl/predictor.hpp"
#include "vcfl/world.hpp"

namespace py = pybind11;
using namespace vcfl;

namespace {

// Reports cross the boundary as JSON text; the Python side decodes them.
template <class T>
std::string dump(const T& value) {
  return nlohmann::json(value).dump();
}

}  // namespace

PYBIND11_MODULE(_vcfl, m) {
  m.doc() = "vcfl core bindings";

  static PyObject* error_type = py::exception<Error>(m, "Error", PyExc_RuntimeError).release().ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type, exc.ptr());
    }
  });

  py::class_<DiscreteWorld>(m, "World")
      .def(py::init<std::size_t, std::size_t>(), py::arg("k"), py::arg("n"))
      .def_readonly("k", &DiscreteWorld::num_h_states)
      .def_readonly("n", &DiscreteWorld::num_images)
      .def_readwrite("alpha", &DiscreteWorld::alpha, "P(T=0|h,i), row-major K x N")
      .def_readwrite("beta", &DiscreteWorld::beta, "P(i|h), row-major N x K")
      .def_readwrite("gamma", &DiscreteWorld::gamma, "P(h)")
      .def("validate", &DiscreteWorld::validate)
      .def("to_json", [](const DiscreteWorld& w) { return dump(w); })
      .def_static("from_json", [](const std::string& text) { return nlohmann::json::parse(text).get<DiscreteWorld>(); })
      .def_static(
          "sample", [](std::size_t k, std::size_t n, std::uint64_t seed) {
            Rng rng(seed);
            return sample_world(k, n, rng);
          },
          py::arg("k"), py::arg("n"), py::arg("seed"))
      .def("__eq__", [](const DiscreteWorld& a, const DiscreteWorld& b) { return a == b; });

  m.def("observational_posteriors", &observational_posteriors);
  m.def("interventional_posteriors", &interventional_posteriors);

  py::class_<Partition>(m, "Partition")
      .def_readonly("class_of", &Partition::class_of)
      .def_readonly("class_value", &Partition::class_value)
      .def("classes", &Partition::classes)
      .def("__len__", &Partition::num_classes);

  m.def("observational_partition", &observational_partition, py::arg("world"), py::arg("tolerance") = kDefaultTolerance);
  m.def("causal_partition", &causal_partition, py::arg("world"), py::arg("tolerance") = kDefaultTolerance);
  m.def(
      "is_coarsening", [](const Partition& coarse, const Partition& fine) { return is_coarsening(coarse, fine).holds; },
      py::arg("coarse"), py::arg("fine"));

  m.def("appendix9_json", [] { return dump(appendix9_example(appendix9_world())); });

  m.def(
      "cct_sweep_json",
      [](std::size_t trials, const std::string& mode, std::uint64_t seed) {
        CctSweepConfig c;
        c.trials = trials;
        c.mode = parse_sweep_mode(mode);
        c.seed = seed;
        py::gil_scoped_release nogil;
        return dump(run_cct_sweep(c));
      },
      py::arg("trials"), py::arg("mode") = "constrained", py::arg("seed") = 1);

  m.def(
      "theorem2_json",
      [](std::size_t worlds, std::size_t max_n, std::uint64_t seed) {
        Theorem2Config c;
        c.worlds = worlds;
        c.n_max = max_n;
        c.seed = seed;
        py::gil_scoped_release nogil;
        return dump(run_theorem2(c));
      },
      py::arg("worlds"), py::arg("max_n") = 6, py::arg("seed") = 1);

  m.def("config_json", [](const std::string& text) {
    const auto c = nlohmann::json::parse(text).get<ExperimentConfig>();
    c.validate();
    return nlohmann::json(c).dump();
  });
  m.def("config_hash", [](const std::string& text) {
    return config_hash(nlohmann::json::parse(text).get<ExperimentConfig>());
  });

  m.def("run_grating_json", [](const std::string& text) {
    const auto c = nlohmann::json::parse(text).get<ExperimentConfig>();
    c.validate();
    GratingRun run;
    {
      py::gil_scoped_release nogil;
      run = run_grating(c);
    }
    nlohmann::json out{{"config_hash", config_hash(c)},
                       {"metrics", run.learning.metrics},
                       {"oracle_queries", run.oracle_queries},
                       {"vbar_insensitivity", run.vbar_insensitivity},
                       {"algorithm1_queries", run.algorithm1.oracle_queries},
                       {"dataset_size", run.learning.dataset.size()},
                       {"seconds", run.seconds}};
    return out.dump();
  });

  py::class_<Predictor>(m, "Predictor")
      .def_static("random", &Predictor::random, py::arg("input_dim"), py::arg("hidden_units"), py::arg("seed"))
      .def_property_readonly("input_dim", &Predictor::input_dim)
      .def_property_readonly("hidden_units", &Predictor::hidden_units)
      .def("forward", [](const Predictor& p, const std::vector<double>& x) { return p.forward(x); });
}
