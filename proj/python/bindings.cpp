#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>

#include "mhs/checks.hpp"
#include "mhs/errors.hpp"
#include "mhs/esf.hpp"
#include "mhs/gradcheck.hpp"
#include "mhs/io.hpp"
#include "mhs/mhs.hpp"
#include "mhs/parallel.hpp"
#include "mhs/scan_geometry.hpp"
#include "mhs/ssm.hpp"

namespace py = pybind11;
using namespace mhs;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  if (shape.empty()) shape = {1};
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

ScanPattern pattern_arg(const std::string& name) {
  if (auto p = parse_pattern(name)) return *p;
  throw ValidationError("unknown scan pattern '" + name + "'");
}

class Model {
 public:
  Model(const std::string& config_json, std::uint64_t seed)
      : config_(config_from_json_text(config_json)), weights_(init_weights(config_, seed)) {}
  Model(MhsConfig config, MhsWeights weights) : config_(std::move(config)), weights_(std::move(weights)) {
    validate_weights(weights_, config_);
  }

  Array forward(const Array& x) const {
    Tensor in = to_tensor(x);
    Tensor out;
    {
      py::gil_scoped_release release;
      out = mhs::forward(in, weights_, config_);
    }
    return to_array(out);
  }

  py::dict parameters() const {
    py::dict d;
    for (const auto& [name, t] : weights_.named()) d[py::str(name)] = to_array(*t);
    return d;
  }

  const MhsConfig& config() const { return config_; }
  const MhsWeights& weights() const { return weights_; }

 private:
  MhsConfig config_;
  MhsWeights weights_;
};

}  // namespace

PYBIND11_MODULE(_mhs, m) {
  m.doc() = "Multi-head scan module: routes, scans, section fusion and the full forward pass.";

  auto base = py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
  (void)base;

  m.def("set_num_threads", &set_num_threads, py::arg("n"));
  m.def("num_threads", &num_threads);

  m.def(
      "route",
      [](const std::string& pattern, std::size_t variant, std::size_t height, std::size_t width) {
        const ScanRoute r = build_route(pattern_arg(pattern), variant, GridShape{height, width});
        return py::array_t<std::int64_t>(static_cast<py::ssize_t>(r.perm().size()),
                                         std::vector<std::int64_t>(r.perm().begin(), r.perm().end()).data());
      },
      py::arg("pattern"), py::arg("variant"), py::arg("height"), py::arg("width"),
      "Visiting order as flat cell indices r * width + c.");
  m.def(
      "route_dump",
      [](const std::string& pattern, std::size_t variant, std::size_t height, std::size_t width) {
        return route_dump(build_route(pattern_arg(pattern), variant, GridShape{height, width}));
      },
      py::arg("pattern"), py::arg("variant"), py::arg("height"), py::arg("width"));

  m.def(
      "discretize",
      [](const Array& delta, const Array& a, const Array& b) {
        const Discretized d = discretize(to_tensor(delta), to_tensor(a), to_tensor(b));
        return py::make_tuple(to_array(d.a_bar), to_array(d.b_bar));
      },
      py::arg("delta"), py::arg("a"), py::arg("b"));
  m.def(
      "recurrence_scan",
      [](const Array& a_bar, const Array& b_bar, const Array& c, const Array& x) {
        return to_array(recurrence_scan(to_tensor(a_bar), to_tensor(b_bar), to_tensor(c), to_tensor(x)));
      },
      py::arg("a_bar"), py::arg("b_bar"), py::arg("c"), py::arg("x"));
  m.def(
      "conv_kernel",
      [](const Array& a_bar, const Array& b_bar, const Array& c, std::size_t length) {
        return to_array(conv_kernel(to_tensor(a_bar), to_tensor(b_bar), to_tensor(c), length).taps);
      },
      py::arg("a_bar"), py::arg("b_bar"), py::arg("c"), py::arg("length"));
  m.def(
      "conv_scan", [](const Array& x, const Array& taps) { return to_array(conv_scan(to_tensor(x), {to_tensor(taps)})); },
      py::arg("x"), py::arg("taps"));

  m.def(
      "coefficient_variation",
      [](const Array& stack, double eps) { return to_array(coefficient_variation(to_tensor(stack), eps)); },
      py::arg("stack"), py::arg("eps") = 1e-6);
  m.def(
      "fuse",
      [](const Array& stack, const std::string& scheme, double t, double eps, const std::string& gate,
         std::optional<Array> w) {
        EsfScheme s;
        const auto kind = parse_esf_kind(scheme);
        const auto g = parse_gate_kind(gate);
        if (!kind) throw ValidationError("unknown esf scheme '" + scheme + "'");
        if (!g) throw ValidationError("unknown gate '" + gate + "'");
        s.kind = *kind;
        s.gate = *g;
        s.t = t;
        s.eps = eps;
        const Tensor weights = w ? to_tensor(*w) : Tensor({2}, std::vector<double>{0.5, 0.5});
        return to_array(fuse(to_tensor(stack), s, weights));
      },
      py::arg("stack"), py::arg("scheme") = "cv", py::arg("t") = 0.5, py::arg("eps") = 1e-6,
      py::arg("gate") = "relu", py::arg("w") = py::none(), "Fuses [B,K,S,L] sections into [B,S,L].");

  m.def(
      "param_count", [](const std::string& config_json) { return param_count(config_from_json_text(config_json)); },
      py::arg("config_json"));
  m.def(
      "normalize_config",
      [](const std::string& config_json) { return config_to_json_text(config_from_json_text(config_json)); },
      py::arg("config_json"), "Parses, validates and re-serialises a config with every default filled in.");

  py::class_<Model>(m, "Model")
      .def(py::init<const std::string&, std::uint64_t>(), py::arg("config_json"), py::arg("seed") = 0)
      .def("forward", &Model::forward, py::arg("x"), "x has shape (B, H, W, C_l); returns the same shape.")
      .def("parameters", &Model::parameters)
      .def_property_readonly("config_json", [](const Model& self) { return config_to_json_text(self.config()); })
      .def_property_readonly("param_count", [](const Model& self) { return param_count(self.config()); })
      .def(
          "save",
          [](const Model& self, const std::string& path, bool f32) {
            save_weights(self.weights(), path, f32 ? StorageType::F32 : StorageType::F64);
          },
          py::arg("path"), py::arg("f32") = false)
      .def_static(
          "load",
          [](const std::string& config_json, const std::string& path) {
            MhsConfig config = config_from_json_text(config_json);
            MhsWeights weights = load_weights(path, config);
            return Model(std::move(config), std::move(weights));
          },
          py::arg("config_json"), py::arg("path"));

  m.def(
      "gradcheck",
      [](const std::string& op, std::uint64_t seed, double h, double tol) {
        GradReport r;
        {
          py::gil_scoped_release release;
          r = gradcheck_module(op, GradDims{}, seed, h, tol);
        }
        py::dict d;
        d["op"] = r.op;
        d["status"] = std::string(grad_status_name(r.status));
        d["max_rel_err"] = r.max_rel_err();
        d["max_abs_err"] = r.max_abs_err();
        d["attempts"] = r.attempts;
        return d;
      },
      py::arg("op"), py::arg("seed") = 0, py::arg("h") = 1e-5, py::arg("tol") = 1e-5);
  m.def("gradcheck_ops", &gradcheck_ops);

  m.def(
      "run_checks",
      [](const std::string& scope) {
        const auto s = parse_check_scope(scope);
        if (!s) throw ValidationError("unknown check scope '" + scope + "'");
        std::vector<CheckResult> results;
        {
          py::gil_scoped_release release;
          results = run_checks(*s);
        }
        py::list out;
        for (const CheckResult& r : results) out.append(py::make_tuple(r.name, r.passed, r.detail));
        return out;
      },
      py::arg("scope") = "all");
}
