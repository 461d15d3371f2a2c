#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "beamtomo/carleman.hpp"
#include "beamtomo/cli.hpp"
#include "beamtomo/common.hpp"
#include "beamtomo/geometry.hpp"
#include "beamtomo/recon.hpp"

namespace py = pybind11;
using namespace beamtomo;

namespace {

// describe/selftest write to a stream; hand back (code, text)
template <class F>
std::pair<int, std::string> captured(F&& f) {
    std::ostringstream os;
    const int rc = f(os);
    return {rc, os.str()};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Gaussian-beam probes for inverse problems of semilinear wave equations";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
    py::register_exception<CriticalPointError>(m, "CriticalPointError", base.ptr());
    py::register_exception<HorizonError>(m, "HorizonError", base.ptr());
    py::register_exception<IdentityViolation>(m, "IdentityViolation", base.ptr());
    py::register_exception<ProbeQualityError>(m, "ProbeQualityError", base.ptr());

    m.def("kinds", &cli::kinds);
    m.def("resolve_config", &cli::resolve_config, py::arg("text"));
    m.def("example_config", &cli::example_config, py::arg("kind"));
    m.def(
        "run",
        [](const std::string& config, const std::string& out_dir) {
            py::gil_scoped_release nogil;
            return captured([&](std::ostream& os) { return cli::run(config, out_dir, os); });
        },
        py::arg("config_path"), py::arg("out_dir") = "",
        "Runs a config file; returns (exit_code, log).");
    m.def("describe", [](const std::string& kind) {
        return captured([&](std::ostream& os) { return cli::describe(kind, os); });
    });
    m.def("selftest", [] { return captured([](std::ostream& os) { return cli::selftest(os); }); });
    m.def("set_threads", &set_threads, py::arg("n"));

    m.def("gaussian_fourier", &gaussian_fourier, py::arg("P"), py::arg("xi"));
    m.def("gaussian_fourier_quadrature", &gaussian_fourier_quadrature, py::arg("P"), py::arg("xi"),
          py::arg("half_width"), py::arg("nodes") = 401);

    py::enum_<ExtrapolationModel>(m, "ExtrapolationModel")
        .value("half_power", ExtrapolationModel::half_power)
        .value("integer", ExtrapolationModel::integer);
    py::class_<Extrapolation>(m, "Extrapolation")
        .def_readonly("limit", &Extrapolation::limit)
        .def_readonly("c1", &Extrapolation::c1)
        .def_readonly("c2", &Extrapolation::c2)
        .def_readonly("residual", &Extrapolation::residual);
    m.def("extrapolate", &extrapolate, py::arg("sigmas"), py::arg("values"),
          py::arg("model") = ExtrapolationModel::half_power);

    py::class_<ConeQuadruple>(m, "ConeQuadruple")
        .def_readonly("t0", &ConeQuadruple::t0)
        .def_readonly("x0", &ConeQuadruple::x0)
        .def_readonly("theta", &ConeQuadruple::theta)
        .def_readonly("theta_tilde", &ConeQuadruple::theta_tilde)
        .def_readonly("zeta", &ConeQuadruple::zeta)
        .def_readonly("k", &ConeQuadruple::k)
        .def("null_defect", &ConeQuadruple::null_defect)
        .def("balance_defect", &ConeQuadruple::balance_defect);
    m.def("cone_quadruple", &cone_quadruple, py::arg("t0"), py::arg("x0"), py::arg("theta"),
          py::arg("theta_tilde"), py::arg("dim") = 2);

    py::class_<Domain>(m, "Domain")
        .def_static("interval", &Domain::interval)
        .def_static("disk", &Domain::disk)
        .def_static("rectangle", &Domain::rectangle)
        .def_property_readonly("dim", &Domain::dim)
        .def("signed_distance", &Domain::signed_distance);

    py::class_<CarlemanWeight>(m, "CarlemanWeight")
        .def_readonly("rho", &CarlemanWeight::rho)
        .def_readonly("beta", &CarlemanWeight::beta)
        .def_readonly("beta0", &CarlemanWeight::beta0)
        .def_readonly("lambda_", &CarlemanWeight::lambda)
        .def_readonly("T", &CarlemanWeight::T)
        .def_readonly("T_star", &CarlemanWeight::T_star)
        .def_readonly("delta", &CarlemanWeight::delta)
        .def_readonly("eps", &CarlemanWeight::eps)
        .def_readonly("max_psi", &CarlemanWeight::max_psi)
        .def_readonly("min_phi", &CarlemanWeight::min_phi)
        .def("phi", &CarlemanWeight::phi)
        .def("property1", &CarlemanWeight::property1)
        .def("property2", &CarlemanWeight::property2)
        .def("to_json", &CarlemanWeight::to_json);
    m.def("build_weight", &build_weight, py::arg("domain"), py::arg("x0"), py::arg("beta"), py::arg("beta0"),
          py::arg("lambda_"), py::arg("T"), py::arg("samples") = 401);

    py::class_<Cutoff>(m, "Cutoff")
        .def("__call__", &Cutoff::operator())
        .def("d1", &Cutoff::d1)
        .def("d2", &Cutoff::d2);
    m.def("cutoff_chi", &cutoff_chi, py::arg("T"), py::arg("eps"));
}
