#include "statlap/errors.hpp"
#include "statlap/kernels.hpp"
#include "statlap/models.hpp"
#include "statlap/operators.hpp"
#include "statlap/pipeline.hpp"
#include "statlap/spectral.hpp"
#include "statlap/synthetic.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace statlap;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Node-major numpy view (N, d, ..., d) of a tensor field.
Array to_array(const TensorField& t)
{
    std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(t.node_count())};
    for (int r = 0; r < t.rank(); ++r) shape.push_back(t.dim());
    Array out(shape);
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

TensorField from_array(const Grid& grid, int rank, Symmetry sym, const Array& a, const char* what)
{
    std::size_t expect = grid.node_count();
    for (int r = 0; r < rank; ++r) expect *= static_cast<std::size_t>(grid.dim());
    if (static_cast<std::size_t>(a.size()) != expect || a.shape(0) != static_cast<py::ssize_t>(grid.node_count())) {
        throw ShapeMismatch(std::string(what) + ": array shape does not match the grid");
    }
    return TensorField(grid, rank, sym, std::vector<double>(a.data(), a.data() + a.size()));
}

ManifoldSpec chart_spec(const std::string& model, std::vector<double> center, std::vector<double> period,
                        std::vector<int> points, std::map<std::string, double> params, double alpha,
                        const std::string& f)
{
    ManifoldSpec s;
    s.model = model;
    s.fixed_params = std::move(params);
    s.chart = ChartSpec{std::move(center), std::move(period), std::move(points)};
    s.alpha = alpha;
    s.potential = f;
    return s;
}

struct PyKernel {
    std::unique_ptr<StatModel> model;
    const ManifoldData* manifold;
    const SpectralDecomposition* spectrum;
    KernelContext ctx;
};

std::unique_ptr<PyKernel> make_kernel(const std::string& model, const std::map<std::string, double>& params,
                                      const ManifoldData& md, const SpectralDecomposition& spec,
                                      const std::string& prior, const std::map<std::string, double>& prior_params)
{
    auto k = std::make_unique<PyKernel>();
    k->model = make_model(model, params);
    k->manifold = &md;
    k->spectrum = &spec;
    k->ctx.model = k->model.get();
    k->ctx.manifold = &md;
    k->ctx.spectrum = &spec;
    k->ctx.prior = make_prior(md, prior_kind_from_string(prior), prior_params);
    return k;
}

} // namespace

PYBIND11_MODULE(_statlap, m)
{
    m.doc() = "Vector Laplacian, heat kernel and diffusion distances on statistical manifolds";

    auto base = py::register_exception<Error>(m, "StatlapError", PyExc_RuntimeError);
    py::register_exception<SingularMetric>(m, "SingularMetric", base);
    py::register_exception<ShapeMismatch>(m, "ShapeMismatch", base);
    py::register_exception<NoClosedForm>(m, "NoClosedForm", base);
    py::register_exception<ParameterOutOfRange>(m, "ParameterOutOfRange", base);
    py::register_exception<InternalInconsistency>(m, "InternalInconsistency", base);
    py::register_exception<ConvergenceFailure>(m, "ConvergenceFailure", base);
    py::register_exception<FormMismatch>(m, "FormMismatch", base);
    py::register_exception<ZeroEvidence>(m, "ZeroEvidence", base);
    py::register_exception<PosteriorUnderResolved>(m, "PosteriorUnderResolved", base);
    py::register_exception<ConfigError>(m, "ConfigError", base);
    py::register_exception<IoError>(m, "IoError", base);

    py::class_<Grid>(m, "Grid")
        .def(py::init<std::vector<int>, std::vector<double>, std::vector<double>>(), py::arg("points"),
             py::arg("periods"), py::arg("origin") = std::vector<double>{})
        .def_property_readonly("dim", &Grid::dim)
        .def_property_readonly("node_count", &Grid::node_count)
        .def_property_readonly("points", py::overload_cast<>(&Grid::points, py::const_))
        .def_property_readonly("periods", &Grid::periods)
        .def_property_readonly("origin", &Grid::origins)
        .def("spacing", &Grid::spacing)
        .def("coordinates", [](const Grid& g) {
            Array out({static_cast<py::ssize_t>(g.node_count()), static_cast<py::ssize_t>(g.dim())});
            for (std::size_t n = 0; n < g.node_count(); ++n)
                for (int a = 0; a < g.dim(); ++a) out.mutable_at(n, a) = g.coordinate(n, a);
            return out;
        });

    py::class_<ManifoldData>(m, "Manifold")
        .def_readonly("grid", &ManifoldData::grid)
        .def_readonly("alpha", &ManifoldData::alpha)
        .def_readonly("periodic", &ManifoldData::periodic)
        .def_property_readonly("dim", &ManifoldData::dim)
        .def_property_readonly("node_count", &ManifoldData::node_count)
        .def_property_readonly("g", [](const ManifoldData& md) { return to_array(md.g); })
        .def_property_readonly("g_inv", [](const ManifoldData& md) { return to_array(md.g_inv); })
        .def_property_readonly("C", [](const ManifoldData& md) { return to_array(md.C); })
        .def_property_readonly("K", [](const ManifoldData& md) { return to_array(md.K); })
        .def_property_readonly("f", [](const ManifoldData& md) { return to_array(md.f); })
        .def_property_readonly("rho", [](const ManifoldData& md) { return to_array(md.rho); })
        .def_property_readonly("levi_civita", [](const ManifoldData& md) { return to_array(md.levi_civita.coefficients()); })
        .def_property_readonly("gamma", [](const ManifoldData& md) { return to_array(md.gamma.coefficients()); })
        .def_property_readonly("gamma_dual", [](const ManifoldData& md) { return to_array(md.gamma_dual.coefficients()); });

    m.def(
        "manifold_from_model",
        [](const std::string& model, std::vector<double> center, std::vector<double> period, std::vector<int> points,
           std::map<std::string, double> fixed_params, double alpha, const std::string& f) {
            return build_manifold(chart_spec(model, std::move(center), std::move(period), std::move(points),
                                             std::move(fixed_params), alpha, f));
        },
        py::arg("model"), py::arg("center"), py::arg("period"), py::arg("points"),
        py::arg("fixed_params") = std::map<std::string, double>{}, py::arg("alpha") = 1.0, py::arg("f") = "zero",
        "Catalog model or synthetic preset ('synthetic_trig', 'synthetic_flat') sampled on a chart.");

    m.def(
        "manifold_from_arrays",
        [](const Grid& grid, const Array& g, const Array& C, std::optional<Array> f, double alpha) {
            TensorField gf = from_array(grid, 2, Symmetry::symmetric, g, "g");
            TensorField cf = from_array(grid, 3, Symmetry::fully_symmetric, C, "C");
            TensorField ff = f ? from_array(grid, 0, Symmetry::none, *f, "f") : TensorField::zeros(grid, 0);
            return build_manifold(gf, cf, ff, alpha);
        },
        py::arg("grid"), py::arg("g"), py::arg("C"), py::arg("f") = py::none(), py::arg("alpha") = 1.0);

    // models
    m.def(
        "fisher",
        [](const std::string& model, std::vector<double> theta, std::map<std::string, double> params) {
            return make_model(model, params)->fisher(theta);
        },
        py::arg("model"), py::arg("theta"), py::arg("fixed_params") = std::map<std::string, double>{});
    m.def(
        "amari_chentsov",
        [](const std::string& model, std::vector<double> theta, std::map<std::string, double> params) {
            auto mod = make_model(model, params);
            auto c = mod->amari_chentsov(theta);
            py::ssize_t d = mod->parameter_dim();
            Array out({d, d, d});
            std::copy(c.begin(), c.end(), out.mutable_data());
            return out;
        },
        py::arg("model"), py::arg("theta"), py::arg("fixed_params") = std::map<std::string, double>{});
    auto mc = [](bool third) {
        return [third](const std::string& model, std::vector<double> theta, std::size_t n, std::uint64_t seed,
                       std::map<std::string, double> params) {
            auto mod = make_model(model, params);
            MCEstimate e = third ? ac_tensor_mc(*mod, theta, n, seed) : fisher_mc(*mod, theta, n, seed);
            py::dict out;
            out["value"] = e.value;
            out["standard_error"] = e.standard_error;
            out["n_samples"] = e.n_samples;
            out["seed"] = e.seed;
            return out;
        };
    };
    m.def("fisher_mc", mc(false), py::arg("model"), py::arg("theta"), py::arg("n"), py::arg("seed"),
          py::arg("fixed_params") = std::map<std::string, double>{});
    m.def("ac_tensor_mc", mc(true), py::arg("model"), py::arg("theta"), py::arg("n"), py::arg("seed"),
          py::arg("fixed_params") = std::map<std::string, double>{});

    // operators
    m.def("weak_laplacian", [](const ManifoldData& md) {
        return py::make_tuple(assemble_weak_laplacian(md).matrix, inner_product_data(md).B);
    }, py::arg("manifold"), "(L, B) as scipy sparse matrices.");
    m.def(
        "apply_weak_laplacian",
        [](const ManifoldData& md, const Array& X) {
            return to_array(apply_weak_laplacian(md, assemble_weak_laplacian(md), from_array(md.grid, 1, Symmetry::none, X, "X")));
        },
        py::arg("manifold"), py::arg("X"));
    m.def(
        "apply_strong_laplacian",
        [](const ManifoldData& md, const Array& X, bool check_forms) {
            StrongLaplacianOptions opts;
            opts.check_forms = check_forms;
            auto r = apply_strong_laplacian(md, from_array(md.grid, 1, Symmetry::none, X, "X"), opts);
            return py::make_tuple(to_array(r.proof_form), to_array(r.expanded_form), r.relative_gap);
        },
        py::arg("manifold"), py::arg("X"), py::arg("check_forms") = true);
    m.def(
        "divergence_f",
        [](const ManifoldData& md, const Array& X) { return to_array(divergence_f(md, from_array(md.grid, 1, Symmetry::none, X, "X"))); },
        py::arg("manifold"), py::arg("X"));

    // spectral
    py::class_<SpectralDecomposition>(m, "Spectrum")
        .def_property_readonly("eigenvalues", [](const SpectralDecomposition& s) {
            return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(s.eigenvalues.data(), static_cast<Eigen::Index>(s.eigenvalues.size())));
        })
        .def_readonly("eigenvectors", &SpectralDecomposition::eigenvectors)
        .def_readonly("complete", &SpectralDecomposition::complete)
        .def_readonly("max_residual", &SpectralDecomposition::max_residual)
        .def_readonly("orthonormality_residual", &SpectralDecomposition::orthonormality_residual)
        .def("field", [](const SpectralDecomposition& s, std::size_t n) { return to_array(s.field(n)); })
        .def("__len__", &SpectralDecomposition::count);

    m.def(
        "eigendecompose",
        [](const ManifoldData& md, std::size_t k, double tolerance, std::uint64_t seed) {
            EigenOptions opts;
            opts.tolerance = tolerance;
            opts.seed = seed;
            return eigendecompose(assemble_weak_laplacian(md), md, k, opts);
        },
        py::arg("manifold"), py::arg("k"), py::arg("tolerance") = 1e-8, py::arg("seed") = 0x5eed);
    m.def(
        "spectrum_for_time",
        [](const ManifoldData& md, double t, double tail_tolerance) {
            return spectrum_for_time(assemble_weak_laplacian(md), md, t, tail_tolerance);
        },
        py::arg("manifold"), py::arg("t"), py::arg("tail_tolerance") = 1e-12);
    m.def(
        "heat_apply",
        [](const SpectralDecomposition& s, double t, const Array& X) {
            return to_array(heat_apply(s, t, from_array(s.grid, 1, Symmetry::none, X, "X")).field);
        },
        py::arg("spectrum"), py::arg("t"), py::arg("X"));
    m.def(
        "heat_kernel_block",
        [](const SpectralDecomposition& s, const ManifoldData& md, double t, std::size_t x, std::size_t y) {
            return heat_kernel_block(s, md, t, x, y).matrix;
        },
        py::arg("spectrum"), py::arg("manifold"), py::arg("t"), py::arg("x"), py::arg("y"));
    m.def(
        "vector_diffusion_distance",
        [](const SpectralDecomposition& s, const ManifoldData& md, double t, std::size_t x, std::size_t y) {
            auto d = vector_diffusion_distance(s, md, t, x, y);
            py::dict out;
            out["distance"] = d.distance;
            out["trace_form"] = d.trace_form;
            out["double_sum_form"] = d.double_sum_form;
            out["tail_bound"] = d.tail_bound;
            return out;
        },
        py::arg("spectrum"), py::arg("manifold"), py::arg("t"), py::arg("x"), py::arg("y"));
    m.def(
        "vdd_matrix",
        [](const SpectralDecomposition& s, const ManifoldData& md, double t, std::vector<std::size_t> nodes, int threads) {
            return vdd_matrix(s, md, t, nodes, 5e8, threads).distances;
        },
        py::arg("spectrum"), py::arg("manifold"), py::arg("t"), py::arg("nodes"), py::arg("threads") = 1);

    // kernels
    py::class_<PyKernel>(m, "PosteriorKernel")
        .def(py::init(&make_kernel), py::arg("model"), py::arg("fixed_params"), py::arg("manifold"),
             py::arg("spectrum"), py::arg("prior") = "bump",
             py::arg("prior_params") = std::map<std::string, double>{}, py::keep_alive<1, 4>(), py::keep_alive<1, 5>())
        .def("posterior", [](const PyKernel& k, Sample x) {
            return to_array(posterior_field(*k.model, k.ctx.prior, x, *k.manifold).density);
        })
        .def("gradient", [](const PyKernel& k, Sample x) {
            return to_array(posterior_gradient(posterior_field(*k.model, k.ctx.prior, x, *k.manifold), *k.manifold));
        })
        .def("value", [](const PyKernel& k, Sample x, Sample y, double t) { return kernel_value(k.ctx, x, y, t).value; })
        .def("distance", [](const PyKernel& k, Sample x, Sample y, double t) { return kernel_distance(k.ctx, x, y, t); })
        .def(
            "gram",
            [](const PyKernel& k, std::vector<Sample> xs, double t, int threads) {
                return kernel_gram(k.ctx, xs, t, threads).values;
            },
            py::arg("samples"), py::arg("t"), py::arg("threads") = 1);

    // pipeline
    m.def(
        "run_config",
        [](const std::filesystem::path& config, std::optional<std::filesystem::path> output, bool verify_only) {
            RunConfig cfg = load_config(config);
            if (output) cfg.output = *output;
            return run_pipeline(cfg, verify_only).to_json().dump();
        },
        py::arg("config"), py::arg("output") = py::none(), py::arg("verify_only") = false,
        "Runs a JSON config; returns report.json as a string.");
}
