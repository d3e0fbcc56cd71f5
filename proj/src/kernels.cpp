#include "statlap/kernels.hpp"

#include "statlap/errors.hpp"
#include "statlap/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <sstream>

namespace statlap {

PriorKind prior_kind_from_string(const std::string& s)
{
    if (s == "uniform") return PriorKind::uniform;
    if (s == "bump") return PriorKind::bump;
    if (s == "beta") return PriorKind::beta;
    throw ConfigError("unknown prior '" + s + "'");
}

double integrate(const ManifoldData& md, const TensorField& h)
{
    std::vector<double> terms(md.node_count());
    for (std::size_t n = 0; n < md.node_count(); ++n) {
        terms[n] = h(n) * md.rho(n);
    }
    return pairwise_sum(terms) * md.grid.cell_volume();
}

TensorField make_prior(const ManifoldData& md, PriorKind kind, const std::map<std::string, double>& params)
{
    const Grid& grid = md.grid;
    auto param = [&](const char* key, double fallback) {
        auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    };
    TensorField raw;
    switch (kind) {
    case PriorKind::uniform:
        raw = make_field(grid, 0, Symmetry::none, [](std::size_t, std::span<double> out) { out[0] = 1.0; });
        break;
    case PriorKind::bump:
        raw = make_field(grid, 0, Symmetry::none, [&](std::size_t n, std::span<double> out) {
            double v = 1.0;
            for (int a = 0; a < grid.dim(); ++a) {
                double u = (grid.coordinate(n, a) - grid.origin(a)) / grid.period(a);
                double s = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * u));
                v *= s * s;
            }
            out[0] = v;
        });
        break;
    case PriorKind::beta: {
        const double a = param("a", 2.0);
        const double b = param("b", 2.0);
        raw = make_field(grid, 0, Symmetry::none, [&](std::size_t n, std::span<double> out) {
            double v = 1.0;
            for (int ax = 0; ax < grid.dim(); ++ax) {
                double th = grid.coordinate(n, ax);
                if (!(th > 0.0 && th < 1.0)) {
                    throw ParameterOutOfRange("beta prior needs chart coordinates inside (0, 1)");
                }
                v *= std::pow(th, a - 1.0) * std::pow(1.0 - th, b - 1.0);
            }
            out[0] = v;
        });
        break;
    }
    }
    double z = integrate(md, raw);
    if (!(z > 0.0)) {
        throw ZeroEvidence("prior integrates to zero");
    }
    return make_field(grid, 0, Symmetry::none, [&](std::size_t n, std::span<double> out) { out[0] = raw(n) / z; });
}

PosteriorField posterior_field(const StatModel& model, const TensorField& prior, Sample x, const ManifoldData& md,
                               const PosteriorOptions& options)
{
    if (prior.rank() != 0 || !(prior.grid() == md.grid)) {
        throw ShapeMismatch("posterior_field: prior must be a scalar field on the manifold grid");
    }
    const Grid& grid = md.grid;
    for (std::size_t n = 0; n < grid.node_count(); ++n) {
        if (prior(n) < 0.0) {
            throw ParameterOutOfRange("posterior_field: prior is negative at node " + std::to_string(n));
        }
    }
    if (std::abs(integrate(md, prior) - 1.0) > 1e-10) {
        throw ParameterOutOfRange("posterior_field: prior does not integrate to 1 against rho");
    }
    auto numerator = make_field(grid, 0, Symmetry::none, [&](std::size_t n, std::span<double> out) {
        auto theta = grid.coordinates(n);
        model.check_parameter(theta);
        out[0] = std::exp(model.loglik(x, theta)) * prior(n);
    });
    double z = integrate(md, numerator);
    if (!(z >= kMinEvidence)) {
        throw ZeroEvidence("posterior_field: evidence " + std::to_string(z) + " underflows");
    }
    PosteriorField pf;
    pf.x = x;
    pf.evidence = z;
    pf.density = make_field(grid, 0, Symmetry::none,
                            [&](std::size_t n, std::span<double> out) { out[0] = numerator(n) / z; });

    // Resolution: 4 sigma along each axis must span min_support_nodes cells.
    for (int a = 0; a < grid.dim(); ++a) {
        auto coord = make_field(grid, 0, Symmetry::none,
                                [&](std::size_t n, std::span<double> out) { out[0] = grid.coordinate(n, a) * pf.density(n); });
        double mean = integrate(md, coord);
        auto second = make_field(grid, 0, Symmetry::none, [&](std::size_t n, std::span<double> out) {
            double dx = grid.coordinate(n, a) - mean;
            out[0] = dx * dx * pf.density(n);
        });
        double sigma = std::sqrt(std::max(0.0, integrate(md, second)));
        double support = 4.0 * sigma / grid.spacing(a);
        if (support < options.min_support_nodes) {
            std::ostringstream os;
            os << "posterior for x = " << x << " spans " << support << " nodes along axis " << a
               << ", need " << options.min_support_nodes << "; refine the chart";
            throw PosteriorUnderResolved(os.str());
        }
    }
    return pf;
}

TensorField posterior_gradient(const PosteriorField& pf, const ManifoldData& md)
{
    const Grid& grid = md.grid;
    const int d = grid.dim();
    const TensorField& f = pf.density;
    return make_field(grid, 1, Symmetry::none, [&](std::size_t n, std::span<double> out) {
        for (int i = 0; i < d; ++i) {
            double s = 0.0;
            for (int j = 0; j < d; ++j) {
                double dj = (f(grid.neighbor(n, j, 1)) - f(grid.neighbor(n, j, -1))) / (2.0 * grid.spacing(j));
                s += md.g_inv(n, i, j) * dj;
            }
            out[i] = s;
        }
    });
}

namespace {

Eigen::VectorXd gradient_vector(const KernelContext& ctx, Sample x)
{
    PosteriorField pf = posterior_field(*ctx.model, ctx.prior, x, *ctx.manifold, ctx.posterior_options);
    return to_vector(posterior_gradient(pf, *ctx.manifold));
}

double single_form(const KernelContext& ctx, const Eigen::VectorXd& a, const Eigen::VectorXd& b, double t)
{
    TensorField heated = heat_apply(*ctx.spectrum, t, to_field(ctx.manifold->grid, b)).field;
    return a.dot(ctx.spectrum->mass * to_vector(heated));
}

// Quadrature over theta x theta' of g(a(theta), p_t(theta, theta') b(theta')) rho rho'.
double double_form(const KernelContext& ctx, const Eigen::VectorXd& a, const Eigen::VectorXd& b, double t)
{
    const ManifoldData& md = *ctx.manifold;
    const SpectralDecomposition& spec = *ctx.spectrum;
    const int d = md.dim();
    const double w = md.grid.cell_volume();
    const std::size_t N = md.node_count();
    std::vector<double> terms;
    terms.reserve(N * N);
    for (std::size_t x = 0; x < N; ++x) {
        Eigen::VectorXd ax = md.g.matrix_at(x) * a.segment(static_cast<Eigen::Index>(x * d), d);
        for (std::size_t y = 0; y < N; ++y) {
            HeatKernelBlock blk = heat_kernel_block(spec, md, t, x, y);
            double v = ax.dot(blk.matrix * b.segment(static_cast<Eigen::Index>(y * d), d));
            terms.push_back(v * md.rho(x) * md.rho(y) * w * w);
        }
    }
    return pairwise_sum(terms);
}

bool fits_budget(const KernelContext& ctx)
{
    const double N = static_cast<double>(ctx.manifold->node_count());
    return N * N * static_cast<double>(ctx.spectrum->count()) * ctx.manifold->dim() <= ctx.double_form_budget;
}

double relative_gap(double a, double b, double scale)
{
    return std::abs(a - b) / std::max({scale, std::abs(a), std::abs(b), 1e-300});
}

void check_context(const KernelContext& ctx)
{
    if (ctx.model == nullptr || ctx.manifold == nullptr || ctx.spectrum == nullptr) {
        throw ShapeMismatch("kernel context is incomplete");
    }
}

} // namespace

KernelValue kernel_value(const KernelContext& ctx, Sample x, Sample x_prime, double t)
{
    check_context(ctx);
    Eigen::VectorXd a = gradient_vector(ctx, x);
    Eigen::VectorXd b = gradient_vector(ctx, x_prime);
    KernelValue out;
    out.value = 0.5 * (single_form(ctx, a, b, t) + single_form(ctx, b, a, t));
    out.tail_bound = truncation_tail(*ctx.spectrum, t);
    if (fits_budget(ctx)) {
        out.double_form = double_form(ctx, a, b, t);
        out.cross_checked = true;
        // scale: the Cauchy-Schwarz bound |a|_B |b|_B
        double scale = std::sqrt(a.dot(ctx.spectrum->mass * a) * b.dot(ctx.spectrum->mass * b));
        double gap = relative_gap(out.value, out.double_form, scale);
        if (gap > kKernelFormTolerance) {
            std::ostringstream os;
            os << "kernel value: single and double integral forms disagree (relative gap " << gap << ")";
            throw FormMismatch(os.str());
        }
    }
    return out;
}

GramMatrix kernel_gram(const KernelContext& ctx, const std::vector<Sample>& samples, double t, int threads)
{
    check_context(ctx);
    const std::size_t m = samples.size();
    if (m == 0) {
        throw ShapeMismatch("kernel_gram needs at least one sample");
    }
    std::vector<Eigen::VectorXd> grads(m);
    std::vector<Eigen::VectorXd> heated(m);
    parallel_for(m, threads, [&](std::size_t i) {
        grads[i] = gradient_vector(ctx, samples[i]);
        heated[i] = ctx.spectrum->mass
                    * to_vector(heat_apply(*ctx.spectrum, t, to_field(ctx.manifold->grid, grads[i])).field);
    });
    GramMatrix out;
    out.samples = samples;
    out.t = t;
    out.tail_bound = truncation_tail(*ctx.spectrum, t);
    out.values.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i; j < m; ++j) {
            double ij = grads[i].dot(heated[j]);
            double ji = grads[j].dot(heated[i]);
            out.asymmetry = std::max(out.asymmetry, std::abs(ij - ji));
            double v = 0.5 * (ij + ji);
            out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
            out.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
        }
    }
    if (fits_budget(ctx)) {
        // Cross-check the diagonal and the first row against the double integral.
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t i : {std::size_t{0}, j}) {
                double df = double_form(ctx, grads[i], grads[j], t);
                double scale = std::sqrt(grads[i].dot(ctx.spectrum->mass * grads[i]) * grads[j].dot(ctx.spectrum->mass * grads[j]));
                double gap = relative_gap(out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), df, scale);
                out.max_form_gap = std::max(out.max_form_gap, gap);
                ++out.cross_checked;
                if (gap > kKernelFormTolerance) {
                    std::ostringstream os;
                    os << "kernel Gram entry (" << i << ", " << j << "): integral forms disagree (relative gap " << gap << ")";
                    throw FormMismatch(os.str());
                }
                if (i == j) {
                    break;
                }
            }
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.values, Eigen::EigenvaluesOnly);
    out.min_eigenvalue = es.eigenvalues().minCoeff();
    return out;
}

double kernel_distance(const KernelContext& ctx, Sample x, Sample y, double t)
{
    double kxx = kernel_value(ctx, x, x, t).value;
    double kyy = kernel_value(ctx, y, y, t).value;
    double kxy = kernel_value(ctx, x, y, t).value;
    return std::sqrt(std::max(0.0, kxx + kyy - 2.0 * kxy));
}

} // namespace statlap
