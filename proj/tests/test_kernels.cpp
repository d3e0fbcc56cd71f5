#include "support.hpp"

#include "statlap/errors.hpp"
#include "statlap/kernels.hpp"
#include "statlap/models.hpp"
#include "statlap/rng.hpp"

#include <doctest.h>

using namespace statlap;
using namespace statlap::test;

namespace {

// Likelihood that does not depend on theta.
class FlatModel final : public StatModel {
public:
    std::string name() const override { return "flat"; }
    int parameter_dim() const override { return 1; }
    double loglik(Sample, std::span<const double>) const override { return 0.0; }
    Eigen::VectorXd loglik_grad(Sample, std::span<const double>) const override { return Eigen::VectorXd::Zero(1); }
    Sample draw(std::span<const double>, const CounterRng&, std::uint64_t) const override { return 0.0; }
    Eigen::MatrixXd fisher(std::span<const double>) const override { return Eigen::MatrixXd::Identity(1, 1); }
    std::vector<double> amari_chentsov(std::span<const double>) const override { return {0.0}; }
    void check_parameter(std::span<const double>) const override {}
};

struct Setup {
    std::unique_ptr<StatModel> model;
    ManifoldData md;
    SpectralDecomposition spec;
    KernelContext ctx;
};

std::unique_ptr<Setup> bernoulli_setup(int points, double t)
{
    auto s = std::make_unique<Setup>();
    s->model = std::make_unique<BernoulliModel>();
    Grid grid({points}, {0.8}, {0.1});
    auto [g, C] = eval_closed_form(*s->model, grid);
    s->md = build_manifold(g, C, zero_scalar(grid), 1.0);
    s->md.periodic = false;
    s->spec = spectrum_for_time(assemble_weak_laplacian(s->md), s->md, t);
    s->ctx.model = s->model.get();
    s->ctx.manifold = &s->md;
    s->ctx.spectrum = &s->spec;
    s->ctx.prior = make_prior(s->md, PriorKind::bump);
    return s;
}

} // namespace

TEST_CASE("posterior")
{
    SUBCASE("flat likelihood and uniform prior")
    {
        ManifoldData md = flat_manifold(torus_1d(32, 1.0));
        FlatModel m;
        PosteriorField pf = posterior_field(m, make_prior(md, PriorKind::uniform), 0.0, md);
        for (double v : pf.density.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-14));
    }
    SUBCASE("normalizes for random observations")
    {
        auto s = bernoulli_setup(64, 0.1);
        CounterRng rng(1);
        for (int k = 0; k < 10; ++k) {
            Sample x = rng.uniform(k) < 0.5 ? 0.0 : 1.0;
            PosteriorField pf = posterior_field(*s->model, s->ctx.prior, x, s->md);
            CHECK(std::abs(integrate(s->md, pf.density) - 1.0) < 1e-10);
        }
    }
    SUBCASE("beta prior puts the maximum at the analytic MAP")
    {
        auto s = bernoulli_setup(128, 0.1);
        const double a = 3.0, b = 2.0;
        TensorField prior = make_prior(s->md, PriorKind::beta, {{"a", a}, {"b", b}});
        PosteriorField pf = posterior_field(*s->model, prior, 1.0, s->md);
        auto vals = pf.density.values();
        std::size_t arg = static_cast<std::size_t>(std::max_element(vals.begin(), vals.end()) - vals.begin());
        double map = a / (a + b - 1.0);
        CHECK(std::abs(s->md.grid.coordinate(arg, 0) - map) <= s->md.grid.spacing(0));
    }
    SUBCASE("sharp posteriors on coarse grids are refused")
    {
        GaussianLocationModel m(0.05);
        Grid grid({16}, {4.0}, {-2.0});
        auto [g, C] = eval_closed_form(m, grid);
        ManifoldData md = build_manifold(g, C, zero_scalar(grid), 1.0);
        CHECK_THROWS_AS(posterior_field(m, make_prior(md, PriorKind::uniform), 0.0, md), PosteriorUnderResolved);
    }
    SUBCASE("vanishing evidence is reported")
    {
        GaussianLocationModel m(0.5);
        Grid grid({32}, {4.0}, {-2.0});
        auto [g, C] = eval_closed_form(m, grid);
        ManifoldData md = build_manifold(g, C, zero_scalar(grid), 1.0);
        CHECK_THROWS_AS(posterior_field(m, make_prior(md, PriorKind::uniform), 1e3, md), ZeroEvidence);
    }
}

TEST_CASE("posterior gradient")
{
    SUBCASE("constant density")
    {
        ManifoldData md = flat_manifold(torus_1d(16, 1.0));
        FlatModel m;
        PosteriorField pf = posterior_field(m, make_prior(md, PriorKind::uniform), 0.0, md);
        TensorField grad = posterior_gradient(pf, md);
        for (double v : grad.values()) CHECK(std::abs(v) < 1e-14);
    }
    SUBCASE("metric raise")
    {
        Grid grid = torus_1d(32, 1.0);
        PosteriorField pf;
        pf.density = scalar(grid, [](const auto& x) { return 1.0 + 0.5 * std::sin(kTwoPi * x[0]); });
        ManifoldData flat = flat_manifold(grid);
        ManifoldData four = build_manifold(constant_metric(grid, {4.0}), zero_ac(grid), zero_scalar(grid), 1.0);
        TensorField a = posterior_gradient(pf, flat);
        TensorField b = posterior_gradient(pf, four);
        const double h = grid.spacing(0);
        for (std::size_t n = 0; n < grid.node_count(); ++n) {
            double coord = (pf.density(grid.neighbor(n, 0, 1)) - pf.density(grid.neighbor(n, 0, -1))) / (2.0 * h);
            CHECK(a(n, 0) == doctest::Approx(coord).epsilon(1e-14));
            CHECK(b(n, 0) == doctest::Approx(0.25 * coord).epsilon(1e-14));
        }
    }
}

TEST_CASE("kernel values")
{
    auto s = bernoulli_setup(48, 0.05);
    SUBCASE("symmetric and nonnegative on the diagonal")
    {
        auto k01 = kernel_value(s->ctx, 0.0, 1.0, 0.05);
        auto k10 = kernel_value(s->ctx, 1.0, 0.0, 0.05);
        CHECK(std::abs(k01.value - k10.value) <= 1e-10 * std::abs(k01.value));
        CHECK(k01.cross_checked);
        CHECK(kernel_value(s->ctx, 1.0, 1.0, 0.05).value >= 0.0);
    }
    SUBCASE("t = 0 is the direct inner product of the gradients")
    {
        auto z = bernoulli_setup(48, 0.0);
        REQUIRE(z->spec.complete);
        auto grad = [&](Sample x) {
            return posterior_gradient(posterior_field(*z->model, z->ctx.prior, x, z->md), z->md);
        };
        TensorField a = grad(0.0);
        TensorField b = grad(1.0);
        double direct = 0.0;
        for (std::size_t n = 0; n < z->md.node_count(); ++n) {
            direct += z->md.rho(n) * z->md.grid.cell_volume() * a.vector_at(n).dot(z->md.g.matrix_at(n) * b.vector_at(n));
        }
        double k = kernel_value(z->ctx, 0.0, 1.0, 0.0).value;
        CHECK(std::abs(k - direct) <= 1e-7 * std::abs(direct));
    }
    SUBCASE("kernel distance")
    {
        CHECK(kernel_distance(s->ctx, 1.0, 1.0, 0.05) == 0.0);
        CHECK(std::abs(kernel_distance(s->ctx, 0.0, 1.0, 0.05) - kernel_distance(s->ctx, 1.0, 0.0, 0.05)) < 1e-12);
    }
}

TEST_CASE("Gram matrices")
{
    SUBCASE("bernoulli, 20 observations")
    {
        for (double t : {0.01, 0.1, 1.0}) {
            auto s = bernoulli_setup(48, t);
            CounterRng rng(31);
            std::vector<Sample> xs;
            for (int k = 0; k < 20; ++k) xs.push_back(rng.uniform(k) < 0.3 ? 1.0 : 0.0);
            GramMatrix gm = kernel_gram(s->ctx, xs, t, 2);
            CHECK(gm.min_eigenvalue >= -1e-10);
            CHECK(gm.max_form_gap <= kKernelFormTolerance);
            for (int i = 1; i < 20; ++i) {
                if (xs[i] == xs[0]) CHECK((gm.values.row(i) - gm.values.row(0)).cwiseAbs().maxCoeff() == 0.0);
            }
        }
    }
    SUBCASE("single sample")
    {
        auto s = bernoulli_setup(48, 0.1);
        GramMatrix gm = kernel_gram(s->ctx, {1.0}, 0.1);
        CHECK(gm.values.rows() == 1);
        CHECK(gm.values(0, 0) >= 0.0);
    }
    SUBCASE("threads do not change results")
    {
        auto s = bernoulli_setup(48, 0.1);
        std::vector<Sample> xs = {0.0, 1.0, 1.0, 0.0, 1.0};
        GramMatrix a = kernel_gram(s->ctx, xs, 0.1, 1);
        GramMatrix b = kernel_gram(s->ctx, xs, 0.1, 3);
        CHECK((a.values - b.values).cwiseAbs().maxCoeff() == 0.0);
    }
}
