#include "support.hpp"

#include "statlap/errors.hpp"
#include "statlap/operators.hpp"
#include "statlap/pipeline.hpp"
#include "statlap/rng.hpp"
#include "statlap/synthetic.hpp"

#include <doctest.h>

using namespace statlap;
using namespace statlap::test;

namespace {

ManifoldData trig_manifold(int n, double a = 0.5, double b = 0.5, double c = 0.3, double alpha = 1.0)
{
    auto s = trig_fields(torus_2d(n), a, b, c);
    return build_manifold(s.g, s.C, s.f, alpha);
}

TensorField random_vector_field(const Grid& grid, std::uint64_t seed)
{
    CounterRng rng(seed);
    return make_field(grid, 1, Symmetry::none, [&](std::size_t n, std::span<double> out) {
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = rng.normal(n * out.size() + k);
    });
}

double rel(const TensorField& a, const TensorField& b)
{
    std::vector<bool> all(a.node_count(), true);
    return max_abs_difference(a, b, all) / std::max(max_abs(a, all), max_abs(b, all));
}

} // namespace

TEST_CASE("covariant derivative")
{
    SUBCASE("flat metric and constant field")
    {
        ManifoldData md = flat_manifold(torus_2d(8));
        TensorField X = make_field(md.grid, 1, Symmetry::none, [](std::size_t, std::span<double> o) {
            o[0] = 1.5;
            o[1] = -0.5;
        });
        Eigen::VectorXd dx = covariant_derivative(md).matrix * to_vector(X);
        CHECK(dx.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("sine field converges at second order")
    {
        auto error_at = [](int n) {
            const double L = 3.0;
            ManifoldData md = flat_manifold(torus_1d(n, L));
            TensorField X = scalar(md.grid, [&](const auto& x) { return std::sin(kTwoPi * x[0] / L); });
            X = TensorField(md.grid, 1, Symmetry::none, std::vector<double>(X.values().begin(), X.values().end()));
            TensorField dx = covariant_derivative_centered(md, X);
            double err = 0.0;
            for (std::size_t i = 0; i < md.node_count(); ++i) {
                double expect = kTwoPi / L * std::cos(kTwoPi * md.grid.coordinate(i, 0) / L);
                err = std::max(err, std::abs(dx(i, 0, 0) - expect));
            }
            return err;
        };
        CHECK(error_at(32) / error_at(64) == doctest::Approx(4.0).epsilon(0.25));
    }
    SUBCASE("dual minus primal is K applied to X")
    {
        ManifoldData md = trig_manifold(12);
        TensorField X = random_vector_field(md.grid, 3);
        TensorField p = covariant_derivative_centered(md, X, ConnectionChoice::primal);
        TensorField q = covariant_derivative_centered(md, X, ConnectionChoice::dual);
        double worst = 0.0;
        for (std::size_t n = 0; n < md.node_count(); ++n)
            for (int i = 0; i < 2; ++i)
                for (int k = 0; k < 2; ++k) {
                    double kx = 0.0;
                    for (int l = 0; l < 2; ++l) kx += md.alpha * md.K(n, k, i, l) * X(n, l);
                    worst = std::max(worst, std::abs(q(n, i, k) - p(n, i, k) - kx) / std::max(1.0, std::abs(p(n, i, k))));
                }
        CHECK(worst < 1e-13);
    }
}

TEST_CASE("weighted divergence")
{
    ManifoldData md = trig_manifold(16);
    SUBCASE("integral vanishes")
    {
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            TensorField d = divergence_f(md, random_vector_field(md.grid, seed));
            double total = 0.0;
            double mag = 0.0;
            for (std::size_t n = 0; n < md.node_count(); ++n) {
                total += d(n) * md.rho(n);
                mag += std::abs(d(n) * md.rho(n));
            }
            CHECK(std::abs(total) / mag < 1e-12);
        }
    }
    SUBCASE("lemma identities converge at second order")
    {
        auto residuals = [](int n) {
            ManifoldData m = trig_manifold(n);
            TensorField X = smooth_random_field(m.grid, 1, 5);
            TensorField h = smooth_random_field(m.grid, 0, 6);
            TensorField df = divergence_f(m, X);
            TensorField dv = divergence_riemannian(m, X);
            TensorField xf = directional_derivative(X, m.f);
            TensorField hx = make_field(m.grid, 1, Symmetry::none, [&](std::size_t i, std::span<double> o) {
                o[0] = h(i) * X(i, 0);
                o[1] = h(i) * X(i, 1);
            });
            TensorField dhx = divergence_f(m, hx);
            TensorField xh = directional_derivative(X, h);
            double r1 = 0.0, r2 = 0.0;
            for (std::size_t i = 0; i < m.node_count(); ++i) {
                r1 = std::max(r1, std::abs(df(i) - dv(i) + xf(i)));
                r2 = std::max(r2, std::abs(dhx(i) - h(i) * df(i) - xh(i)));
            }
            return std::pair{r1, r2};
        };
        auto [a1, a2] = residuals(24);
        auto [b1, b2] = residuals(48);
        CHECK(a1 / b1 == doctest::Approx(4.0).epsilon(0.25));
        CHECK(a2 / b2 == doctest::Approx(4.0).epsilon(0.25));
    }
}

TEST_CASE("discrete adjoint")
{
    ManifoldData md = trig_manifold(10);
    DiscreteOperator D = covariant_derivative(md);
    InnerProductData ip = inner_product_data(md);
    SUBCASE("pairing identity")
    {
        CounterRng rng(11);
        for (int p = 0; p < 20; ++p) {
            Eigen::VectorXd X(D.cols()), W(D.rows());
            for (Eigen::Index i = 0; i < X.size(); ++i) X[i] = rng.normal(i, 2 * p);
            for (Eigen::Index i = 0; i < W.size(); ++i) W[i] = rng.normal(i, 2 * p + 1);
            Eigen::VectorXd DX = D.matrix * X;
            double lhs = DX.dot(ip.M * W);
            double rhs = X.dot(ip.B * apply_adjoint(md, W));
            double scale = std::sqrt(DX.dot(ip.M * DX) * W.dot(ip.M * W));
            CHECK(std::abs(lhs - rhs) / scale < 1e-10);
        }
    }
    SUBCASE("zero maps to zero")
    {
        Eigen::VectorXd W = Eigen::VectorXd::Zero(D.rows());
        CHECK(apply_adjoint(md, W).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("constant tensor on the flat torus")
    {
        ManifoldData flat = flat_manifold(torus_2d(8));
        TensorField W = make_field(flat.grid, 2, Symmetry::none, [](std::size_t, std::span<double> o) {
            o[0] = 0.5;
            o[1] = -1.0;
            o[2] = 2.0;
            o[3] = 0.25;
        });
        TensorField out = apply_adjoint_strong(flat, W);
        for (double v : out.values()) CHECK(v == 0.0);
    }
}

TEST_CASE("weak Laplacian")
{
    ManifoldData md = trig_manifold(12);
    DiscreteOperator L = assemble_weak_laplacian(md);
    SUBCASE("bit-exact symmetry")
    {
        Eigen::SparseMatrix<double> diff = L.matrix - Eigen::SparseMatrix<double>(L.matrix.transpose());
        double worst = 0.0;
        for (int c = 0; c < diff.outerSize(); ++c)
            for (Eigen::SparseMatrix<double>::InnerIterator it(diff, c); it; ++it) worst = std::max(worst, std::abs(it.value()));
        CHECK(worst == 0.0);
    }
    SUBCASE("nonnegative quadratic form")
    {
        CounterRng rng(2);
        for (int p = 0; p < 10; ++p) {
            Eigen::VectorXd X(L.cols());
            for (Eigen::Index i = 0; i < X.size(); ++i) X[i] = rng.normal(i, p);
            CHECK(X.dot(L.matrix * X) >= 0.0);
        }
    }
    SUBCASE("additive constant in f leaves it unchanged")
    {
        TensorField shifted = make_field(md.grid, 0, Symmetry::none, [&](std::size_t n, std::span<double> o) { o[0] = md.f(n) + 2.0; });
        ManifoldData md2 = with_potential(md, shifted);
        TensorField X = smooth_random_field(md.grid, 1, 4);
        CHECK(rel(apply_weak_laplacian(md, L, X), apply_weak_laplacian(md2, assemble_weak_laplacian(md2), X)) < 1e-12);
    }
}

TEST_CASE("strong Laplacian")
{
    SUBCASE("zero field")
    {
        ManifoldData md = trig_manifold(12);
        auto r = apply_strong_laplacian(md, TensorField::zeros(md.grid, 1));
        for (double v : r.proof_form.values()) CHECK(v == 0.0);
        for (double v : r.expanded_form.values()) CHECK(v == 0.0);
    }
    SUBCASE("weak and strong forms agree at second order")
    {
        auto gap = [](int n) {
            ManifoldData md = trig_manifold(n);
            TensorField X = smooth_random_field(md.grid, 1, 8);
            auto s = apply_strong_laplacian(md, X);
            return std::pair{rel(apply_weak_laplacian(md, assemble_weak_laplacian(md), X), s.proof_form), s.relative_gap};
        };
        auto [w1, f1] = gap(24);
        auto [w2, f2] = gap(48);
        CHECK(w1 / w2 == doctest::Approx(4.0).epsilon(0.25));
        CHECK(f1 / f2 == doctest::Approx(4.0).epsilon(0.25));
    }
    SUBCASE("reduces to the connection Laplacian when C and f vanish")
    {
        auto gap = [](int n) {
            ManifoldData md = trig_manifold(n, 0.5, 0.0, 0.0);
            TensorField X = smooth_random_field(md.grid, 1, 9);
            return rel(apply_strong_laplacian(md, X).proof_form, riemannian_connection_laplacian(md, X));
        };
        CHECK(gap(24) / gap(48) == doctest::Approx(4.0).epsilon(0.25));
    }
    SUBCASE("inconsistent forms are reported")
    {
        ManifoldData md = trig_manifold(8);
        StrongLaplacianOptions opts;
        opts.tolerance = 1e-14;
        CHECK_THROWS_AS(apply_strong_laplacian(md, smooth_random_field(md.grid, 1, 1), opts), InternalInconsistency);
    }
}
