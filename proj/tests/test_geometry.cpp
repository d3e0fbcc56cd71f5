#include "support.hpp"

#include "statlap/errors.hpp"
#include "statlap/rng.hpp"

#include <doctest.h>

using namespace statlap;
using namespace statlap::test;

TEST_CASE("grid indexing wraps periodically")
{
    Grid grid({4, 5}, {1.0, 2.0});
    CHECK(grid.node_count() == 20);
    CHECK(grid.index({1, 2}) == 7);
    CHECK(grid.multi_index(7) == std::vector<int>{1, 2});
    CHECK(grid.neighbor(grid.index({0, 4}), 1, 1) == grid.index({0, 0}));
    CHECK(grid.neighbor(grid.index({0, 0}), 0, -1) == grid.index({3, 0}));
    CHECK(grid.spacing(1) == doctest::Approx(0.4));
    CHECK_THROWS_AS(Grid({3}, {1.0}), ShapeMismatch);
}

TEST_CASE("metric inverse")
{
    SUBCASE("identity")
    {
        Grid grid = torus_2d(4);
        TensorField inv = invert_metric(constant_metric(grid, {1, 0, 0, 1}));
        for (std::size_t n = 0; n < grid.node_count(); ++n) {
            CHECK(inv(n, 0, 0) == 1.0);
            CHECK(inv(n, 0, 1) == 0.0);
            CHECK(inv(n, 1, 1) == 1.0);
        }
    }
    SUBCASE("scalar reciprocal")
    {
        Grid grid = torus_1d(8);
        TensorField inv = invert_metric(constant_metric(grid, {4.0}));
        CHECK(inv(3, 0, 0) == 0.25);
    }
    SUBCASE("2x2 multiplies back to identity")
    {
        Grid grid = torus_2d(4);
        TensorField g = constant_metric(grid, {2, 1, 1, 2});
        TensorField inv = invert_metric(g);
        CHECK(inv(0, 0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
        CHECK(inv(0, 0, 1) == doctest::Approx(-1.0 / 3.0).epsilon(1e-15));
        CHECK(inv(0, 1, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
        CHECK(metric_inverse_residual(g, inv) < 1e-15);
    }
    SUBCASE("singular metric names the node")
    {
        Grid grid = torus_2d(4);
        TensorField g = make_field(grid, 2, Symmetry::symmetric, [](std::size_t n, std::span<double> out) {
            double off = n == 5 ? 1.0 : 0.0;
            out[0] = 1.0;
            out[1] = off;
            out[2] = off;
            out[3] = 1.0;
        });
        try {
            invert_metric(g);
            FAIL("expected SingularMetric");
        } catch (const SingularMetric& e) {
            CHECK(e.node() == 5);
        }
    }
}

TEST_CASE("tensor fields reject bad input")
{
    Grid grid = torus_1d(4);
    CHECK_THROWS_AS(TensorField(grid, 1, Symmetry::none, {1.0, 2.0}), ShapeMismatch);
    CHECK_THROWS_AS(TensorField(grid, 0, Symmetry::none, {1.0, 2.0, NAN, 4.0}), ShapeMismatch);
}

TEST_CASE("Levi-Civita coefficients")
{
    SUBCASE("constant metric gives zero connection")
    {
        Grid grid = torus_2d(8);
        ConnectionField lc = christoffel_lc(constant_metric(grid, {2, 0.5, 0.5, 1}), grid);
        for (double v : lc.coefficients().values()) CHECK(v == 0.0);
    }
    SUBCASE("1D sine metric converges at second order")
    {
        auto error_at = [](int n) {
            Grid grid = torus_1d(n);
            TensorField g = make_field(grid, 2, Symmetry::symmetric, [&](std::size_t i, std::span<double> out) {
                out[0] = 2.0 + std::sin(grid.coordinate(i, 0));
            });
            ConnectionField lc = christoffel_lc(g, grid);
            double err = 0.0;
            for (std::size_t i = 0; i < grid.node_count(); ++i) {
                double th = grid.coordinate(i, 0);
                err = std::max(err, std::abs(lc(i, 0, 0, 0) - std::cos(th) / (2.0 * (2.0 + std::sin(th)))));
            }
            return err;
        };
        double e1 = error_at(32);
        double e2 = error_at(64);
        CHECK(e1 < 1e-2);
        CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.2));
    }
    SUBCASE("2D warped product metric converges at second order")
    {
        auto error_at = [](int n) {
            Grid grid = torus_2d(n);
            auto r = [](double u) { return 2.0 + 0.5 * std::sin(u); };
            auto dr = [](double u) { return 0.5 * std::cos(u); };
            TensorField g = make_field(grid, 2, Symmetry::symmetric, [&](std::size_t i, std::span<double> out) {
                double u = grid.coordinate(i, 0);
                out[0] = 1.0;
                out[3] = r(u) * r(u);
            });
            ConnectionField lc = christoffel_lc(g, grid);
            double err = 0.0;
            for (std::size_t i = 0; i < grid.node_count(); ++i) {
                double u = grid.coordinate(i, 0);
                double expect[2][2][2] = {};
                expect[0][1][1] = -r(u) * dr(u);
                expect[1][0][1] = dr(u) / r(u);
                expect[1][1][0] = dr(u) / r(u);
                for (int k = 0; k < 2; ++k)
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b) err = std::max(err, std::abs(lc(i, k, a, b) - expect[k][a][b]));
            }
            return err;
        };
        double e1 = error_at(24);
        double e2 = error_at(48);
        CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.2));
    }
}

TEST_CASE("difference tensor")
{
    SUBCASE("zero C gives zero K")
    {
        Grid grid = torus_2d(4);
        TensorField K = difference_tensor(invert_metric(constant_metric(grid, {2, 0, 0, 1})), zero_ac(grid));
        for (double v : K.values()) CHECK(v == 0.0);
    }
    SUBCASE("unit 1D metric raises identically")
    {
        Grid grid = torus_1d(4);
        TensorField C = make_field(grid, 3, Symmetry::fully_symmetric, [](std::size_t, std::span<double> o) { o[0] = 0.7; });
        TensorField K = difference_tensor(invert_metric(constant_metric(grid, {1.0})), C);
        CHECK(K(2, 0, 0, 0) == doctest::Approx(0.7).epsilon(1e-15));
    }
    SUBCASE("lowering round-trips to C")
    {
        Grid grid = torus_2d(4);
        CounterRng rng(17);
        TensorField C = make_field(grid, 3, Symmetry::fully_symmetric, [&](std::size_t n, std::span<double> o) {
            for (std::size_t c = 0; c < o.size(); ++c) o[c] = rng.normal(n * 8 + c);
        });
        TensorField g = constant_metric(grid, {2, 0, 0, 1});
        TensorField K = difference_tensor(invert_metric(g), C);
        TensorField lowered = lower_difference_tensor(g, K);
        CHECK(max_abs_diff(lowered.values(), C.values()) < 1e-14);
    }
}

TEST_CASE("alpha connections")
{
    Grid grid = torus_2d(16);
    TensorField g = make_field(grid, 2, Symmetry::symmetric, [&](std::size_t n, std::span<double> o) {
        double u = grid.coordinate(n, 0);
        double v = grid.coordinate(n, 1);
        o[0] = 2.0 + 0.5 * std::sin(u);
        o[1] = o[2] = 0.25 * std::sin(u + v);
        o[3] = 2.0 + 0.5 * std::cos(v);
    });
    TensorField C = make_field(grid, 3, Symmetry::fully_symmetric, [&](std::size_t n, std::span<double> o) {
        double u = grid.coordinate(n, 0);
        for (std::size_t c = 0; c < o.size(); ++c) o[c] = 0.3 * std::cos(u + static_cast<double>(c));
    });
    ConnectionField lc = christoffel_lc(g, grid);
    TensorField K = difference_tensor(invert_metric(g), C);

    SUBCASE("alpha zero is Levi-Civita on both sides")
    {
        auto [p, q] = alpha_connection_pair(lc, K, 0.0);
        CHECK(max_abs_diff(p.coefficients().values(), lc.coefficients().values()) == 0.0);
        CHECK(max_abs_diff(q.coefficients().values(), lc.coefficients().values()) == 0.0);
    }
    SUBCASE("alpha one: dual minus primal is K, midpoint is Levi-Civita")
    {
        for (double alpha : {1.0, -0.7, 2.5}) {
            auto [p, q] = alpha_connection_pair(lc, K, alpha);
            auto pv = p.coefficients().values();
            auto qv = q.coefficients().values();
            auto lv = lc.coefficients().values();
            auto kv = K.values();
            for (std::size_t i = 0; i < pv.size(); ++i) {
                CHECK(std::abs((qv[i] - pv[i]) - alpha * kv[i]) <= 4e-16 * std::max(1.0, std::abs(lv[i])));
                CHECK(std::abs(0.5 * (pv[i] + qv[i]) - lv[i]) <= 4e-16 * std::max(1.0, std::abs(lv[i])));
            }
        }
    }
}

TEST_CASE("density")
{
    SUBCASE("flat metric")
    {
        Grid grid = torus_2d(4);
        TensorField rho = density_field(constant_metric(grid, {1, 0, 0, 1}), zero_scalar(grid));
        for (double v : rho.values()) CHECK(v == 1.0);
    }
    SUBCASE("1D g = 4")
    {
        Grid grid = torus_1d(4);
        TensorField rho = density_field(constant_metric(grid, {4.0}), zero_scalar(grid));
        for (double v : rho.values()) CHECK(v == 2.0);
    }
    SUBCASE("log sqrt det potential cancels the volume")
    {
        Grid grid = torus_1d(16);
        TensorField g = make_field(grid, 2, Symmetry::symmetric, [&](std::size_t n, std::span<double> o) {
            o[0] = 2.0 + std::sin(grid.coordinate(n, 0));
        });
        TensorField rho = density_field(g, log_sqrt_det_potential(g));
        for (double v : rho.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
    }
}
