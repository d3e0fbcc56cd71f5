#include "statlap/synthetic.hpp"

#include "statlap/errors.hpp"

#include <cmath>
#include <numbers>

namespace statlap {

SyntheticFields flat_fields(const Grid& grid)
{
    const int d = grid.dim();
    auto g = make_field(grid, 2, Symmetry::symmetric, [d](std::size_t, std::span<double> out) {
        for (int i = 0; i < d; ++i) {
            out[i * d + i] = 1.0;
        }
    });
    return {std::move(g), TensorField::zeros(grid, 3, Symmetry::fully_symmetric),
            TensorField::zeros(grid, 0)};
}

SyntheticFields trig_fields(const Grid& grid, double a, double b, double c)
{
    if (grid.dim() > 2) {
        throw ShapeMismatch("trig synthetic fields are defined for 1D and 2D charts");
    }
    if (a < 0.0 || a > 1.0) {
        throw ParameterOutOfRange("trig synthetic fields: metric amplitude must lie in [0, 1]");
    }
    const int d = grid.dim();
    auto phase = [&grid](std::size_t n, int axis) {
        return 2.0 * std::numbers::pi * (grid.coordinate(n, axis) - grid.origin(axis)) / grid.period(axis);
    };
    if (d == 1) {
        auto g = make_field(grid, 2, Symmetry::symmetric, [&](std::size_t n, std::span<double> out) {
            out[0] = 2.0 + a * std::sin(phase(n, 0));
        });
        auto C = make_field(grid, 3, Symmetry::fully_symmetric, [&](std::size_t n, std::span<double> out) {
            out[0] = b * std::cos(phase(n, 0));
        });
        auto f = make_field(grid, 0, Symmetry::none, [&](std::size_t n, std::span<double> out) {
            double u = phase(n, 0);
            out[0] = c * (std::sin(u) + 0.5 * std::cos(2.0 * u));
        });
        return {std::move(g), std::move(C), std::move(f)};
    }
    auto g = make_field(grid, 2, Symmetry::symmetric, [&](std::size_t n, std::span<double> out) {
        double u = phase(n, 0);
        double v = phase(n, 1);
        out[0] = 2.0 + a * std::sin(u);
        out[1] = out[2] = 0.5 * a * std::sin(u + v);
        out[3] = 2.0 + a * std::cos(v);
    });
    auto C = make_field(grid, 3, Symmetry::fully_symmetric, [&](std::size_t n, std::span<double> out) {
        double u = phase(n, 0);
        double v = phase(n, 1);
        double c111 = b * std::cos(u);
        double c112 = 0.5 * b * std::sin(v);
        double c122 = 0.5 * b * std::cos(u - v);
        double c222 = b * std::sin(u) * std::cos(v);
        // (i, j, k) -> (i * 2 + j) * 2 + k
        out[0] = c111;
        out[1] = out[2] = out[4] = c112;
        out[3] = out[5] = out[6] = c122;
        out[7] = c222;
    });
    auto f = make_field(grid, 0, Symmetry::none, [&](std::size_t n, std::span<double> out) {
        double u = phase(n, 0);
        double v = phase(n, 1);
        out[0] = c * (std::sin(u) + 0.5 * std::cos(2.0 * v) + 0.3 * std::sin(u + v));
    });
    return {std::move(g), std::move(C), std::move(f)};
}

} // namespace statlap
