#pragma once

#include "statlap/geometry.hpp"
#include "statlap/tensor_field.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace statlap::test {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline Grid torus_1d(int n, double period = kTwoPi) { return Grid({n}, {period}); }
inline Grid torus_2d(int n, double period = kTwoPi) { return Grid({n, n}, {period, period}); }

inline TensorField scalar(const Grid& grid, const std::function<double(const std::vector<double>&)>& fn)
{
    return make_field(grid, 0, Symmetry::none,
                      [&](std::size_t n, std::span<double> out) { out[0] = fn(grid.coordinates(n)); });
}

inline TensorField constant_metric(const Grid& grid, const std::vector<double>& row_major)
{
    return make_field(grid, 2, Symmetry::symmetric, [&](std::size_t, std::span<double> out) {
        std::copy(row_major.begin(), row_major.end(), out.begin());
    });
}

inline TensorField zero_ac(const Grid& grid) { return TensorField::zeros(grid, 3, Symmetry::fully_symmetric); }
inline TensorField zero_scalar(const Grid& grid) { return TensorField::zeros(grid, 0); }

inline double max_abs_diff(std::span<const double> a, std::span<const double> b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline ManifoldData flat_manifold(const Grid& grid, double alpha = 1.0)
{
    std::vector<double> id(static_cast<std::size_t>(grid.dim() * grid.dim()), 0.0);
    for (int i = 0; i < grid.dim(); ++i) id[static_cast<std::size_t>(i * grid.dim() + i)] = 1.0;
    return build_manifold(constant_metric(grid, id), zero_ac(grid), zero_scalar(grid), alpha);
}

} // namespace statlap::test
