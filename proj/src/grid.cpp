#include "statlap/grid.hpp"

#include "statlap/errors.hpp"

#include <algorithm>
#include <string>

namespace statlap {

Grid::Grid(std::vector<int> points, std::vector<double> periods, std::vector<double> origin)
    : points_(std::move(points)), periods_(std::move(periods)), origin_(std::move(origin))
{
    if (points_.empty()) {
        throw ShapeMismatch("grid needs at least one axis");
    }
    if (periods_.size() != points_.size()) {
        throw ShapeMismatch("grid: points and periods have different lengths");
    }
    if (origin_.empty()) {
        origin_.assign(points_.size(), 0.0);
    }
    if (origin_.size() != points_.size()) {
        throw ShapeMismatch("grid: origin has wrong length");
    }
    for (std::size_t a = 0; a < points_.size(); ++a) {
        if (points_[a] < 4) {
            throw ShapeMismatch("grid: axis " + std::to_string(a) + " needs at least 4 points");
        }
        if (!(periods_[a] > 0.0)) {
            throw ShapeMismatch("grid: axis " + std::to_string(a) + " needs a positive period");
        }
    }
    strides_.assign(points_.size(), 1);
    for (int a = dim() - 2; a >= 0; --a) {
        strides_[a] = strides_[a + 1] * static_cast<std::size_t>(points_[a + 1]);
    }
    node_count_ = strides_[0] * static_cast<std::size_t>(points_[0]);
}

double Grid::max_spacing() const
{
    double h = 0.0;
    for (int a = 0; a < dim(); ++a) {
        h = std::max(h, spacing(a));
    }
    return h;
}

double Grid::cell_volume() const
{
    double v = 1.0;
    for (int a = 0; a < dim(); ++a) {
        v *= spacing(a);
    }
    return v;
}

std::size_t Grid::index(const std::vector<int>& multi) const
{
    std::size_t idx = 0;
    for (int a = 0; a < dim(); ++a) {
        int n = points_[a];
        int m = ((multi[a] % n) + n) % n;
        idx += strides_[a] * static_cast<std::size_t>(m);
    }
    return idx;
}

std::vector<int> Grid::multi_index(std::size_t node) const
{
    std::vector<int> multi(points_.size());
    for (int a = 0; a < dim(); ++a) {
        multi[a] = axis_index(node, a);
    }
    return multi;
}

int Grid::axis_index(std::size_t node, int axis) const
{
    return static_cast<int>((node / strides_[axis]) % static_cast<std::size_t>(points_[axis]));
}

std::size_t Grid::neighbor(std::size_t node, int axis, int offset) const
{
    int n = points_[axis];
    int i = axis_index(node, axis);
    int j = ((i + offset) % n + n) % n;
    return node + (static_cast<std::size_t>(j) - static_cast<std::size_t>(i)) * strides_[axis];
}

double Grid::coordinate(std::size_t node, int axis) const
{
    return origin_[axis] + spacing(axis) * axis_index(node, axis);
}

std::vector<double> Grid::coordinates(std::size_t node) const
{
    std::vector<double> x(points_.size());
    for (int a = 0; a < dim(); ++a) {
        x[a] = coordinate(node, a);
    }
    return x;
}

Grid Grid::refined(int factor) const
{
    std::vector<int> pts = points_;
    for (auto& p : pts) {
        p *= factor;
    }
    return Grid(pts, periods_, origin_);
}

bool Grid::operator==(const Grid& other) const
{
    return points_ == other.points_ && periods_ == other.periods_ && origin_ == other.origin_;
}

} // namespace statlap
