#pragma once

#include <cstddef>
#include <vector>

namespace statlap {

/// Periodic rectangular chart [origin, origin + period) per axis, node sampled,
/// row-major node ordering over axes in declared order (last axis fastest).
class Grid {
public:
    Grid() = default;
    Grid(std::vector<int> points, std::vector<double> periods, std::vector<double> origin = {});

    int dim() const { return static_cast<int>(points_.size()); }
    std::size_t node_count() const { return node_count_; }

    int points(int axis) const { return points_[axis]; }
    double period(int axis) const { return periods_[axis]; }
    double origin(int axis) const { return origin_[axis]; }
    double spacing(int axis) const { return periods_[axis] / points_[axis]; }
    double max_spacing() const;

    const std::vector<int>& points() const { return points_; }
    const std::vector<double>& periods() const { return periods_; }
    const std::vector<double>& origins() const { return origin_; }

    /// Product of spacings: the node quadrature weight before density.
    double cell_volume() const;

    std::size_t index(const std::vector<int>& multi) const;
    std::vector<int> multi_index(std::size_t node) const;
    int axis_index(std::size_t node, int axis) const;

    /// Node at `offset` steps along `axis`, wrapping modulo the axis length.
    std::size_t neighbor(std::size_t node, int axis, int offset) const;

    double coordinate(std::size_t node, int axis) const;
    std::vector<double> coordinates(std::size_t node) const;

    /// Same chart with every axis refined by `factor`.
    Grid refined(int factor) const;

    bool operator==(const Grid& other) const;

private:
    std::vector<int> points_;
    std::vector<double> periods_;
    std::vector<double> origin_;
    std::vector<std::size_t> strides_;
    std::size_t node_count_ = 0;
};

} // namespace statlap
