#pragma once

#include "statlap/grid.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace statlap {

/// Index symmetry declared by a field. Applied at construction.
enum class Symmetry {
    none,
    symmetric,        // rank 2: (i,j)
    fully_symmetric,  // rank 3: all permutations
    lower_pair,       // rank 3 stored (k,i,j): symmetric in (i,j)
};

std::string to_string(Symmetry s);
Symmetry symmetry_from_string(const std::string& s);

/// Node-sampled tensor of rank 0..3. Values are node-major, then indices in
/// declared order (last index fastest). Mixed rank-3 fields such as
/// connection coefficients store the upper index first: (k, i, j).
class TensorField {
public:
    TensorField() = default;
    TensorField(Grid grid, int rank, Symmetry symmetry, std::vector<double> values);

    static TensorField zeros(const Grid& grid, int rank, Symmetry symmetry = Symmetry::none);

    const Grid& grid() const { return grid_; }
    int rank() const { return rank_; }
    int dim() const { return grid_.dim(); }
    Symmetry symmetry() const { return symmetry_; }
    std::size_t components_per_node() const { return per_node_; }
    std::size_t node_count() const { return grid_.node_count(); }

    std::span<const double> values() const { return values_; }
    std::span<const double> node_values(std::size_t node) const;

    double operator()(std::size_t node) const { return values_[node]; }
    double operator()(std::size_t node, int i) const { return values_[node * per_node_ + i]; }
    double operator()(std::size_t node, int i, int j) const
    {
        return values_[node * per_node_ + static_cast<std::size_t>(i) * dim() + j];
    }
    double operator()(std::size_t node, int i, int j, int k) const
    {
        return values_[node * per_node_ + (static_cast<std::size_t>(i) * dim() + j) * dim() + k];
    }

    /// Rank-1 value as a d-vector, rank-2 value as a d x d matrix.
    Eigen::VectorXd vector_at(std::size_t node) const;
    Eigen::MatrixXd matrix_at(std::size_t node) const;

private:
    Grid grid_;
    int rank_ = 0;
    Symmetry symmetry_ = Symmetry::none;
    std::size_t per_node_ = 1;
    std::vector<double> values_;
};

/// Torsion-free connection coefficients Gamma^k_{ij}, stored (k, i, j).
class ConnectionField {
public:
    ConnectionField() = default;
    explicit ConnectionField(TensorField coefficients);

    const TensorField& coefficients() const { return coeffs_; }
    const Grid& grid() const { return coeffs_.grid(); }
    double operator()(std::size_t node, int k, int i, int j) const { return coeffs_(node, k, i, j); }

private:
    TensorField coeffs_;
};

/// Builds a field from a per-node generator writing `components_per_node` values.
template <typename Fn>
TensorField make_field(const Grid& grid, int rank, Symmetry symmetry, Fn&& fill)
{
    std::size_t per_node = 1;
    for (int r = 0; r < rank; ++r) {
        per_node *= static_cast<std::size_t>(grid.dim());
    }
    std::vector<double> values(grid.node_count() * per_node, 0.0);
    for (std::size_t n = 0; n < grid.node_count(); ++n) {
        fill(n, std::span<double>(values.data() + n * per_node, per_node));
    }
    return TensorField(grid, rank, symmetry, std::move(values));
}

} // namespace statlap
