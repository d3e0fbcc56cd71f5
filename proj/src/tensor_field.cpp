#include "statlap/tensor_field.hpp"

#include "statlap/errors.hpp"

#include <cmath>

namespace statlap {

std::string to_string(Symmetry s)
{
    switch (s) {
    case Symmetry::none: return "none";
    case Symmetry::symmetric: return "symmetric";
    case Symmetry::fully_symmetric: return "fully_symmetric";
    case Symmetry::lower_pair: return "lower_pair";
    }
    return "none";
}

Symmetry symmetry_from_string(const std::string& s)
{
    if (s == "none") return Symmetry::none;
    if (s == "symmetric") return Symmetry::symmetric;
    if (s == "fully_symmetric") return Symmetry::fully_symmetric;
    if (s == "lower_pair") return Symmetry::lower_pair;
    throw ShapeMismatch("unknown symmetry tag '" + s + "'");
}

namespace {

void symmetrize_node(std::span<double> v, int d, Symmetry sym)
{
    auto at3 = [d](int i, int j, int k) { return (static_cast<std::size_t>(i) * d + j) * d + k; };
    switch (sym) {
    case Symmetry::none:
        return;
    case Symmetry::symmetric:
        for (int i = 0; i < d; ++i) {
            for (int j = i + 1; j < d; ++j) {
                double m = 0.5 * (v[i * d + j] + v[j * d + i]);
                v[i * d + j] = m;
                v[j * d + i] = m;
            }
        }
        return;
    case Symmetry::lower_pair:
        for (int k = 0; k < d; ++k) {
            for (int i = 0; i < d; ++i) {
                for (int j = i + 1; j < d; ++j) {
                    double m = 0.5 * (v[at3(k, i, j)] + v[at3(k, j, i)]);
                    v[at3(k, i, j)] = m;
                    v[at3(k, j, i)] = m;
                }
            }
        }
        return;
    case Symmetry::fully_symmetric:
        for (int i = 0; i < d; ++i) {
            for (int j = i; j < d; ++j) {
                for (int k = j; k < d; ++k) {
                    // Sum in a fixed order over the orbit so every permutation
                    // receives the identical rounded value.
                    const std::size_t perms[6] = {at3(i, j, k), at3(i, k, j), at3(j, i, k),
                                                  at3(j, k, i), at3(k, i, j), at3(k, j, i)};
                    double s = 0.0;
                    for (auto p : perms) {
                        s += v[p];
                    }
                    s /= 6.0;
                    for (auto p : perms) {
                        v[p] = s;
                    }
                }
            }
        }
        return;
    }
}

} // namespace

TensorField::TensorField(Grid grid, int rank, Symmetry symmetry, std::vector<double> values)
    : grid_(std::move(grid)), rank_(rank), symmetry_(symmetry), values_(std::move(values))
{
    if (rank_ < 0 || rank_ > 3) {
        throw ShapeMismatch("tensor rank must be between 0 and 3");
    }
    if ((symmetry_ == Symmetry::symmetric && rank_ != 2)
        || ((symmetry_ == Symmetry::fully_symmetric || symmetry_ == Symmetry::lower_pair)
            && rank_ != 3)) {
        throw ShapeMismatch("symmetry " + to_string(symmetry_) + " does not fit rank "
                            + std::to_string(rank_));
    }
    per_node_ = 1;
    for (int r = 0; r < rank_; ++r) {
        per_node_ *= static_cast<std::size_t>(grid_.dim());
    }
    if (values_.size() != per_node_ * grid_.node_count()) {
        throw ShapeMismatch("tensor field: expected " + std::to_string(per_node_ * grid_.node_count())
                            + " values, got " + std::to_string(values_.size()));
    }
    for (double x : values_) {
        if (!std::isfinite(x)) {
            throw ShapeMismatch("tensor field contains a non-finite value");
        }
    }
    if (symmetry_ != Symmetry::none) {
        for (std::size_t n = 0; n < grid_.node_count(); ++n) {
            symmetrize_node(std::span<double>(values_.data() + n * per_node_, per_node_), dim(),
                            symmetry_);
        }
    }
}

TensorField TensorField::zeros(const Grid& grid, int rank, Symmetry symmetry)
{
    std::size_t per_node = 1;
    for (int r = 0; r < rank; ++r) {
        per_node *= static_cast<std::size_t>(grid.dim());
    }
    return TensorField(grid, rank, symmetry, std::vector<double>(per_node * grid.node_count(), 0.0));
}

std::span<const double> TensorField::node_values(std::size_t node) const
{
    return std::span<const double>(values_.data() + node * per_node_, per_node_);
}

Eigen::VectorXd TensorField::vector_at(std::size_t node) const
{
    if (rank_ != 1) {
        throw ShapeMismatch("vector_at requires a rank-1 field");
    }
    return Eigen::Map<const Eigen::VectorXd>(values_.data() + node * per_node_, dim());
}

Eigen::MatrixXd TensorField::matrix_at(std::size_t node) const
{
    if (rank_ != 2) {
        throw ShapeMismatch("matrix_at requires a rank-2 field");
    }
    // Row-major storage: (i, j) -> i * d + j.
    Eigen::MatrixXd m(dim(), dim());
    for (int i = 0; i < dim(); ++i) {
        for (int j = 0; j < dim(); ++j) {
            m(i, j) = (*this)(node, i, j);
        }
    }
    return m;
}

ConnectionField::ConnectionField(TensorField coefficients) : coeffs_(std::move(coefficients))
{
    if (coeffs_.rank() != 3) {
        throw ShapeMismatch("connection coefficients must be rank 3");
    }
    if (coeffs_.symmetry() != Symmetry::lower_pair) {
        coeffs_ = TensorField(coeffs_.grid(), 3, Symmetry::lower_pair,
                              {coeffs_.values().begin(), coeffs_.values().end()});
    }
}

} // namespace statlap
