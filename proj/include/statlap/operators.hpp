#pragma once

#include "statlap/geometry.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <string>
#include <vector>

namespace statlap {

/// Sparse matrix plus a tag naming what it represents.
///
/// Layouts:
///  - vector fields flatten node-major then component: n * d + k.
///  - (1,1)-fields produced by the covariant derivative carry one forward and
///    one backward difference per axis: ((n * 2 + s) * d + i) * d + k with
///    s = 0 forward, s = 1 backward, i the form slot and k the vector slot.
struct DiscreteOperator {
    Eigen::SparseMatrix<double> matrix;
    std::string tag;

    Eigen::Index rows() const { return matrix.rows(); }
    Eigen::Index cols() const { return matrix.cols(); }
};

enum class ConnectionChoice { primal, dual };

/// rho-weighted L2 structure. B acts on vector fields with node blocks
/// rho g h^d; M acts on one-sided (1,1)-fields with node blocks
/// rho h^d (g^{ij} g_{kl}) w(s, i; s', j), w = 1/2 delta_{ss'} on the diagonal
/// form slot and 1/4 across slots. M is the corner average of g^{-1} (x) g over
/// the 2^d forward/backward difference stencils.
struct InnerProductData {
    Eigen::SparseMatrix<double> B;
    Eigen::SparseMatrix<double> M;
};

std::size_t pair_field_size(const ManifoldData& md);

Eigen::VectorXd to_vector(const TensorField& X);
TensorField to_field(const Grid& grid, const Eigen::VectorXd& v);

/// Maps X to the one-sided (1,1)-field (nabla_i X)^k = +-(X^k(n +- e_i) - X^k(n)) / h_i
/// + Gamma^k_{il}(n) X^l(n), with Gamma or its dual.
DiscreteOperator covariant_derivative(const ManifoldData& md, ConnectionChoice which = ConnectionChoice::primal);

/// Node-centred (nabla_i X)^k with central differences, rank-2 field stored (i, k).
/// Equals the average of the two one-sided differences.
TensorField covariant_derivative_centered(const ManifoldData& md, const TensorField& X,
                                          ConnectionChoice which = ConnectionChoice::primal);

InnerProductData inner_product_data(const ManifoldData& md);

/// (1 / rho) D_i(rho X^i) with central differences.
TensorField divergence_f(const ManifoldData& md, const TensorField& X);
/// Riemannian divergence (1 / sqrt det g) D_i(sqrt det g X^i).
TensorField divergence_riemannian(const ManifoldData& md, const TensorField& X);
/// X^i D_i h.
TensorField directional_derivative(const TensorField& X, const TensorField& h);

/// Discrete adjoint B^{-1} D^T M W of the primal covariant derivative, W in the
/// one-sided layout. Exact adjoint with respect to <.,.>_M and <.,.>_B.
Eigen::VectorXd apply_adjoint(const ManifoldData& md, const Eigen::VectorXd& W);

/// Pointwise adjoint -(1/rho) D_j(rho W^{jk}) - dual Gamma^k_{jl} W^{jl}, where
/// W^{jk} = g^{ji} W_i^k and W is a node-centred rank-2 field stored (i, k).
TensorField apply_adjoint_strong(const ManifoldData& md, const TensorField& W);

/// L = D^T M D with D the primal covariant derivative. Symmetric bit for bit.
DiscreteOperator assemble_weak_laplacian(const ManifoldData& md);

/// B^{-1} L X.
TensorField apply_weak_laplacian(const ManifoldData& md, const DiscreteOperator& L, const TensorField& X);

struct StrongLaplacianResult {
    /// -sum_j [ dual-nabla_j V_j + div_f(d_j) V_j ], V_j = g^{ij} nabla_i X.
    TensorField proof_form;
    /// -Tr(dual-Hess X) - (alpha/2) K^i nabla_i X + g^{ij} d_j f nabla_i X.
    TensorField expanded_form;
    /// max |proof - expanded| / max(|proof|, |expanded|) over checked nodes.
    double relative_gap = 0.0;
};

struct StrongLaplacianOptions {
    bool check_forms = true;
    double tolerance = 0.1;
    /// Nodes within this many steps of the chart seam are left out of the
    /// consistency check (only meaningful when md.periodic is false).
    int seam_margin = 3;
};

StrongLaplacianResult apply_strong_laplacian(const ManifoldData& md, const TensorField& X,
                                             const StrongLaplacianOptions& options = {});

/// Reference stencil for the weighted Riemannian connection Laplacian
/// -g^{ij}(nabla^2 X)_{ij} + g^{ij} d_j f nabla_i X built from compact second
/// differences and the Levi-Civita coefficients; independent of the proof form.
TensorField riemannian_connection_laplacian(const ManifoldData& md, const TensorField& X);

/// Mask of nodes at least `margin` steps from the chart seam along every axis.
/// All true when the manifold fields are periodic.
std::vector<bool> interior_mask(const ManifoldData& md, int margin);

/// max |a - b| over masked nodes and components.
double max_abs_difference(const TensorField& a, const TensorField& b, const std::vector<bool>& mask);
double max_abs(const TensorField& a, const std::vector<bool>& mask);

} // namespace statlap
