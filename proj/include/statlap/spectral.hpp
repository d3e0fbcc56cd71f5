#pragma once

#include "statlap/geometry.hpp"
#include "statlap/operators.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <vector>

namespace statlap {

/// Eigenvalues whose magnitude is below this are reported as exactly zero.
inline constexpr double kZeroEigenvalue = 1e-10;

/// Lowest generalized eigenpairs L X = lambda B X, B-orthonormal.
struct SpectralDecomposition {
    std::vector<double> eigenvalues;   // ascending
    Eigen::MatrixXd eigenvectors;      // one column per eigenfield, vector-field layout
    Eigen::SparseMatrix<double> mass;  // B
    Grid grid;
    /// max |X^T B X - I|
    double orthonormality_residual = 0.0;
    /// max over pairs of ||L X - lambda B X|| / ||X||
    double max_residual = 0.0;
    /// Smallest eigenvalue before clamping to zero.
    double raw_min_eigenvalue = 0.0;
    /// True when every eigenpair of the pencil is present.
    bool complete = false;

    std::size_t count() const { return eigenvalues.size(); }
    std::size_t dimension() const { return static_cast<std::size_t>(eigenvectors.rows()); }
    /// Eigenfield n at a node as a d-vector.
    Eigen::VectorXd at(std::size_t n, std::size_t node) const;
    TensorField field(std::size_t n) const;
};

struct EigenOptions {
    double tolerance = 1e-8;
    int max_iterations = 2000;
    std::uint64_t seed = 0x5eed;
    /// Pencils up to this size, or requests for at least a quarter of the
    /// spectrum, are solved densely.
    std::size_t dense_limit = 1200;
    /// Relative gap under which two eigenvalues belong to one degenerate cluster.
    double cluster_tolerance = 1e-8;
};

/// At least `k` smallest eigenpairs; degenerate clusters are never split, so
/// the result may hold more than k pairs. Throws ConvergenceFailure when the
/// iterative solver stalls or any residual exceeds `tolerance`.
SpectralDecomposition eigendecompose(const Eigen::SparseMatrix<double>& L, const Eigen::SparseMatrix<double>& B,
                                     std::size_t k, const EigenOptions& options = {});

SpectralDecomposition eigendecompose(const DiscreteOperator& L, const ManifoldData& md, std::size_t k,
                                     const EigenOptions& options = {});

/// Grows k (doubling) until exp(-lambda_last t) < tail_tolerance or the
/// spectrum is complete.
SpectralDecomposition spectrum_for_time(const DiscreteOperator& L, const ManifoldData& md, double t,
                                        double tail_tolerance = 1e-12, const EigenOptions& options = {});

/// Upper bound exp(-lambda_last t) on the weight of the first omitted mode;
/// zero for a complete spectrum.
double truncation_tail(const SpectralDecomposition& spec, double t);

struct HeatKernelBlock {
    std::size_t source = 0;  // y
    std::size_t target = 0;  // x
    double t = 0.0;
    Eigen::MatrixXd matrix;  // d x d map T_y M -> T_x M
    double tail_bound = 0.0;
    bool truncated = false;
};

/// p_t(x, y) = sum_n exp(-lambda_n t) X_n(x) (g(y) X_n(y))^T.
HeatKernelBlock heat_kernel_block(const SpectralDecomposition& spec, const ManifoldData& md, double t,
                                  std::size_t x, std::size_t y, double tail_tolerance = 1e-12);

struct HeatResult {
    TensorField field;
    double tail_bound = 0.0;
    bool truncated = false;
};

/// sum_n exp(-lambda_n t) (X_n^T B X) X_n.
HeatResult heat_apply(const SpectralDecomposition& spec, double t, const TensorField& X,
                      double tail_tolerance = 1e-12);

/// Same semigroup evaluated by quadrature of heat_kernel_block against X rho.
TensorField heat_apply_quadrature(const SpectralDecomposition& spec, const ManifoldData& md, double t,
                                  const TensorField& X);

struct DiffusionDistance {
    double distance = 0.0;
    double trace_form = 0.0;
    double double_sum_form = 0.0;
    double tail_bound = 0.0;
};

/// Relative agreement demanded between the two evaluation routes.
inline constexpr double kFormTolerance = 1e-8;

/// Vector diffusion distance from Hilbert-Schmidt norms of heat-kernel blocks
/// (g-weighted at both ends) and, independently, from the double sum over
/// eigenpairs. Throws FormMismatch if the routes disagree.
DiffusionDistance vector_diffusion_distance(const SpectralDecomposition& spec, const ManifoldData& md, double t,
                                            std::size_t x, std::size_t y);

/// |A|_HS^2 = tr(A^T g_x A g_y^{-1}) for a block from T_y M to T_x M.
double hs_norm_squared(const Eigen::MatrixXd& block, const Eigen::MatrixXd& g_target, const Eigen::MatrixXd& g_source);

struct DistanceMatrix {
    std::vector<std::size_t> nodes;
    Eigen::MatrixXd distances;
    /// Largest relative disagreement between the two routes over checked pairs.
    double max_form_gap = 0.0;
    std::size_t pairs_cross_checked = 0;
    double tail_bound = 0.0;
};

/// Pairwise vector diffusion distances over `nodes`. The double-sum route is
/// evaluated for every pair when the work fits `double_sum_budget`
/// multiply-adds; otherwise for an evenly strided subset of pairs.
DistanceMatrix vdd_matrix(const SpectralDecomposition& spec, const ManifoldData& md, double t,
                          const std::vector<std::size_t>& nodes, double double_sum_budget = 5e8,
                          int threads = 1);

} // namespace statlap
