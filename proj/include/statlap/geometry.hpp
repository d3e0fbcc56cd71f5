#pragma once

#include "statlap/tensor_field.hpp"

#include <utility>

namespace statlap {

/// Largest admissible per-node condition number of the metric.
inline constexpr double kMaxMetricCondition = 1e12;

/// Second-order central difference of every component of `field` along `axis`,
/// with periodic wraparound. Rank and symmetry are preserved.
TensorField central_difference(const TensorField& field, int axis);

/// Per-node inverse of a symmetric positive definite rank-2 field.
/// Throws SingularMetric when the Cholesky factorization fails or the
/// condition number exceeds kMaxMetricCondition.
TensorField invert_metric(const TensorField& g);

/// sqrt(det g) per node.
TensorField sqrt_det_metric(const TensorField& g);

/// Levi-Civita coefficients from central differences of g.
ConnectionField christoffel_lc(const TensorField& g, const Grid& grid);

/// K^k_{ij} = g^{kl} C_{ijl}.
TensorField difference_tensor(const TensorField& g_inv, const TensorField& C);

/// g_{kl} K^l_{ij}, the inverse of difference_tensor.
TensorField lower_difference_tensor(const TensorField& g, const TensorField& K);

/// Primal/dual pair Gamma = LC - (alpha/2) K and dual = LC + (alpha/2) K.
std::pair<ConnectionField, ConnectionField> alpha_connection_pair(const ConnectionField& lc,
                                                                 const TensorField& K, double alpha);

/// rho = exp(-f) sqrt(det g).
TensorField density_field(const TensorField& g, const TensorField& f);

/// One coherent snapshot of a statistical manifold with density on a periodic chart.
struct ManifoldData {
    Grid grid;
    TensorField g;
    TensorField g_inv;
    TensorField sqrt_det_g;
    TensorField C;
    TensorField K;
    ConnectionField levi_civita;
    ConnectionField gamma;
    ConnectionField gamma_dual;
    TensorField f;
    TensorField rho;
    double alpha = 1.0;
    /// False when the fields come from a chart of a non-periodic family and
    /// jump across the seam.
    bool periodic = true;

    int dim() const { return grid.dim(); }
    std::size_t node_count() const { return grid.node_count(); }
    /// Number of degrees of freedom of a vector field.
    std::size_t vector_dofs() const { return grid.node_count() * static_cast<std::size_t>(dim()); }
};

/// Assembles the full bundle from metric, Amari-Chentsov tensor and log-density
/// offset f. Validates shapes, positive-definiteness and that rho > 0.
ManifoldData build_manifold(const TensorField& g, const TensorField& C, const TensorField& f,
                            double alpha = 1.0);

/// Copy of `md` with f replaced (and rho recomputed).
ManifoldData with_potential(const ManifoldData& md, const TensorField& f);

/// f = log sqrt(det g), the choice for which rho is the flat chart measure.
TensorField log_sqrt_det_potential(const TensorField& g);

/// Max over nodes of the max-abs entry of g g^{-1} - I.
double metric_inverse_residual(const TensorField& g, const TensorField& g_inv);

} // namespace statlap
