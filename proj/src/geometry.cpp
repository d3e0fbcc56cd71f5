#include "statlap/geometry.hpp"

#include "statlap/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace statlap {

SingularMetric::SingularMetric(std::size_t node, double condition_estimate)
    : Error([&] {
          std::ostringstream os;
          os << "metric is not positive definite at node " << node
             << " (condition estimate " << condition_estimate << ")";
          return os.str();
      }()),
      node_(node),
      condition_(condition_estimate)
{
}

namespace {

void require_grid(const TensorField& a, const TensorField& b, const char* what)
{
    if (!(a.grid() == b.grid())) {
        throw ShapeMismatch(std::string(what) + ": fields live on different grids");
    }
}

void require_rank(const TensorField& a, int rank, const char* what)
{
    if (a.rank() != rank) {
        throw ShapeMismatch(std::string(what) + ": expected rank " + std::to_string(rank)
                            + ", got " + std::to_string(a.rank()));
    }
}

// Factor one node's metric, rejecting indefinite or badly conditioned blocks.
Eigen::LLT<Eigen::MatrixXd> factor_node(const TensorField& g, std::size_t node)
{
    Eigen::MatrixXd m = g.matrix_at(node);
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    double lo = es.eigenvalues().minCoeff();
    double hi = es.eigenvalues().maxCoeff();
    double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (llt.info() != Eigen::Success || !(lo > 0.0) || cond > kMaxMetricCondition) {
        throw SingularMetric(node, cond);
    }
    return llt;
}

} // namespace

TensorField central_difference(const TensorField& field, int axis)
{
    const Grid& grid = field.grid();
    const double inv2h = 1.0 / (2.0 * grid.spacing(axis));
    const std::size_t per = field.components_per_node();
    return make_field(grid, field.rank(), field.symmetry(), [&](std::size_t n, std::span<double> out) {
        auto plus = field.node_values(grid.neighbor(n, axis, 1));
        auto minus = field.node_values(grid.neighbor(n, axis, -1));
        for (std::size_t c = 0; c < per; ++c) {
            out[c] = (plus[c] - minus[c]) * inv2h;
        }
    });
}

TensorField invert_metric(const TensorField& g)
{
    require_rank(g, 2, "invert_metric");
    const int d = g.dim();
    return make_field(g.grid(), 2, Symmetry::symmetric, [&](std::size_t n, std::span<double> out) {
        auto llt = factor_node(g, n);
        Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(d, d));
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                out[i * d + j] = inv(i, j);
            }
        }
    });
}

TensorField sqrt_det_metric(const TensorField& g)
{
    require_rank(g, 2, "sqrt_det_metric");
    return make_field(g.grid(), 0, Symmetry::none, [&](std::size_t n, std::span<double> out) {
        auto llt = factor_node(g, n);
        double s = 1.0;
        for (int i = 0; i < g.dim(); ++i) {
            s *= llt.matrixLLT()(i, i);
        }
        out[0] = s;
    });
}

ConnectionField christoffel_lc(const TensorField& g, const Grid& grid)
{
    require_rank(g, 2, "christoffel_lc");
    if (!(g.grid() == grid)) {
        throw ShapeMismatch("christoffel_lc: metric lives on a different grid");
    }
    const int d = g.dim();
    TensorField g_inv = invert_metric(g);
    std::vector<TensorField> dg;
    for (int a = 0; a < d; ++a) {
        dg.push_back(central_difference(g, a));
    }
    // first kind: [ij, l] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    auto coeffs = make_field(grid, 3, Symmetry::lower_pair, [&](std::size_t n, std::span<double> out) {
        for (int k = 0; k < d; ++k) {
            for (int i = 0; i < d; ++i) {
                for (int j = 0; j < d; ++j) {
                    double s = 0.0;
                    for (int l = 0; l < d; ++l) {
                        double first = 0.5 * (dg[i](n, j, l) + dg[j](n, i, l) - dg[l](n, i, j));
                        s += g_inv(n, k, l) * first;
                    }
                    out[(k * d + i) * d + j] = s;
                }
            }
        }
    });
    return ConnectionField(std::move(coeffs));
}

TensorField difference_tensor(const TensorField& g_inv, const TensorField& C)
{
    require_rank(g_inv, 2, "difference_tensor");
    require_rank(C, 3, "difference_tensor");
    require_grid(g_inv, C, "difference_tensor");
    const int d = C.dim();
    return make_field(C.grid(), 3, Symmetry::lower_pair, [&](std::size_t n, std::span<double> out) {
        for (int k = 0; k < d; ++k) {
            for (int i = 0; i < d; ++i) {
                for (int j = 0; j < d; ++j) {
                    double s = 0.0;
                    for (int l = 0; l < d; ++l) {
                        s += g_inv(n, k, l) * C(n, i, j, l);
                    }
                    out[(k * d + i) * d + j] = s;
                }
            }
        }
    });
}

TensorField lower_difference_tensor(const TensorField& g, const TensorField& K)
{
    require_rank(g, 2, "lower_difference_tensor");
    require_rank(K, 3, "lower_difference_tensor");
    require_grid(g, K, "lower_difference_tensor");
    const int d = K.dim();
    return make_field(K.grid(), 3, Symmetry::none, [&](std::size_t n, std::span<double> out) {
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                for (int k = 0; k < d; ++k) {
                    double s = 0.0;
                    for (int l = 0; l < d; ++l) {
                        s += g(n, k, l) * K(n, l, i, j);
                    }
                    out[(i * d + j) * d + k] = s;
                }
            }
        }
    });
}

std::pair<ConnectionField, ConnectionField> alpha_connection_pair(const ConnectionField& lc,
                                                                 const TensorField& K, double alpha)
{
    require_rank(K, 3, "alpha_connection_pair");
    require_grid(lc.coefficients(), K, "alpha_connection_pair");
    const double half = 0.5 * alpha;
    auto lcv = lc.coefficients().values();
    auto kv = K.values();
    std::vector<double> primal(lcv.size());
    std::vector<double> dual(lcv.size());
    for (std::size_t c = 0; c < lcv.size(); ++c) {
        primal[c] = lcv[c] - half * kv[c];
        dual[c] = lcv[c] + half * kv[c];
    }
    return {ConnectionField(TensorField(K.grid(), 3, Symmetry::lower_pair, std::move(primal))),
            ConnectionField(TensorField(K.grid(), 3, Symmetry::lower_pair, std::move(dual)))};
}

TensorField density_field(const TensorField& g, const TensorField& f)
{
    require_rank(f, 0, "density_field");
    require_grid(g, f, "density_field");
    TensorField sq = sqrt_det_metric(g);
    return make_field(g.grid(), 0, Symmetry::none,
                      [&](std::size_t n, std::span<double> out) { out[0] = std::exp(-f(n)) * sq(n); });
}

TensorField log_sqrt_det_potential(const TensorField& g)
{
    TensorField sq = sqrt_det_metric(g);
    return make_field(g.grid(), 0, Symmetry::none,
                      [&](std::size_t n, std::span<double> out) { out[0] = std::log(sq(n)); });
}

ManifoldData build_manifold(const TensorField& g, const TensorField& C, const TensorField& f,
                            double alpha)
{
    require_rank(g, 2, "build_manifold");
    require_rank(C, 3, "build_manifold");
    require_rank(f, 0, "build_manifold");
    require_grid(g, C, "build_manifold");
    require_grid(g, f, "build_manifold");

    ManifoldData md;
    md.grid = g.grid();
    md.g = TensorField(g.grid(), 2, Symmetry::symmetric, {g.values().begin(), g.values().end()});
    md.C = TensorField(C.grid(), 3, Symmetry::fully_symmetric, {C.values().begin(), C.values().end()});
    md.g_inv = invert_metric(md.g);
    md.sqrt_det_g = sqrt_det_metric(md.g);
    md.K = difference_tensor(md.g_inv, md.C);
    md.levi_civita = christoffel_lc(md.g, md.grid);
    auto [primal, dual] = alpha_connection_pair(md.levi_civita, md.K, alpha);
    md.gamma = std::move(primal);
    md.gamma_dual = std::move(dual);
    md.f = f;
    md.rho = density_field(md.g, md.f);
    md.alpha = alpha;
    for (std::size_t n = 0; n < md.node_count(); ++n) {
        if (!(md.rho(n) > 0.0)) {
            throw ParameterOutOfRange("density underflows to zero at node " + std::to_string(n));
        }
    }
    return md;
}

ManifoldData with_potential(const ManifoldData& md, const TensorField& f)
{
    require_rank(f, 0, "with_potential");
    require_grid(md.g, f, "with_potential");
    ManifoldData out = md;
    out.f = f;
    out.rho = density_field(md.g, f);
    return out;
}

double metric_inverse_residual(const TensorField& g, const TensorField& g_inv)
{
    double worst = 0.0;
    const int d = g.dim();
    for (std::size_t n = 0; n < g.node_count(); ++n) {
        Eigen::MatrixXd r = g.matrix_at(n) * g_inv.matrix_at(n) - Eigen::MatrixXd::Identity(d, d);
        worst = std::max(worst, r.cwiseAbs().maxCoeff());
    }
    return worst;
}

} // namespace statlap
