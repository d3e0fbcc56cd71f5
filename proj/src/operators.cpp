#include "statlap/operators.hpp"

#include "statlap/errors.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <sstream>

namespace statlap {

namespace {

using Triplet = Eigen::Triplet<double>;

const ConnectionField& pick(const ManifoldData& md, ConnectionChoice which)
{
    return which == ConnectionChoice::primal ? md.gamma : md.gamma_dual;
}

void require_vector_field(const ManifoldData& md, const TensorField& X, const char* what)
{
    if (X.rank() != 1 || !(X.grid() == md.grid)) {
        throw ShapeMismatch(std::string(what) + ": expected a vector field on the manifold grid");
    }
}

// Local one-sided derivative at node n: rows (s, i, k), columns over the
// stencil nodes [n, n+e_0, n-e_0, n+e_1, n-e_1, ...] times components.
struct LocalStencil {
    std::vector<std::size_t> nodes;
    Eigen::MatrixXd D;
};

LocalStencil local_derivative(const ManifoldData& md, const ConnectionField& gamma, std::size_t n)
{
    const int d = md.dim();
    const Grid& grid = md.grid;
    LocalStencil st;
    st.nodes.push_back(n);
    for (int i = 0; i < d; ++i) {
        st.nodes.push_back(grid.neighbor(n, i, 1));
        st.nodes.push_back(grid.neighbor(n, i, -1));
    }
    st.D = Eigen::MatrixXd::Zero(2 * d * d, static_cast<Eigen::Index>(st.nodes.size()) * d);
    for (int s = 0; s < 2; ++s) {
        const double sign = s == 0 ? 1.0 : -1.0;
        for (int i = 0; i < d; ++i) {
            const double inv_h = 1.0 / grid.spacing(i);
            const int slot = 1 + 2 * i + s;
            for (int k = 0; k < d; ++k) {
                const int row = (s * d + i) * d + k;
                st.D(row, slot * d + k) += sign * inv_h;
                st.D(row, k) -= sign * inv_h;
                for (int l = 0; l < d; ++l) {
                    st.D(row, l) += gamma(n, k, i, l);
                }
            }
        }
    }
    return st;
}

// Node block of M, rows/cols (s, i, k).
Eigen::MatrixXd local_mass(const ManifoldData& md, std::size_t n)
{
    const int d = md.dim();
    const double w = md.rho(n) * md.grid.cell_volume();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * d * d, 2 * d * d);
    for (int s = 0; s < 2; ++s) {
        for (int t = 0; t < 2; ++t) {
            for (int i = 0; i < d; ++i) {
                for (int j = 0; j < d; ++j) {
                    double corner = (i == j) ? (s == t ? 0.5 : 0.0) : 0.25;
                    if (corner == 0.0) {
                        continue;
                    }
                    for (int k = 0; k < d; ++k) {
                        for (int l = 0; l < d; ++l) {
                            m((s * d + i) * d + k, (t * d + j) * d + l) =
                                w * corner * md.g_inv(n, i, j) * md.g(n, k, l);
                        }
                    }
                }
            }
        }
    }
    return m;
}

Eigen::MatrixXd metric_block(const ManifoldData& md, std::size_t n)
{
    return md.rho(n) * md.grid.cell_volume() * md.g.matrix_at(n);
}

} // namespace

std::size_t pair_field_size(const ManifoldData& md)
{
    return md.node_count() * 2 * static_cast<std::size_t>(md.dim()) * md.dim();
}

Eigen::VectorXd to_vector(const TensorField& X)
{
    return Eigen::Map<const Eigen::VectorXd>(X.values().data(), static_cast<Eigen::Index>(X.values().size()));
}

TensorField to_field(const Grid& grid, const Eigen::VectorXd& v)
{
    return TensorField(grid, 1, Symmetry::none, std::vector<double>(v.data(), v.data() + v.size()));
}

DiscreteOperator covariant_derivative(const ManifoldData& md, ConnectionChoice which)
{
    const int d = md.dim();
    const ConnectionField& gamma = pick(md, which);
    std::vector<Triplet> trip;
    const std::size_t rows_per_node = 2 * static_cast<std::size_t>(d) * d;
    for (std::size_t n = 0; n < md.node_count(); ++n) {
        LocalStencil st = local_derivative(md, gamma, n);
        for (Eigen::Index r = 0; r < st.D.rows(); ++r) {
            for (Eigen::Index c = 0; c < st.D.cols(); ++c) {
                double v = st.D(r, c);
                if (v != 0.0) {
                    std::size_t col = st.nodes[c / d] * d + static_cast<std::size_t>(c % d);
                    trip.emplace_back(static_cast<int>(n * rows_per_node + r), static_cast<int>(col), v);
                }
            }
        }
    }
    DiscreteOperator op;
    op.matrix.resize(static_cast<Eigen::Index>(pair_field_size(md)), static_cast<Eigen::Index>(md.vector_dofs()));
    op.matrix.setFromTriplets(trip.begin(), trip.end());
    op.tag = which == ConnectionChoice::primal ? "covariant-derivative" : "dual-covariant-derivative";
    return op;
}

TensorField covariant_derivative_centered(const ManifoldData& md, const TensorField& X, ConnectionChoice which)
{
    require_vector_field(md, X, "covariant_derivative_centered");
    const int d = md.dim();
    const Grid& grid = md.grid;
    const ConnectionField& gamma = pick(md, which);
    return make_field(grid, 2, Symmetry::none, [&](std::size_t n, std::span<double> out) {
        for (int i = 0; i < d; ++i) {
            const double inv2h = 0.5 / grid.spacing(i);
            std::size_t p = grid.neighbor(n, i, 1);
            std::size_t m = grid.neighbor(n, i, -1);
            for (int k = 0; k < d; ++k) {
                double v = (X(p, k) - X(m, k)) * inv2h;
                for (int l = 0; l < d; ++l) {
                    v += gamma(n, k, i, l) * X(n, l);
                }
                out[i * d + k] = v;
            }
        }
    });
}

InnerProductData inner_product_data(const ManifoldData& md)
{
    const int d = md.dim();
    std::vector<Triplet> tb;
    std::vector<Triplet> tm;
    const std::size_t pair = 2 * static_cast<std::size_t>(d) * d;
    for (std::size_t n = 0; n < md.node_count(); ++n) {
        Eigen::MatrixXd b = metric_block(md, n);
        for (int k = 0; k < d; ++k) {
            for (int l = 0; l < d; ++l) {
                tb.emplace_back(static_cast<int>(n * d + k), static_cast<int>(n * d + l), b(k, l));
            }
        }
        Eigen::MatrixXd m = local_mass(md, n);
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                if (m(r, c) != 0.0) {
                    tm.emplace_back(static_cast<int>(n * pair + r), static_cast<int>(n * pair + c), m(r, c));
                }
            }
        }
    }
    InnerProductData ip;
    ip.B.resize(static_cast<Eigen::Index>(md.vector_dofs()), static_cast<Eigen::Index>(md.vector_dofs()));
    ip.B.setFromTriplets(tb.begin(), tb.end());
    ip.M.resize(static_cast<Eigen::Index>(pair_field_size(md)), static_cast<Eigen::Index>(pair_field_size(md)));
    ip.M.setFromTriplets(tm.begin(), tm.end());
    return ip;
}

TensorField divergence_f(const ManifoldData& md, const TensorField& X)
{
    require_vector_field(md, X, "divergence_f");
    const Grid& grid = md.grid;
    return make_field(grid, 0, Symmetry::none, [&](std::size_t n, std::span<double> out) {
        double s = 0.0;
        for (int i = 0; i < grid.dim(); ++i) {
            std::size_t p = grid.neighbor(n, i, 1);
            std::size_t m = grid.neighbor(n, i, -1);
            s += (md.rho(p) * X(p, i) - md.rho(m) * X(m, i)) / (2.0 * grid.spacing(i));
        }
        out[0] = s / md.rho(n);
    });
}

TensorField divergence_riemannian(const ManifoldData& md, const TensorField& X)
{
    require_vector_field(md, X, "divergence_riemannian");
    const Grid& grid = md.grid;
    const TensorField& sq = md.sqrt_det_g;
    return make_field(grid, 0, Symmetry::none, [&](std::size_t n, std::span<double> out) {
        double s = 0.0;
        for (int i = 0; i < grid.dim(); ++i) {
            std::size_t p = grid.neighbor(n, i, 1);
            std::size_t m = grid.neighbor(n, i, -1);
            s += (sq(p) * X(p, i) - sq(m) * X(m, i)) / (2.0 * grid.spacing(i));
        }
        out[0] = s / sq(n);
    });
}

TensorField directional_derivative(const TensorField& X, const TensorField& h)
{
    if (X.rank() != 1 || h.rank() != 0 || !(X.grid() == h.grid())) {
        throw ShapeMismatch("directional_derivative: expected a vector field and a scalar on one grid");
    }
    const Grid& grid = X.grid();
    return make_field(grid, 0, Symmetry::none, [&](std::size_t n, std::span<double> out) {
        double s = 0.0;
        for (int i = 0; i < grid.dim(); ++i) {
            s += X(n, i) * (h(grid.neighbor(n, i, 1)) - h(grid.neighbor(n, i, -1))) / (2.0 * grid.spacing(i));
        }
        out[0] = s;
    });
}

namespace {

Eigen::VectorXd solve_block_mass(const ManifoldData& md, const Eigen::VectorXd& rhs)
{
    const int d = md.dim();
    Eigen::VectorXd out(rhs.size());
    for (std::size_t n = 0; n < md.node_count(); ++n) {
        Eigen::LLT<Eigen::MatrixXd> llt(metric_block(md, n));
        out.segment(static_cast<Eigen::Index>(n * d), d) = llt.solve(rhs.segment(static_cast<Eigen::Index>(n * d), d));
    }
    return out;
}

} // namespace

Eigen::VectorXd apply_adjoint(const ManifoldData& md, const Eigen::VectorXd& W)
{
    if (W.size() != static_cast<Eigen::Index>(pair_field_size(md))) {
        throw ShapeMismatch("apply_adjoint: W has the wrong length for the one-sided layout");
    }
    DiscreteOperator D = covariant_derivative(md, ConnectionChoice::primal);
    InnerProductData ip = inner_product_data(md);
    Eigen::VectorXd mw = ip.M * W;
    Eigen::VectorXd rhs = D.matrix.transpose() * mw;
    return solve_block_mass(md, rhs);
}

TensorField apply_adjoint_strong(const ManifoldData& md, const TensorField& W)
{
    if (W.rank() != 2 || !(W.grid() == md.grid)) {
        throw ShapeMismatch("apply_adjoint_strong: expected a rank-2 field on the manifold grid");
    }
    const int d = md.dim();
    const Grid& grid = md.grid;
    // raised[j][k] = rho g^{ji} W_i^k
    auto raised = make_field(grid, 2, Symmetry::none, [&](std::size_t n, std::span<double> out) {
        for (int j = 0; j < d; ++j) {
            for (int k = 0; k < d; ++k) {
                double s = 0.0;
                for (int i = 0; i < d; ++i) {
                    s += md.g_inv(n, j, i) * W(n, i, k);
                }
                out[j * d + k] = s;
            }
        }
    });
    return make_field(grid, 1, Symmetry::none, [&](std::size_t n, std::span<double> out) {
        for (int k = 0; k < d; ++k) {
            double div = 0.0;
            double conn = 0.0;
            for (int j = 0; j < d; ++j) {
                std::size_t p = grid.neighbor(n, j, 1);
                std::size_t m = grid.neighbor(n, j, -1);
                div += (md.rho(p) * raised(p, j, k) - md.rho(m) * raised(m, j, k)) / (2.0 * grid.spacing(j));
                for (int l = 0; l < d; ++l) {
                    conn += md.gamma_dual(n, k, j, l) * raised(n, j, l);
                }
            }
            out[k] = -div / md.rho(n) - conn;
        }
    });
}

DiscreteOperator assemble_weak_laplacian(const ManifoldData& md)
{
    const int d = md.dim();
    std::vector<Triplet> trip;
    for (std::size_t n = 0; n < md.node_count(); ++n) {
        LocalStencil st = local_derivative(md, md.gamma, n);
        Eigen::MatrixXd m = local_mass(md, n);
        Eigen::MatrixXd local = st.D.transpose() * m * st.D;
        const Eigen::Index size = local.rows();
        // Emit (r, c) and (c, r) with one rounded value so every global entry
        // and its mirror accumulate identical sequences.
        for (Eigen::Index r = 0; r < size; ++r) {
            std::size_t row = st.nodes[r / d] * d + static_cast<std::size_t>(r % d);
            trip.emplace_back(static_cast<int>(row), static_cast<int>(row), local(r, r));
            for (Eigen::Index c = r + 1; c < size; ++c) {
                double v = 0.5 * (local(r, c) + local(c, r));
                if (v == 0.0) {
                    continue;
                }
                std::size_t col = st.nodes[c / d] * d + static_cast<std::size_t>(c % d);
                trip.emplace_back(static_cast<int>(row), static_cast<int>(col), v);
                trip.emplace_back(static_cast<int>(col), static_cast<int>(row), v);
            }
        }
    }
    DiscreteOperator op;
    op.matrix.resize(static_cast<Eigen::Index>(md.vector_dofs()), static_cast<Eigen::Index>(md.vector_dofs()));
    op.matrix.setFromTriplets(trip.begin(), trip.end());
    op.tag = "weak-laplacian";
    return op;
}

TensorField apply_weak_laplacian(const ManifoldData& md, const DiscreteOperator& L, const TensorField& X)
{
    require_vector_field(md, X, "apply_weak_laplacian");
    Eigen::VectorXd lx = L.matrix * to_vector(X);
    return to_field(md.grid, solve_block_mass(md, lx));
}

std::vector<bool> interior_mask(const ManifoldData& md, int margin)
{
    std::vector<bool> mask(md.node_count(), true);
    if (md.periodic || margin <= 0) {
        return mask;
    }
    for (std::size_t n = 0; n < md.node_count(); ++n) {
        for (int a = 0; a < md.dim(); ++a) {
            int i = md.grid.axis_index(n, a);
            int from_end = md.grid.points(a) - 1 - i;
            if (i < margin || from_end < margin) {
                mask[n] = false;
            }
        }
    }
    return mask;
}

double max_abs_difference(const TensorField& a, const TensorField& b, const std::vector<bool>& mask)
{
    double worst = 0.0;
    const std::size_t per = a.components_per_node();
    for (std::size_t n = 0; n < a.node_count(); ++n) {
        if (!mask[n]) {
            continue;
        }
        auto av = a.node_values(n);
        auto bv = b.node_values(n);
        for (std::size_t c = 0; c < per; ++c) {
            worst = std::max(worst, std::abs(av[c] - bv[c]));
        }
    }
    return worst;
}

double max_abs(const TensorField& a, const std::vector<bool>& mask)
{
    double worst = 0.0;
    for (std::size_t n = 0; n < a.node_count(); ++n) {
        if (!mask[n]) {
            continue;
        }
        for (double v : a.node_values(n)) {
            worst = std::max(worst, std::abs(v));
        }
    }
    return worst;
}

StrongLaplacianResult apply_strong_laplacian(const ManifoldData& md, const TensorField& X,
                                             const StrongLaplacianOptions& options)
{
    require_vector_field(md, X, "apply_strong_laplacian");
    const int d = md.dim();
    const Grid& grid = md.grid;
    // A_i^k = (nabla_i X)^k, node-centred.
    TensorField A = covariant_derivative_centered(md, X, ConnectionChoice::primal);

    // V_j^k = g^{ij} A_i^k, stored (j, k).
    auto V = make_field(grid, 2, Symmetry::none, [&](std::size_t n, std::span<double> out) {
        for (int j = 0; j < d; ++j) {
            for (int k = 0; k < d; ++k) {
                double s = 0.0;
                for (int i = 0; i < d; ++i) {
                    s += md.g_inv(n, i, j) * A(n, i, k);
                }
                out[j * d + k] = s;
            }
        }
    });

    // div_f of the coordinate fields d_j.
    std::vector<TensorField> div_coord;
    for (int j = 0; j < d; ++j) {
        auto e = make_field(grid, 1, Symmetry::none, [j](std::size_t, std::span<double> out) { out[j] = 1.0; });
        div_coord.push_back(divergence_f(md, e));
    }

    StrongLaplacianResult result;
    result.proof_form = make_field(grid, 1, Symmetry::none, [&](std::size_t n, std::span<double> out) {
        for (int k = 0; k < d; ++k) {
            double s = 0.0;
            for (int j = 0; j < d; ++j) {
                std::size_t p = grid.neighbor(n, j, 1);
                std::size_t m = grid.neighbor(n, j, -1);
                double dv = (V(p, j, k) - V(m, j, k)) / (2.0 * grid.spacing(j));
                for (int l = 0; l < d; ++l) {
                    dv += md.gamma_dual(n, k, j, l) * V(n, j, l);
                }
                s += dv + div_coord[j](n) * V(n, j, k);
            }
            out[k] = -s;
        }
    });

    TensorField df_field = TensorField::zeros(grid, 1);
    {
        std::vector<double> df(grid.node_count() * d);
        for (std::size_t n = 0; n < grid.node_count(); ++n) {
            for (int j = 0; j < d; ++j) {
                df[n * d + j] = (md.f(grid.neighbor(n, j, 1)) - md.f(grid.neighbor(n, j, -1))) / (2.0 * grid.spacing(j));
            }
        }
        df_field = TensorField(grid, 1, Symmetry::none, std::move(df));
    }

    result.expanded_form = make_field(grid, 1, Symmetry::none, [&](std::size_t n, std::span<double> out) {
        for (int k = 0; k < d; ++k) {
            double hess = 0.0;
            double kterm = 0.0;
            double fterm = 0.0;
            for (int i = 0; i < d; ++i) {
                for (int j = 0; j < d; ++j) {
                    const double gij = md.g_inv(n, i, j);
                    std::size_t p = grid.neighbor(n, j, 1);
                    std::size_t m = grid.neighbor(n, j, -1);
                    // dual-nabla_j acting on the (1,1)-tensor A at slot (i, k)
                    double t = (A(p, i, k) - A(m, i, k)) / (2.0 * grid.spacing(j));
                    for (int l = 0; l < d; ++l) {
                        t += md.gamma_dual(n, k, j, l) * A(n, i, l);
                        t -= md.gamma_dual(n, l, j, i) * A(n, l, k);
                    }
                    hess += gij * t;
                    for (int l = 0; l < d; ++l) {
                        kterm += gij * md.K(n, l, i, j) * A(n, l, k);
                    }
                    fterm += gij * df_field(n, j) * A(n, i, k);
                }
            }
            out[k] = -hess - 0.5 * md.alpha * kterm + fterm;
        }
    });

    auto mask = interior_mask(md, options.seam_margin);
    double scale = std::max(max_abs(result.proof_form, mask), max_abs(result.expanded_form, mask));
    double gap = max_abs_difference(result.proof_form, result.expanded_form, mask);
    result.relative_gap = scale > 0.0 ? gap / scale : 0.0;
    if (options.check_forms && result.relative_gap > options.tolerance) {
        std::ostringstream os;
        os << "strong Laplacian: proof form and expanded form differ by " << result.relative_gap
           << " (relative), tolerance " << options.tolerance;
        throw InternalInconsistency(os.str());
    }
    return result;
}

TensorField riemannian_connection_laplacian(const ManifoldData& md, const TensorField& X)
{
    require_vector_field(md, X, "riemannian_connection_laplacian");
    const int d = md.dim();
    const Grid& grid = md.grid;
    const ConnectionField& lc = md.levi_civita;
    std::vector<TensorField> dgamma;
    for (int a = 0; a < d; ++a) {
        dgamma.push_back(central_difference(lc.coefficients(), a));
    }
    // First derivatives dX[i][k] and covariant derivative nabla_i X^k (centred).
    TensorField A = make_field(grid, 2, Symmetry::none, [&](std::size_t n, std::span<double> out) {
        for (int i = 0; i < d; ++i) {
            for (int k = 0; k < d; ++k) {
                double v = (X(grid.neighbor(n, i, 1), k) - X(grid.neighbor(n, i, -1), k)) / (2.0 * grid.spacing(i));
                for (int l = 0; l < d; ++l) {
                    v += lc(n, k, i, l) * X(n, l);
                }
                out[i * d + k] = v;
            }
        }
    });
    return make_field(grid, 1, Symmetry::none, [&](std::size_t n, std::span<double> out) {
        auto x_at = [&](int i, int si, int j, int sj, int k) {
            std::size_t q = n;
            if (si != 0) q = grid.neighbor(q, i, si);
            if (sj != 0) q = grid.neighbor(q, j, sj);
            return X(q, k);
        };
        auto dx = [&](int i, int k) {
            return (x_at(i, 1, i, 0, k) - x_at(i, -1, i, 0, k)) / (2.0 * grid.spacing(i));
        };
        for (int k = 0; k < d; ++k) {
            double trace = 0.0;
            double fterm = 0.0;
            for (int i = 0; i < d; ++i) {
                for (int j = 0; j < d; ++j) {
                    double second;
                    if (i == j) {
                        double h = grid.spacing(i);
                        second = (x_at(i, 1, i, 0, k) - 2.0 * X(n, k) + x_at(i, -1, i, 0, k)) / (h * h);
                    } else {
                        second = (x_at(i, 1, j, 1, k) - x_at(i, 1, j, -1, k) - x_at(i, -1, j, 1, k)
                                  + x_at(i, -1, j, -1, k))
                                 / (4.0 * grid.spacing(i) * grid.spacing(j));
                    }
                    // (nabla^2 X)_{ij}^k = d_i (nabla_j X)^k + Gamma^k_{il} (nabla_j X)^l - Gamma^m_{ij} (nabla_m X)^k
                    double h2 = second;
                    for (int l = 0; l < d; ++l) {
                        h2 += dgamma[i](n, k, j, l) * X(n, l) + lc(n, k, j, l) * dx(i, l);
                        h2 += lc(n, k, i, l) * A(n, j, l);
                    }
                    for (int m = 0; m < d; ++m) {
                        h2 -= lc(n, m, i, j) * A(n, m, k);
                    }
                    trace += md.g_inv(n, i, j) * h2;
                    double dfj = (md.f(grid.neighbor(n, j, 1)) - md.f(grid.neighbor(n, j, -1))) / (2.0 * grid.spacing(j));
                    fterm += md.g_inv(n, i, j) * dfj * A(n, i, k);
                }
            }
            out[k] = -trace + fterm;
        }
    });
}

} // namespace statlap
