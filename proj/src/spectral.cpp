#include "statlap/spectral.hpp"

#include "statlap/errors.hpp"
#include "statlap/parallel.hpp"
#include "statlap/rng.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace statlap {

Eigen::VectorXd SpectralDecomposition::at(std::size_t n, std::size_t node) const
{
    const int d = grid.dim();
    return eigenvectors.col(static_cast<Eigen::Index>(n)).segment(static_cast<Eigen::Index>(node * d), d);
}

TensorField SpectralDecomposition::field(std::size_t n) const
{
    return to_field(grid, eigenvectors.col(static_cast<Eigen::Index>(n)));
}

namespace {

struct RawPairs {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
};

RawPairs dense_pairs(const Eigen::SparseMatrix<double>& L, const Eigen::SparseMatrix<double>& B)
{
    Eigen::MatrixXd Ld(L);
    Eigen::MatrixXd Bd(B);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Ld, Bd, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
    if (es.info() != Eigen::Success) {
        throw ConvergenceFailure("dense generalized eigensolver failed", 0, std::numeric_limits<double>::infinity());
    }
    return {es.eigenvalues(), es.eigenvectors()};
}

// Orthonormalize the columns of Y in the B inner product, dropping directions
// whose Gram eigenvalue is negligible.
Eigen::MatrixXd b_orthonormalize(const Eigen::MatrixXd& Y, const Eigen::SparseMatrix<double>& B)
{
    Eigen::MatrixXd G = Y.transpose() * (B * Y);
    G = 0.5 * (G + G.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    const Eigen::VectorXd& s = es.eigenvalues();
    const double cut = s.maxCoeff() * 1e-14;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = s.size() - 1; i >= 0; --i) {
        if (s[i] > cut) {
            keep.push_back(i);
        }
    }
    Eigen::MatrixXd T(Y.cols(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) {
        T.col(static_cast<Eigen::Index>(c)) = es.eigenvectors().col(keep[c]) / std::sqrt(s[keep[c]]);
    }
    return Y * T;
}

double residual_norm(const Eigen::SparseMatrix<double>& L, const Eigen::SparseMatrix<double>& B,
                     const Eigen::VectorXd& x, double lambda)
{
    Eigen::VectorXd r = L * x - lambda * (B * x);
    return r.norm() / x.norm();
}

// Shift-invert block subspace iteration with Rayleigh-Ritz, seeded start block.
RawPairs iterative_pairs(const Eigen::SparseMatrix<double>& L, const Eigen::SparseMatrix<double>& B,
                         std::size_t want, std::size_t block, const EigenOptions& options)
{
    const Eigen::Index n = L.rows();
    double ratio_sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        ratio_sum += L.coeff(i, i) / B.coeff(i, i);
    }
    const double shift = 1e-4 * ratio_sum / static_cast<double>(n) + 1e-12;
    Eigen::SparseMatrix<double> A = L + shift * B;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(A);
    if (solver.info() != Eigen::Success) {
        throw ConvergenceFailure("shifted factorization failed", 0, std::numeric_limits<double>::infinity());
    }

    CounterRng rng(options.seed);
    Eigen::MatrixXd Q(n, static_cast<Eigen::Index>(block));
    for (Eigen::Index c = 0; c < Q.cols(); ++c) {
        for (Eigen::Index r = 0; r < n; ++r) {
            Q(r, c) = rng.normal(static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(c));
        }
    }
    Q = b_orthonormalize(Q, B);

    double worst = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= options.max_iterations; ++it) {
        Eigen::MatrixXd rhs = B * Q;
        Eigen::MatrixXd Y = solver.solve(rhs);
        Y = b_orthonormalize(Y, B);
        Eigen::MatrixXd Lr = Y.transpose() * (L * Y);
        Lr = 0.5 * (Lr + Lr.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Lr);
        Q = Y * es.eigenvectors();
        const Eigen::VectorXd& theta = es.eigenvalues();
        worst = 0.0;
        const std::size_t check = std::min<std::size_t>(want, static_cast<std::size_t>(Q.cols()));
        for (std::size_t j = 0; j < check; ++j) {
            worst = std::max(worst, residual_norm(L, B, Q.col(static_cast<Eigen::Index>(j)), theta[static_cast<Eigen::Index>(j)]));
        }
        if (worst <= 0.1 * options.tolerance) {
            return {theta, Q};
        }
    }
    throw ConvergenceFailure("subspace iteration did not converge", options.max_iterations, worst);
}

// Index one past the degenerate cluster containing position k - 1.
std::size_t cluster_end(const Eigen::VectorXd& values, std::size_t k, double tol)
{
    std::size_t end = k;
    while (end < static_cast<std::size_t>(values.size())) {
        double ref = values[static_cast<Eigen::Index>(k - 1)];
        double v = values[static_cast<Eigen::Index>(end)];
        if (std::abs(v - ref) <= tol * std::max(1.0, std::abs(ref))) {
            ++end;
        } else {
            break;
        }
    }
    return end;
}

} // namespace

SpectralDecomposition eigendecompose(const Eigen::SparseMatrix<double>& L, const Eigen::SparseMatrix<double>& B,
                                     std::size_t k, const EigenOptions& options)
{
    const std::size_t n = static_cast<std::size_t>(L.rows());
    if (L.rows() != L.cols() || B.rows() != L.rows() || B.cols() != L.cols()) {
        throw ShapeMismatch("eigendecompose: L and B must be square and of equal size");
    }
    if (k == 0 || k > n) {
        throw ShapeMismatch("eigendecompose: k must lie in [1, dimension]");
    }

    RawPairs raw;
    std::size_t take = k;
    if (n <= options.dense_limit || 4 * k >= n) {
        raw = dense_pairs(L, B);
        take = cluster_end(raw.values, k, options.cluster_tolerance);
    } else {
        std::size_t block = std::min(n, std::max(2 * k, k + 16));
        while (true) {
            raw = iterative_pairs(L, B, k, block, options);
            take = cluster_end(raw.values, k, options.cluster_tolerance);
            if (take < static_cast<std::size_t>(raw.values.size()) || block == n) {
                break;
            }
            block = std::min(n, 2 * block);
        }
        // Converge the whole cluster, not only the first k members.
        if (take > k) {
            raw = iterative_pairs(L, B, take, std::max<std::size_t>(static_cast<std::size_t>(raw.values.size()), take + 16), options);
            take = cluster_end(raw.values, take, options.cluster_tolerance);
        }
    }

    SpectralDecomposition spec;
    spec.mass = B;
    spec.eigenvalues.resize(take);
    spec.eigenvectors = raw.vectors.leftCols(static_cast<Eigen::Index>(take));
    spec.raw_min_eigenvalue = raw.values[0];
    spec.complete = take == n;
    for (std::size_t j = 0; j < take; ++j) {
        double v = raw.values[static_cast<Eigen::Index>(j)];
        spec.eigenvalues[j] = std::abs(v) < kZeroEigenvalue ? 0.0 : v;
    }
    for (std::size_t j = 0; j < take; ++j) {
        spec.max_residual = std::max(spec.max_residual,
                                     residual_norm(L, B, spec.eigenvectors.col(static_cast<Eigen::Index>(j)),
                                                   raw.values[static_cast<Eigen::Index>(j)]));
    }
    Eigen::MatrixXd gram = spec.eigenvectors.transpose() * (B * spec.eigenvectors);
    spec.orthonormality_residual =
        (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
    if (spec.max_residual > options.tolerance) {
        std::ostringstream os;
        os << "eigenpair residual " << spec.max_residual << " exceeds tolerance " << options.tolerance;
        throw ConvergenceFailure(os.str(), 0, spec.max_residual);
    }
    return spec;
}

SpectralDecomposition eigendecompose(const DiscreteOperator& L, const ManifoldData& md, std::size_t k,
                                     const EigenOptions& options)
{
    InnerProductData ip = inner_product_data(md);
    SpectralDecomposition spec = eigendecompose(L.matrix, ip.B, k, options);
    spec.grid = md.grid;
    return spec;
}

SpectralDecomposition spectrum_for_time(const DiscreteOperator& L, const ManifoldData& md, double t,
                                        double tail_tolerance, const EigenOptions& options)
{
    const std::size_t n = md.vector_dofs();
    std::size_t k = std::min<std::size_t>(n, 16);
    if (!(t > 0.0)) {
        k = n;
    }
    while (true) {
        SpectralDecomposition spec = eigendecompose(L, md, k, options);
        if (spec.complete || truncation_tail(spec, t) < tail_tolerance) {
            return spec;
        }
        k = std::min(n, 2 * spec.count());
    }
}

double truncation_tail(const SpectralDecomposition& spec, double t)
{
    if (spec.complete) {
        return 0.0;
    }
    return std::exp(-spec.eigenvalues.back() * t);
}

namespace {

Eigen::VectorXd decay_weights(const SpectralDecomposition& spec, double t)
{
    Eigen::VectorXd a(static_cast<Eigen::Index>(spec.count()));
    for (std::size_t j = 0; j < spec.count(); ++j) {
        a[static_cast<Eigen::Index>(j)] = std::exp(-spec.eigenvalues[j] * t);
    }
    return a;
}

// d x k matrix of eigenfield values at a node.
Eigen::MatrixXd node_values(const SpectralDecomposition& spec, std::size_t node)
{
    const int d = spec.grid.dim();
    return spec.eigenvectors.middleRows(static_cast<Eigen::Index>(node * d), d);
}

void require_time(double t)
{
    if (!(t >= 0.0) || !std::isfinite(t)) {
        throw ParameterOutOfRange("heat kernel time must be finite and non-negative");
    }
}

} // namespace

HeatKernelBlock heat_kernel_block(const SpectralDecomposition& spec, const ManifoldData& md, double t,
                                  std::size_t x, std::size_t y, double tail_tolerance)
{
    require_time(t);
    Eigen::VectorXd a = decay_weights(spec, t);
    Eigen::MatrixXd Ux = node_values(spec, x);
    Eigen::MatrixXd Uy = node_values(spec, y);
    HeatKernelBlock block;
    block.source = y;
    block.target = x;
    block.t = t;
    block.matrix = Ux * a.asDiagonal() * (md.g.matrix_at(y) * Uy).transpose();
    block.tail_bound = truncation_tail(spec, t);
    block.truncated = block.tail_bound > tail_tolerance;
    return block;
}

HeatResult heat_apply(const SpectralDecomposition& spec, double t, const TensorField& X, double tail_tolerance)
{
    require_time(t);
    if (X.rank() != 1 || !(X.grid() == spec.grid)) {
        throw ShapeMismatch("heat_apply: expected a vector field on the spectral grid");
    }
    Eigen::VectorXd x = to_vector(X);
    Eigen::VectorXd coeff = spec.eigenvectors.transpose() * (spec.mass * x);
    coeff = coeff.cwiseProduct(decay_weights(spec, t));
    HeatResult out{to_field(spec.grid, spec.eigenvectors * coeff), truncation_tail(spec, t), false};
    out.truncated = out.tail_bound > tail_tolerance;
    return out;
}

TensorField heat_apply_quadrature(const SpectralDecomposition& spec, const ManifoldData& md, double t,
                                  const TensorField& X)
{
    require_time(t);
    const int d = md.dim();
    const double w = md.grid.cell_volume();
    std::vector<double> out(md.vector_dofs(), 0.0);
    for (std::size_t x = 0; x < md.node_count(); ++x) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
        for (std::size_t y = 0; y < md.node_count(); ++y) {
            HeatKernelBlock b = heat_kernel_block(spec, md, t, x, y);
            acc += b.matrix * X.vector_at(y) * (md.rho(y) * w);
        }
        for (int k = 0; k < d; ++k) {
            out[x * d + k] = acc[k];
        }
    }
    return TensorField(md.grid, 1, Symmetry::none, std::move(out));
}

double hs_norm_squared(const Eigen::MatrixXd& block, const Eigen::MatrixXd& g_target, const Eigen::MatrixXd& g_source)
{
    Eigen::MatrixXd gs_inv = g_source.llt().solve(Eigen::MatrixXd::Identity(g_source.rows(), g_source.cols()));
    return (block.transpose() * g_target * block * gs_inv).trace();
}

namespace {

// sum_n sum_m a_n a_m [g_x(X_n, X_m) - g_y(X_n, X_m)]^2, looping over pairs.
double double_sum(const Eigen::VectorXd& a, const Eigen::MatrixXd& gx_gram, const Eigen::MatrixXd& gy_gram)
{
    double s = 0.0;
    const Eigen::Index k = a.size();
    for (Eigen::Index n = 0; n < k; ++n) {
        for (Eigen::Index m = 0; m < k; ++m) {
            double diff = gx_gram(n, m) - gy_gram(n, m);
            s += a[n] * a[m] * diff * diff;
        }
    }
    return s;
}

double form_gap(double a, double b)
{
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

} // namespace

DiffusionDistance vector_diffusion_distance(const SpectralDecomposition& spec, const ManifoldData& md, double t,
                                            std::size_t x, std::size_t y)
{
    if (!(t > 0.0)) {
        throw ParameterOutOfRange("vector diffusion distance needs t > 0");
    }
    Eigen::MatrixXd gx = md.g.matrix_at(x);
    Eigen::MatrixXd gy = md.g.matrix_at(y);
    double trace = hs_norm_squared(heat_kernel_block(spec, md, t, x, x).matrix, gx, gx)
                   + hs_norm_squared(heat_kernel_block(spec, md, t, y, y).matrix, gy, gy)
                   - 2.0 * hs_norm_squared(heat_kernel_block(spec, md, t, x, y).matrix, gx, gy);

    Eigen::MatrixXd Ux = node_values(spec, x);
    Eigen::MatrixXd Uy = node_values(spec, y);
    double dsum = double_sum(decay_weights(spec, t), Ux.transpose() * gx * Ux, Uy.transpose() * gy * Uy);

    double gap = form_gap(trace, dsum);
    if (gap > kFormTolerance) {
        std::ostringstream os;
        os << "vector diffusion distance: trace form " << trace << " and double-sum form " << dsum
           << " disagree (relative gap " << gap << ")";
        throw FormMismatch(os.str());
    }
    DiffusionDistance out;
    out.trace_form = trace;
    out.double_sum_form = dsum;
    out.distance = std::sqrt(std::max(0.0, trace));
    out.tail_bound = truncation_tail(spec, t);
    return out;
}

DistanceMatrix vdd_matrix(const SpectralDecomposition& spec, const ManifoldData& md, double t,
                          const std::vector<std::size_t>& nodes, double double_sum_budget, int threads)
{
    if (!(t > 0.0)) {
        throw ParameterOutOfRange("vector diffusion distance needs t > 0");
    }
    const std::size_t m = nodes.size();
    const double k = static_cast<double>(spec.count());
    Eigen::VectorXd a = decay_weights(spec, t);

    std::vector<Eigen::MatrixXd> g(m);
    std::vector<Eigen::MatrixXd> ginv(m);
    std::vector<Eigen::MatrixXd> U(m);
    std::vector<double> self(m);
    for (std::size_t i = 0; i < m; ++i) {
        g[i] = md.g.matrix_at(nodes[i]);
        ginv[i] = g[i].llt().solve(Eigen::MatrixXd::Identity(g[i].rows(), g[i].cols()));
        U[i] = node_values(spec, nodes[i]);
    }
    auto block = [&](std::size_t i, std::size_t j) { return Eigen::MatrixXd(U[i] * a.asDiagonal() * (g[j] * U[j]).transpose()); };
    auto hs = [&](std::size_t i, std::size_t j) {
        Eigen::MatrixXd p = block(i, j);
        return (p.transpose() * g[i] * p * ginv[j]).trace();
    };
    for (std::size_t i = 0; i < m; ++i) {
        self[i] = hs(i, i);
    }

    const double pairs = 0.5 * static_cast<double>(m) * static_cast<double>(m > 0 ? m - 1 : 0);
    const double work = pairs * k * k;
    std::size_t stride = 1;
    if (work > double_sum_budget) {
        stride = static_cast<std::size_t>(std::ceil(work / double_sum_budget));
    }

    DistanceMatrix out;
    out.nodes = nodes;
    out.distances = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    out.tail_bound = truncation_tail(spec, t);
    std::vector<double> row_gap(m, 0.0);
    std::vector<std::size_t> row_checked(m, 0);
    parallel_for(m, threads, [&](std::size_t i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            const std::size_t pair_index = i * m - i * (i + 1) / 2 + (j - i - 1);
            double trace = self[i] + self[j] - 2.0 * hs(i, j);
            if (pair_index % stride == 0) {
                double dsum = double_sum(a, U[i].transpose() * g[i] * U[i], U[j].transpose() * g[j] * U[j]);
                double gap = form_gap(trace, dsum);
                row_gap[i] = std::max(row_gap[i], gap);
                ++row_checked[i];
                if (gap > kFormTolerance) {
                    std::ostringstream os;
                    os << "vector diffusion distance between nodes " << nodes[i] << " and " << nodes[j]
                       << ": forms disagree (relative gap " << gap << ")";
                    throw FormMismatch(os.str());
                }
            }
            double dist = std::sqrt(std::max(0.0, trace));
            out.distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = dist;
            out.distances(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = dist;
        }
    });
    for (std::size_t i = 0; i < m; ++i) {
        out.max_form_gap = std::max(out.max_form_gap, row_gap[i]);
        out.pairs_cross_checked += row_checked[i];
    }
    return out;
}

} // namespace statlap
