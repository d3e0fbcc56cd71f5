#pragma once

#include "statlap/models.hpp"
#include "statlap/spectral.hpp"

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

namespace statlap {

/// Posterior density of theta given one observation, relative to the
/// reference measure rho.
struct PosteriorField {
    Sample x = 0.0;
    TensorField density;
    double evidence = 0.0;
};

/// Smallest admissible evidence before ZeroEvidence is raised.
inline constexpr double kMinEvidence = 1e-300;

enum class PriorKind { uniform, bump, beta };

/// Prior density relative to rho, normalized so its rho-quadrature is 1.
///  - uniform: constant.
///  - bump: prod_a ((1 - cos(2 pi u_a)) / 2)^2 in the chart phase u_a, which
///    vanishes to fourth order at the seam.
///  - beta: prod_a theta_a^(a-1) (1 - theta_a)^(b-1); needs theta in (0, 1).
TensorField make_prior(const ManifoldData& md, PriorKind kind, const std::map<std::string, double>& params = {});
PriorKind prior_kind_from_string(const std::string& s);

/// rho-weighted node quadrature of a scalar field.
double integrate(const ManifoldData& md, const TensorField& h);

struct PosteriorOptions {
    /// Required width 4 sigma_a / h_a of the posterior along every axis.
    double min_support_nodes = 8.0;
};

/// likelihood(x | theta) prior(theta) / Z(x), Z the rho-quadrature of the
/// numerator. Throws ZeroEvidence and PosteriorUnderResolved.
PosteriorField posterior_field(const StatModel& model, const TensorField& prior, Sample x, const ManifoldData& md,
                               const PosteriorOptions& options = {});

/// (grad f)^i = g^{ij} D_j f with central differences.
TensorField posterior_gradient(const PosteriorField& pf, const ManifoldData& md);

/// Everything a kernel evaluation needs, bundled once.
struct KernelContext {
    const StatModel* model = nullptr;
    const ManifoldData* manifold = nullptr;
    const SpectralDecomposition* spectrum = nullptr;
    TensorField prior;
    PosteriorOptions posterior_options;
    /// The double-integral route is evaluated when nodes^2 * k * d fits this.
    double double_form_budget = 2e7;
};

struct KernelValue {
    double value = 0.0;         // single-integral route
    double double_form = 0.0;   // double-integral route, when evaluated
    bool cross_checked = false;
    double tail_bound = 0.0;
};

/// Relative agreement demanded between the single and double integral routes.
inline constexpr double kKernelFormTolerance = 1e-7;

KernelValue kernel_value(const KernelContext& ctx, Sample x, Sample x_prime, double t);

struct GramMatrix {
    std::vector<Sample> samples;
    double t = 0.0;
    Eigen::MatrixXd values;
    double min_eigenvalue = 0.0;
    double asymmetry = 0.0;     // max |K_ij - K_ji| before averaging
    double max_form_gap = 0.0;
    std::size_t cross_checked = 0;
    double tail_bound = 0.0;
};

GramMatrix kernel_gram(const KernelContext& ctx, const std::vector<Sample>& samples, double t, int threads = 1);

double kernel_distance(const KernelContext& ctx, Sample x, Sample y, double t);

} // namespace statlap
