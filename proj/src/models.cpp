#include "statlap/models.hpp"

#include "statlap/errors.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace statlap {

namespace {

std::string describe(std::span<const double> theta)
{
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < theta.size(); ++i) {
        os << (i ? ", " : "") << theta[i];
    }
    os << ")";
    return os.str();
}

void require_dim(std::span<const double> theta, int d, const std::string& model)
{
    if (static_cast<int>(theta.size()) != d) {
        throw ShapeMismatch(model + ": expected a " + std::to_string(d) + "-dimensional parameter");
    }
}

int category(Sample x, int count, const std::string& model)
{
    int c = static_cast<int>(std::lround(x));
    if (c < 0 || c >= count || static_cast<double>(c) != x) {
        throw ShapeMismatch(model + ": sample " + std::to_string(x) + " is not an outcome");
    }
    return c;
}

} // namespace

std::vector<Sample> StatModel::sample(std::span<const double> theta, std::uint64_t seed, std::size_t n) const
{
    check_parameter(theta);
    CounterRng rng(seed);
    std::vector<Sample> out(n);
    for (std::size_t s = 0; s < n; ++s) {
        out[s] = draw(theta, rng, s);
    }
    return out;
}

// --- Bernoulli -------------------------------------------------------------

void BernoulliModel::check_parameter(std::span<const double> theta) const
{
    require_dim(theta, 1, name());
    if (!(theta[0] >= tol_ && theta[0] <= 1.0 - tol_)) {
        throw ParameterOutOfRange("bernoulli: p = " + describe(theta) + " is outside [tol, 1 - tol]");
    }
}

double BernoulliModel::loglik(Sample x, std::span<const double> theta) const
{
    double p = theta[0];
    return category(x, 2, name()) == 1 ? std::log(p) : std::log1p(-p);
}

Eigen::VectorXd BernoulliModel::loglik_grad(Sample x, std::span<const double> theta) const
{
    double p = theta[0];
    Eigen::VectorXd g(1);
    g[0] = category(x, 2, name()) == 1 ? 1.0 / p : -1.0 / (1.0 - p);
    return g;
}

Sample BernoulliModel::draw(std::span<const double> theta, const CounterRng& rng, std::uint64_t index) const
{
    return rng.uniform(index) < theta[0] ? 1.0 : 0.0;
}

Eigen::MatrixXd BernoulliModel::fisher(std::span<const double> theta) const
{
    check_parameter(theta);
    double p = theta[0];
    return Eigen::MatrixXd::Constant(1, 1, 1.0 / (p * (1.0 - p)));
}

std::vector<double> BernoulliModel::amari_chentsov(std::span<const double> theta) const
{
    check_parameter(theta);
    double p = theta[0];
    double q = p * (1.0 - p);
    return {(1.0 - 2.0 * p) / (q * q)};
}

// --- Gaussian location -----------------------------------------------------

GaussianLocationModel::GaussianLocationModel(double sigma) : sigma_(sigma)
{
    if (!(sigma_ > 0.0)) {
        throw ParameterOutOfRange("gaussian_location: sigma must be positive");
    }
}

void GaussianLocationModel::check_parameter(std::span<const double> theta) const
{
    require_dim(theta, 1, name());
    if (!std::isfinite(theta[0])) {
        throw ParameterOutOfRange("gaussian_location: non-finite mean");
    }
}

double GaussianLocationModel::loglik(Sample x, std::span<const double> theta) const
{
    double z = (x - theta[0]) / sigma_;
    return -0.5 * z * z - std::log(sigma_) - 0.5 * std::log(2.0 * std::numbers::pi);
}

Eigen::VectorXd GaussianLocationModel::loglik_grad(Sample x, std::span<const double> theta) const
{
    Eigen::VectorXd g(1);
    g[0] = (x - theta[0]) / (sigma_ * sigma_);
    return g;
}

Sample GaussianLocationModel::draw(std::span<const double> theta, const CounterRng& rng, std::uint64_t index) const
{
    return theta[0] + sigma_ * rng.normal(index);
}

Eigen::MatrixXd GaussianLocationModel::fisher(std::span<const double> theta) const
{
    check_parameter(theta);
    return Eigen::MatrixXd::Constant(1, 1, 1.0 / (sigma_ * sigma_));
}

std::vector<double> GaussianLocationModel::amari_chentsov(std::span<const double> theta) const
{
    check_parameter(theta);
    return {0.0};
}

// --- Gaussian (mu, sigma) --------------------------------------------------

void GaussianModel::check_parameter(std::span<const double> theta) const
{
    require_dim(theta, 2, name());
    if (!std::isfinite(theta[0]) || !(theta[1] >= min_sigma_) || !std::isfinite(theta[1])) {
        throw ParameterOutOfRange("gaussian: theta = " + describe(theta) + " needs sigma > 0");
    }
}

double GaussianModel::loglik(Sample x, std::span<const double> theta) const
{
    double z = (x - theta[0]) / theta[1];
    return -0.5 * z * z - std::log(theta[1]) - 0.5 * std::log(2.0 * std::numbers::pi);
}

Eigen::VectorXd GaussianModel::loglik_grad(Sample x, std::span<const double> theta) const
{
    double s = theta[1];
    double z = (x - theta[0]) / s;
    Eigen::VectorXd g(2);
    g[0] = z / s;
    g[1] = (z * z - 1.0) / s;
    return g;
}

Sample GaussianModel::draw(std::span<const double> theta, const CounterRng& rng, std::uint64_t index) const
{
    return theta[0] + theta[1] * rng.normal(index);
}

Eigen::MatrixXd GaussianModel::fisher(std::span<const double> theta) const
{
    check_parameter(theta);
    double s2 = theta[1] * theta[1];
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(2, 2);
    g(0, 0) = 1.0 / s2;
    g(1, 1) = 2.0 / s2;
    return g;
}

std::vector<double> GaussianModel::amari_chentsov(std::span<const double> theta) const
{
    check_parameter(theta);
    double s3 = theta[1] * theta[1] * theta[1];
    // E[z^a (z^2-1)^b] with (a, b) counting mu- and sigma-slots.
    std::vector<double> c(8, 0.0);
    auto at = [](int i, int j, int k) { return (i * 2 + j) * 2 + k; };
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            for (int k = 0; k < 2; ++k) {
                int sigma_slots = i + j + k;
                double m = 0.0;
                switch (sigma_slots) {
                case 0: m = 0.0; break;  // E z^3
                case 1: m = 2.0; break;  // E z^2 (z^2 - 1)
                case 2: m = 0.0; break;  // E z (z^2 - 1)^2
                case 3: m = 8.0; break;  // E (z^2 - 1)^3
                }
                c[at(i, j, k)] = m / s3;
            }
        }
    }
    return c;
}

// --- Categorical -----------------------------------------------------------

CategoricalModel::CategoricalModel(int dim, double boundary_tolerance) : dim_(dim), tol_(boundary_tolerance)
{
    if (dim_ < 1) {
        throw ParameterOutOfRange("categorical: dimension must be at least 1");
    }
}

void CategoricalModel::check_parameter(std::span<const double> theta) const
{
    require_dim(theta, dim_, name());
    double rest = 1.0;
    for (double p : theta) {
        if (!(p >= tol_)) {
            throw ParameterOutOfRange("categorical: theta = " + describe(theta) + " leaves the simplex interior");
        }
        rest -= p;
    }
    if (!(rest >= tol_)) {
        throw ParameterOutOfRange("categorical: theta = " + describe(theta) + " leaves the simplex interior");
    }
}

double CategoricalModel::loglik(Sample x, std::span<const double> theta) const
{
    int c = category(x, dim_ + 1, name());
    if (c > 0) {
        return std::log(theta[c - 1]);
    }
    double rest = 1.0;
    for (double p : theta) {
        rest -= p;
    }
    return std::log(rest);
}

Eigen::VectorXd CategoricalModel::loglik_grad(Sample x, std::span<const double> theta) const
{
    int c = category(x, dim_ + 1, name());
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim_);
    if (c > 0) {
        g[c - 1] = 1.0 / theta[c - 1];
    } else {
        double rest = 1.0;
        for (double p : theta) {
            rest -= p;
        }
        g.setConstant(-1.0 / rest);
    }
    return g;
}

Sample CategoricalModel::draw(std::span<const double> theta, const CounterRng& rng, std::uint64_t index) const
{
    double u = rng.uniform(index);
    double acc = 0.0;
    for (int i = 0; i < dim_; ++i) {
        acc += theta[i];
        if (u < acc) {
            return static_cast<double>(i + 1);
        }
    }
    return 0.0;
}

Eigen::MatrixXd CategoricalModel::fisher(std::span<const double> theta) const
{
    check_parameter(theta);
    double rest = 1.0;
    for (double p : theta) {
        rest -= p;
    }
    Eigen::MatrixXd g = Eigen::MatrixXd::Constant(dim_, dim_, 1.0 / rest);
    for (int i = 0; i < dim_; ++i) {
        g(i, i) += 1.0 / theta[i];
    }
    return g;
}

std::vector<double> CategoricalModel::amari_chentsov(std::span<const double> theta) const
{
    check_parameter(theta);
    double rest = 1.0;
    for (double p : theta) {
        rest -= p;
    }
    const int d = dim_;
    std::vector<double> c(static_cast<std::size_t>(d) * d * d, -1.0 / (rest * rest));
    for (int i = 0; i < d; ++i) {
        c[(i * d + i) * d + i] += 1.0 / (theta[i] * theta[i]);
    }
    return c;
}

// --- catalog and estimators ------------------------------------------------

std::unique_ptr<StatModel> make_model(const std::string& name, const std::map<std::string, double>& fixed_params)
{
    auto param = [&](const std::string& key, double fallback) {
        auto it = fixed_params.find(key);
        return it == fixed_params.end() ? fallback : it->second;
    };
    auto only = [&](std::initializer_list<const char*> allowed) {
        for (const auto& [key, value] : fixed_params) {
            bool ok = false;
            for (const char* a : allowed) {
                ok = ok || key == a;
            }
            if (!ok) {
                throw ConfigError("model '" + name + "' has no fixed parameter '" + key + "'");
            }
        }
    };
    if (name == "bernoulli") {
        only({});
        return std::make_unique<BernoulliModel>();
    }
    if (name == "gaussian_location") {
        only({"sigma"});
        return std::make_unique<GaussianLocationModel>(param("sigma", 1.0));
    }
    if (name == "gaussian") {
        only({});
        return std::make_unique<GaussianModel>();
    }
    if (name == "categorical") {
        only({"dim"});
        return std::make_unique<CategoricalModel>(static_cast<int>(param("dim", 2.0)));
    }
    throw ConfigError("unknown model '" + name + "'");
}

double pairwise_sum(std::span<const double> v)
{
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) {
            s += x;
        }
        return s;
    }
    std::size_t half = v.size() / 2;
    return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

namespace {

// Mean and standard error per component of per-sample contributions laid out
// sample-major: contributions[s * width + c].
MCEstimate summarize(std::vector<double> contributions, std::size_t width, std::size_t n, std::uint64_t seed)
{
    MCEstimate est;
    est.n_samples = n;
    est.seed = seed;
    est.value.resize(width);
    est.standard_error.resize(width);
    std::vector<double> column(n);
    for (std::size_t c = 0; c < width; ++c) {
        for (std::size_t s = 0; s < n; ++s) {
            column[s] = contributions[s * width + c];
        }
        double mean = pairwise_sum(column) / static_cast<double>(n);
        for (std::size_t s = 0; s < n; ++s) {
            double dev = column[s] - mean;
            column[s] = dev * dev;
        }
        double var = pairwise_sum(column) / static_cast<double>(n - 1);
        est.value[c] = mean;
        est.standard_error[c] = std::sqrt(var / static_cast<double>(n));
    }
    return est;
}

void require_samples(std::size_t n)
{
    if (n < 100) {
        throw ParameterOutOfRange("Monte-Carlo estimators need at least 100 samples");
    }
}

} // namespace

MCEstimate fisher_mc(const StatModel& model, std::span<const double> theta, std::size_t n, std::uint64_t seed)
{
    require_samples(n);
    model.check_parameter(theta);
    const int d = model.parameter_dim();
    const std::size_t width = static_cast<std::size_t>(d) * d;
    CounterRng rng(seed);
    std::vector<double> contrib(n * width);
    for (std::size_t s = 0; s < n; ++s) {
        Eigen::VectorXd g = model.loglik_grad(model.draw(theta, rng, s), theta);
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                contrib[s * width + i * d + j] = g[i] * g[j];
            }
        }
    }
    return summarize(std::move(contrib), width, n, seed);
}

MCEstimate ac_tensor_mc(const StatModel& model, std::span<const double> theta, std::size_t n, std::uint64_t seed)
{
    require_samples(n);
    model.check_parameter(theta);
    const int d = model.parameter_dim();
    const std::size_t width = static_cast<std::size_t>(d) * d * d;
    CounterRng rng(seed);
    std::vector<double> contrib(n * width);
    for (std::size_t s = 0; s < n; ++s) {
        Eigen::VectorXd g = model.loglik_grad(model.draw(theta, rng, s), theta);
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                for (int k = 0; k < d; ++k) {
                    contrib[s * width + (i * d + j) * d + k] = g[i] * g[j] * g[k];
                }
            }
        }
    }
    return summarize(std::move(contrib), width, n, seed);
}

std::pair<TensorField, TensorField> eval_closed_form(const StatModel& model, const Grid& grid)
{
    if (!model.has_closed_form()) {
        throw NoClosedForm(model.name() + " has no closed-form metric");
    }
    if (grid.dim() != model.parameter_dim()) {
        throw ShapeMismatch(model.name() + ": chart dimension does not match the parameter dimension");
    }
    const int d = grid.dim();
    auto g = make_field(grid, 2, Symmetry::symmetric, [&](std::size_t n, std::span<double> out) {
        auto theta = grid.coordinates(n);
        Eigen::MatrixXd m = model.fisher(theta);
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                out[i * d + j] = m(i, j);
            }
        }
    });
    auto C = make_field(grid, 3, Symmetry::fully_symmetric, [&](std::size_t n, std::span<double> out) {
        auto theta = grid.coordinates(n);
        auto c = model.amari_chentsov(theta);
        std::copy(c.begin(), c.end(), out.begin());
    });
    return {std::move(g), std::move(C)};
}

TensorField loglik_grad_field(const StatModel& model, Sample x, const Grid& grid)
{
    if (grid.dim() != model.parameter_dim()) {
        throw ShapeMismatch(model.name() + ": chart dimension does not match the parameter dimension");
    }
    return make_field(grid, 1, Symmetry::none, [&](std::size_t n, std::span<double> out) {
        auto theta = grid.coordinates(n);
        model.check_parameter(theta);
        Eigen::VectorXd g = model.loglik_grad(x, theta);
        for (int i = 0; i < grid.dim(); ++i) {
            out[i] = g[i];
        }
    });
}

} // namespace statlap
