#pragma once

#include "statlap/rng.hpp"
#include "statlap/tensor_field.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace statlap {

/// A point of the sample space. Finite families use the category index.
using Sample = double;

/// Parametric family p(x | theta).
class StatModel {
public:
    virtual ~StatModel() = default;

    virtual std::string name() const = 0;
    virtual int parameter_dim() const = 0;

    /// Number of outcomes for finite sample spaces, empty for continuous ones.
    virtual std::optional<int> finite_support() const { return std::nullopt; }

    virtual double loglik(Sample x, std::span<const double> theta) const = 0;
    virtual Eigen::VectorXd loglik_grad(Sample x, std::span<const double> theta) const = 0;

    /// Exact draw number `index` from p(. | theta) under the given generator.
    virtual Sample draw(std::span<const double> theta, const CounterRng& rng, std::uint64_t index) const = 0;

    std::vector<Sample> sample(std::span<const double> theta, std::uint64_t seed, std::size_t n) const;

    virtual bool has_closed_form() const { return true; }
    virtual Eigen::MatrixXd fisher(std::span<const double> theta) const = 0;
    /// Fully symmetric C_{ijk}, flattened (i, j, k).
    virtual std::vector<double> amari_chentsov(std::span<const double> theta) const = 0;

    /// Throws ParameterOutOfRange when theta is outside the valid region.
    virtual void check_parameter(std::span<const double> theta) const = 0;
};

class BernoulliModel final : public StatModel {
public:
    explicit BernoulliModel(double boundary_tolerance = 1e-6) : tol_(boundary_tolerance) {}
    std::string name() const override { return "bernoulli"; }
    int parameter_dim() const override { return 1; }
    std::optional<int> finite_support() const override { return 2; }
    double loglik(Sample x, std::span<const double> theta) const override;
    Eigen::VectorXd loglik_grad(Sample x, std::span<const double> theta) const override;
    Sample draw(std::span<const double> theta, const CounterRng& rng, std::uint64_t index) const override;
    Eigen::MatrixXd fisher(std::span<const double> theta) const override;
    std::vector<double> amari_chentsov(std::span<const double> theta) const override;
    void check_parameter(std::span<const double> theta) const override;

private:
    double tol_;
};

/// N(mu, sigma^2) with sigma fixed; theta = (mu).
class GaussianLocationModel final : public StatModel {
public:
    explicit GaussianLocationModel(double sigma = 1.0);
    std::string name() const override { return "gaussian_location"; }
    int parameter_dim() const override { return 1; }
    double loglik(Sample x, std::span<const double> theta) const override;
    Eigen::VectorXd loglik_grad(Sample x, std::span<const double> theta) const override;
    Sample draw(std::span<const double> theta, const CounterRng& rng, std::uint64_t index) const override;
    Eigen::MatrixXd fisher(std::span<const double> theta) const override;
    std::vector<double> amari_chentsov(std::span<const double> theta) const override;
    void check_parameter(std::span<const double> theta) const override;
    double sigma() const { return sigma_; }

private:
    double sigma_;
};

/// N(mu, sigma^2); theta = (mu, sigma).
class GaussianModel final : public StatModel {
public:
    explicit GaussianModel(double min_sigma = 1e-6) : min_sigma_(min_sigma) {}
    std::string name() const override { return "gaussian"; }
    int parameter_dim() const override { return 2; }
    double loglik(Sample x, std::span<const double> theta) const override;
    Eigen::VectorXd loglik_grad(Sample x, std::span<const double> theta) const override;
    Sample draw(std::span<const double> theta, const CounterRng& rng, std::uint64_t index) const override;
    Eigen::MatrixXd fisher(std::span<const double> theta) const override;
    std::vector<double> amari_chentsov(std::span<const double> theta) const override;
    void check_parameter(std::span<const double> theta) const override;

private:
    double min_sigma_;
};

/// Categorical over {0, ..., d}; theta = (p_1, ..., p_d), p_0 = 1 - sum(theta).
class CategoricalModel final : public StatModel {
public:
    explicit CategoricalModel(int dim, double boundary_tolerance = 1e-6);
    std::string name() const override { return "categorical"; }
    int parameter_dim() const override { return dim_; }
    std::optional<int> finite_support() const override { return dim_ + 1; }
    double loglik(Sample x, std::span<const double> theta) const override;
    Eigen::VectorXd loglik_grad(Sample x, std::span<const double> theta) const override;
    Sample draw(std::span<const double> theta, const CounterRng& rng, std::uint64_t index) const override;
    Eigen::MatrixXd fisher(std::span<const double> theta) const override;
    std::vector<double> amari_chentsov(std::span<const double> theta) const override;
    void check_parameter(std::span<const double> theta) const override;

private:
    int dim_;
    double tol_;
};

/// Catalog lookup: bernoulli, gaussian_location (sigma), gaussian, categorical (dim).
std::unique_ptr<StatModel> make_model(const std::string& name, const std::map<std::string, double>& fixed_params);

struct MCEstimate {
    std::vector<double> value;
    std::vector<double> standard_error;
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
};

/// Node-sampled closed-form Fisher metric and Amari-Chentsov tensor.
std::pair<TensorField, TensorField> eval_closed_form(const StatModel& model, const Grid& grid);

/// Monte-Carlo (1/n) sum d_i l d_j l, symmetrized; flattened (i, j).
MCEstimate fisher_mc(const StatModel& model, std::span<const double> theta, std::size_t n, std::uint64_t seed);

/// Monte-Carlo (1/n) sum d_i l d_j l d_k l, fully symmetrized; flattened (i, j, k).
MCEstimate ac_tensor_mc(const StatModel& model, std::span<const double> theta, std::size_t n, std::uint64_t seed);

/// d_i l(x | theta) sampled on the grid (a covector field).
TensorField loglik_grad_field(const StatModel& model, Sample x, const Grid& grid);

/// Pairwise (cascade) summation; the result does not depend on how callers chunk work.
double pairwise_sum(std::span<const double> v);

} // namespace statlap
