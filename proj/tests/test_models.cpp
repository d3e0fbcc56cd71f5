#include "support.hpp"

#include "statlap/errors.hpp"
#include "statlap/models.hpp"

#include <doctest.h>

using namespace statlap;
using namespace statlap::test;

namespace {

// Exact enumeration over x in {0, 1}: score d/dp log p(x) = x/p - (1-x)/(1-p).
double bernoulli_moment(double p, int order)
{
    double s1 = 1.0 / p;
    double s0 = -1.0 / (1.0 - p);
    return p * std::pow(s1, order) + (1.0 - p) * std::pow(s0, order);
}

bool within_sigmas(const MCEstimate& est, std::size_t idx, double exact, double sigmas = 4.0)
{
    return std::abs(est.value[idx] - exact) <= sigmas * est.standard_error[idx];
}

} // namespace

TEST_CASE("closed forms")
{
    SUBCASE("gaussian location")
    {
        GaussianLocationModel m(1.0);
        for (double mu : {-2.0, 0.0, 3.5}) {
            double th[] = {mu};
            CHECK(m.fisher(th)(0, 0) == 1.0);
            CHECK(m.amari_chentsov(th)[0] == 0.0);
        }
    }
    SUBCASE("bernoulli against exact enumeration")
    {
        BernoulliModel m;
        double th[] = {0.25};
        CHECK(m.fisher(th)(0, 0) == doctest::Approx(16.0 / 3.0).epsilon(1e-14));
        CHECK(m.amari_chentsov(th)[0] == doctest::Approx(128.0 / 9.0).epsilon(1e-14));
        CHECK(m.fisher(th)(0, 0) == doctest::Approx(bernoulli_moment(0.25, 2)).epsilon(1e-14));
        CHECK(m.amari_chentsov(th)[0] == doctest::Approx(bernoulli_moment(0.25, 3)).epsilon(1e-14));
        double half[] = {0.5};
        CHECK(m.amari_chentsov(half)[0] == 0.0);
    }
    SUBCASE("gaussian mean and scale")
    {
        GaussianModel m;
        double th[] = {0.3, 2.0};
        Eigen::MatrixXd g = m.fisher(th);
        CHECK(g(0, 0) == doctest::Approx(0.25));
        CHECK(g(1, 1) == doctest::Approx(0.5));
        CHECK(g(0, 1) == 0.0);
        auto C = m.amari_chentsov(th);
        CHECK(C[0 * 4 + 0 * 2 + 1] == doctest::Approx(2.0 / 8.0));
        CHECK(C[1 * 4 + 0 * 2 + 0] == doctest::Approx(2.0 / 8.0));
        CHECK(C[1 * 4 + 1 * 2 + 1] == doctest::Approx(8.0 / 8.0));
        CHECK(C[0] == 0.0);
        CHECK(C[0 * 4 + 1 * 2 + 1] == 0.0);
    }
    SUBCASE("categorical matches enumeration")
    {
        CategoricalModel m(2);
        double th[] = {0.2, 0.3};
        Eigen::MatrixXd g = m.fisher(th);
        auto C = m.amari_chentsov(th);
        // outcomes 0..2 with probabilities (p0, p1, p2) = (0.5, 0.2, 0.3)
        const double probs[] = {0.5, 0.2, 0.3};
        Eigen::MatrixXd ge = Eigen::MatrixXd::Zero(2, 2);
        std::vector<double> ce(8, 0.0);
        for (int x = 0; x < 3; ++x) {
            Eigen::VectorXd s = m.loglik_grad(x, th);
            ge += probs[x] * s * s.transpose();
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                    for (int k = 0; k < 2; ++k) ce[(i * 2 + j) * 2 + k] += probs[x] * s[i] * s[j] * s[k];
        }
        CHECK((g - ge).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(max_abs_diff(C, ce) < 1e-11);
    }
}

TEST_CASE("parameter validation")
{
    BernoulliModel b;
    double out[] = {1.2};
    CHECK_THROWS_AS(b.fisher(out), ParameterOutOfRange);
    GaussianModel g;
    double neg[] = {0.0, -1.0};
    CHECK_THROWS_AS(g.fisher(neg), ParameterOutOfRange);
    CHECK_THROWS_AS(make_model("poisson", {}), ConfigError);
    CHECK_THROWS_AS(make_model("bernoulli", {{"sigma", 1.0}}), ConfigError);
    CHECK(make_model("gaussian_location", {{"sigma", 2.0}})->name() == "gaussian_location");
}

TEST_CASE("Monte Carlo Fisher and Amari-Chentsov estimates")
{
    SUBCASE("gaussian location")
    {
        GaussianLocationModel m(1.0);
        double th[] = {0.7};
        auto g = fisher_mc(m, th, 100000, 1);
        auto c = ac_tensor_mc(m, th, 100000, 2);
        CHECK(within_sigmas(g, 0, 1.0));
        CHECK(within_sigmas(c, 0, 0.0));
    }
    SUBCASE("bernoulli")
    {
        BernoulliModel m;
        double th[] = {0.25};
        CHECK(within_sigmas(fisher_mc(m, th, 100000, 3), 0, 16.0 / 3.0));
        CHECK(within_sigmas(ac_tensor_mc(m, th, 100000, 4), 0, 128.0 / 9.0));
        double half[] = {0.5};
        CHECK(within_sigmas(ac_tensor_mc(m, half, 100000, 5), 0, 0.0));
    }
    SUBCASE("same seed is bit-identical")
    {
        BernoulliModel m;
        double th[] = {0.3};
        auto a = fisher_mc(m, th, 5000, 42);
        auto b = fisher_mc(m, th, 5000, 42);
        CHECK(a.value[0] == b.value[0]);
        CHECK(a.standard_error[0] == b.standard_error[0]);
        CHECK(fisher_mc(m, th, 5000, 43).value[0] != a.value[0]);
    }
    SUBCASE("too few samples")
    {
        BernoulliModel m;
        double th[] = {0.3};
        CHECK_THROWS_AS(fisher_mc(m, th, 10, 1), ParameterOutOfRange);
    }
}

TEST_CASE("score fields")
{
    SUBCASE("bernoulli x = 1 gives 1/p")
    {
        Grid grid({16}, {0.8}, {0.1});
        BernoulliModel m;
        TensorField s = loglik_grad_field(m, 1.0, grid);
        for (std::size_t n = 0; n < grid.node_count(); ++n) {
            CHECK(s(n, 0) == doctest::Approx(1.0 / grid.coordinate(n, 0)).epsilon(1e-14));
        }
    }
    SUBCASE("gaussian location vanishes at the sample node")
    {
        Grid grid({16}, {8.0}, {-4.0});
        GaussianLocationModel m(1.0);
        double x = grid.coordinate(5, 0);
        TensorField s = loglik_grad_field(m, x, grid);
        CHECK(s(5, 0) == 0.0);
    }
    SUBCASE("finite differences at random points")
    {
        GaussianModel m;
        CounterRng rng(9);
        for (int k = 0; k < 10; ++k) {
            double th[] = {rng.normal(k, 0), 0.5 + 2.0 * rng.uniform(k, 1)};
            double x = rng.normal(k, 2);
            Eigen::VectorXd grad = m.loglik_grad(x, th);
            for (int i = 0; i < 2; ++i) {
                const double eps = 1e-6;
                double up[] = {th[0], th[1]};
                double dn[] = {th[0], th[1]};
                up[i] += eps;
                dn[i] -= eps;
                double fd = (m.loglik(x, up) - m.loglik(x, dn)) / (2.0 * eps);
                CHECK(std::abs(fd - grad[i]) < 1e-6);
            }
        }
    }
}
