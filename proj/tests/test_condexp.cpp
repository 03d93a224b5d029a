#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bdsde/backward.hpp"
#include "bdsde/condexp.hpp"
#include "support.hpp"

using namespace bdsde;

namespace {

Matrix normal_features(int m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    Matrix x(m, 1);
    for (int i = 0; i < m; ++i) x(i, 0) = n01(rng);
    return x;
}

GaussianStep brownian_step(double dt) {
    return {Matrix::Identity(1, 1), Vector::Zero(1), Matrix::Identity(1, 1), dt};
}

// E[(x + dW)^k] by composite Simpson on [-12, 12] standard deviations;
// an oracle that never touches the moment table.
double quadrature_moment(const std::function<double(double)>& p, double x, double dt) {
    const int n = 4000;
    const double sd = std::sqrt(dt);
    const double a = -12.0, b = 12.0, h = (b - a) / n;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double u = a + i * h;
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * p(x + sd * u) * std::exp(-0.5 * u * u);
    }
    return acc * h / 3.0 / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace

TEST(Lsmc, ExactLinearFit) {
    const Matrix x = normal_features(200, 1);
    const Vector y = 2.0 * x.col(0);
    const FittedConditional fit = lsmc_fit(x, y, {BasisFamily::polynomial, 1, 0.0});
    EXPECT_NEAR(fit.polynomial().coefficient({0}), 0.0, 1e-12);
    EXPECT_NEAR(fit.polynomial().coefficient({1}), 2.0, 1e-12);
    EXPECT_EQ(fit.kind(), FitKind::regression);
}

TEST(Lsmc, ConstantTargets) {
    const Matrix x = normal_features(50, 2);
    const FittedConditional fit = lsmc_fit(x, Vector::Constant(50, 3.25), {});
    for (double v : {-3.0, 0.0, 7.0}) EXPECT_EQ(fit(Vector::Constant(1, v)), 3.25);
}

TEST(Lsmc, QuadraticCoefficient) {
    const Matrix x = normal_features(10000, 3);
    const Vector y = x.col(0).array().square().matrix();
    const FittedConditional fit = lsmc_fit(x, y, {BasisFamily::polynomial, 2, 1e-10});
    EXPECT_NEAR(fit.polynomial().coefficient({2}), 1.0, 5e-2);
}

TEST(Lsmc, NoisyQuadraticCoefficient) {
    // The same bound with additive noise, the case the tolerance was calibrated for.
    const Matrix x = normal_features(10000, 4);
    const Matrix eps = normal_features(10000, 5);
    const Vector y = (x.col(0).array().square() + eps.col(0).array()).matrix();
    const FittedConditional fit = lsmc_fit(x, y, {BasisFamily::polynomial, 2, 1e-10});
    EXPECT_NEAR(fit.polynomial().coefficient({2}), 1.0, 5e-2);
}

TEST(Lsmc, ConstantFeatureIsDropped) {
    Matrix x = Matrix::Constant(100, 1, 1.0);
    const Matrix noise = normal_features(100, 6);
    const FittedConditional fit = lsmc_fit(x, noise.col(0), {BasisFamily::polynomial, 3, 0.0});
    EXPECT_NEAR(fit(Vector::Constant(1, 1.0)), noise.mean(), 1e-12);
}

TEST(Lsmc, Guards) {
    const Matrix x = normal_features(3, 7);
    EXPECT_BDSDE_ERROR(lsmc_fit(x, x.col(0), {BasisFamily::polynomial, 3, 0.0}), ErrorKind::invalid_argument);
    // Two distinct points cannot support a quadratic without ridge.
    Matrix two(40, 1);
    for (int i = 0; i < 40; ++i) two(i, 0) = i % 2;
    EXPECT_BDSDE_ERROR(lsmc_fit(two, two.col(0) + Vector::LinSpaced(40, 0, 1), {BasisFamily::polynomial, 2, 0.0}),
                       ErrorKind::conditioning);
    EXPECT_BDSDE_ERROR((BasisSpec{BasisFamily::polynomial, 11, 0.0}.validate()), ErrorKind::invalid_argument);
}

TEST(GaussianMoments, Table) {
    EXPECT_EQ(standard_gaussian_moment(0), 1.0);
    EXPECT_EQ(standard_gaussian_moment(1), 0.0);
    EXPECT_EQ(standard_gaussian_moment(2), 1.0);
    EXPECT_EQ(standard_gaussian_moment(4), 3.0);
    EXPECT_EQ(standard_gaussian_moment(6), 15.0);
    EXPECT_EQ(standard_gaussian_moment(20), 654729075.0);
}

TEST(GaussianMoments, LinearIsMartingale) {
    const Poly x = Poly::variable(1, 0);
    EXPECT_EQ(gaussian_moment_propagate(x, brownian_step(0.3)), x);
}

TEST(GaussianMoments, VarianceShift) {
    const double dt = 0.3;
    const Poly out = gaussian_moment_propagate(Poly::univariate({0, 0, 1}), brownian_step(dt));
    EXPECT_EQ(out, Poly::univariate({dt, 0, 1}));
}

TEST(GaussianMoments, QuarticAgainstQuadrature) {
    const double dt = 0.2;
    const Poly out = gaussian_moment_propagate(Poly::univariate({0, 0, 0, 0, 1}), brownian_step(dt));
    const Poly expected = Poly::univariate({3 * dt * dt, 0, 6 * dt, 0, 1});
    EXPECT_LT(max_abs_difference(out, expected), 1e-15);
    for (double x : {-1.5, 0.0, 0.7, 2.0})
        EXPECT_NEAR(out(Vector::Constant(1, x)), quadrature_moment([](double u) { return std::pow(u, 4); }, x, dt),
                    1e-10);
}

TEST(GaussianMoments, WeightedAgainstQuadrature) {
    const double dt = 0.25;
    const Poly p = Poly::univariate({1.0, -0.5, 0.0, 2.0});
    const Poly out = gaussian_moment_propagate(p, brownian_step(dt), 0);
    for (double x : {-1.0, 0.4, 1.3}) {
        const double ref = quadrature_moment(
            [&](double u) { return p(Vector::Constant(1, u)) * (u - x); }, x, dt);
        EXPECT_NEAR(out(Vector::Constant(1, x)), ref, 1e-10);
    }
}

TEST(GaussianMoments, TowerProperty) {
    const Poly p = Poly::univariate({0.5, 1.0, -2.0, 0.0, 1.0, 0.3});
    const Poly two = gaussian_moment_propagate(gaussian_moment_propagate(p, brownian_step(0.1)), brownian_step(0.3));
    const Poly one = gaussian_moment_propagate(p, brownian_step(0.4));
    EXPECT_LT(max_abs_difference(two, one), 1e-13);
}

TEST(GaussianMoments, AffineDriftStep) {
    // X' = 1.1 x + 0.2 + 0.5 dW: E[X'^2 | x] = (1.1 x + 0.2)^2 + 0.25 dt.
    const GaussianStep step{Matrix::Constant(1, 1, 1.1), Vector::Constant(1, 0.2), Matrix::Constant(1, 1, 0.5), 0.1};
    const Poly out = gaussian_moment_propagate(Poly::univariate({0, 0, 1}), step);
    EXPECT_LT(max_abs_difference(out, Poly::univariate({0.04 + 0.025, 0.44, 1.21})), 1e-15);
}

TEST(Weighted, ZeroScale) {
    const Matrix x = normal_features(30, 8);
    const FittedConditional fit = condexp_weighted(x, x.col(0), 0.0, {});
    EXPECT_TRUE(fit.polynomial().is_zero());
    EXPECT_TRUE(condexp_weighted(Poly::variable(1, 0), brownian_step(0.1), 0.0, 0).polynomial().is_zero());
}

TEST(Weighted, Linearity) {
    const Matrix x = normal_features(500, 9);
    const Vector u = (x.col(0).array().square() + 0.3 * x.col(0).array()).matrix();
    const Poly one = condexp_weighted(x, u, 1.0, {}).polynomial();
    const Poly two = condexp_weighted(x, u, 2.0, {}).polynomial();
    EXPECT_LT(max_abs_difference(two, 2.0 * one), 1e-12);
}

TEST(Weighted, ExactZEstimatorOfIdentity) {
    const double dt = 0.05;
    const FittedConditional fit = condexp_weighted(Poly::variable(1, 0), brownian_step(dt), 1.0 / dt, 0);
    EXPECT_EQ(fit.polynomial(), Poly::constant(1, 1.0));
    EXPECT_EQ(fit.kind(), FitKind::exact);
}

TEST(Weighted, Orthogonality) {
    const double dt = 0.1;
    // Exact: a W-independent constant has zero Z.
    EXPECT_TRUE(condexp_weighted(Poly::constant(1, 4.0), brownian_step(dt), 1.0 / dt, 0).polynomial().is_zero());
    // LSMC: the sample mean of dW is not exactly zero, so the fit is zero only
    // up to that sampling noise.
    const int m = 20000;
    const Matrix x = normal_features(m, 10);
    const Matrix dw = std::sqrt(dt) * normal_features(m, 11);
    const Vector target = 4.0 * dw.col(0) / dt;
    const FittedConditional fit = condexp_weighted(x, target, 1.0, {BasisFamily::polynomial, 1, 1e-10});
    EXPECT_LT(fit.polynomial().max_abs_coefficient(), 4.0 * 4.0 / std::sqrt(m * dt));
}

TEST(Weighted, LsmcMatchesExactOnEulerStep) {
    const double dt = 0.1;
    const int m = 50000;
    const Matrix x = normal_features(m, 12);
    const Matrix dw = std::sqrt(dt) * normal_features(m, 13);
    const Poly p = Poly::univariate({0.0, 1.0, 0.5});
    Vector next(m);
    for (int i = 0; i < m; ++i) next(i) = p(Vector::Constant(1, x(i, 0) + dw(i, 0)));
    const Poly exact = gaussian_moment_propagate(p, brownian_step(dt));
    const Poly fitted = lsmc_fit(x, next, {BasisFamily::polynomial, 2, 1e-10}).polynomial();
    EXPECT_LT(max_abs_difference(fitted, exact), 0.02);
}

TEST(EulerStep, Capability) {
    EXPECT_BDSDE_ERROR(euler_gaussian_step(builtin_problem("GBM").spec, 0.1), ErrorKind::capability);
    const GaussianStep s = euler_gaussian_step(builtin_problem("P3").spec, 0.1);
    EXPECT_NEAR(s.linear(0, 0), 1.01, 1e-15);
    EXPECT_EQ(s.diffusion(0, 0), 1.0);
}
