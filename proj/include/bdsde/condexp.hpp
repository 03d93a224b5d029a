#pragma once

#include <optional>

#include "bdsde/polynomial.hpp"
#include "bdsde/problem.hpp"

namespace bdsde {

enum class Backend { exact, lsmc };

const char* to_string(Backend backend) noexcept;

enum class BasisFamily { polynomial };

inline constexpr int kMaxBasisDegree = 10;
inline constexpr int kMaxMomentOrder = 20;

struct BasisSpec {
    BasisFamily family = BasisFamily::polynomial;
    int degree = 3;
    double ridge = 1e-10;

    void validate() const;
};

struct BackendConfig {
    Backend kind = Backend::exact;
    BasisSpec basis;
};

enum class FitKind { regression, exact };

/// A conditional expectation x -> E[U | X = x], always held as a polynomial
/// in the raw coordinates of x.
class FittedConditional {
public:
    FittedConditional() = default;
    FittedConditional(Poly function, FitKind kind, double normal_residual = 0.0)
        : function_(std::move(function)), kind_(kind), normal_residual_(normal_residual) {}

    double operator()(const Vector& x) const { return function_(x); }
    Vector evaluate_rows(const Matrix& points) const { return function_.evaluate_rows(points); }

    const Poly& polynomial() const noexcept { return function_; }
    FitKind kind() const noexcept { return kind_; }
    /// Relative residual of the (ridge) normal equations at the solution.
    double normal_residual() const noexcept { return normal_residual_; }

private:
    Poly function_;
    FitKind kind_ = FitKind::exact;
    double normal_residual_ = 0.0;
};

/// Least-squares regression of `targets` on a total-degree polynomial basis of
/// the rows of `features`. Coordinates are standardized before the solve;
/// a coordinate with no spread carries no information and is left out of the
/// basis. Constant targets are returned as the exact constant.
///
/// Throws Error{invalid_argument} if there are not more samples than basis
/// functions, Error{conditioning} if the Gram matrix is numerically singular.
FittedConditional lsmc_fit(const Matrix& features, const Vector& targets, const BasisSpec& basis);

/// E[xi^k] for xi ~ N(0, 1), k <= kMaxMomentOrder: (k-1)!! for even k, 0 for odd.
double standard_gaussian_moment(int k);

/// One Euler transition with affine drift and constant diffusion:
/// X' = linear x + shift + diffusion dW with dW ~ N(0, dt I).
struct GaussianStep {
    Matrix linear;
    Vector shift;
    Matrix diffusion;
    double dt = 0.0;
};

/// Euler transition of `spec` over a step of length dt. Throws
/// Error{capability} unless drift_affine and diffusion_constant are set.
GaussianStep euler_gaussian_step(const ProblemSpec& spec, double dt);

/// x -> E[p(X') | x]; with `weight` set, x -> E[p(X') dW_weight | x].
Poly gaussian_moment_propagate(const Poly& p, const GaussianStep& step, std::optional<int> weight = std::nullopt);

/// Fits s U for a constant (B-measurable) scale s. Zero scale yields the
/// zero function without touching the data.
FittedConditional condexp_weighted(const Matrix& features, const Vector& targets, double scale,
                                   const BasisSpec& basis);

/// Exact counterpart: x -> s E[p(X') (dW_weight) | x].
FittedConditional condexp_weighted(const Poly& p, const GaussianStep& step, double scale,
                                   std::optional<int> weight = std::nullopt);

}  // namespace bdsde
