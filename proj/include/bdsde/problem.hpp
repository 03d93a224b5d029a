#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bdsde/polynomial.hpp"

namespace bdsde {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using DriftFn = std::function<Vector(const Vector& x)>;
using DiffusionFn = std::function<Matrix(const Vector& x)>;
/// f(t, x, y, z), z being the row integrand against W.
using DriverFn = std::function<double(double t, const Vector& x, double y, const Vector& z)>;
/// g(t, x, y) with values in R^l.
using BackwardDriverFn = std::function<Vector(double t, const Vector& x, double y)>;
using TerminalFn = std::function<double(const Vector& x)>;

/// Structural facts about the coefficients that enable the exact
/// Gaussian-moment conditional-expectation backend.
struct StructureFlags {
    bool drift_affine = false;
    bool diffusion_constant = false;
    bool f_affine = false;
    bool g_affine = false;
    bool h_polynomial = false;

    bool exact_backend_capable() const noexcept {
        return drift_affine && diffusion_constant && f_affine && g_affine && h_polynomial;
    }
};

/// How the forward diffusion can be simulated exactly on the Brownian grid.
enum class ForwardTransition {
    none,
    additive,   // b constant, sigma constant: X_t = x0 + b t + sigma W_t
    geometric,  // b(x) = mu x, sigma(x) = nu diag(x), componentwise
};

struct GeometricParams {
    double mu = 0.0;
    double nu = 0.0;
};

/// Coefficient bundle of a decoupled forward-backward doubly stochastic
/// equation. Immutable once validated; all callables must be pure.
struct ProblemSpec {
    std::string name;
    int dim_x = 1;
    int dim_b = 1;
    double horizon = 1.0;
    Vector x0 = Vector::Zero(1);

    DriftFn drift;
    DiffusionFn diffusion;
    DriverFn driver;
    BackwardDriverFn backward_driver;
    TerminalFn terminal;
    std::optional<Poly> terminal_poly;  // required when flags.h_polynomial

    double lipschitz = 1.0;
    StructureFlags flags;
    ForwardTransition transition = ForwardTransition::none;
    GeometricParams geometric;

    /// Throws Error{invalid_argument} when dimensions or constants are inconsistent.
    void validate() const;
};

enum class OracleKind { closed_form, fine_grid_reference };

/// True solution of the backward equation, expressed through the current
/// value of W and the backward increment B_T - B_t. Every catalog oracle is
/// Markov in W, so the current value stands in for the path prefix.
struct OracleSolution {
    OracleKind kind = OracleKind::fine_grid_reference;
    std::function<double(double t, const Vector& w_t, const Vector& b_tail)> y_true;
    std::function<Vector(double t, const Vector& w_t, const Vector& b_tail)> z_true;
    /// Derived rather than classical: must be checked against a fine-grid
    /// scheme run before studies rely on it.
    bool requires_confirmation = false;
};

struct CatalogEntry {
    ProblemSpec spec;
    OracleSolution oracle;
};

/// Ids accepted by builtin_problem().
std::vector<std::string> catalog_ids();

/// Catalog of oracle problems. Throws Error{catalog} for unknown ids.
///
///   P0   X = W, h = id, f = g = 0; Y = W, Z = 1.
///   P1   P0 with g = 1/2;          Y = W + (B_T - B_t)/2, Z = 1.
///   P2   P0 with g = y/2;          Y = W M, Z = M with M the backward
///                                  stochastic exponential of B/2.
///   P3   b = x/10, h = x^2, f = 0.2y + 0.1z, g = 0.3 + 0.2y, x0 = 1;
///        fine-grid reference only.
///   GBM  b = 0.1x, sigma = 0.5x, h = id, f = g = 0, x0 = 1;
///        Y = X e^{0.1(T-t)}, Z = 0.5 Y.
CatalogEntry builtin_problem(const std::string& name);

/// Largest observed difference quotient of each coefficient over random
/// pairs in [-R, R]^d, and whether any exceeds the declared constant.
struct LipschitzReport {
    double drift = 0.0;
    double diffusion = 0.0;
    double driver_x = 0.0;
    double driver_y = 0.0;
    double driver_z = 0.0;
    double backward_x = 0.0;
    double backward_y = 0.0;
    double terminal = 0.0;
    double max_ratio = 0.0;
    bool violation = false;
};

inline constexpr double kSpotCheckBox = 10.0;

LipschitzReport lipschitz_spot_check(const ProblemSpec& spec, int trials = 10000, std::uint64_t seed = 0);

/// Spot-evaluates every structure flag that is set; returns one message per
/// inconsistency found (empty when all flags hold).
std::vector<std::string> check_structure_flags(const ProblemSpec& spec, int trials = 200, std::uint64_t seed = 0);

/// f(t, x, y, z) = constant + dx.x + dy y + dz.z, read off by probing f.
struct AffineDriver {
    double constant = 0.0;
    Vector dx;
    double dy = 0.0;
    Vector dz;
};

/// g(t, x, y) = constant + dx x + dy y with values in R^l.
struct AffineBackwardDriver {
    Vector constant;
    Matrix dx;
    Vector dy;
};

/// b(x) = constant + linear x.
struct AffineDrift {
    Vector constant;
    Matrix linear;
};

AffineDriver probe_affine_driver(const ProblemSpec& spec, double t);
AffineBackwardDriver probe_affine_backward_driver(const ProblemSpec& spec, double t);
AffineDrift probe_affine_drift(const ProblemSpec& spec);

}  // namespace bdsde
