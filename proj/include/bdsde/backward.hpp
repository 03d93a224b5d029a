#pragma once

#include <span>
#include <vector>

#include "bdsde/condexp.hpp"
#include "bdsde/forward.hpp"
#include "bdsde/paths.hpp"

namespace bdsde {

struct PicardConfig {
    double tol = 1e-12;  // relative
    int max_iters = 100;

    void validate() const;
};

struct PicardResult {
    double value = 0.0;
    int iterations = 0;
};

/// Solves y = c + dt f(t, x, y, z) by fixed-point iteration from y = c.
/// Stops once successive iterates differ by at most tol max(1, |y|).
PicardResult picard_solve(double c, const Vector& x, const Vector& z, double t, const DriverFn& f, double dt,
                          const PicardConfig& cfg);

/// Conditional expectations produced at one backward step (index i-1):
/// the continuation c(x) = E[Y_i + g dB_i | X_{i-1} = x] and the d
/// components of Z_{i-1}.
struct StepFit {
    FittedConditional continuation;
    std::vector<FittedConditional> z;
};

struct SchemeSolution {
    Matrix Y;               // samples x (n+1)
    std::vector<Matrix> Z;  // n+1 entries, samples x d; Z[n] = 0
    std::vector<StepFit> fitted;  // entry i-1 holds the fits made at step i
    /// Exact backend only: Y_{t_i} and Z_{t_i} as polynomials in X_{t_i}.
    std::vector<Poly> y_fields;
    std::vector<std::vector<Poly>> z_fields;
    std::vector<int> picard_iters;  // entry i-1 for step i
    Backend backend = Backend::exact;
};

/// Backward recursion with the exact Gaussian-moment backend, computed on
/// polynomial fields only: for a fixed B-path, Y_{t_i} and Z_{t_i} are
/// polynomials in X_{t_i}. `dB` is steps x l.
struct ExactFields {
    std::vector<Poly> y;               // n+1 entries
    std::vector<std::vector<Poly>> z;  // n+1 entries of d polynomials
    std::vector<StepFit> fitted;
    std::vector<int> picard_iters;
};

ExactFields exact_backward_fields(const ProblemSpec& spec, const Partition& partition, const Matrix& dB,
                                  const PicardConfig& picard);

/// Runs the scheme backward from Y_n = h(X_T), Z_n = 0:
///   Z_{i-1} = E_{i-1}[(Y_i + g(t_i, X_i, Y_i) dB_i) dW_i] / dt_i
///   Y_{i-1} = E_{i-1}[Y_i + g(t_i, X_i, Y_i) dB_i] + dt_i f(t_{i-1}, X_{i-1}, Y_{i-1}, Z_{i-1})
/// Throws Error{configuration} when mesh * lipschitz >= 1 or the backend
/// needs structure flags the problem lacks, Error{convergence} when Picard
/// does not converge.
SchemeSolution backward_solve(const ProblemSpec& spec, const Partition& partition, const PathBundle& bundle,
                              const ForwardPaths& forward, const BackendConfig& backend, const PicardConfig& picard);

/// Regression form of Z-tilde: for each coarse step i, the left-point average
/// of the kappa sub-step values z_fine[kappa (i-1) + j], j < kappa, regressed
/// on X_{t_{i-1}} = features[i-1]. Returns n entries of samples x d.
std::vector<Matrix> tilde_z(std::span<const Matrix> z_fine, const Partition& coarse, int kappa,
                            std::span<const Matrix> features, const BasisSpec& basis);

/// Exact form of Z-tilde: z_fine_fields[m] gives Z at fine time s_m as
/// polynomials of X_{s_m}; each is propagated back to the coarse left point
/// through the fine Euler transitions. Returns n entries of d polynomials.
std::vector<std::vector<Poly>> tilde_z_exact(const std::vector<std::vector<Poly>>& z_fine_fields,
                                             const ProblemSpec& spec, const Partition& coarse, int kappa);

}  // namespace bdsde
