#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bdsde/backward.hpp"

namespace bdsde {

/// True (Y, Z) sampled on the grid of a scheme run.
struct OracleField {
    Matrix y;               // samples x (n+1)
    std::vector<Matrix> z;  // n+1 entries, samples x d
};

/// Closed-form oracle evaluated along the bundle's W and B paths.
/// Throws Error{capability} for fine-grid-only oracles.
OracleField evaluate_oracle(const OracleSolution& oracle, const Partition& partition, const PathBundle& bundle);

/// Reference solution from the exact backend on a grid refined by `kappa`,
/// read off at the coarse times. `fine_bundle` lives on refine(coarse, kappa);
/// the coarse scheme must be driven by coarsen(fine_bundle, kappa).
OracleField reference_field(const ProblemSpec& spec, const Partition& coarse, const PathBundle& fine_bundle, int kappa,
                            const PicardConfig& picard);

inline constexpr int kMinReferenceRefinement = 16;

/// Per-replication mean-square errors on the grid.
struct ReplicateErrors {
    Vector y_mse;  // n+1 entries: E|Y_{t_i} - Y^pi_{t_i}|^2
    Vector z_mse;  // n entries:   E|Z_{t_{i-1}} - Z^pi_{t_{i-1}}|^2
};

ReplicateErrors replicate_errors(const SchemeSolution& solution, const OracleField& oracle);

struct ErrorReport {
    int n = 0;
    double mesh = 0.0;
    int samples = 0;
    int b_reps = 0;
    std::uint64_t seed = 0;
    std::string backend;
    double err_y_sup = 0.0;  // max over grid times of E|Y - Y^pi|^2
    double err_z_int = 0.0;  // sum_i dt_i E|Z_{t_{i-1}} - Z^pi_{t_{i-1}}|^2
    double err_total = 0.0;  // sqrt(err_y_sup + err_z_int)
    std::optional<double> reg_stat;
    double ci_halfwidth = 0.0;  // 95% normal interval on err_total across B-replications
};

/// Averages replications: expectations are taken over W-samples and
/// B-replications before the max over grid times. The interval uses the
/// replication spread of err_y(i*) + err_z with i* the maximizing time, mapped
/// to err_total by the delta method; it is 0 with fewer than two replications.
ErrorReport summarize_errors(std::span<const ReplicateErrors> reps, const Partition& partition);

/// Single-replication error of a scheme run against a closed-form oracle.
ErrorReport err_pi(const SchemeSolution& solution, const OracleSolution& oracle, const Partition& partition,
                   const PathBundle& bundle);

/// Terms of the L2-regularity statistic from one replication.
struct RegularityParts {
    Vector y_terms;       // n*kappa entries: E|Y_{s} - Y_{t_{i-1}}|^2 on the sub-grid
    double z_part = 0.0;  // sum over sub-steps of ds E|Z_s - Ztilde_{t_{i-1}}|^2
};

/// `y_fine` is samples x (n kappa + 1), `z_fine` has n kappa + 1 entries and
/// `coarse_features` holds X at the n+1 coarse times.
RegularityParts regularity_parts(const Matrix& y_fine, std::span<const Matrix> z_fine,
                                 std::span<const Matrix> coarse_features, const Partition& coarse, int kappa,
                                 const BasisSpec& basis);

/// One replication with a closed-form oracle; X is simulated by Euler on
/// coarsen(fine_bundle, kappa). Throws Error{invalid_argument} for kappa < 2.
RegularityParts l2_regularity_replicate(const ProblemSpec& spec, const OracleSolution& oracle,
                                        const Partition& coarse, const PathBundle& fine_bundle, int kappa,
                                        const BasisSpec& basis);

struct RegularityReport {
    double y_part = 0.0;
    double z_part = 0.0;
    double reg_stat = 0.0;
};

RegularityReport l2_regularity(std::span<const RegularityParts> reps);

struct StrongErrorRow {
    int n = 0;
    double mesh = 0.0;
    double mse_sup = 0.0;  // E[max over grid |X^pi - X|^2]
    double rms = 0.0;
};

/// Euler against the exact transition on coupled increments: one bundle is
/// drawn on the finest grid and coarsened for the others, so every n must
/// divide the largest.
std::vector<StrongErrorRow> euler_strong_error(const ProblemSpec& spec, std::span<const int> steps, int samples,
                                               std::uint64_t seed);

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;  // RMS of log-residuals
};

/// Least squares of log(error) on log(mesh).
RateFit fit_rate(std::span<const double> meshes, std::span<const double> errors);

struct MomentRow {
    int lag = 0;
    double dt = 0.0;        // average |t - s| over pairs
    double mean_sq = 0.0;   // E|V_t - V_s|^2
    double ratio = 0.0;     // E|V_t - V_s|^2 / |t - s|
};

struct MomentTable {
    std::vector<MomentRow> rows;
    double sup_second_moment = 0.0;  // max_i E|V_{t_i}|^2
};

/// Increment moments of a grid-indexed process (values[i] is samples x dim).
MomentTable moment_check(std::span<const Matrix> values, const Partition& partition,
                         const std::vector<int>& lags = {1, 2, 4, 8});

/// Columns of a samples x (n+1) matrix as n+1 single-column blocks.
std::vector<Matrix> columns_as_paths(const Matrix& values);

}  // namespace bdsde
