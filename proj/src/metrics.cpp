#include "bdsde/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bdsde {

OracleField evaluate_oracle(const OracleSolution& oracle, const Partition& partition, const PathBundle& bundle) {
    if (oracle.kind != OracleKind::closed_form || !oracle.y_true || !oracle.z_true)
        fail(ErrorKind::capability, "evaluate_oracle: oracle has no closed form");
    if (bundle.steps() != partition.steps())
        fail(ErrorKind::invalid_argument, "evaluate_oracle: bundle and partition step counts differ");
    const int n = partition.steps();
    const int M = bundle.samples();
    const auto w = brownian_values(bundle);
    const Matrix tails = brownian_tails(bundle);
    OracleField out;
    out.y.resize(M, n + 1);
    out.z.reserve(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) {
        const double t = partition.time(i);
        const Vector tail = tails.row(i).transpose();
        const Matrix& wi = w[static_cast<std::size_t>(i)];
        Matrix z(M, bundle.dim_w());
        for (int m = 0; m < M; ++m) {
            const Vector wm = wi.row(m).transpose();
            out.y(m, i) = oracle.y_true(t, wm, tail);
            z.row(m) = oracle.z_true(t, wm, tail).transpose();
        }
        out.z.push_back(std::move(z));
    }
    return out;
}

OracleField reference_field(const ProblemSpec& spec, const Partition& coarse, const PathBundle& fine_bundle, int kappa,
                            const PicardConfig& picard) {
    if (kappa < kMinReferenceRefinement) {
        std::ostringstream os;
        os << "reference_field: refinement must be >= " << kMinReferenceRefinement << ", got " << kappa;
        fail(ErrorKind::invalid_argument, os.str());
    }
    const Partition fine = refine(coarse, kappa);
    const ForwardPaths x = euler_paths(spec, fine, fine_bundle);
    const ExactFields fields = exact_backward_fields(spec, fine, fine_bundle.dB, picard);
    const int n = coarse.steps();
    const int M = fine_bundle.samples();
    OracleField out;
    out.y.resize(M, n + 1);
    out.z.assign(static_cast<std::size_t>(n) + 1, Matrix::Zero(M, spec.dim_x));
    for (int i = 0; i <= n; ++i) {
        const auto f = static_cast<std::size_t>(i * kappa);
        const Matrix& xi = x.X[f];
        if (i == n) {
            for (int m = 0; m < M; ++m) out.y(m, n) = spec.terminal(xi.row(m).transpose());
            continue;
        }
        out.y.col(i) = fields.y[f].evaluate_rows(xi);
        for (int k = 0; k < spec.dim_x; ++k)
            out.z[static_cast<std::size_t>(i)].col(k) = fields.z[f][static_cast<std::size_t>(k)].evaluate_rows(xi);
    }
    return out;
}

ReplicateErrors replicate_errors(const SchemeSolution& solution, const OracleField& oracle) {
    const Eigen::Index cols = solution.Y.cols();
    if (oracle.y.rows() != solution.Y.rows() || oracle.y.cols() != cols ||
        oracle.z.size() != solution.Z.size())
        fail(ErrorKind::invalid_argument, "replicate_errors: oracle and solution shapes differ");
    const int n = static_cast<int>(cols) - 1;
    ReplicateErrors r;
    r.y_mse = (oracle.y - solution.Y).array().square().colwise().mean().transpose();
    r.z_mse.resize(n);
    for (int i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        r.z_mse(i) = (oracle.z[k] - solution.Z[k]).rowwise().squaredNorm().mean();
    }
    return r;
}

ErrorReport summarize_errors(std::span<const ReplicateErrors> reps, const Partition& partition) {
    if (reps.empty()) fail(ErrorKind::invalid_argument, "summarize_errors: no replications");
    const int n = partition.steps();
    const auto R = static_cast<double>(reps.size());
    Vector y_avg = Vector::Zero(n + 1);
    std::vector<double> z_int(reps.size(), 0.0);
    for (std::size_t r = 0; r < reps.size(); ++r) {
        if (reps[r].y_mse.size() != n + 1 || reps[r].z_mse.size() != n)
            fail(ErrorKind::invalid_argument, "summarize_errors: replication shape differs from partition");
        y_avg += reps[r].y_mse;
        for (int i = 1; i <= n; ++i) z_int[r] += partition.dt(i) * reps[r].z_mse(i - 1);
    }
    y_avg /= R;
    Eigen::Index i_star = 0;
    ErrorReport out;
    out.n = n;
    out.mesh = partition.mesh();
    out.b_reps = static_cast<int>(reps.size());
    out.err_y_sup = y_avg.maxCoeff(&i_star);
    double z_sum = 0.0;
    for (double v : z_int) z_sum += v;
    out.err_z_int = z_sum / R;
    out.err_total = std::sqrt(out.err_y_sup + out.err_z_int);
    if (reps.size() >= 2 && out.err_total > 0.0) {
        const double mean = out.err_y_sup + out.err_z_int;
        double ss = 0.0;
        for (std::size_t r = 0; r < reps.size(); ++r) {
            const double e = reps[r].y_mse(i_star) + z_int[r];
            ss += (e - mean) * (e - mean);
        }
        const double sd = std::sqrt(ss / (R - 1.0));
        out.ci_halfwidth = 1.96 * sd / std::sqrt(R) / (2.0 * out.err_total);
    }
    return out;
}

ErrorReport err_pi(const SchemeSolution& solution, const OracleSolution& oracle, const Partition& partition,
                   const PathBundle& bundle) {
    const ReplicateErrors rep = replicate_errors(solution, evaluate_oracle(oracle, partition, bundle));
    ErrorReport out = summarize_errors(std::span(&rep, 1), partition);
    out.samples = bundle.samples();
    out.seed = bundle.seed;
    out.backend = to_string(solution.backend);
    return out;
}

RegularityParts regularity_parts(const Matrix& y_fine, std::span<const Matrix> z_fine,
                                 std::span<const Matrix> coarse_features, const Partition& coarse, int kappa,
                                 const BasisSpec& basis) {
    if (kappa < 1) fail(ErrorKind::invalid_argument, "regularity_parts: refinement must be >= 1");
    const int n = coarse.steps();
    const int N = n * kappa;
    if (y_fine.cols() != N + 1 || static_cast<int>(z_fine.size()) < N)
        fail(ErrorKind::invalid_argument, "regularity_parts: fine fields do not match the refined grid");
    RegularityParts out;
    out.y_terms.resize(N);
    for (int i = 1; i <= n; ++i) {
        const int left = (i - 1) * kappa;
        for (int j = 1; j <= kappa; ++j)
            out.y_terms(left + j - 1) = (y_fine.col(left + j) - y_fine.col(left)).array().square().mean();
    }
    const auto tilde = tilde_z(z_fine.first(static_cast<std::size_t>(N)), coarse, kappa, coarse_features, basis);
    for (int i = 1; i <= n; ++i) {
        const double ds = coarse.dt(i) / kappa;
        const Matrix& zt = tilde[static_cast<std::size_t>(i - 1)];
        for (int j = 0; j < kappa; ++j)
            out.z_part += ds * (z_fine[static_cast<std::size_t>((i - 1) * kappa + j)] - zt).rowwise().squaredNorm().mean();
    }
    return out;
}

RegularityParts l2_regularity_replicate(const ProblemSpec& spec, const OracleSolution& oracle,
                                        const Partition& coarse, const PathBundle& fine_bundle, int kappa,
                                        const BasisSpec& basis) {
    if (kappa < 2) fail(ErrorKind::invalid_argument, "l2_regularity: refinement must be >= 2");
    const Partition fine = refine(coarse, kappa);
    const OracleField field = evaluate_oracle(oracle, fine, fine_bundle);
    const PathBundle coarse_bundle = coarsen(fine_bundle, kappa);
    const ForwardPaths x = euler_paths(spec, coarse, coarse_bundle);
    return regularity_parts(field.y, field.z, x.X, coarse, kappa, basis);
}

RegularityReport l2_regularity(std::span<const RegularityParts> reps) {
    if (reps.empty()) fail(ErrorKind::invalid_argument, "l2_regularity: no replications");
    const auto R = static_cast<double>(reps.size());
    Vector y_avg = Vector::Zero(reps.front().y_terms.size());
    double z = 0.0;
    for (const auto& r : reps) {
        if (r.y_terms.size() != y_avg.size())
            fail(ErrorKind::invalid_argument, "l2_regularity: replication shapes differ");
        y_avg += r.y_terms;
        z += r.z_part;
    }
    RegularityReport out;
    out.y_part = y_avg.maxCoeff() / R;
    out.z_part = z / R;
    out.reg_stat = out.y_part + out.z_part;
    return out;
}

std::vector<StrongErrorRow> euler_strong_error(const ProblemSpec& spec, std::span<const int> steps, int samples,
                                               std::uint64_t seed) {
    spec.validate();
    if (spec.transition == ForwardTransition::none)
        fail(ErrorKind::capability, "euler_strong_error: problem " + spec.name + " has no exact forward transition");
    if (steps.empty()) fail(ErrorKind::invalid_argument, "euler_strong_error: no step counts");
    const int finest = *std::max_element(steps.begin(), steps.end());
    for (int n : steps)
        if (n < 1 || finest % n != 0)
            fail(ErrorKind::invalid_argument, "euler_strong_error: every step count must divide the largest");
    const PathBundle base =
        sample_bundle(make_partition(spec.horizon, finest), samples, spec.dim_x, spec.dim_b, seed, 0);
    std::vector<StrongErrorRow> rows;
    for (int n : steps) {
        const Partition p = make_partition(spec.horizon, n);
        const PathBundle b = coarsen(base, finest / n);
        const ForwardPaths euler = euler_paths(spec, p, b);
        const ForwardPaths exact = exact_paths(spec, p, b);
        Vector worst = Vector::Zero(samples);
        for (int i = 0; i <= n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            worst = worst.cwiseMax((euler.X[k] - exact.X[k]).rowwise().squaredNorm());
        }
        StrongErrorRow row;
        row.n = n;
        row.mesh = p.mesh();
        row.mse_sup = worst.mean();
        row.rms = std::sqrt(row.mse_sup);
        rows.push_back(row);
    }
    return rows;
}

RateFit fit_rate(std::span<const double> meshes, std::span<const double> errors) {
    if (meshes.size() != errors.size()) fail(ErrorKind::invalid_argument, "fit_rate: size mismatch");
    if (meshes.size() < 3) fail(ErrorKind::invalid_argument, "fit_rate: need at least 3 points");
    const auto k = static_cast<Eigen::Index>(meshes.size());
    Vector lx(k), ly(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const auto j = static_cast<std::size_t>(i);
        if (!(meshes[j] > 0.0) || !(errors[j] > 0.0))
            fail(ErrorKind::domain, "fit_rate: meshes and errors must be positive");
        lx(i) = std::log(meshes[j]);
        ly(i) = std::log(errors[j]);
    }
    const double mx = lx.mean();
    const double my = ly.mean();
    const double sxx = (lx.array() - mx).square().sum();
    if (!(sxx > 0.0)) fail(ErrorKind::domain, "fit_rate: meshes must not all coincide");
    RateFit fit;
    fit.slope = ((lx.array() - mx) * (ly.array() - my)).sum() / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.residual = std::sqrt((ly.array() - fit.intercept - fit.slope * lx.array()).square().mean());
    return fit;
}

MomentTable moment_check(std::span<const Matrix> values, const Partition& partition, const std::vector<int>& lags) {
    const int n = partition.steps();
    if (static_cast<int>(values.size()) != n + 1)
        fail(ErrorKind::invalid_argument, "moment_check: need one block per grid time");
    if (values.front().rows() < 1000) fail(ErrorKind::invalid_argument, "moment_check: need at least 1000 samples");
    MomentTable table;
    for (const auto& v : values) table.sup_second_moment = std::max(table.sup_second_moment, v.rowwise().squaredNorm().mean());
    for (int lag : lags) {
        if (lag < 1) fail(ErrorKind::invalid_argument, "moment_check: lags must be >= 1");
        if (lag > n) continue;
        MomentRow row;
        row.lag = lag;
        const int pairs = n - lag + 1;
        for (int i = 0; i + lag <= n; ++i) {
            const double dt = partition.time(i + lag) - partition.time(i);
            const double msq =
                (values[static_cast<std::size_t>(i + lag)] - values[static_cast<std::size_t>(i)]).rowwise().squaredNorm().mean();
            row.dt += dt;
            row.mean_sq += msq;
            row.ratio += msq / dt;
        }
        row.dt /= pairs;
        row.mean_sq /= pairs;
        row.ratio /= pairs;
        table.rows.push_back(row);
    }
    return table;
}

std::vector<Matrix> columns_as_paths(const Matrix& values) {
    std::vector<Matrix> out;
    out.reserve(static_cast<std::size_t>(values.cols()));
    for (Eigen::Index i = 0; i < values.cols(); ++i) out.emplace_back(values.col(i));
    return out;
}

}  // namespace bdsde
