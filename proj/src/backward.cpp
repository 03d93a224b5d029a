#include "bdsde/backward.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bdsde {

void PicardConfig::validate() const {
    if (!(tol > 0.0)) fail(ErrorKind::invalid_argument, "picard tolerance must be > 0");
    if (max_iters < 1) fail(ErrorKind::invalid_argument, "picard max_iters must be >= 1");
}

PicardResult picard_solve(double c, const Vector& x, const Vector& z, double t, const DriverFn& f, double dt,
                          const PicardConfig& cfg) {
    cfg.validate();
    double y = c;
    for (int it = 1; it <= cfg.max_iters; ++it) {
        const double next = c + dt * f(t, x, y, z);
        if (!std::isfinite(next)) fail(ErrorKind::numeric, "picard_solve: non-finite iterate");
        const bool done = std::abs(next - y) <= cfg.tol * std::max(1.0, std::abs(next));
        y = next;
        if (done) return {y, it};
    }
    std::ostringstream os;
    os << "picard_solve: no convergence after " << cfg.max_iters << " iterations";
    fail(ErrorKind::convergence, os.str());
}

namespace {

void check_contraction(const ProblemSpec& spec, const Partition& partition) {
    if (!(partition.mesh() * spec.lipschitz < 1.0)) {
        std::ostringstream os;
        os << "backward scheme needs mesh * lipschitz < 1 (mesh " << partition.mesh() << ", lipschitz "
           << spec.lipschitz << ")";
        fail(ErrorKind::configuration, os.str());
    }
}

void require_exact_capable(const ProblemSpec& spec) {
    if (!spec.flags.exact_backend_capable())
        fail(ErrorKind::configuration,
             "exact backend requires affine drift/driver/backward driver, constant diffusion and polynomial "
             "terminal; problem " + spec.name + " lacks them");
}

/// g_l(t, x, Y(x)) as a polynomial in x.
Poly backward_driver_field(const AffineBackwardDriver& g, int l, const Poly& y) {
    const int d = y.num_vars();
    Poly out = Poly::constant(d, g.constant(l)) + y * g.dy(l);
    for (int k = 0; k < d; ++k) out += Poly::variable(d, k) * g.dx(l, k);
    return out;
}

}  // namespace

ExactFields exact_backward_fields(const ProblemSpec& spec, const Partition& partition, const Matrix& dB,
                                  const PicardConfig& picard) {
    spec.validate();
    picard.validate();
    require_exact_capable(spec);
    check_contraction(spec, partition);
    const int n = partition.steps();
    const int d = spec.dim_x;
    if (dB.rows() != n || dB.cols() != spec.dim_b)
        fail(ErrorKind::invalid_argument, "exact_backward_fields: B increments do not match partition and dim_b");

    ExactFields out;
    out.y.assign(static_cast<std::size_t>(n) + 1, Poly(d));
    out.z.assign(static_cast<std::size_t>(n) + 1, std::vector<Poly>(static_cast<std::size_t>(d), Poly(d)));
    out.fitted.resize(static_cast<std::size_t>(n));
    out.picard_iters.assign(static_cast<std::size_t>(n), 0);
    out.y[static_cast<std::size_t>(n)] = *spec.terminal_poly;

    for (int i = n; i >= 1; --i) {
        const double dt = partition.dt(i);
        const GaussianStep step = euler_gaussian_step(spec, dt);
        const AffineBackwardDriver g = probe_affine_backward_driver(spec, partition.time(i));
        const Poly& y_next = out.y[static_cast<std::size_t>(i)];

        std::vector<Poly> g_fields;
        for (int l = 0; l < spec.dim_b; ++l) g_fields.push_back(backward_driver_field(g, l, y_next));

        // dB_i is a constant once the B-path is fixed: condition term by term.
        FittedConditional cont = condexp_weighted(y_next, step, 1.0);
        Poly c = cont.polynomial();
        for (int l = 0; l < spec.dim_b; ++l)
            c += condexp_weighted(g_fields[static_cast<std::size_t>(l)], step, dB(i - 1, l)).polynomial();

        std::vector<Poly> z(static_cast<std::size_t>(d));
        StepFit fit;
        for (int k = 0; k < d; ++k) {
            Poly zk = condexp_weighted(y_next, step, 1.0 / dt, k).polynomial();
            for (int l = 0; l < spec.dim_b; ++l)
                zk += condexp_weighted(g_fields[static_cast<std::size_t>(l)], step, dB(i - 1, l) / dt, k).polynomial();
            fit.z.emplace_back(zk, FitKind::exact);
            z[static_cast<std::size_t>(k)] = std::move(zk);
        }
        fit.continuation = FittedConditional(c, FitKind::exact);

        // Picard on polynomial fields: Y <- c + dt f(t_{i-1}, x, Y, Z).
        const AffineDriver f = probe_affine_driver(spec, partition.time(i - 1));
        Poly frozen = c + Poly::constant(d, dt * f.constant);
        for (int k = 0; k < d; ++k) {
            frozen += Poly::variable(d, k) * (dt * f.dx(k));
            frozen += z[static_cast<std::size_t>(k)] * (dt * f.dz(k));
        }
        Poly y = c;
        int it = 1;
        for (;; ++it) {
            Poly next = frozen + y * (dt * f.dy);
            const double scale = std::max(1.0, next.max_abs_coefficient());
            const bool done = max_abs_difference(next, y) <= picard.tol * scale;
            y = std::move(next);
            if (done) break;
            if (it == picard.max_iters) {
                std::ostringstream os;
                os << "exact backward step " << i << ": Picard did not converge in " << picard.max_iters
                   << " iterations";
                fail(ErrorKind::convergence, os.str());
            }
        }
        out.picard_iters[static_cast<std::size_t>(i - 1)] = it;
        out.y[static_cast<std::size_t>(i - 1)] = std::move(y);
        out.z[static_cast<std::size_t>(i - 1)] = std::move(z);
        out.fitted[static_cast<std::size_t>(i - 1)] = std::move(fit);
    }
    return out;
}

SchemeSolution backward_solve(const ProblemSpec& spec, const Partition& partition, const PathBundle& bundle,
                              const ForwardPaths& forward, const BackendConfig& backend, const PicardConfig& picard) {
    spec.validate();
    picard.validate();
    check_contraction(spec, partition);
    const int n = partition.steps();
    const int d = spec.dim_x;
    if (bundle.steps() != n || forward.steps() != n)
        fail(ErrorKind::invalid_argument, "backward_solve: bundle, forward paths and partition disagree");
    if (bundle.dim_b() != spec.dim_b) fail(ErrorKind::invalid_argument, "backward_solve: bundle B dimension differs");
    const int M = forward.samples();

    SchemeSolution sol;
    sol.backend = backend.kind;
    sol.Y.resize(M, n + 1);
    sol.Z.assign(static_cast<std::size_t>(n) + 1, Matrix::Zero(M, d));
    const Matrix& x_terminal = forward.X[static_cast<std::size_t>(n)];
    for (int m = 0; m < M; ++m) sol.Y(m, n) = spec.terminal(x_terminal.row(m).transpose());

    if (backend.kind == Backend::exact) {
        ExactFields fields = exact_backward_fields(spec, partition, bundle.dB, picard);
        for (int i = 0; i < n; ++i) {
            const Matrix& x = forward.X[static_cast<std::size_t>(i)];
            sol.Y.col(i) = fields.y[static_cast<std::size_t>(i)].evaluate_rows(x);
            for (int k = 0; k < d; ++k)
                sol.Z[static_cast<std::size_t>(i)].col(k) =
                    fields.z[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].evaluate_rows(x);
        }
        sol.fitted = std::move(fields.fitted);
        sol.picard_iters = std::move(fields.picard_iters);
        sol.y_fields = std::move(fields.y);
        sol.z_fields = std::move(fields.z);
        return sol;
    }

    backend.basis.validate();
    sol.fitted.resize(static_cast<std::size_t>(n));
    sol.picard_iters.assign(static_cast<std::size_t>(n), 0);
    for (int i = n; i >= 1; --i) {
        const double dt = partition.dt(i);
        const double t_now = partition.time(i);
        const Matrix& x_prev = forward.X[static_cast<std::size_t>(i - 1)];
        const Matrix& x_now = forward.X[static_cast<std::size_t>(i)];
        const Matrix& dw = bundle.dW[static_cast<std::size_t>(i - 1)];
        const Vector db = bundle.dB.row(i - 1).transpose();

        Vector targets(M);
        for (int m = 0; m < M; ++m) {
            const double y = sol.Y(m, i);
            targets(m) = y + spec.backward_driver(t_now, x_now.row(m).transpose(), y).dot(db);
        }

        StepFit fit;
        Matrix& z = sol.Z[static_cast<std::size_t>(i - 1)];
        for (int k = 0; k < d; ++k) {
            fit.z.push_back(condexp_weighted(x_prev, targets.cwiseProduct(dw.col(k)), 1.0 / dt, backend.basis));
            z.col(k) = fit.z.back().evaluate_rows(x_prev);
        }
        fit.continuation = condexp_weighted(x_prev, targets, 1.0, backend.basis);
        const Vector c = fit.continuation.evaluate_rows(x_prev);

        const double t_prev = partition.time(i - 1);
        int worst = 0;
        for (int m = 0; m < M; ++m) {
            try {
                const PicardResult r =
                    picard_solve(c(m), x_prev.row(m).transpose(), z.row(m).transpose(), t_prev, spec.driver, dt, picard);
                sol.Y(m, i - 1) = r.value;
                worst = std::max(worst, r.iterations);
            } catch (const Error& e) {
                std::ostringstream os;
                os << "backward step " << i << ", sample " << m << ": " << e.what();
                throw Error(e.kind(), os.str());
            }
        }
        sol.picard_iters[static_cast<std::size_t>(i - 1)] = worst;
        sol.fitted[static_cast<std::size_t>(i - 1)] = std::move(fit);
    }
    return sol;
}

std::vector<Matrix> tilde_z(std::span<const Matrix> z_fine, const Partition& coarse, int kappa,
                            std::span<const Matrix> features, const BasisSpec& basis) {
    if (kappa < 1) fail(ErrorKind::invalid_argument, "tilde_z: refinement factor must be >= 1");
    const int n = coarse.steps();
    if (static_cast<int>(z_fine.size()) < n * kappa)
        fail(ErrorKind::invalid_argument, "tilde_z: need kappa values per coarse step");
    if (static_cast<int>(features.size()) < n) fail(ErrorKind::invalid_argument, "tilde_z: need features per step");
    std::vector<Matrix> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) {
        Matrix avg = z_fine[static_cast<std::size_t>((i - 1) * kappa)];
        for (int j = 1; j < kappa; ++j) avg += z_fine[static_cast<std::size_t>((i - 1) * kappa + j)];
        avg /= double(kappa);
        const Matrix& x = features[static_cast<std::size_t>(i - 1)];
        Matrix fitted(avg.rows(), avg.cols());
        for (Eigen::Index k = 0; k < avg.cols(); ++k) fitted.col(k) = lsmc_fit(x, avg.col(k), basis).evaluate_rows(x);
        out.push_back(std::move(fitted));
    }
    return out;
}

std::vector<std::vector<Poly>> tilde_z_exact(const std::vector<std::vector<Poly>>& z_fine_fields,
                                             const ProblemSpec& spec, const Partition& coarse, int kappa) {
    if (kappa < 1) fail(ErrorKind::invalid_argument, "tilde_z_exact: refinement factor must be >= 1");
    const int n = coarse.steps();
    if (static_cast<int>(z_fine_fields.size()) < n * kappa)
        fail(ErrorKind::invalid_argument, "tilde_z_exact: need kappa fields per coarse step");
    const Partition fine = refine(coarse, kappa);
    const int d = spec.dim_x;
    std::vector<std::vector<Poly>> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) {
        const int first = (i - 1) * kappa;
        std::vector<Poly> acc(static_cast<std::size_t>(d), Poly(d));
        for (int j = 0; j < kappa; ++j) {
            for (int k = 0; k < d; ++k) {
                Poly p = z_fine_fields[static_cast<std::size_t>(first + j)][static_cast<std::size_t>(k)];
                for (int h = first + j; h > first; --h) p = gaussian_moment_propagate(p, euler_gaussian_step(spec, fine.dt(h)));
                acc[static_cast<std::size_t>(k)] += p;
            }
        }
        for (auto& p : acc) p *= 1.0 / kappa;
        out.push_back(std::move(acc));
    }
    return out;
}

}  // namespace bdsde
