#include "bdsde/condexp.hpp"

#include <array>
#include <cmath>
#include <sstream>

namespace bdsde {

const char* to_string(Backend backend) noexcept {
    return backend == Backend::exact ? "exact" : "lsmc";
}

std::vector<Exponents> graded_monomials(int num_vars, int degree) {
    std::vector<Exponents> out;
    if (num_vars == 0) {
        out.emplace_back();
        return out;
    }
    Exponents e(static_cast<std::size_t>(num_vars), 0);
    for (int total = 0; total <= degree; ++total) {
        // Enumerate compositions of `total` into num_vars parts, lexicographically descending.
        std::vector<Exponents> level;
        auto recurse = [&](auto&& self, int k, int remaining) -> void {
            if (k == num_vars - 1) {
                e[static_cast<std::size_t>(k)] = remaining;
                level.push_back(e);
                return;
            }
            for (int v = remaining; v >= 0; --v) {
                e[static_cast<std::size_t>(k)] = v;
                self(self, k + 1, remaining - v);
            }
        };
        recurse(recurse, 0, total);
        out.insert(out.end(), level.begin(), level.end());
    }
    return out;
}

void BasisSpec::validate() const {
    if (degree < 0 || degree > kMaxBasisDegree) {
        std::ostringstream os;
        os << "basis degree must be in [0, " << kMaxBasisDegree << "], got " << degree;
        fail(ErrorKind::invalid_argument, os.str());
    }
    if (!(ridge >= 0.0)) fail(ErrorKind::invalid_argument, "basis ridge must be >= 0");
}

FittedConditional lsmc_fit(const Matrix& features, const Vector& targets, const BasisSpec& basis) {
    basis.validate();
    const Eigen::Index M = features.rows();
    const int d = static_cast<int>(features.cols());
    if (targets.size() != M) fail(ErrorKind::invalid_argument, "lsmc_fit: feature and target counts differ");
    if (M == 0) fail(ErrorKind::invalid_argument, "lsmc_fit: no samples");

    if ((targets.array() == targets(0)).all()) return {Poly::constant(d, targets(0)), FitKind::regression};

    const Eigen::RowVectorXd mean = features.colwise().mean();
    const Eigen::RowVectorXd sd = ((features.rowwise() - mean).array().square().colwise().sum() / double(M)).sqrt();
    std::vector<int> active;
    for (int k = 0; k < d; ++k)
        if (sd(k) > 1e-12 * std::max(1.0, std::abs(mean(k)))) active.push_back(k);
    const int a = static_cast<int>(active.size());

    const auto monomials = graded_monomials(a, basis.degree);
    const auto K = static_cast<Eigen::Index>(monomials.size());
    if (M <= K) {
        std::ostringstream os;
        os << "lsmc_fit: need more samples (" << M << ") than basis functions (" << K << ")";
        fail(ErrorKind::invalid_argument, os.str());
    }

    Matrix u(M, a);
    for (int j = 0; j < a; ++j) {
        const int k = active[static_cast<std::size_t>(j)];
        u.col(j) = (features.col(k).array() - mean(k)) / sd(k);
    }
    Matrix design(M, K);
    for (Eigen::Index c = 0; c < K; ++c) {
        const Exponents& e = monomials[static_cast<std::size_t>(c)];
        Eigen::ArrayXd col = Eigen::ArrayXd::Ones(M);
        for (int j = 0; j < a; ++j)
            for (int p = 0; p < e[static_cast<std::size_t>(j)]; ++p) col *= u.col(j).array();
        design.col(c) = col.matrix();
    }

    Matrix gram = (design.transpose() * design) / double(M);
    gram.diagonal().array() += basis.ridge;
    const Vector rhs = (design.transpose() * targets) / double(M);

    Eigen::SelfAdjointEigenSolver<Matrix> spectrum(gram, Eigen::EigenvaluesOnly);
    const double lo = spectrum.eigenvalues().minCoeff();
    const double hi = spectrum.eigenvalues().maxCoeff();
    if (!(lo > 1e-13 * hi)) {
        std::ostringstream os;
        os << "lsmc_fit: Gram matrix numerically singular (smallest eigenvalue " << lo << ", largest " << hi << ")";
        fail(ErrorKind::conditioning, os.str());
    }
    const Vector coef = gram.ldlt().solve(rhs);
    const double residual = (gram * coef - rhs).norm() / std::max(rhs.norm(), 1e-300);

    // Back to raw coordinates: u_j = (x_k - mean_k) / sd_k.
    Poly standardized(a);
    for (Eigen::Index c = 0; c < K; ++c) standardized.add_term(monomials[static_cast<std::size_t>(c)], coef(c));
    std::vector<Poly> change;
    change.reserve(active.size());
    for (int k : active)
        change.push_back(Poly::variable(d, k) * (1.0 / sd(k)) - Poly::constant(d, mean(k) / sd(k)));
    Poly raw = a == 0 ? Poly::constant(d, standardized.coefficient({})) : standardized.substitute(change);
    return {std::move(raw), FitKind::regression, residual};
}

double standard_gaussian_moment(int k) {
    static const std::array<double, kMaxMomentOrder + 1> table = [] {
        std::array<double, kMaxMomentOrder + 1> m{};
        m[0] = 1.0;
        m[1] = 0.0;
        for (int j = 2; j <= kMaxMomentOrder; ++j) m[static_cast<std::size_t>(j)] = (j - 1) * m[static_cast<std::size_t>(j - 2)];
        return m;
    }();
    if (k < 0 || k > kMaxMomentOrder) fail(ErrorKind::invalid_argument, "gaussian moment order out of table range");
    return table[static_cast<std::size_t>(k)];
}

GaussianStep euler_gaussian_step(const ProblemSpec& spec, double dt) {
    if (!spec.flags.drift_affine || !spec.flags.diffusion_constant)
        fail(ErrorKind::capability,
             "problem " + spec.name + ": exact conditional expectation needs affine drift and constant diffusion");
    const AffineDrift drift = probe_affine_drift(spec);
    const int d = spec.dim_x;
    GaussianStep step;
    step.linear = Matrix::Identity(d, d) + drift.linear * dt;
    step.shift = drift.constant * dt;
    step.diffusion = spec.diffusion(Vector::Zero(d));
    step.dt = dt;
    return step;
}

Poly gaussian_moment_propagate(const Poly& p, const GaussianStep& step, std::optional<int> weight) {
    const int d = p.num_vars();
    if (step.linear.rows() != d || step.linear.cols() != d || step.shift.size() != d || step.diffusion.rows() != d ||
        step.diffusion.cols() != d)
        fail(ErrorKind::invalid_argument, "gaussian_moment_propagate: step dimensions differ from polynomial arity");
    if (!(step.dt > 0.0)) fail(ErrorKind::invalid_argument, "gaussian_moment_propagate: dt must be > 0");
    if (weight && (*weight < 0 || *weight >= d)) fail(ErrorKind::index, "gaussian_moment_propagate: weight out of range");
    if (p.degree() + (weight ? 1 : 0) > kMaxMomentOrder)
        fail(ErrorKind::invalid_argument, "gaussian_moment_propagate: degree exceeds moment table");

    // Variables 0..d-1 are x, d..2d-1 are the increments dW ~ N(0, dt I).
    const int vars = 2 * d;
    std::vector<Poly> image;
    image.reserve(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) {
        Poly l = Poly::constant(vars, step.shift(k));
        for (int j = 0; j < d; ++j) {
            l += Poly::variable(vars, j) * step.linear(k, j);
            l += Poly::variable(vars, d + j) * step.diffusion(k, j);
        }
        image.push_back(std::move(l));
    }
    Poly joint = p.substitute(image);
    if (weight) joint = joint * Poly::variable(vars, d + *weight);

    Poly out(d);
    Exponents ex(static_cast<std::size_t>(d));
    for (const auto& [e, c] : joint.terms()) {
        double moment = 1.0;
        for (int j = 0; j < d; ++j) {
            const int order = e[static_cast<std::size_t>(d + j)];
            moment *= standard_gaussian_moment(order);
            for (int h = 0; h < order / 2; ++h) moment *= step.dt;
        }
        if (moment == 0.0) continue;
        for (int j = 0; j < d; ++j) ex[static_cast<std::size_t>(j)] = e[static_cast<std::size_t>(j)];
        out.add_term(ex, c * moment);
    }
    return out;
}

FittedConditional condexp_weighted(const Matrix& features, const Vector& targets, double scale,
                                   const BasisSpec& basis) {
    if (scale == 0.0) return {Poly(static_cast<int>(features.cols())), FitKind::regression};
    return lsmc_fit(features, scale * targets, basis);
}

FittedConditional condexp_weighted(const Poly& p, const GaussianStep& step, double scale, std::optional<int> weight) {
    if (scale == 0.0) return {Poly(p.num_vars()), FitKind::exact};
    return {gaussian_moment_propagate(p, step, weight) * scale, FitKind::exact};
}

}  // namespace bdsde
