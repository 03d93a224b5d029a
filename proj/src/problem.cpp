#include "bdsde/problem.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace bdsde {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::invalid_argument: return "invalid argument";
        case ErrorKind::domain: return "domain error";
        case ErrorKind::index: return "index error";
        case ErrorKind::catalog: return "catalog error";
        case ErrorKind::capability: return "capability error";
        case ErrorKind::numeric: return "numeric error";
        case ErrorKind::conditioning: return "conditioning error";
        case ErrorKind::convergence: return "convergence error";
        case ErrorKind::configuration: return "configuration error";
    }
    return "error";
}

void ProblemSpec::validate() const {
    if (dim_x < 1) fail(ErrorKind::invalid_argument, "problem " + name + ": dim_x must be >= 1");
    if (dim_b < 1) fail(ErrorKind::invalid_argument, "problem " + name + ": dim_b must be >= 1");
    if (!(horizon > 0.0)) fail(ErrorKind::invalid_argument, "problem " + name + ": horizon must be > 0");
    if (!(lipschitz > 0.0)) fail(ErrorKind::invalid_argument, "problem " + name + ": lipschitz constant must be > 0");
    if (x0.size() != dim_x) fail(ErrorKind::invalid_argument, "problem " + name + ": x0 has wrong dimension");
    if (!drift || !diffusion || !driver || !backward_driver || !terminal)
        fail(ErrorKind::invalid_argument, "problem " + name + ": missing coefficient function");
    if (flags.h_polynomial && (!terminal_poly || terminal_poly->num_vars() != dim_x))
        fail(ErrorKind::invalid_argument, "problem " + name + ": h_polynomial set without a matching terminal polynomial");
    if (transition == ForwardTransition::geometric && !(geometric.nu >= 0.0))
        fail(ErrorKind::invalid_argument, "problem " + name + ": geometric volatility must be >= 0");
}

namespace {

constexpr double kBeta = 0.5;

ProblemSpec brownian_identity(std::string name) {
    ProblemSpec s;
    s.name = std::move(name);
    s.dim_x = 1;
    s.dim_b = 1;
    s.horizon = 1.0;
    s.x0 = Vector::Zero(1);
    s.drift = [](const Vector& x) -> Vector { return Vector::Zero(x.size()); };
    s.diffusion = [](const Vector& x) -> Matrix { return Matrix::Identity(x.size(), x.size()); };
    s.driver = [](double, const Vector&, double, const Vector&) { return 0.0; };
    s.backward_driver = [](double, const Vector&, double) -> Vector { return Vector::Zero(1); };
    s.terminal = [](const Vector& x) { return x(0); };
    s.terminal_poly = Poly::variable(1, 0);
    s.lipschitz = 1.0;
    s.flags = {true, true, true, true, true};
    s.transition = ForwardTransition::additive;
    return s;
}

Vector scalar(double v) {
    Vector out(1);
    out(0) = v;
    return out;
}

CatalogEntry make_p0() {
    CatalogEntry e{brownian_identity("P0"), {}};
    e.oracle.kind = OracleKind::closed_form;
    e.oracle.y_true = [](double, const Vector& w, const Vector&) { return w(0); };
    e.oracle.z_true = [](double, const Vector&, const Vector&) { return scalar(1.0); };
    return e;
}

CatalogEntry make_p1() {
    CatalogEntry e{brownian_identity("P1"), {}};
    e.spec.backward_driver = [](double, const Vector&, double) { return scalar(kBeta); };
    e.oracle.kind = OracleKind::closed_form;
    e.oracle.y_true = [](double, const Vector& w, const Vector& tail) { return w(0) + kBeta * tail(0); };
    e.oracle.z_true = [](double, const Vector&, const Vector&) { return scalar(1.0); };
    return e;
}

CatalogEntry make_p2() {
    CatalogEntry e{brownian_identity("P2"), {}};
    e.spec.backward_driver = [](double, const Vector&, double y) { return scalar(kBeta * y); };
    const double T = e.spec.horizon;
    // Backward stochastic exponential M_t = 1 + int_t^T beta M_s dB_s (backward Ito).
    auto exponential = [T](double t, const Vector& tail) {
        return std::exp(kBeta * tail(0) - 0.5 * kBeta * kBeta * (T - t));
    };
    e.oracle.kind = OracleKind::closed_form;
    e.oracle.y_true = [exponential](double t, const Vector& w, const Vector& tail) {
        return w(0) * exponential(t, tail);
    };
    e.oracle.z_true = [exponential](double t, const Vector&, const Vector& tail) {
        return scalar(exponential(t, tail));
    };
    e.oracle.requires_confirmation = true;
    return e;
}

CatalogEntry make_p3() {
    CatalogEntry e{brownian_identity("P3"), {}};
    ProblemSpec& s = e.spec;
    s.x0 = Vector::Ones(1);
    s.drift = [](const Vector& x) -> Vector { return 0.1 * x; };
    s.driver = [](double, const Vector&, double y, const Vector& z) { return 0.2 * y + 0.1 * z(0); };
    s.backward_driver = [](double, const Vector&, double y) { return scalar(0.3 + 0.2 * y); };
    s.terminal = [](const Vector& x) { return x(0) * x(0); };
    s.terminal_poly = Poly::univariate({0.0, 0.0, 1.0});
    s.lipschitz = 2.0;
    s.transition = ForwardTransition::none;
    e.oracle.kind = OracleKind::fine_grid_reference;
    return e;
}

CatalogEntry make_gbm() {
    static constexpr double mu = 0.1;
    static constexpr double nu = 0.5;
    CatalogEntry e{brownian_identity("GBM"), {}};
    ProblemSpec& s = e.spec;
    s.x0 = Vector::Ones(1);
    s.drift = [](const Vector& x) -> Vector { return mu * x; };
    s.diffusion = [](const Vector& x) -> Matrix { return Matrix(nu * x.asDiagonal()); };
    s.flags.diffusion_constant = false;
    s.transition = ForwardTransition::geometric;
    s.geometric = {mu, nu};
    const double T = s.horizon;
    const double x0 = s.x0(0);
    auto state = [x0](double t, const Vector& w) { return x0 * std::exp((mu - 0.5 * nu * nu) * t + nu * w(0)); };
    e.oracle.kind = OracleKind::closed_form;
    e.oracle.y_true = [state, T](double t, const Vector& w, const Vector&) {
        return state(t, w) * std::exp(mu * (T - t));
    };
    e.oracle.z_true = [state, T](double t, const Vector& w, const Vector&) {
        return scalar(nu * state(t, w) * std::exp(mu * (T - t)));
    };
    return e;
}

}  // namespace

std::vector<std::string> catalog_ids() { return {"P0", "P1", "P2", "P3", "GBM"}; }

CatalogEntry builtin_problem(const std::string& name) {
    CatalogEntry e;
    if (name == "P0") e = make_p0();
    else if (name == "P1") e = make_p1();
    else if (name == "P2") e = make_p2();
    else if (name == "P3") e = make_p3();
    else if (name == "GBM") e = make_gbm();
    else fail(ErrorKind::catalog, "unknown catalog problem '" + name + "'");
    e.spec.validate();
    return e;
}

namespace {

struct Sampler {
    std::mt19937_64 engine;
    std::uniform_real_distribution<double> box{-kSpotCheckBox, kSpotCheckBox};

    explicit Sampler(std::uint64_t seed) : engine(seed) {}

    Vector point(int d) {
        Vector v(d);
        for (int k = 0; k < d; ++k) v(k) = box(engine);
        return v;
    }
    double value() { return box(engine); }
    double time(double T) { return std::uniform_real_distribution<double>(0.0, T)(engine); }
};

double quotient(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace

LipschitzReport lipschitz_spot_check(const ProblemSpec& spec, int trials, std::uint64_t seed) {
    if (trials < 1) fail(ErrorKind::invalid_argument, "lipschitz_spot_check: trials must be >= 1");
    spec.validate();
    Sampler s(seed);
    const int d = spec.dim_x;
    LipschitzReport r;
    for (int trial = 0; trial < trials; ++trial) {
        const Vector x = s.point(d);
        const Vector xp = s.point(d);
        const double dx = (x - xp).norm();
        const double t = s.time(spec.horizon);
        const double y = s.value();
        const double yp = s.value();
        const Vector z = s.point(d);
        const Vector zp = s.point(d);

        r.drift = std::max(r.drift, quotient((spec.drift(x) - spec.drift(xp)).norm(), dx));
        r.diffusion = std::max(r.diffusion, quotient((spec.diffusion(x) - spec.diffusion(xp)).norm(), dx));
        r.driver_x = std::max(r.driver_x, quotient(std::abs(spec.driver(t, x, y, z) - spec.driver(t, xp, y, z)), dx));
        r.driver_y = std::max(r.driver_y,
                              quotient(std::abs(spec.driver(t, x, y, z) - spec.driver(t, x, yp, z)), std::abs(y - yp)));
        r.driver_z = std::max(r.driver_z,
                              quotient(std::abs(spec.driver(t, x, y, z) - spec.driver(t, x, y, zp)), (z - zp).norm()));
        r.backward_x = std::max(
            r.backward_x, quotient((spec.backward_driver(t, x, y) - spec.backward_driver(t, xp, y)).norm(), dx));
        r.backward_y = std::max(r.backward_y, quotient((spec.backward_driver(t, x, y) - spec.backward_driver(t, x, yp)).norm(),
                                                       std::abs(y - yp)));
        r.terminal = std::max(r.terminal, quotient(std::abs(spec.terminal(x) - spec.terminal(xp)), dx));
    }
    r.max_ratio = std::max({r.drift, r.diffusion, r.driver_x, r.driver_y, r.driver_z, r.backward_x, r.backward_y,
                            r.terminal});
    r.violation = r.max_ratio > spec.lipschitz;
    return r;
}

namespace {

bool close(double a, double b, double scale) { return std::abs(a - b) <= 1e-9 * (1.0 + scale); }

bool close(const Matrix& a, const Matrix& b, double scale) {
    return (a - b).lpNorm<Eigen::Infinity>() <= 1e-9 * (1.0 + scale);
}

}  // namespace

std::vector<std::string> check_structure_flags(const ProblemSpec& spec, int trials, std::uint64_t seed) {
    spec.validate();
    Sampler s(seed);
    const int d = spec.dim_x;
    std::vector<std::string> issues;
    auto report = [&](const char* flag, int trial) {
        std::ostringstream os;
        os << flag << " inconsistent with sampled coefficients (trial " << trial << ")";
        issues.push_back(os.str());
    };
    const auto& f = spec.flags;
    for (int trial = 0; trial < trials; ++trial) {
        const Vector x = s.point(d);
        const Vector xp = s.point(d);
        const Vector xm = 0.5 * (x + xp);
        const double t = s.time(spec.horizon);
        const double y = s.value();
        const double yp = s.value();
        const Vector z = s.point(d);
        const Vector zp = s.point(d);
        // Midpoint affinity: for continuous maps it is equivalent to being affine.
        if (f.drift_affine) {
            const Matrix lhs = spec.drift(xm);
            const Matrix rhs = 0.5 * (spec.drift(x) + spec.drift(xp));
            if (!close(lhs, rhs, rhs.norm())) report("drift_affine", trial);
        }
        if (f.diffusion_constant) {
            const Matrix a = spec.diffusion(x);
            if (!close(a, spec.diffusion(xp), a.norm())) report("diffusion_constant", trial);
        }
        if (f.f_affine) {
            const double lhs = spec.driver(t, xm, 0.5 * (y + yp), 0.5 * (z + zp));
            const double rhs = 0.5 * (spec.driver(t, x, y, z) + spec.driver(t, xp, yp, zp));
            if (!close(lhs, rhs, std::abs(rhs))) report("f_affine", trial);
        }
        if (f.g_affine) {
            const Matrix lhs = spec.backward_driver(t, xm, 0.5 * (y + yp));
            const Matrix rhs = 0.5 * (spec.backward_driver(t, x, y) + spec.backward_driver(t, xp, yp));
            if (!close(lhs, rhs, rhs.norm())) report("g_affine", trial);
        }
        if (f.h_polynomial) {
            const double ref = spec.terminal(x);
            if (!close((*spec.terminal_poly)(x), ref, std::abs(ref))) report("h_polynomial", trial);
        }
    }
    return issues;
}

AffineDriver probe_affine_driver(const ProblemSpec& spec, double t) {
    if (!spec.flags.f_affine) fail(ErrorKind::capability, "problem " + spec.name + ": driver is not flagged affine");
    const int d = spec.dim_x;
    const Vector zero = Vector::Zero(d);
    AffineDriver a;
    a.constant = spec.driver(t, zero, 0.0, zero);
    a.dx.resize(d);
    a.dz.resize(d);
    for (int k = 0; k < d; ++k) {
        const Vector e = Vector::Unit(d, k);
        a.dx(k) = spec.driver(t, e, 0.0, zero) - a.constant;
        a.dz(k) = spec.driver(t, zero, 0.0, e) - a.constant;
    }
    a.dy = spec.driver(t, zero, 1.0, zero) - a.constant;
    return a;
}

AffineBackwardDriver probe_affine_backward_driver(const ProblemSpec& spec, double t) {
    if (!spec.flags.g_affine)
        fail(ErrorKind::capability, "problem " + spec.name + ": backward driver is not flagged affine");
    const int d = spec.dim_x;
    const Vector zero = Vector::Zero(d);
    AffineBackwardDriver a;
    a.constant = spec.backward_driver(t, zero, 0.0);
    if (a.constant.size() != spec.dim_b)
        fail(ErrorKind::invalid_argument, "problem " + spec.name + ": backward driver has wrong dimension");
    a.dx.resize(spec.dim_b, d);
    for (int k = 0; k < d; ++k) a.dx.col(k) = spec.backward_driver(t, Vector::Unit(d, k), 0.0) - a.constant;
    a.dy = spec.backward_driver(t, zero, 1.0) - a.constant;
    return a;
}

AffineDrift probe_affine_drift(const ProblemSpec& spec) {
    if (!spec.flags.drift_affine) fail(ErrorKind::capability, "problem " + spec.name + ": drift is not flagged affine");
    const int d = spec.dim_x;
    AffineDrift a;
    a.constant = spec.drift(Vector::Zero(d));
    a.linear.resize(d, d);
    for (int k = 0; k < d; ++k) a.linear.col(k) = spec.drift(Vector::Unit(d, k)) - a.constant;
    return a;
}

}  // namespace bdsde
