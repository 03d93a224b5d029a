#include "bdsde/forward.hpp"

#include <cmath>
#include <sstream>
#include <string>

namespace bdsde {

namespace {

void check_dimensions(const ProblemSpec& spec, const Partition& partition, const PathBundle& bundle) {
    if (bundle.steps() != partition.steps())
        fail(ErrorKind::invalid_argument, "forward: bundle and partition step counts differ");
    if (bundle.dim_w() != spec.dim_x) fail(ErrorKind::invalid_argument, "forward: bundle W dimension differs from dim_x");
}

}  // namespace

ForwardPaths euler_paths(const ProblemSpec& spec, const Partition& partition, const PathBundle& bundle) {
    spec.validate();
    check_dimensions(spec, partition, bundle);
    const int n = partition.steps();
    const int M = bundle.samples();
    ForwardPaths out;
    out.scheme = ForwardScheme::euler;
    out.X.reserve(static_cast<std::size_t>(n) + 1);
    out.X.push_back(spec.x0.transpose().replicate(M, 1));
    for (int i = 1; i <= n; ++i) {
        const double dt = partition.dt(i);
        const Matrix& prev = out.X.back();
        const Matrix& dw = bundle.dW[static_cast<std::size_t>(i - 1)];
        Matrix next(M, spec.dim_x);
        for (int m = 0; m < M; ++m) {
            const Vector x = prev.row(m).transpose();
            const Vector step = spec.drift(x) * dt + spec.diffusion(x) * dw.row(m).transpose();
            next.row(m) = (x + step).transpose();
            if (!next.row(m).allFinite()) {
                std::ostringstream os;
                os << "euler_paths: non-finite state at sample " << m << ", step " << i;
                fail(ErrorKind::numeric, os.str());
            }
        }
        out.X.push_back(std::move(next));
    }
    return out;
}

Vector euler_interpolate(const ProblemSpec& spec, const Partition& partition, const ForwardPaths& forward, int sample,
                         int step, double t, const Vector& displacement) {
    if (!(t >= 0.0 && t <= partition.horizon())) fail(ErrorKind::domain, "euler_interpolate: t outside [0, T]");
    if (step < 1 || step > partition.steps()) fail(ErrorKind::index, "euler_interpolate: step index out of range");
    if (t < partition.time(step - 1) || t > partition.time(step))
        fail(ErrorKind::domain, "euler_interpolate: t outside the requested step");
    if (sample < 0 || sample >= forward.samples()) fail(ErrorKind::index, "euler_interpolate: sample out of range");
    const Vector left = forward.X[static_cast<std::size_t>(step - 1)].row(sample).transpose();
    return left + spec.drift(left) * (t - partition.time(step - 1)) + spec.diffusion(left) * displacement;
}

ForwardPaths exact_paths(const ProblemSpec& spec, const Partition& partition, const PathBundle& bundle) {
    spec.validate();
    check_dimensions(spec, partition, bundle);
    const int n = partition.steps();
    const int M = bundle.samples();
    const auto w = brownian_values(bundle);
    ForwardPaths out;
    out.scheme = ForwardScheme::exact;
    out.X.reserve(static_cast<std::size_t>(n) + 1);
    switch (spec.transition) {
        case ForwardTransition::additive: {
            const Vector drift = spec.drift(spec.x0);
            const Matrix sigma = spec.diffusion(spec.x0);
            for (int i = 0; i <= n; ++i) {
                const double t = partition.time(i);
                Matrix x = (w[static_cast<std::size_t>(i)] * sigma.transpose()).rowwise() +
                           (spec.x0 + drift * t).transpose();
                out.X.push_back(std::move(x));
            }
            break;
        }
        case ForwardTransition::geometric: {
            const double mu = spec.geometric.mu;
            const double nu = spec.geometric.nu;
            for (int i = 0; i <= n; ++i) {
                const double t = partition.time(i);
                Matrix x(M, spec.dim_x);
                for (int m = 0; m < M; ++m)
                    for (int k = 0; k < spec.dim_x; ++k)
                        x(m, k) = spec.x0(k) * std::exp((mu - 0.5 * nu * nu) * t + nu * w[static_cast<std::size_t>(i)](m, k));
                out.X.push_back(std::move(x));
            }
            break;
        }
        case ForwardTransition::none:
            fail(ErrorKind::capability, "exact_paths: problem " + spec.name + " has no exact forward transition");
    }
    return out;
}

}  // namespace bdsde
