#pragma once

#include <vector>

#include "bdsde/paths.hpp"
#include "bdsde/problem.hpp"

namespace bdsde {

enum class ForwardScheme { euler, exact };

/// X at every grid time: X[i] is samples x d, X[0] rows all equal x0.
struct ForwardPaths {
    std::vector<Matrix> X;
    ForwardScheme scheme = ForwardScheme::euler;

    int steps() const noexcept { return static_cast<int>(X.size()) - 1; }
    int samples() const noexcept { return X.empty() ? 0 : static_cast<int>(X.front().rows()); }
};

/// X_{t_i} = X_{t_{i-1}} + b(X_{t_{i-1}}) dt_i + sigma(X_{t_{i-1}}) dW_i.
/// Throws Error{numeric} naming sample and step on a non-finite state.
ForwardPaths euler_paths(const ProblemSpec& spec, const Partition& partition, const PathBundle& bundle);

/// Continuous Euler extension on step i (t in [t_{i-1}, t_i]), driven by the
/// supplied W_t - W_{t_{i-1}}.
Vector euler_interpolate(const ProblemSpec& spec, const Partition& partition, const ForwardPaths& forward, int sample,
                         int step, double t, const Vector& displacement);

/// Exact transition on the same increments; needs spec.transition != none.
ForwardPaths exact_paths(const ProblemSpec& spec, const Partition& partition, const PathBundle& bundle);

}  // namespace bdsde
