#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace bdsde {

/// Time grid 0 = t_0 < ... < t_n = T.
class Partition {
public:
    explicit Partition(std::vector<double> times);

    int steps() const noexcept { return static_cast<int>(times_.size()) - 1; }
    double horizon() const noexcept { return times_.back(); }
    double mesh() const noexcept { return mesh_; }
    double time(int i) const { return times_.at(static_cast<std::size_t>(i)); }
    /// Length of step i, i.e. t_i - t_{i-1}, for 1 <= i <= n.
    double dt(int i) const { return time(i) - time(i - 1); }
    const std::vector<double>& times() const noexcept { return times_; }

private:
    std::vector<double> times_;
    double mesh_ = 0.0;
};

/// Uniform grid t_i = i T / n.
Partition make_partition(double horizon, int steps);

/// Splits every step of `coarse` into `factor` equal sub-steps.
Partition refine(const Partition& coarse, int factor);

/// Philox4x32-10 counter-based generator: a pure function of (counter, key).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

enum class NoiseStream : std::uint32_t { forward_w = 0, backward_b = 1 };

/// Standard normal draw addressed by (seed, stream, a, b, c). Identical
/// arguments always give the identical value.
double keyed_normal(std::uint64_t seed, NoiseStream stream, std::uint32_t a, std::uint32_t b, std::uint32_t c);

/// Brownian increments for one outer B-replication: M samples of W-increments
/// sharing a single B-path.
struct PathBundle {
    std::vector<Eigen::MatrixXd> dW;  // steps entries, each samples x d
    Eigen::MatrixXd dB;               // steps x l
    std::uint64_t seed = 0;
    std::uint32_t b_index = 0;
    int resolution = 1;               // generator sub-steps per step

    int steps() const noexcept { return static_cast<int>(dW.size()); }
    int samples() const noexcept { return dW.empty() ? 0 : static_cast<int>(dW.front().rows()); }
    int dim_w() const noexcept { return dW.empty() ? 0 : static_cast<int>(dW.front().cols()); }
    int dim_b() const noexcept { return static_cast<int>(dB.cols()); }
};

/// Draws increments on `partition`. Each step is generated as `resolution`
/// keyed sub-increments summed pairwise, so bundles of different step counts
/// but equal partition.steps() * resolution share one Brownian path.
///
/// W draws are keyed by (seed, sample, sub-step, coordinate) and B draws by
/// (seed, b_index, sub-step, coordinate): b_index changes B only.
PathBundle sample_bundle(const Partition& partition, int samples, int dim_w, int dim_b, std::uint64_t seed,
                         std::uint32_t b_index, int resolution = 1);

/// The B-increments sample_bundle would draw for (seed, b_index): steps x l.
Eigen::MatrixXd sample_b_increments(const Partition& partition, int dim_b, std::uint64_t seed, std::uint32_t b_index,
                                    int resolution = 1);

/// Same bundle with its B-path replaced by the one keyed by `b_index`.
PathBundle with_b_path(PathBundle bundle, const Partition& partition, std::uint32_t b_index);

/// Sums groups of `factor` consecutive increments into one (pairwise order).
/// When `factor` and the bundle resolution are powers of two the result is
/// bit-identical to sample_bundle on the coarse grid with resolution
/// multiplied by `factor`.
PathBundle coarsen(const PathBundle& fine, int factor);

/// Sum of the B-increments strictly after t_i, i.e. B_T - B_{t_i}.
Eigen::VectorXd brownian_tail(const PathBundle& bundle, int i);

/// All tails B_T - B_{t_i}, i = 0..n, as rows of an (n+1) x l matrix.
Eigen::MatrixXd brownian_tails(const PathBundle& bundle);

/// W_{t_i} for i = 0..n (each samples x d), by running sums of dW.
std::vector<Eigen::MatrixXd> brownian_values(const PathBundle& bundle);

/// Pairwise (cascade) summation in fixed order.
double pairwise_sum(std::span<const double> values);

}  // namespace bdsde
