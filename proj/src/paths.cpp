#include "bdsde/paths.hpp"

#include <cmath>
#include <numbers>

#include "bdsde/error.hpp"

namespace bdsde {

Partition::Partition(std::vector<double> times) : times_(std::move(times)) {
    if (times_.size() < 2) fail(ErrorKind::invalid_argument, "partition needs at least one step");
    if (times_.front() != 0.0) fail(ErrorKind::invalid_argument, "partition must start at 0");
    for (std::size_t i = 1; i < times_.size(); ++i) {
        const double dt = times_[i] - times_[i - 1];
        if (!(dt > 0.0)) fail(ErrorKind::invalid_argument, "partition times must be strictly increasing");
        mesh_ = std::max(mesh_, dt);
    }
}

Partition make_partition(double horizon, int steps) {
    if (!(horizon > 0.0)) fail(ErrorKind::invalid_argument, "make_partition: horizon must be > 0");
    if (steps < 1) fail(ErrorKind::invalid_argument, "make_partition: step count must be >= 1");
    std::vector<double> t(static_cast<std::size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) t[static_cast<std::size_t>(i)] = horizon * i / steps;
    t.back() = horizon;
    return Partition(std::move(t));
}

Partition refine(const Partition& coarse, int factor) {
    if (factor < 1) fail(ErrorKind::invalid_argument, "refine: factor must be >= 1");
    std::vector<double> t;
    t.reserve(static_cast<std::size_t>(coarse.steps() * factor) + 1);
    t.push_back(0.0);
    for (int i = 1; i <= coarse.steps(); ++i) {
        const double left = coarse.time(i - 1);
        const double dt = coarse.dt(i);
        for (int j = 1; j < factor; ++j) t.push_back(left + dt * j / factor);
        t.push_back(coarse.time(i));
    }
    return Partition(std::move(t));
}

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

double keyed_normal(std::uint64_t seed, NoiseStream stream, std::uint32_t a, std::uint32_t b, std::uint32_t c) {
    const auto out = philox4x32({a, b, c, static_cast<std::uint32_t>(stream)},
                                {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
    // Two 53-bit uniforms on (0, 1), then Box-Muller.
    constexpr double kScale = 1.0 / 9007199254740992.0;
    const std::uint64_t k1 = ((static_cast<std::uint64_t>(out[0]) << 32) | out[1]) >> 11;
    const std::uint64_t k2 = ((static_cast<std::uint64_t>(out[2]) << 32) | out[3]) >> 11;
    const double u1 = (static_cast<double>(k1) + 0.5) * kScale;
    const double u2 = (static_cast<double>(k2) + 0.5) * kScale;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double pairwise_sum(std::span<const double> v) {
    if (v.empty()) return 0.0;
    if (v.size() == 1) return v[0];
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

PathBundle sample_bundle(const Partition& partition, int samples, int dim_w, int dim_b, std::uint64_t seed,
                         std::uint32_t b_index, int resolution) {
    if (samples < 1) fail(ErrorKind::invalid_argument, "sample_bundle: sample count must be >= 1");
    if (dim_w < 1 || dim_b < 1) fail(ErrorKind::invalid_argument, "sample_bundle: dimensions must be >= 1");
    if (resolution < 1) fail(ErrorKind::invalid_argument, "sample_bundle: resolution must be >= 1");
    const int n = partition.steps();
    PathBundle bundle;
    bundle.seed = seed;
    bundle.b_index = b_index;
    bundle.resolution = resolution;
    bundle.dW.assign(static_cast<std::size_t>(n), Eigen::MatrixXd(samples, dim_w));

    std::vector<double> sub(static_cast<std::size_t>(resolution));
    for (int i = 1; i <= n; ++i) {
        const double scale = std::sqrt(partition.dt(i) / resolution);
        const auto first = static_cast<std::uint32_t>((i - 1) * resolution);
        Eigen::MatrixXd& dw = bundle.dW[static_cast<std::size_t>(i - 1)];
        for (int m = 0; m < samples; ++m) {
            for (int k = 0; k < dim_w; ++k) {
                for (int j = 0; j < resolution; ++j)
                    sub[static_cast<std::size_t>(j)] =
                        scale * keyed_normal(seed, NoiseStream::forward_w, static_cast<std::uint32_t>(m),
                                             first + static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(k));
                dw(m, k) = pairwise_sum(sub);
            }
        }
    }
    bundle.dB = sample_b_increments(partition, dim_b, seed, b_index, resolution);
    return bundle;
}

Eigen::MatrixXd sample_b_increments(const Partition& partition, int dim_b, std::uint64_t seed, std::uint32_t b_index,
                                    int resolution) {
    if (dim_b < 1) fail(ErrorKind::invalid_argument, "sample_b_increments: dimension must be >= 1");
    if (resolution < 1) fail(ErrorKind::invalid_argument, "sample_b_increments: resolution must be >= 1");
    const int n = partition.steps();
    Eigen::MatrixXd dB(n, dim_b);
    std::vector<double> sub(static_cast<std::size_t>(resolution));
    for (int i = 1; i <= n; ++i) {
        const double scale = std::sqrt(partition.dt(i) / resolution);
        const auto first = static_cast<std::uint32_t>((i - 1) * resolution);
        for (int k = 0; k < dim_b; ++k) {
            for (int j = 0; j < resolution; ++j)
                sub[static_cast<std::size_t>(j)] =
                    scale * keyed_normal(seed, NoiseStream::backward_b, b_index, first + static_cast<std::uint32_t>(j),
                                         static_cast<std::uint32_t>(k));
            dB(i - 1, k) = pairwise_sum(sub);
        }
    }
    return dB;
}

PathBundle with_b_path(PathBundle bundle, const Partition& partition, std::uint32_t b_index) {
    if (partition.steps() != bundle.steps())
        fail(ErrorKind::invalid_argument, "with_b_path: bundle and partition step counts differ");
    bundle.dB = sample_b_increments(partition, bundle.dim_b(), bundle.seed, b_index, bundle.resolution);
    bundle.b_index = b_index;
    return bundle;
}

PathBundle coarsen(const PathBundle& fine, int factor) {
    if (factor < 1) fail(ErrorKind::invalid_argument, "coarsen: factor must be >= 1");
    if (fine.steps() % factor != 0) fail(ErrorKind::invalid_argument, "coarsen: factor must divide the step count");
    const int n = fine.steps() / factor;
    PathBundle out;
    out.seed = fine.seed;
    out.b_index = fine.b_index;
    out.resolution = fine.resolution * factor;
    out.dW.assign(static_cast<std::size_t>(n), Eigen::MatrixXd(fine.samples(), fine.dim_w()));
    out.dB.resize(n, fine.dim_b());
    std::vector<double> group(static_cast<std::size_t>(factor));
    for (int i = 0; i < n; ++i) {
        for (int m = 0; m < fine.samples(); ++m) {
            for (int k = 0; k < fine.dim_w(); ++k) {
                for (int j = 0; j < factor; ++j)
                    group[static_cast<std::size_t>(j)] = fine.dW[static_cast<std::size_t>(i * factor + j)](m, k);
                out.dW[static_cast<std::size_t>(i)](m, k) = pairwise_sum(group);
            }
        }
        for (int k = 0; k < fine.dim_b(); ++k) {
            for (int j = 0; j < factor; ++j) group[static_cast<std::size_t>(j)] = fine.dB(i * factor + j, k);
            out.dB(i, k) = pairwise_sum(group);
        }
    }
    return out;
}

Eigen::MatrixXd brownian_tails(const PathBundle& bundle) {
    const int n = bundle.steps();
    Eigen::MatrixXd tails = Eigen::MatrixXd::Zero(n + 1, bundle.dim_b());
    for (int i = n - 1; i >= 0; --i) tails.row(i) = tails.row(i + 1) + bundle.dB.row(i);
    return tails;
}

Eigen::VectorXd brownian_tail(const PathBundle& bundle, int i) {
    if (i < 0 || i > bundle.steps()) fail(ErrorKind::index, "brownian_tail: step index out of range");
    return brownian_tails(bundle).row(i).transpose();
}

std::vector<Eigen::MatrixXd> brownian_values(const PathBundle& bundle) {
    std::vector<Eigen::MatrixXd> w;
    w.reserve(static_cast<std::size_t>(bundle.steps()) + 1);
    w.push_back(Eigen::MatrixXd::Zero(bundle.samples(), bundle.dim_w()));
    for (const auto& inc : bundle.dW) w.push_back(w.back() + inc);
    return w;
}

}  // namespace bdsde
