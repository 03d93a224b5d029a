#include <gtest/gtest.h>

#include <cmath>

#include "bdsde/paths.hpp"
#include "support.hpp"

using namespace bdsde;

TEST(Partition, UniformGrid) {
    const Partition p = make_partition(1.0, 4);
    EXPECT_EQ(p.times(), (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}));
    EXPECT_EQ(p.mesh(), 0.25);
    EXPECT_EQ(p.steps(), 4);
    EXPECT_EQ(p.dt(1), 0.25);
}

TEST(Partition, SingleStep) {
    const Partition p = make_partition(2.0, 1);
    EXPECT_EQ(p.times(), (std::vector<double>{0.0, 2.0}));
    EXPECT_EQ(p.mesh(), 2.0);
}

TEST(Partition, Guards) {
    EXPECT_BDSDE_ERROR(make_partition(1.0, 0), ErrorKind::invalid_argument);
    EXPECT_BDSDE_ERROR(make_partition(0.0, 4), ErrorKind::invalid_argument);
    EXPECT_BDSDE_ERROR(Partition({0.0, 0.5, 0.5}), ErrorKind::invalid_argument);
    EXPECT_BDSDE_ERROR(Partition({0.1, 0.5}), ErrorKind::invalid_argument);
}

TEST(Partition, RefineKeepsCoarseTimes) {
    const Partition c = make_partition(1.0, 3);
    const Partition f = refine(c, 4);
    ASSERT_EQ(f.steps(), 12);
    for (int i = 0; i <= 3; ++i) EXPECT_EQ(f.time(4 * i), c.time(i));
    EXPECT_NEAR(f.mesh(), 1.0 / 12.0, 1e-15);
}

// Known-answer vectors published with the Random123 library.
TEST(Philox, KnownAnswers) {
    using A4 = std::array<std::uint32_t, 4>;
    EXPECT_EQ(philox4x32({0, 0, 0, 0}, {0, 0}), (A4{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
    EXPECT_EQ(philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}),
              (A4{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
    EXPECT_EQ(philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
              (A4{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Bundle, Deterministic) {
    const Partition p = make_partition(1.0, 8);
    const PathBundle a = sample_bundle(p, 50, 2, 1, 42, 3);
    const PathBundle b = sample_bundle(p, 50, 2, 1, 42, 3);
    for (int i = 0; i < 8; ++i) EXPECT_EQ(a.dW[i], b.dW[i]);
    EXPECT_EQ(a.dB, b.dB);
}

TEST(Bundle, BIndexChangesOnlyB) {
    const Partition p = make_partition(1.0, 8);
    const PathBundle a = sample_bundle(p, 20, 1, 1, 7, 0);
    const PathBundle b = sample_bundle(p, 20, 1, 1, 7, 1);
    for (int i = 0; i < 8; ++i) EXPECT_EQ(a.dW[i], b.dW[i]);
    EXPECT_NE(a.dB, b.dB);
    EXPECT_EQ(with_b_path(a, p, 1).dB, b.dB);
}

TEST(Bundle, IncrementMeanWithinClt) {
    const int m = 100000;
    const Partition p = make_partition(1.0, 4);
    const PathBundle bundle = sample_bundle(p, m, 1, 1, 2024, 0);
    const double bound = 4.0 * std::sqrt(0.25 / m);
    for (int i = 0; i < 4; ++i) EXPECT_LT(std::abs(bundle.dW[i].mean()), bound) << "step " << i;
}

TEST(Bundle, IncrementVariance) {
    const int m = 100000;
    const Partition p = make_partition(1.0, 4);
    const PathBundle bundle = sample_bundle(p, m, 1, 1, 99, 0);
    for (int i = 0; i < 4; ++i) {
        const double var = bundle.dW[i].squaredNorm() / m;
        // sd of the sample variance is sqrt(2/m) dt.
        EXPECT_NEAR(var, 0.25, 4.0 * std::sqrt(2.0 / m) * 0.25);
    }
}

TEST(Bundle, WAndBUncorrelated) {
    // One B-path per bundle, so correlation is measured over B-replications.
    const int reps = 100000;
    const Partition p = make_partition(1.0, 1);
    Eigen::VectorXd w(reps), b(reps);
    for (int r = 0; r < reps; ++r) {
        w(r) = keyed_normal(5, NoiseStream::forward_w, static_cast<std::uint32_t>(r), 0, 0);
        b(r) = keyed_normal(5, NoiseStream::backward_b, static_cast<std::uint32_t>(r), 0, 0);
    }
    const double cw = w.mean(), cb = b.mean();
    const double cov = ((w.array() - cw) * (b.array() - cb)).mean();
    const double corr = cov / std::sqrt((w.array() - cw).square().mean() * (b.array() - cb).square().mean());
    EXPECT_LT(std::abs(corr), 0.02);
}

TEST(Bundle, CoarsenMatchesResolution) {
    const Partition fine = make_partition(1.0, 16);
    const Partition coarse = make_partition(1.0, 4);
    const PathBundle f = sample_bundle(fine, 10, 1, 1, 11, 2);
    const PathBundle c = sample_bundle(coarse, 10, 1, 1, 11, 2, 4);
    const PathBundle cf = coarsen(f, 4);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(cf.dW[i], c.dW[i]);
    EXPECT_EQ(cf.dB, c.dB);
    EXPECT_EQ(cf.resolution, 4);
    EXPECT_BDSDE_ERROR(coarsen(f, 3), ErrorKind::invalid_argument);
}

TEST(Tails, EndpointsAndTelescoping) {
    const Partition p = make_partition(1.0, 6);
    const PathBundle bundle = sample_bundle(p, 3, 1, 2, 1, 0);
    EXPECT_EQ(brownian_tail(bundle, 6), Eigen::VectorXd::Zero(2));
    Eigen::VectorXd total = Eigen::VectorXd::Zero(2);
    for (int i = 5; i >= 0; --i) total += bundle.dB.row(i).transpose();
    EXPECT_EQ(brownian_tail(bundle, 0), total);
    const Eigen::MatrixXd tails = brownian_tails(bundle);
    for (int i = 0; i < 6; ++i) EXPECT_LE((tails.row(i) - tails.row(i + 1) - bundle.dB.row(i)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_BDSDE_ERROR(brownian_tail(bundle, 7), ErrorKind::index);
    EXPECT_BDSDE_ERROR(brownian_tail(bundle, -1), ErrorKind::index);
}

TEST(Tails, BrownianValuesAreRunningSums) {
    const Partition p = make_partition(1.0, 4);
    const PathBundle bundle = sample_bundle(p, 5, 1, 1, 3, 0);
    const auto w = brownian_values(bundle);
    ASSERT_EQ(w.size(), 5u);
    EXPECT_EQ(w[0], Eigen::MatrixXd::Zero(5, 1));
    for (int i = 1; i <= 4; ++i) EXPECT_EQ(w[i], w[i - 1] + bundle.dW[i - 1]);
}

TEST(PairwiseSum, FixedOrder) {
    std::vector<double> v{1e16, 1.0, -1e16, 1.0};
    // ((1e16 + 1) + (-1e16 + 1)) in pairwise order.
    EXPECT_EQ(pairwise_sum(v), (1e16 + 1.0) + (-1e16 + 1.0));
    EXPECT_EQ(pairwise_sum(std::vector<double>{}), 0.0);
}
