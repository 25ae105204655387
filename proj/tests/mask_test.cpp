#include <cmath>

#include <gtest/gtest.h>

#include "agentprune/error.hpp"
#include "agentprune/mask.hpp"
#include "agentprune/topology.hpp"
#include "oracles.hpp"

using namespace agentprune;

namespace {

TopologyKind complete() { return TopologyKind{}; }

Matrix random_matrix(Eigen::Index n, Rng& rng) {
    Matrix m(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) m(i, j) = 2.0 * rng.uniform() - 1.0;
    return m;
}

EdgeMask single_edge(double value) {
    auto m = init_masks(Adjacency::from_edges(2, {{0, 1}}), Adjacency(2), 0.5);
    m.spatial(0, 1) = value;
    return m;
}

bool support_invariants(const EdgeMask& m) {
    auto check = [&](const Matrix& s, const Adjacency& a) {
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < a.size(); ++j) {
                const double v = s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                if (!a(i, j) && v != 0.0) return false;
                if (a(i, j) && (v < m.clamp_lo || v > m.clamp_hi)) return false;
            }
        return true;
    };
    return check(m.spatial, m.spatial_support) && check(m.temporal, m.temporal_support);
}

}  // namespace

TEST(InitMasks, ValuesAndPattern) {
    auto a = build_spatial(complete(), 4);
    auto m = init_masks(a, build_temporal_full(4), 0.9);
    int on = 0;
    for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 4; ++j) {
            EXPECT_EQ(m.spatial(i, j) != 0.0, a(i, j));
            if (a(i, j)) {
                EXPECT_DOUBLE_EQ(m.spatial(i, j), 0.9);
                ++on;
            }
        }
    EXPECT_EQ(on, 6);
    EXPECT_TRUE(support_invariants(m));
}

TEST(InitMasks, OutOfRange) {
    auto a = build_spatial(complete(), 3);
    try {
        init_masks(a, Adjacency(3), 1.5);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::OutOfRangeInit);
    }
}

TEST(SampleStructure, InclusionRateNearClampHi) {
    auto m = init_masks(build_spatial(complete(), 5), Adjacency(5), 0.5);
    m.spatial = support_matrix(m.spatial_support) * m.clamp_hi;
    Rng rng(4);
    double included = 0.0, total = 0.0;
    for (int k = 0; k < 1000; ++k) {
        auto s = sample_structure(m, rng);
        // complete support is already a DAG, so nothing is removed
        EXPECT_TRUE(s.dag_removed.empty());
        included += static_cast<double>(s.spatial.edge_count());
        total += static_cast<double>(m.spatial_support.edge_count());
    }
    EXPECT_NEAR(included / total, 0.99, 0.02);
}

TEST(SampleStructure, ClampLoMostlyEmpty) {
    auto m = init_masks(build_spatial(complete(), 3), Adjacency(3), 0.5);
    m.spatial = support_matrix(m.spatial_support) * m.clamp_lo;
    Rng rng(8);
    int empty = 0;
    for (int k = 0; k < 1000; ++k) empty += sample_structure(m, rng).spatial.edge_count() == 0 ? 1 : 0;
    // exact probability of an empty draw is 0.95^3 ~ 0.857
    EXPECT_NEAR(empty / 1000.0, std::pow(0.95, 3), 0.03);
}

TEST(SampleStructure, ReproducibleUnderSeed) {
    auto m = single_edge(0.5);
    Rng a(42), b(42);
    for (int k = 0; k < 100; ++k) EXPECT_EQ(sample_structure(m, a).spatial, sample_structure(m, b).spatial);
}

TEST(SampleStructure, CyclicSupportBrokenToDag) {
    auto m = init_masks(Adjacency::from_edges(3, {{0, 1}, {1, 2}, {2, 0}}), Adjacency(3), 0.98);
    Rng rng(1);
    for (int k = 0; k < 200; ++k) EXPECT_TRUE(oracle::kahn_acyclic(sample_structure(m, rng).spatial));
}

TEST(LogProb, SingleFactors) {
    auto m = single_edge(0.7);
    SampledStructure with{Adjacency::from_edges(2, {{0, 1}}), Adjacency(2), {}};
    SampledStructure without{Adjacency(2), Adjacency(2), {}};
    EXPECT_NEAR(structure_log_prob(m, with, LikelihoodMode::PaperFaithful), std::log(0.7), 1e-15);
    EXPECT_NEAR(structure_log_prob(m, without, LikelihoodMode::FullBernoulli), std::log(0.3), 1e-15);
    EXPECT_EQ(structure_log_prob(m, without, LikelihoodMode::PaperFaithful), 0.0);
}

TEST(LogProb, OffSupportEdgeRejected) {
    auto m = single_edge(0.7);
    SampledStructure s{Adjacency::from_edges(2, {{1, 0}}), Adjacency(2), {}};
    EXPECT_THROW(structure_log_prob(m, s, LikelihoodMode::FullBernoulli), Error);
}

TEST(LogProb, FullBernoulliNormalizesOverThreeEdges) {
    auto m = init_masks(build_spatial(complete(), 3), Adjacency(3), 0.5);
    m.spatial(0, 1) = 0.13;
    m.spatial(0, 2) = 0.61;
    m.spatial(1, 2) = 0.88;
    const auto cands = oracle::candidates(m);
    ASSERT_EQ(cands.size(), 3u);
    double total = 0.0;
    for (std::uint64_t bits = 0; bits < 8; ++bits) {
        const auto s = oracle::structure_from_bits(m, cands, bits);
        const double p = std::exp(structure_log_prob(m, s, LikelihoodMode::FullBernoulli));
        EXPECT_NEAR(p, oracle::bits_probability(cands, bits), 1e-14);
        total += p;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Reinforce, EqualUtilitiesGiveZero) {
    auto m = init_masks(build_spatial(complete(), 3), build_temporal_full(3), 0.5);
    Rng rng(2);
    std::vector<Rollout> rs;
    for (int k = 0; k < 16; ++k) rs.push_back({sample_structure(m, rng), 0.3});
    auto g = reinforce_gradient(m, rs, LikelihoodMode::FullBernoulli);
    EXPECT_EQ(g.spatial.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(g.temporal.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Reinforce, EmptyRollouts) {
    auto m = single_edge(0.5);
    try {
        reinforce_gradient(m, {}, LikelihoodMode::FullBernoulli);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::EmptyRollouts);
    }
}

TEST(Reinforce, SingleEdgeExactGradientOne) {
    auto m = single_edge(0.5);
    Rng rng(123);
    std::vector<Rollout> rs;
    for (int k = 0; k < 100000; ++k) {
        auto s = sample_structure(m, rng);
        const double u = s.spatial(0, 1) ? 1.0 : 0.0;
        rs.push_back({std::move(s), u});
    }
    auto g = reinforce_gradient(m, rs, LikelihoodMode::FullBernoulli);
    EXPECT_NEAR(g.spatial(0, 1), 1.0, 0.02);
}

TEST(Reinforce, EdgeCountUtilityMatchesEnumeration) {
    auto m = init_masks(build_spatial(complete(), 3), Adjacency(3), 0.5);
    m.spatial(0, 1) = 0.2;
    m.spatial(0, 2) = 0.5;
    m.spatial(1, 2) = 0.8;
    auto u = [](const SampledStructure& s) { return static_cast<double>(s.spatial.edge_count()); };
    const auto exact = oracle::exact_gradient(m, u);
    // d/dS_e E[#edges] is 1 for every edge
    for (const auto& e : m.spatial_support.edges()) EXPECT_NEAR(exact.spatial(e.src, e.dst), 1.0, 1e-12);

    Rng rng(99);
    std::vector<Rollout> rs;
    for (int k = 0; k < 100000; ++k) {
        auto s = sample_structure(m, rng);
        const double value = u(s);
        rs.push_back({std::move(s), value});
    }
    auto g = reinforce_gradient(m, rs, LikelihoodMode::FullBernoulli);
    for (const auto& e : m.spatial_support.edges())
        EXPECT_NEAR(g.spatial(e.src, e.dst), exact.spatial(e.src, e.dst), 0.05);
}

TEST(Reinforce, ZeroOffSupport) {
    auto m = init_masks(build_spatial(complete(), 4), Adjacency(4), 0.5);
    Rng rng(3);
    std::vector<Rollout> rs;
    for (int k = 0; k < 64; ++k) rs.push_back({sample_structure(m, rng), rng.uniform()});
    auto g = reinforce_gradient(m, rs, LikelihoodMode::PaperFaithful, BaselineMode::None);
    for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 4; ++j)
            if (!m.spatial_support(i, j)) EXPECT_EQ(g.spatial(i, j), 0.0);
}

TEST(NuclearNorm, Diagonal) {
    EXPECT_NEAR(nuclear_norm(Matrix::Identity(2, 2)), 2.0, 1e-15);
    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 3;
    d(1, 1) = 4;
    EXPECT_NEAR(nuclear_norm(d), 7.0, 1e-14);
    d(0, 0) = -3;
    EXPECT_NEAR(nuclear_norm(d), 7.0, 1e-14);
}

TEST(NuclearNorm, MatchesEigenOracle) {
    Rng rng(55);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix m = random_matrix(5, rng);
        EXPECT_NEAR(nuclear_norm(m), oracle::nuclear_norm_eigen(m), 1e-9);
    }
}

TEST(NuclearNorm, TriangleInequality) {
    Rng rng(56);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix a = random_matrix(6, rng), b = random_matrix(6, rng);
        EXPECT_LE(nuclear_norm(a + b), nuclear_norm(a) + nuclear_norm(b) + 1e-12);
        EXPECT_GE(nuclear_norm(a) + 1e-12, oracle::spectral_norm_eigen(a));
    }
}

TEST(NuclearNorm, NonFinite) {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 1) = std::nan("");
    EXPECT_THROW(nuclear_norm(m), Error);
}

TEST(Subgradient, Diagonal) {
    EXPECT_TRUE(nuclear_norm_subgradient(Matrix::Identity(3, 3)).isApprox(Matrix::Identity(3, 3)));
    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 3;
    d(1, 1) = 4;
    EXPECT_TRUE(nuclear_norm_subgradient(d).isApprox(Matrix::Identity(2, 2), 1e-12));
}

TEST(Subgradient, FiniteDifference) {
    Rng rng(7);
    const double h = 1e-6;
    for (int trial = 0; trial < 30; ++trial) {
        Matrix s = random_matrix(6, rng), d = random_matrix(6, rng);
        const double fd = (nuclear_norm(s + h * d) - nuclear_norm(s - h * d)) / (2 * h);
        const double inner = (nuclear_norm_subgradient(s).array() * d.array()).sum();
        EXPECT_NEAR(fd, inner, 1e-4);
    }
}

TEST(Projection, FixedPointAndRadiusZero) {
    auto a = build_spatial(complete(), 4);
    const Matrix ones = support_matrix(a);
    EXPECT_EQ(project_frobenius(ones, a, 0.3, 0.05, 0.99), ones);

    Matrix s = ones * 0.4;
    Matrix p = project_frobenius(s, a, 0.0, 0.05, 0.99);
    for (const auto& e : a.edges()) EXPECT_DOUBLE_EQ(p(e.src, e.dst), 0.99);
}

TEST(Projection, WithinRadiusPlusClampSlack) {
    Rng rng(12);
    auto a = build_temporal_full(5);
    const Matrix ones = support_matrix(a);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix s(5, 5);
        for (Eigen::Index i = 0; i < 25; ++i) s(i) = 0.05 + 0.94 * rng.uniform();
        const double delta = 2.0 * rng.uniform();
        Matrix p = project_frobenius(s, a, delta, 0.05, 0.99);
        // clamping 1 down to 0.99 adds at most 0.01 per entry
        EXPECT_LE((ones - p).norm(), delta + 0.01 * 5 + 1e-12);
        EXPECT_GE(p.minCoeff(), 0.05);
        EXPECT_LE(p.maxCoeff(), 1.0);
    }
}

TEST(OptimizerStep, FixedPointWithoutGradientOrPenalty) {
    auto m = init_masks(build_spatial(complete(), 4), build_temporal_full(4), 0.6);
    OptimizerConfig cfg;
    cfg.lambda_nuclear = 0.0;
    MaskGradient zero{Matrix::Zero(4, 4), Matrix::Zero(4, 4)};
    auto next = optimizer_step(m, zero, cfg);
    EXPECT_EQ(next.spatial, m.spatial);
    EXPECT_EQ(next.temporal, m.temporal);
}

TEST(OptimizerStep, NuclearNormNonIncreasing) {
    Rng rng(31);
    auto m = init_masks(build_temporal_full(5), build_temporal_full(5), 0.5);
    for (Eigen::Index i = 0; i < 25; ++i) {
        m.spatial(i) = 0.3 + 0.4 * rng.uniform();
        m.temporal(i) = 0.3 + 0.4 * rng.uniform();
    }
    OptimizerConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.lambda_nuclear = 0.5;
    cfg.delta = 100.0;
    MaskGradient zero{Matrix::Zero(5, 5), Matrix::Zero(5, 5)};
    double prev_s = nuclear_norm(m.spatial), prev_t = nuclear_norm(m.temporal);
    for (int step = 0; step < 50; ++step) {
        m = optimizer_step(m, zero, cfg);
        const double s = nuclear_norm(m.spatial), t = nuclear_norm(m.temporal);
        EXPECT_LE(s, prev_s + 1e-12) << "step " << step;
        EXPECT_LE(t, prev_t + 1e-12) << "step " << step;
        prev_s = s;
        prev_t = t;
    }
}

TEST(OptimizerStep, InvariantsHoldUnderRandomGradients) {
    Rng rng(41);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.index(6);
        auto m = init_masks(build_spatial(complete(), n), build_temporal_full(n), 0.5);
        const auto k = static_cast<Eigen::Index>(n);
        MaskGradient g{random_matrix(k, rng) * 10.0, random_matrix(k, rng) * 10.0};
        OptimizerConfig cfg;
        cfg.learning_rate = rng.uniform();
        cfg.lambda_nuclear = rng.uniform();
        m = optimizer_step(m, g, cfg);
        EXPECT_TRUE(support_invariants(m)) << "trial " << trial;
    }
}

TEST(OptimizerStep, ShapeMismatch) {
    auto m = init_masks(build_spatial(complete(), 3), build_temporal_full(3), 0.5);
    MaskGradient g{Matrix::Zero(2, 2), Matrix::Zero(3, 3)};
    EXPECT_THROW(optimizer_step(m, g, OptimizerConfig{}), Error);
}

TEST(DefaultDelta, HalfRootEdgeCount) {
    EXPECT_DOUBLE_EQ(default_delta(build_temporal_full(4)), 2.0);
}
