#include "cpf/graph.hpp"

#include <random>

#include <gtest/gtest.h>

using namespace cpf;

namespace {

// The 3-agent chain used throughout: 2 talks to 1 and 3, 1 and 3 only to 2.
CommGraph chain3()
{
    return CommGraph(3, {{0, 1, 1.0}, {1, 0, 1.0}, {1, 2, 1.0}, {2, 1, 1.0}});
}

CommGraph complete3(double w)
{
    return CommGraph(3, {{0, 1, w}, {0, 2, w}, {1, 0, w}, {1, 2, w}, {2, 0, w}, {2, 1, w}});
}

Eigen::VectorXd vec3(double a, double b, double c)
{
    Eigen::VectorXd v(3);
    v << a, b, c;
    return v;
}

}  // namespace

TEST(CommGraph, RejectsInvalidEdges)
{
    EXPECT_THROW(CommGraph(2, {{0, 0, 1.0}}), ValidationError);   // self-edge
    EXPECT_THROW(CommGraph(2, {{0, 1, 0.0}}), ValidationError);   // zero weight
    EXPECT_THROW(CommGraph(2, {{0, 1, -1.0}}), ValidationError);  // negative weight
    EXPECT_THROW(CommGraph(2, {{0, 2, 1.0}}), ValidationError);   // out of range
    EXPECT_THROW(CommGraph(2, {{0, 1, 1.0}, {0, 1, 2.0}}), ValidationError);  // duplicate
}

TEST(CommGraph, BalanceAndConnectivity)
{
    EXPECT_TRUE(chain3().is_balanced());
    EXPECT_TRUE(chain3().is_strongly_connected());

    const CommGraph one_way(2, {{0, 1, 1.0}});
    EXPECT_FALSE(one_way.is_balanced());
    EXPECT_FALSE(one_way.is_strongly_connected());

    const CommGraph cycle(3, {{0, 1, 1.0}, {1, 2, 1.0}, {2, 0, 1.0}});
    EXPECT_TRUE(cycle.is_balanced());
    EXPECT_TRUE(cycle.is_strongly_connected());

    const CommGraph empty2(2, {});
    EXPECT_TRUE(empty2.is_balanced());
    EXPECT_FALSE(empty2.is_strongly_connected());
    EXPECT_TRUE(empty2.is_isolated(0));
    EXPECT_FALSE(chain3().is_isolated(1));
}

TEST(MaxDegree, ChainSingleAndComplete)
{
    EXPECT_DOUBLE_EQ(max_degree(chain3()), 2.0);
    EXPECT_DOUBLE_EQ(max_degree(CommGraph(1, {})), 0.0);
    EXPECT_DOUBLE_EQ(max_degree(complete3(0.5)), 1.0);
}

TEST(Laplacian, ChainMatrixAndSpectrum)
{
    Eigen::Matrix3d expected;
    expected << 1, -1, 0,
                -1, 2, -1,
                0, -1, 1;
    const Eigen::MatrixXd l = laplacian(chain3());
    EXPECT_LT((l - expected).norm(), 1e-15);
    EXPECT_LT(l.rowwise().sum().norm(), 1e-12);

    // Characteristic polynomial roots of the chain Laplacian.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(l);
    EXPECT_NEAR(es.eigenvalues()(0), 0.0, 1e-12);
    EXPECT_NEAR(es.eigenvalues()(1), 1.0, 1e-12);
    EXPECT_NEAR(es.eigenvalues()(2), 3.0, 1e-12);

    EXPECT_LT(laplacian(CommGraph(2, {})).norm(), 1e-300);
    EXPECT_NEAR(lambda2(chain3()), 1.0, 1e-12);
}

TEST(Laplacian, RowSumsVanishOnRandomGraphs)
{
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> wdist(0.1, 3.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 7);
        std::vector<GraphEdge> edges;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (i != j && rng() % 2 == 0) edges.push_back({i, j, wdist(rng)});
            }
        }
        const Eigen::MatrixXd l = laplacian(CommGraph(n, edges));
        EXPECT_LT(l.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Perron, ChainWithNominalGain)
{
    Eigen::Matrix3d expected;
    expected << 0.9875, 0.0125, 0,
                0.0125, 0.975, 0.0125,
                0, 0.0125, 0.9875;
    const Eigen::MatrixXd p = perron(chain3(), {0.0125});
    EXPECT_LT((p - expected).norm(), 1e-15);

    // Balanced graph: doubly stochastic.
    EXPECT_LT((p.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
    EXPECT_LT((p.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Perron, TinyGainStaysNearIdentity)
{
    const Eigen::MatrixXd p = perron(chain3(), {1e-9});
    EXPECT_LT((p - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Perron, GainRangeEnforced)
{
    EXPECT_THROW(perron(chain3(), {0.0}), ValidationError);
    EXPECT_THROW(perron(chain3(), {0.5}), ValidationError);   // 1/max_degree
    EXPECT_THROW(perron(chain3(), {0.6}), ValidationError);
    EXPECT_THROW(perron(chain3(), {-0.1}), ValidationError);
    EXPECT_NO_THROW(perron(chain3(), {0.49}));
}

TEST(VerifyPerron, NominalGainAllFlags)
{
    const PerronReport rep = verify_perron(chain3(), {0.0125});
    EXPECT_TRUE(rep.nonnegative);
    EXPECT_TRUE(rep.row_stochastic);
    EXPECT_TRUE(rep.doubly_stochastic);
    EXPECT_TRUE(rep.spectrum_in_unit_disk);
    EXPECT_TRUE(rep.has_unit_eigenvalue);
    EXPECT_TRUE(rep.primitive);
    EXPECT_TRUE(rep.all_ok());
}

TEST(VerifyPerron, BoundaryGainSpectrum)
{
    // eps at 1/max_degree: spectrum of I - 0.5 L is {1, 0.5, -0.5}; the strict
    // gain range is not required for the report itself.
    const PerronReport rep = verify_perron(chain3(), {0.5});
    ASSERT_EQ(rep.eigenvalue_moduli.size(), 3u);
    EXPECT_NEAR(rep.max_modulus, 1.0, 1e-12);
    EXPECT_NEAR(rep.eigenvalue_moduli[1], 0.5, 1e-12);
    EXPECT_NEAR(rep.eigenvalue_moduli[2], 0.5, 1e-12);
    EXPECT_TRUE(rep.spectrum_in_unit_disk);
    EXPECT_TRUE(rep.row_stochastic);
}

TEST(VerifyPerron, DisconnectedGraphNotPrimitive)
{
    const PerronReport rep = verify_perron(CommGraph(2, {}), {0.1});
    EXPECT_FALSE(rep.primitive);  // P = I has a repeated max-modulus eigenvalue
    EXPECT_TRUE(rep.row_stochastic);

    // A single node is trivially primitive (P = [1]).
    EXPECT_TRUE(verify_perron(CommGraph(1, {}), {0.1}).primitive);
}

TEST(ConsensusLaw, ChainExamples)
{
    const CommGraph g = chain3();
    const ConsensusGain gain{0.0125};

    EXPECT_DOUBLE_EQ(consensus_law(g, gain, 1, 0.0, {{0, 0.0}, {2, 3.0}}), 0.0375);

    // Consensus fixed point returns exactly zero.
    EXPECT_EQ(consensus_law(g, gain, 1, 7.0, {{0, 7.0}, {2, 7.0}}), 0.0);
    EXPECT_EQ(consensus_law(g, gain, 0, 15.0, {{1, 15.0}}), 0.0);

    EXPECT_THROW(consensus_law(g, gain, 1, 0.0, {{0, 0.0}}), ValidationError);
    EXPECT_THROW(consensus_law(g, gain, 1, 0.0, {{0, 0.0}, {1, 1.0}, {2, 3.0}}),
                 ValidationError);
}

TEST(Disagreement, ChainExamples)
{
    const CommGraph g = chain3();

    const DisagreementSnapshot a = disagreement(vec3(1, 2, 3), g);
    EXPECT_DOUBLE_EQ(a.phi, 4.0);  // four directed edges, each difference 1

    const DisagreementSnapshot b = disagreement(vec3(5, 5, 5), g);
    EXPECT_EQ(b.phi, 0.0);
    EXPECT_EQ(b.delta.norm(), 0.0);

    const DisagreementSnapshot c = disagreement(vec3(0, 3, 0), g);
    EXPECT_DOUBLE_EQ(c.alpha, 1.0);
    EXPECT_DOUBLE_EQ(c.delta(0), -1.0);
    EXPECT_DOUBLE_EQ(c.delta(1), 2.0);
    EXPECT_DOUBLE_EQ(c.delta(2), -1.0);

    EXPECT_NEAR(c.delta.sum(), 0.0, 1e-12);
}

TEST(Disagreement, PhiZeroIffConsensusOnConnectedGraph)
{
    const CommGraph g = chain3();
    std::mt19937 rng(97);
    std::normal_distribution<double> dist;
    for (int k = 0; k < 200; ++k) {
        const Eigen::VectorXd v = 10.0 * vec3(dist(rng), dist(rng), dist(rng));
        const DisagreementSnapshot s = disagreement(v, g);
        EXPECT_GE(s.phi, 0.0);
        EXPECT_EQ(s.phi < 1e-18, at_consensus(v, 1e-9) || (v.maxCoeff() - v.minCoeff()) < 1e-9);
    }
    EXPECT_EQ(disagreement(vec3(3, 3, 3), g).phi, 0.0);
}

TEST(Disagreement, PhiInvariantUnderCommonShift)
{
    const CommGraph g = chain3();
    const Eigen::VectorXd v = vec3(1.0, 2.0, 3.0);
    const double shift = 100.0;
    EXPECT_EQ(disagreement(v, g).phi, disagreement(v.array() + shift, g).phi);
}

TEST(Disagreement, QuadraticFormContraction)
{
    // delta' P delta <= mu2 ||delta||^2 on mean-zero vectors.
    const CommGraph g = chain3();
    const ConsensusGain gain{0.0125};
    const Eigen::MatrixXd p = perron(g, gain);
    const double m2 = mu2(g, gain);
    EXPECT_NEAR(m2, 0.9875, 1e-12);

    std::mt19937 rng(42);
    std::normal_distribution<double> dist;
    for (int k = 0; k < 1000; ++k) {
        Eigen::VectorXd d = vec3(dist(rng), dist(rng), dist(rng));
        d.array() -= d.mean();
        EXPECT_LE(d.dot(p * d), m2 * d.squaredNorm() + 1e-12);
    }
}

TEST(IssStepCheck, ConstantsAndPureContraction)
{
    const CommGraph g = chain3();
    const ConsensusGain gain{0.0125};
    const Eigen::MatrixXd p = perron(g, gain);

    const Eigen::VectorXd xi = vec3(15, 10, 5);
    const Eigen::VectorXd eta0 = Eigen::VectorXd::Zero(3);
    const Eigen::VectorXd xi1 = p * xi;

    const IssStepReport rep = iss_step_check(g, gain, xi, eta0, xi1);
    EXPECT_TRUE(rep.pass);
    EXPECT_NEAR(rep.lambda_phi, 0.012421875, 1e-12);
    EXPECT_NEAR(rep.mu2, 0.9875, 1e-12);

    // At consensus with no disturbance both sides stay zero.
    const Eigen::VectorXd c = vec3(2, 2, 2);
    const IssStepReport flat = iss_step_check(g, gain, c, eta0, p * c);
    EXPECT_TRUE(flat.pass);
    EXPECT_NEAR(flat.phi_k, 0.0, 1e-18);
    EXPECT_NEAR(flat.phi_k1, 0.0, 1e-18);
}

TEST(IssStepCheck, HoldsAlongDisturbedRuns)
{
    const CommGraph g = chain3();
    const ConsensusGain gain{0.0125};
    const Eigen::MatrixXd p = perron(g, gain);

    std::mt19937 rng(3);
    std::normal_distribution<double> dist;
    Eigen::VectorXd xi = vec3(15, 10, 5);
    for (int k = 0; k < 100; ++k) {
        const Eigen::VectorXd eta =
            0.5 * std::exp(-0.05 * k) * vec3(dist(rng), dist(rng), dist(rng));
        const Eigen::VectorXd xi1 = p * xi + eta;
        EXPECT_TRUE(iss_step_check(g, gain, xi, eta, xi1).pass);
        xi = xi1;
    }
}

TEST(IssStepCheck, RequiresBalancedConnectedGraph)
{
    const CommGraph one_way(2, {{0, 1, 1.0}});
    const Eigen::VectorXd xi = Eigen::VectorXd::Zero(2);
    EXPECT_THROW(iss_step_check(one_way, {0.1}, xi, xi, xi), ValidationError);
}

TEST(ConsensusDecay, UndisturbedGeometricBound)
{
    const CommGraph g = chain3();
    const ConsensusGain gain{0.0125};
    const Eigen::MatrixXd p = perron(g, gain);
    const double m2 = mu2(g, gain);

    Eigen::VectorXd xi = vec3(15, 10, 5);
    const double phi0 = disagreement(xi, g).delta.squaredNorm();
    double phi_prev = phi0;
    for (int k = 1; k <= 200; ++k) {
        xi = p * xi;
        const double phi = disagreement(xi, g).delta.squaredNorm();
        EXPECT_LE(phi, phi_prev + 1e-15);
        EXPECT_LE(phi, std::pow(m2, 2 * k) * phi0 + 1e-12);
        phi_prev = phi;
    }
}

TEST(ConsensusDecay, DisturbedRunReachesBoundedTarget)
{
    // Iterate the recursion bound B(k+1) = (1-lambda_phi) B(k) + c ||delta_eta||^2
    // to find the first K with B(K) < 1e-6, then the realized Phi must be there.
    const CommGraph g = chain3();
    const ConsensusGain gain{0.0125};
    const Eigen::MatrixXd p = perron(g, gain);

    const double m2 = mu2(g, gain);
    const double lambda_phi = 0.5 * (1.0 - m2 * m2);
    const double a = std::sqrt(0.5 * (1.0 - m2 * m2));
    const double b = -m2 / a;
    const double c = b * b + 1.0;

    const double a_eta = 0.3, lambda_eta = 0.2;
    auto eta_at = [&](int k) -> Eigen::VectorXd {
        return a_eta * std::exp(-lambda_eta * k) * vec3(1.0, -0.5, 0.25);
    };

    Eigen::VectorXd xi = vec3(15, 10, 5);
    double bound = disagreement(xi, g).delta.squaredNorm();
    int k = 0;
    while (bound >= 1e-6 && k < 100000) {
        const Eigen::VectorXd eta = eta_at(k);
        const Eigen::VectorXd delta_eta = eta.array() - eta.mean();
        xi = p * xi + eta;
        bound = (1.0 - lambda_phi) * bound + c * delta_eta.squaredNorm();
        ++k;
    }
    ASSERT_LT(k, 100000);
    EXPECT_LT(disagreement(xi, g).delta.squaredNorm(), 1e-6);
}

TEST(BetaEnvelope, DecaysAndDominates)
{
    const CommGraph g = chain3();
    const ConsensusGain gain{0.0125};

    // Non-increasing in s on a grid, for several r.
    for (double r : {0.0, 1.0, 30.0}) {
        double prev = std::numeric_limits<double>::infinity();
        for (double s = 0.0; s <= 400.0; s += 7.0) {
            const double v = beta_envelope(r, s, g, gain, 1.0, 0.5);
            EXPECT_LE(v, prev + 1e-15);
            prev = v;
        }
    }

    // Large s drives the envelope to zero.
    EXPECT_LT(beta_envelope(30.0, 5e4, g, gain, 1.0, 0.5), 1e-12);

    // r = 0 leaves the residual disturbance term only, independent of r's value.
    const double resid = beta_envelope(0.0, 10.0, g, gain, 1.0, 0.5);
    EXPECT_GT(resid, 0.0);
    const double with_r = beta_envelope(2.0, 10.0, g, gain, 1.0, 0.5);
    EXPECT_GT(with_r, resid);

    // With no disturbance at all the envelope is the pure geometric term.
    EXPECT_EQ(beta_envelope(0.0, 10.0, g, gain, 1.0, 0.0), 0.0);
}

TEST(BetaEnvelope, BoundsConsensusActionAlongRuns)
{
    const CommGraph g = chain3();
    const ConsensusGain gain{0.0125};
    const Eigen::MatrixXd p = perron(g, gain);

    Eigen::VectorXd xi = vec3(15, 10, 5);
    const double r0 = xi.cwiseAbs().sum();
    for (int k = 0; k < 400; ++k) {
        for (int i = 0; i < 3; ++i) {
            std::map<int, double> nbrs;
            for (int j : g.neighbors(i)) nbrs[j] = xi(j);
            const double kcon = consensus_law(g, gain, i, xi(i), nbrs);
            EXPECT_LE(std::abs(kcon), beta_envelope(r0, k, g, gain, 1.0, 0.0) + 1e-12);
        }
        xi = p * xi;
    }
}

TEST(AtConsensus, SpreadTolerance)
{
    EXPECT_TRUE(at_consensus(vec3(1.0, 1.0, 1.0 + 1e-10)));
    EXPECT_FALSE(at_consensus(vec3(1.0, 1.0, 1.0 + 1e-8)));
}
