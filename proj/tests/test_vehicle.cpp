#include "cpf/vehicle.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

using namespace cpf;

namespace {

Eigen::Matrix3d rot_z(double a)
{
    return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

Eigen::Matrix3d random_rotation(std::mt19937& rng)
{
    std::normal_distribution<double> dist;
    const Eigen::Quaterniond q =
        Eigen::Quaterniond(dist(rng), dist(rng), dist(rng), dist(rng)).normalized();
    return q.toRotationMatrix();
}

PathSpec sinusoid_path()
{
    PathSpec p;
    p.kind = PathKind::SinusoidOffsetLine;
    p.direction = Eigen::Vector3d::UnitX();
    p.amplitude = 1.0;
    p.spatial_frequency = 0.25;
    return p;
}

InputSignal constant_signal(const FlowInputs& in)
{
    return [in](double, const AgentFlowState&) { return in; };
}

}  // namespace

TEST(Skew, DefinitionAndCrossProduct)
{
    Eigen::Matrix3d expected;
    expected << 0, -3, 2,
                3, 0, 0,
                -2, 0, 0;
    EXPECT_LT((skew({0, 2, 3}) - expected).norm(), 1e-15);
    EXPECT_EQ(skew(Eigen::Vector3d::Zero()).norm(), 0.0);

    std::mt19937 rng(17);
    std::normal_distribution<double> dist;
    for (int k = 0; k < 100; ++k) {
        const Eigen::Vector3d w(dist(rng), dist(rng), dist(rng));
        const Eigen::Vector3d x(dist(rng), dist(rng), dist(rng));
        EXPECT_LT((skew(w) * x - w.cross(x)).norm(), 1e-14);
        EXPECT_LT((skew(w) * w).norm(), 1e-14);
        EXPECT_LT((skew(w) + skew(w).transpose()).norm(), 1e-15);
    }
}

TEST(Dynamics, BodyFrameKinematics)
{
    Pose pose;  // identity
    const PoseRates a = dynamics(pose, {1.0, 0.0, 0.0});
    EXPECT_LT((a.p_dot - Eigen::Vector3d(1, 0, 0)).norm(), 1e-15);
    EXPECT_EQ(a.R_dot.norm(), 0.0);

    const PoseRates b = dynamics(pose, {0.0, 0.0, 0.0});
    EXPECT_EQ(b.p_dot.norm(), 0.0);
    EXPECT_EQ(b.R_dot.norm(), 0.0);

    pose.R = rot_z(M_PI / 2.0);
    const PoseRates c = dynamics(pose, {2.0, 0.0, 0.0});
    EXPECT_LT((c.p_dot - Eigen::Vector3d(0, 2, 0)).norm(), 1e-12);
}

TEST(Integrate, GammaFlowIsExact)
{
    AgentFlowState s;
    s.gamma = 0.0;
    const auto out = integrate(s, constant_signal({{}, 0.0, 0.0, 2.0}), 0.0, 1e-3, 1000);
    EXPECT_NEAR(out.gamma, 2.0, 1e-12);
    EXPECT_EQ(out.pose.p.norm(), 0.0);
    EXPECT_LT((out.pose.R - Eigen::Matrix3d::Identity()).norm(), 1e-15);
}

TEST(Integrate, EtaExponentialDecay)
{
    AgentFlowState s;
    s.eta = 1.0;
    const InputSignal sig = [](double, const AgentFlowState& st) {
        return FlowInputs{{}, -1.0 * st.eta, 0.0, 0.0};
    };
    const auto out = integrate(s, sig, 0.0, 1e-3, 1000);
    EXPECT_NEAR(out.eta, std::exp(-1.0), 1e-9);
}

TEST(Integrate, RotationFlowClosedForm)
{
    AgentFlowState s;
    const auto out = integrate(s, constant_signal({{1.0, 0.0, M_PI}, 0, 0, 0}), 0.0, 1e-3, 2000);
    // Full turn about the body z axis in 2 s.
    EXPECT_LT((out.pose.R - Eigen::Matrix3d::Identity()).norm(), 1e-7);
    EXPECT_LT(so3_defect(out.pose.R), 1e-9);
}

TEST(Integrate, Rk4FourthOrderOnRotationFlow)
{
    // Error against the closed-form rotation flow must shrink ~16x per halving.
    auto run = [](double dt) {
        AgentFlowState s;
        const int steps = static_cast<int>(std::llround(2.0 / dt));
        const auto out =
            integrate(s, constant_signal({{0.0, 0.0, M_PI}, 0, 0, 0}), 0.0, dt, steps);
        return (out.pose.R - Eigen::Matrix3d::Identity()).norm();
    };
    const double e1 = run(0.02);
    const double e2 = run(0.01);
    ASSERT_GT(e1, 1e-12);  // above the roundoff floor
    const double ratio = e1 / e2;
    EXPECT_GT(ratio, 12.0);
    EXPECT_LT(ratio, 20.0);
}

TEST(Integrate, StaysOnSo3)
{
    std::mt19937 rng(29);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    AgentFlowState s;
    const InputSignal sig = [&](double t, const AgentFlowState&) {
        return FlowInputs{{1.5, std::sin(t), std::cos(0.7 * t)}, 0.1, 0.0, 2.0};
    };
    auto out = integrate(s, sig, 0.0, 1e-3, 20000);
    EXPECT_LT(so3_defect(out.pose.R), 1e-9);
    EXPECT_GT(out.pose.R.determinant(), 0.0);
}

TEST(OutputY, OffsetAndInvariance)
{
    Pose pose;
    pose.p = Eigen::Vector3d(1, 0, 0);
    const BodyOffset off{Eigen::Vector3d(-0.5, 0, 0)};
    PathSpec degenerate;  // line through origin, evaluated at gamma = 0
    degenerate.kind = PathKind::Line;
    degenerate.allow_unbounded = true;

    EXPECT_LT((output_y(pose, off, degenerate, 0.0) - Eigen::Vector3d(0.5, 0, 0)).norm(), 1e-15);

    // Exactly on the tracked point: zero output for any attitude.
    std::mt19937 rng(31);
    for (int k = 0; k < 50; ++k) {
        Pose q;
        q.R = random_rotation(rng);
        const double gamma = 3.0;
        const Eigen::Vector3d target = eval_path(degenerate, gamma);
        q.p = target - q.R * off.eps;
        EXPECT_LT(output_y(q, off, degenerate, gamma).norm(), 1e-12);
    }
}

TEST(OutputY, NormEqualsInertialError)
{
    const BodyOffset off{Eigen::Vector3d(-0.5, 0.2, -0.1)};
    const PathSpec path = sinusoid_path();
    std::mt19937 rng(37);
    std::normal_distribution<double> dist;
    for (int k = 0; k < 200; ++k) {
        Pose pose;
        pose.R = random_rotation(rng);
        pose.p = Eigen::Vector3d(dist(rng), dist(rng), dist(rng)) * 5.0;
        const double gamma = 4.0 * dist(rng);
        const Eigen::Vector3d c = pose.p + pose.R * off.eps;
        const double inertial = (c - eval_path(path, gamma)).norm();
        EXPECT_NEAR(output_y(pose, off, path, gamma).norm(), inertial, 1e-12);
    }
}

TEST(OutputRate, ZeroCases)
{
    Pose pose;
    pose.p = Eigen::Vector3d(2, 1, 0);
    const BodyOffset off{Eigen::Vector3d(-0.5, 0, 0)};
    const PathSpec path = sinusoid_path();
    // No motion at all: y_dot = -skew(0) y = 0.
    EXPECT_LT(output_rate(pose, {}, 1.0, 0.0, off, path).norm(), 1e-15);
}

TEST(OutputRate, MatchesFiniteDifferencesAlongTrajectories)
{
    const BodyOffset off{Eigen::Vector3d(-0.5, 0, 0)};
    const PathSpec path = sinusoid_path();
    std::mt19937 rng(41);
    std::uniform_real_distribution<double> u(-1.0, 1.0);

    for (int traj = 0; traj < 10; ++traj) {
        const VehicleInput in{1.0 + u(rng), u(rng), u(rng)};
        const double v_gamma_aux = 0.3 * u(rng);
        AgentFlowState s;
        s.pose.p = Eigen::Vector3d(u(rng), u(rng), u(rng));
        s.pose.R = random_rotation(rng);
        s.gamma = 2.0 * u(rng);
        s.eta = 0.0;

        const InputSignal sig = [&](double, const AgentFlowState&) {
            return FlowInputs{in, 0.0, v_gamma_aux, 2.0};
        };
        // Central difference around the state one step ahead.
        const double dt = 1e-5;
        const auto mid = integrate(s, sig, 0.0, dt, 1);
        const auto fwd = integrate(mid, sig, dt, dt, 1);

        const Eigen::Vector3d y0 = output_y(s.pose, off, path, s.gamma);
        const Eigen::Vector3d y2 = output_y(fwd.pose, off, path, fwd.gamma);
        const Eigen::Vector3d numeric = (y2 - y0) / (2.0 * dt);

        const double gamma_dot = 2.0 + v_gamma_aux + mid.eta;
        const Eigen::Vector3d analytic =
            output_rate(mid.pose, in, mid.gamma, gamma_dot, off, path);
        EXPECT_LT((analytic - numeric).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(Integrate, RejectsNonpositiveStep)
{
    AgentFlowState s;
    EXPECT_THROW(integrate(s, constant_signal({}), 0.0, 0.0, 1), ValidationError);
}
