#pragma once

#include <functional>

#include <Eigen/Dense>

#include "cpf/errors.hpp"
#include "cpf/paths.hpp"

namespace cpf {

/// Rigid-body configuration: position and body-to-inertial rotation.
struct Pose {
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
};

/// Fixed body-frame point tracked against the desired path. Its first
/// component must be nonzero for the input coupling matrix to be invertible.
struct BodyOffset {
    Eigen::Vector3d eps = Eigen::Vector3d(-0.5, 0.0, 0.0);
};

/// Actuated degrees of freedom: forward speed plus pitch and yaw rates.
/// Roll rate and lateral/vertical velocities are structurally zero.
struct VehicleInput {
    double v1 = 0.0;  // m/s
    double w2 = 0.0;  // rad/s
    double w3 = 0.0;  // rad/s

    Eigen::Vector3d omega() const { return {0.0, w2, w3}; }
    Eigen::Vector3d as_vector() const { return {v1, w2, w3}; }
};

/// Skew-symmetric matrix of w, so that skew(w) * x == w.cross(x).
Eigen::Matrix3d skew(const Eigen::Vector3d& w);

struct PoseRates {
    Eigen::Vector3d p_dot;
    Eigen::Matrix3d R_dot;
};

/// Kinematics: p_dot = R [v1 0 0]', R_dot = R skew([0 w2 w3]).
PoseRates dynamics(const Pose& pose, const VehicleInput& u);

/// Frobenius norm of R'R - I.
double so3_defect(const Eigen::Matrix3d& R);

/// One Newton step of the symmetric orthonormalization R (R'R)^{-1/2},
/// R <- R (3I - R'R)/2. Applied once per integration step.
Eigen::Matrix3d reorthonormalize(const Eigen::Matrix3d& R);

/// Full continuous state of one agent: configuration, path parameter, and the
/// controller's internal deviation state.
struct AgentFlowState {
    Pose pose;
    double gamma = 0.0;
    double eta = 0.0;
};

/// Input channels feeding the flow at a given time/state. `u_gamma_aux` is the
/// sampled consensus feedforward and `g_speed` the common parameter speed;
/// gamma evolves as gamma_dot = g_speed + u_gamma_aux + eta and eta as
/// eta_dot = v_gamma.
struct FlowInputs {
    VehicleInput u;
    double v_gamma = 0.0;
    double u_gamma_aux = 0.0;
    double g_speed = 0.0;
};

/// Input signal, possibly a feedback law (evaluated at each integration stage).
using InputSignal = std::function<FlowInputs(double t, const AgentFlowState&)>;

/// Fixed-step RK4 over n_steps of size dt starting at t0. The rotation block
/// is re-orthonormalized after every step. Deterministic for identical inputs.
AgentFlowState integrate(const AgentFlowState& state, const InputSignal& signal, double t0,
                         double dt, int n_steps);

/// Body-frame tracking error y = R' (p + R eps - c_d(gamma)).
Eigen::Vector3d output_y(const Pose& pose, const BodyOffset& offset, const PathSpec& spec,
                         double gamma);

/// Closed-form time derivative of the output,
///   y_dot = -skew(w) y - R' c_d_gamma(gamma) gamma_dot + Delta u,
/// with Delta the input coupling matrix of the body offset.
Eigen::Vector3d output_rate(const Pose& pose, const VehicleInput& u, double gamma,
                            double gamma_dot, const BodyOffset& offset, const PathSpec& spec);

}  // namespace cpf
