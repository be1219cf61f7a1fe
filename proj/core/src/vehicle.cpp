#include "cpf/vehicle.hpp"

namespace cpf {

Eigen::Matrix3d skew(const Eigen::Vector3d& w)
{
    Eigen::Matrix3d m;
    m << 0.0, -w.z(), w.y(),
         w.z(), 0.0, -w.x(),
        -w.y(), w.x(), 0.0;
    return m;
}

PoseRates dynamics(const Pose& pose, const VehicleInput& u)
{
    PoseRates r;
    r.p_dot = pose.R.col(0) * u.v1;
    r.R_dot = pose.R * skew(u.omega());
    return r;
}

double so3_defect(const Eigen::Matrix3d& R)
{
    return (R.transpose() * R - Eigen::Matrix3d::Identity()).norm();
}

Eigen::Matrix3d reorthonormalize(const Eigen::Matrix3d& R)
{
    return R * (3.0 * Eigen::Matrix3d::Identity() - R.transpose() * R) * 0.5;
}

namespace {

struct FlowRates {
    Eigen::Vector3d dp;
    Eigen::Matrix3d dR;
    double dgamma;
    double deta;
};

FlowRates eval_rates(double t, const AgentFlowState& s, const InputSignal& signal)
{
    const FlowInputs in = signal(t, s);
    FlowRates r;
    r.dp = s.pose.R.col(0) * in.u.v1;
    r.dR = s.pose.R * skew(in.u.omega());
    r.dgamma = in.g_speed + in.u_gamma_aux + s.eta;
    r.deta = in.v_gamma;
    return r;
}

AgentFlowState step_from(const AgentFlowState& s, const FlowRates& r, double h)
{
    AgentFlowState out;
    out.pose.p = s.pose.p + h * r.dp;
    out.pose.R = s.pose.R + h * r.dR;
    out.gamma = s.gamma + h * r.dgamma;
    out.eta = s.eta + h * r.deta;
    return out;
}

}  // namespace

AgentFlowState integrate(const AgentFlowState& state, const InputSignal& signal, double t0,
                         double dt, int n_steps)
{
    if (!(dt > 0.0)) {
        throw ValidationError("integrate: dt must be > 0");
    }
    AgentFlowState s = state;
    double t = t0;
    for (int k = 0; k < n_steps; ++k) {
        const FlowRates k1 = eval_rates(t, s, signal);
        const FlowRates k2 = eval_rates(t + 0.5 * dt, step_from(s, k1, 0.5 * dt), signal);
        const FlowRates k3 = eval_rates(t + 0.5 * dt, step_from(s, k2, 0.5 * dt), signal);
        const FlowRates k4 = eval_rates(t + dt, step_from(s, k3, dt), signal);

        s.pose.p += dt / 6.0 * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp);
        s.pose.R += dt / 6.0 * (k1.dR + 2.0 * k2.dR + 2.0 * k3.dR + k4.dR);
        s.gamma += dt / 6.0 * (k1.dgamma + 2.0 * k2.dgamma + 2.0 * k3.dgamma + k4.dgamma);
        s.eta += dt / 6.0 * (k1.deta + 2.0 * k2.deta + 2.0 * k3.deta + k4.deta);
        s.pose.R = reorthonormalize(s.pose.R);
        t = t0 + (k + 1) * dt;
    }
    return s;
}

Eigen::Vector3d output_y(const Pose& pose, const BodyOffset& offset, const PathSpec& spec,
                         double gamma)
{
    const Eigen::Vector3d c = pose.p + pose.R * offset.eps;
    return pose.R.transpose() * (c - eval_path(spec, gamma));
}

Eigen::Vector3d output_rate(const Pose& pose, const VehicleInput& u, double gamma,
                            double gamma_dot, const BodyOffset& offset, const PathSpec& spec)
{
    const Eigen::Vector3d y = output_y(pose, offset, spec, gamma);
    const Eigen::Vector3d omega = u.omega();
    // Delta u expanded as [v1 0 0]' + omega x eps.
    const Eigen::Vector3d delta_u =
        Eigen::Vector3d(u.v1, 0.0, 0.0) + omega.cross(offset.eps);
    return -omega.cross(y) -
           pose.R.transpose() * eval_path_derivative(spec, gamma) * gamma_dot + delta_u;
}

}  // namespace cpf
