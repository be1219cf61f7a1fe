#include "cpf/aux_control.hpp"

#include <cmath>

namespace cpf {

void validate_gains(const AuxGains& gains)
{
    if ((gains.K - gains.K.transpose()).norm() > 1e-12) {
        throw ValidationError("gains.K: must be symmetric");
    }
    Eigen::LLT<Eigen::Matrix3d> llt(gains.K);
    if (llt.info() != Eigen::Success) {
        throw ValidationError("gains.K: must be positive definite");
    }
    if (!(gains.lambda_eta > 0.0)) {
        throw ValidationError("gains.lambda_eta: must be > 0");
    }
}

double lambda_min_K(const AuxGains& gains)
{
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(gains.K);
    return es.eigenvalues()(0);
}

DeltaMatrix delta_matrix(const BodyOffset& offset)
{
    const double e1 = offset.eps.x();
    const double e2 = offset.eps.y();
    const double e3 = offset.eps.z();
    if (e1 == 0.0) {
        throw ValidationError("offset.eps: first component must be nonzero (input coupling singular)");
    }
    DeltaMatrix d;
    d.delta << 1.0, e3, -e2,
               0.0, 0.0, e1,
               0.0, -e1, 0.0;
    d.inverse << 1.0, e2 / e1, e3 / e1,
                 0.0, 0.0, -1.0 / e1,
                 0.0, 1.0 / e1, 0.0;
    return d;
}

VehicleInput k_aux(double /*t*/, const Pose& pose, double gamma, double u_gamma,
                   const PathSpec& spec, const AuxGains& gains, const BodyOffset& offset,
                   double y_switch)
{
    const DeltaMatrix d = delta_matrix(offset);
    const Eigen::Vector3d y = output_y(pose, offset, spec, gamma);
    const Eigen::Vector3d feedforward =
        pose.R.transpose() * eval_path_derivative(spec, gamma) * (gains.v_d + u_gamma);

    Eigen::Vector3d rhs = feedforward;
    const double yn = y.norm();
    if (yn > y_switch) {
        rhs -= gains.K * (y / yn);
    }
    const Eigen::Vector3d u = d.inverse * rhs;
    return VehicleInput{u.x(), u.y(), u.z()};
}

InputBounds aux_input_bounds(const PathSpec& spec, const BodyOffset& offset,
                             const AuxGains& gains, double r_eta)
{
    const DeltaMatrix d = delta_matrix(offset);
    const double n_bar = (std::abs(gains.v_d) + r_eta) * path_derivative_bound(spec);
    const Eigen::Matrix3d dk = d.inverse * gains.K;

    InputBounds b;
    b.v_max = d.inverse.row(0).norm() * n_bar + dk.row(0).norm();
    b.w2_max = d.inverse.row(1).norm() * n_bar + dk.row(1).norm();
    b.w3_max = d.inverse.row(2).norm() * n_bar + dk.row(2).norm();
    return b;
}

double finite_time_envelope(double y0_norm, const AuxGains& gains, double tau_minus_t)
{
    if (y0_norm < 0.0 || tau_minus_t < 0.0) {
        throw ValidationError("finite_time_envelope: arguments must be non-negative");
    }
    return std::max(y0_norm - lambda_min_K(gains) * tau_minus_t, 0.0);
}

AuxConsensusSignal aux_consensus_signal(double t_k, double delta_k, const CommGraph& g,
                                        ConsensusGain gain, int agent, double gamma_i,
                                        const std::map<int, double>& gamma_neighbors)
{
    if (!(delta_k > 0.0)) {
        throw ValidationError("aux_consensus_signal: delta_k must be > 0");
    }
    AuxConsensusSignal s;
    s.value = consensus_law(g, gain, agent, gamma_i, gamma_neighbors) / delta_k;
    s.start_time = t_k;
    s.active_until = t_k + delta_k;
    return s;
}

}  // namespace cpf
