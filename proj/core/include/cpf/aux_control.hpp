#pragma once

#include <map>

#include <Eigen/Dense>

#include "cpf/graph.hpp"
#include "cpf/paths.hpp"
#include "cpf/vehicle.hpp"

namespace cpf {

/// Tuning of the auxiliary regulation law: output gain K (symmetric positive
/// definite), desired path-parameter speed, and the decay rate of the internal
/// deviation state.
struct AuxGains {
    Eigen::Matrix3d K = 0.2 * Eigen::Matrix3d::Identity();
    double v_d = 2.0;        // unit gamma per s
    double lambda_eta = 1.0; // 1/s
};

/// Throws unless K is symmetric positive definite and lambda_eta > 0.
void validate_gains(const AuxGains& gains);

double lambda_min_K(const AuxGains& gains);

/// Input coupling matrix of the body offset and its analytic inverse:
///   Delta = [1 e3 -e2; 0 0 e1; 0 -e1 0].
/// Invertible iff eps(0) != 0.
struct DeltaMatrix {
    Eigen::Matrix3d delta;
    Eigen::Matrix3d inverse;
};

DeltaMatrix delta_matrix(const BodyOffset& offset);

/// Saturated auxiliary regulation law. Away from the path it steers the output
/// along -K y/||y||; the switch to the second branch is widened from ||y|| = 0
/// to ||y|| <= y_switch to avoid dividing by a vanishing norm.
VehicleInput k_aux(double t, const Pose& pose, double gamma, double u_gamma,
                   const PathSpec& spec, const AuxGains& gains, const BodyOffset& offset,
                   double y_switch = 1e-9);

/// Componentwise box guaranteed to contain every k_aux output with
/// |u_gamma| <= r_eta:
///   bound_i = ||row_i(Delta^-1)|| * (|v_d| + r_eta) * sup||c_d_gamma||
///           + ||row_i(Delta^-1 K)||.
struct InputBounds {
    double v_max = 0.0;
    double w2_max = 0.0;
    double w3_max = 0.0;

    Eigen::Vector3d as_vector() const { return {v_max, w2_max, w3_max}; }
};

InputBounds aux_input_bounds(const PathSpec& spec, const BodyOffset& offset,
                             const AuxGains& gains, double r_eta);

/// Finite-time decay envelope of the output norm under k_aux:
///   ||y|| <= max(y0_norm - lambda_min(K) * (tau - t), 0).
double finite_time_envelope(double y0_norm, const AuxGains& gains, double tau_minus_t);

/// Sampled-data consensus feedforward: constant value k_con/delta_k on
/// [t_k, t_k + delta_k], identically zero afterwards. Its integral over the
/// active window equals the discrete consensus action exactly.
struct AuxConsensusSignal {
    double value = 0.0;
    double start_time = 0.0;
    double active_until = 0.0;

    double eval(double tau) const
    {
        // The window is closed at both ends; the small relative slack keeps
        // integration stages that land on the boundary (up to grid roundoff)
        // inside it.
        const double slack = 1e-9 * (active_until - start_time);
        return (tau >= start_time - slack && tau <= active_until + slack) ? value : 0.0;
    }
};

AuxConsensusSignal aux_consensus_signal(double t_k, double delta_k, const CommGraph& g,
                                        ConsensusGain gain, int agent, double gamma_i,
                                        const std::map<int, double>& gamma_neighbors);

}  // namespace cpf
