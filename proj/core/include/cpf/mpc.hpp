#pragma once

#include <map>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "cpf/aux_control.hpp"
#include "cpf/graph.hpp"
#include "cpf/paths.hpp"
#include "cpf/vehicle.hpp"

namespace cpf {

/// Weights and discretization of the finite-horizon problem. Q penalizes the
/// output, U the deviation of the applied input from the auxiliary law, Qc/Uc
/// the internal deviation state and its rate. m_eta scales the quadratic
/// terminal cost on eta and must satisfy Qc + lambda_eta^2 Uc <= m_eta
/// lambda_eta for the terminal controller to dominate the consensus stage
/// cost. a_eta/lambda_eta_env parameterize the exponential tube |eta| may not
/// leave; the defaults keep it inactive without disabling it.
struct MpcWeights {
    Eigen::Matrix3d Q = 100.0 * Eigen::Matrix3d::Identity();
    Eigen::Matrix3d U = Eigen::Matrix3d::Identity();
    double Qc = 1.0;
    double Uc = 1.0;
    double m_eta = 2.0;
    double lambda_eta = 1.0;
    double a_eta = 1e3;
    double lambda_eta_env = 1e-3;
    double r_eta = 1.0;
    double T = 0.4;      // horizon, s
    int n_segments = 8;  // piecewise-constant input segments over the horizon
    int substeps = 4;    // RK4 steps per segment (even, also the quadrature grid)
};

void validate_weights(const MpcWeights& w);

/// Common path-parameter speed g(t): constant v_d, or a piecewise-linear
/// table of (t, value) points when non-constant profiles are wanted.
struct SpeedSpec {
    double v_d = 2.0;
    std::vector<std::pair<double, double>> table;

    double eval(double t) const;
    bool is_constant() const { return table.empty(); }
};

/// Everything that stays fixed for one agent across samples: geometry,
/// auxiliary gains, weights, and the constraint boxes.
struct AgentModel {
    PathSpec path;
    BodyOffset offset;
    AuxGains gains;
    MpcWeights weights;
    InputBounds input_box;                      // |v1|, |w2|, |w3| bounds
    double v_gamma_max = 1.0;                   // |v_gamma| bound
    std::optional<Eigen::Vector3d> output_box;  // optional |y_i| bounds
};

/// Validates the model invariants: gains, weights, the input box containing
/// the auxiliary-law box, and the v_gamma box containing the ball of radius
/// r_eta * lambda_eta.
void validate_model(const AgentModel& model);

/// Data available to one agent at a sample instant: its own state plus the
/// coordination values of its neighbors. Nothing else reaches the solver.
struct ProblemParams {
    double t = 0.0;
    Pose x;
    double gamma = 0.0;
    std::map<int, double> gamma_neighbors;
    double eta = 0.0;
    double t0 = 0.0;
    double sample_delta_k = 0.1;
};

/// Piecewise-constant decision signals on the horizon grid.
struct DecisionVars {
    Eigen::MatrixXd u_segments;  // n_segments x 3
    Eigen::VectorXd v_segments;  // n_segments

    static DecisionVars zero(int n_segments);
};

/// Open-loop prediction sampled on the integration grid. The grid is split
/// into pieces on which all inputs are constant (segment boundaries plus the
/// consensus-signal cutoff); boundary points are duplicated so each piece
/// carries its own input values.
struct Prediction {
    struct Piece {
        int first = 0;   // index of the first grid point of the piece
        int count = 0;   // number of grid points (substeps + 1)
        double h = 0.0;  // grid spacing within the piece
    };

    std::vector<double> times;
    std::vector<Pose> poses;
    std::vector<double> gammas;
    std::vector<double> etas;
    std::vector<Eigen::Vector3d> ys;
    std::vector<Eigen::Vector3d> us;
    std::vector<double> vs;
    std::vector<double> u_gamma_aux;
    std::vector<Piece> pieces;

    double terminal_time() const { return times.back(); }
    const Pose& terminal_pose() const { return poses.back(); }
    double terminal_gamma() const { return gammas.back(); }
    double terminal_eta() const { return etas.back(); }
    const Eigen::Vector3d& terminal_y() const { return ys.back(); }

    void clear();
};

/// Per-agent solver context: the agent's model plus the pieces of network
/// information needed to freeze the consensus feedforward at solve time.
struct MpcContext {
    AgentModel model;
    SpeedSpec speed;
    CommGraph graph;
    ConsensusGain gain;
    int agent = 0;

    /// The exponential eta tube only binds networked agents.
    bool envelope_active() const { return !graph.is_isolated(agent); }
};

/// Consensus feedforward frozen at the data available in `params`.
AuxConsensusSignal build_aux_signal(const MpcContext& ctx, const ProblemParams& params);

/// Forward simulation of the prediction model under `dec`.
Prediction predict(const ProblemParams& params, const DecisionVars& dec, const AgentModel& model,
                   const SpeedSpec& speed, const AuxConsensusSignal& aux_signal);
void predict_into(const ProblemParams& params, const DecisionVars& dec, const AgentModel& model,
                  const SpeedSpec& speed, const AuxConsensusSignal& aux_signal, Prediction& out);

/// Auxiliary gains with v_d replaced by the common speed at time t when the
/// speed profile is non-constant (the regulation feedforward tracks g(t)).
AuxGains effective_gains(const AgentModel& model, const SpeedSpec& speed, double t);

/// Regulation stage cost ||y||_Q^2 + ||u - k_aux||_U^2. When `speed` is given
/// and non-constant, the auxiliary law inside uses g(t) as the path speed.
double stage_cost(double t, const Pose& x, const VehicleInput& u, double gamma, double u_gamma,
                  const MpcWeights& w, const AgentModel& model,
                  const SpeedSpec* speed = nullptr);

/// Consensus stage cost Qc eta^2 + Uc v_gamma^2.
double consensus_stage_cost(double eta, double v_gamma, const MpcWeights& w);

/// Cubic regulation terminal cost lambda_max(Q) / (3 lambda_min(K)) ||y||^3.
double terminal_cost(const Eigen::Vector3d& y_terminal, const MpcWeights& w,
                     const AuxGains& gains);

/// Finite-horizon cost: Simpson quadrature of the stage costs on the
/// prediction grid plus both terminal terms.
double total_cost(const ProblemParams& params, const DecisionVars& dec, const AgentModel& model,
                  const SpeedSpec& speed, const AuxConsensusSignal& aux_signal);
double total_cost_of_prediction(const Prediction& pred, const MpcWeights& w,
                                const AgentModel& model, const SpeedSpec* speed = nullptr);

/// Signed slacks of every constraint (>= 0 means satisfied).
struct ConstraintSlacks {
    Eigen::VectorXd u_box;     // 3 per segment
    Eigen::VectorXd v_box;     // 1 per segment
    double terminal_eta = 0.0; // r_eta - |eta(t+T)|
    Eigen::VectorXd envelope;  // per grid point; empty when the tube is inactive
    Eigen::VectorXd output_box;

    double min_slack() const;
    double max_violation() const { return std::max(0.0, -min_slack()); }
};

ConstraintSlacks constraint_violations(const ProblemParams& params, const Prediction& pred,
                                       const DecisionVars& dec, const MpcWeights& w,
                                       const AgentModel& model, bool envelope_active = true);

struct SolverOptions {
    int max_iterations = 60;      // quasi-Newton iterations per penalty round
    int penalty_rounds = 3;
    double penalty_initial = 1e4;
    double penalty_factor = 100.0;
    double feasibility_tol = 1e-6;  // defines "feasible"
    double target_tol = 1e-8;       // internal enforcement target
    double fd_step = 1e-6;          // central finite-difference step
    double gradient_tol = 1e-8;
    double cost_tol = 1e-12;
    int lbfgs_memory = 8;
};

struct SolveDiagnostics {
    int iterations = 0;
    int cost_evaluations = 0;
    double max_violation = 0.0;
    double reference_cost = 0.0;  // cost of the warm start / auxiliary pair
    bool used_reference = false;  // optimizer could not improve on it
};

struct SolveResult {
    DecisionVars dec;
    double cost = 0.0;
    SolveDiagnostics diag;
};

/// Raised when no iterate within the budget satisfies the feasibility
/// tolerance; carries the best iterate found.
class InfeasibleError : public std::runtime_error {
public:
    InfeasibleError(std::string what, DecisionVars best, double max_violation)
        : std::runtime_error(std::move(what)), best_iterate(std::move(best)),
          max_violation(max_violation)
    {
    }

    DecisionVars best_iterate;
    double max_violation;
};

/// The decision pair realized by the auxiliary laws: u sampled from k_aux at
/// each segment start, v = -lambda_eta * eta. Feasible by construction and the
/// default starting point when no warm start is supplied.
DecisionVars auxiliary_pair(const MpcContext& ctx, const ProblemParams& params);

/// Quadratic-penalty, box-projected quasi-Newton solve of the open-loop
/// problem. Never returns a result worse than a feasible warm start.
SolveResult solve(const MpcContext& ctx, const ProblemParams& params,
                  const SolverOptions& options,
                  const std::optional<DecisionVars>& warm = std::nullopt);

/// Warm start for the next sample: the previous optimal inputs shifted by
/// `delta`, with the uncovered tail filled by the auxiliary pair evaluated
/// along the new prediction.
DecisionVars shift_warm_start(const MpcContext& ctx, const DecisionVars& prev_dec,
                              double delta, const ProblemParams& p_new);

/// Per-sample bookkeeping of the sampled-data value function
///   V(t_{k+1}) - V(t_k) + int(l + l_c) <= beta_gain ||k_con(t_k)|| / delta_lb + solver_tol.
/// Violations are reported, not fatal: the right-hand side uses a calibrated
/// proportionality constant, not certified Lipschitz moduli.
struct ValueDecreaseReport {
    int checks = 0;
    int flagged = 0;
    std::vector<int> flagged_samples;
    double max_excess = 0.0;
    double flag_fraction() const { return checks > 0 ? double(flagged) / checks : 0.0; }
};

ValueDecreaseReport value_decrease_check(const std::vector<double>& sample_times,
                                         const std::vector<double>& j_star,
                                         const std::vector<double>& stage_integrals,
                                         const std::vector<double>& kcon_norms, double delta_lb,
                                         double solver_tol, double beta_gain);

}  // namespace cpf
