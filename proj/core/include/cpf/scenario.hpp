#pragma once

#include <string>
#include <vector>

#include "cpf/mpc.hpp"

namespace cpf {

/// One vehicle of the scenario: initial condition plus its full model.
struct AgentSpec {
    Pose initial;
    double gamma0 = 0.0;
    double eta0 = 0.0;
    AgentModel model;
};

/// Sampling layout of the run. Either a uniform period `delta` or an explicit
/// list of sample instants; every resulting interval must lie in
/// [delta_lb, T]. `dt` is the target step of the continuous integration.
struct Timing {
    double t0 = 0.0;
    double delta = 0.1;
    std::vector<double> samples;
    double delta_lb = 0.0;
    double duration = 0.0;
    double dt = 1e-3;
};

struct Scenario {
    std::string name;
    std::string mode = "cpf";  // cpf | decoupled | consensus
    std::vector<AgentSpec> agents;
    CommGraph graph{1, {}};
    ConsensusGain gain;
    Timing timing;
    SpeedSpec speed;
    SolverOptions solver;

    // Diagnostics configuration.
    double consensus_spread_tol = 1e-9;
    double beta_gain = 50.0;   // value-decrease budget per unit consensus action
    double solver_tol = 1e-3;  // slack granted to the value-decrease check

    /// Resolved solve instants t_0 < t_1 < ... (the end of the run closes the
    /// last interval but is not itself a solve instant).
    std::vector<double> sample_times() const;
    double end_time() const { return timing.t0 + timing.duration; }
};

/// All invariant violations of a fully built scenario, one message per entry.
std::vector<std::string> validate_scenario(const Scenario& sc);

/// Parses and validates; throws ValidationError carrying every violation.
Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::string& path);

}  // namespace cpf
