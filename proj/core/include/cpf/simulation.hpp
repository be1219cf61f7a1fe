#pragma once

#include <string>
#include <vector>

#include "cpf/scenario.hpp"

namespace cpf {

/// One integration-step record of one agent. Inputs are the values applied on
/// [t, t+h) (right-continuous); the final row of a run repeats the last
/// applied input.
struct TraceRow {
    double t = 0.0;
    int agent = 0;  // zero-based
    Pose pose;
    double gamma = 0.0;
    double eta = 0.0;
    Eigen::Vector3d y = Eigen::Vector3d::Zero();
    VehicleInput u;
    double v_gamma = 0.0;
    double u_gamma_aux = 0.0;
    double phi = 0.0;     // network disagreement at this time
    double j_star = 0.0;  // optimal cost of the governing sample (0 outside cpf mode)
};

/// Per-sample, per-agent solver bookkeeping.
struct SampleRecord {
    double t = 0.0;
    int agent = 0;
    double j_star = 0.0;
    int iterations = 0;
    int cost_evaluations = 0;
    double max_violation = 0.0;
    double warm_violation = std::numeric_limits<double>::quiet_NaN();  // NaN at the first sample
    double kcon_norm = 0.0;
    double stage_integral = 0.0;  // realized int (l + l_c) dt over the sample interval
};

struct Trace {
    std::string scenario_name;
    std::string mode;
    int n_agents = 0;
    std::vector<double> sample_times;
    std::vector<TraceRow> rows;  // grouped by time, agents in index order within a time
    std::vector<SampleRecord> samples;
};

/// Raised when a solve fails mid-run; carries everything recorded so far.
class SimulationAborted : public std::runtime_error {
public:
    SimulationAborted(const std::string& what, Trace partial_trace)
        : std::runtime_error(what), partial(std::move(partial_trace))
    {
    }

    Trace partial;
};

/// Sampled-data closed loop: at every sample each agent exchanges coordination
/// snapshots, warm-starts from its shifted previous solution, solves, and
/// applies the optimal inputs open-loop until the next sample.
Trace run_cpf(const Scenario& sc);

/// Baseline with the regulation and consensus layers designed independently:
/// u = k_aux with the sampled consensus signal, no optimization.
Trace run_decoupled(const Scenario& sc);

/// Coordination dynamics only, under the sampled consensus signal.
Trace run_consensus_only(const Scenario& sc);

/// Dispatch on mode name ("cpf" | "decoupled" | "consensus").
Trace run_scenario(const Scenario& sc, const std::string& mode);

// --- trace-level diagnostics -------------------------------------------------

/// Value-function decrease bookkeeping recomputed from a trace, one report per
/// agent.
std::vector<ValueDecreaseReport> trace_value_decrease(const Scenario& sc, const Trace& tr);

/// Step-wise ISS inequality of the sampled coordination dynamics, evaluated
/// between every pair of consecutive samples.
struct IssTraceReport {
    int checks = 0;
    int failures = 0;
    double min_margin = std::numeric_limits<double>::infinity();
};

IssTraceReport trace_iss_check(const Scenario& sc, const Trace& tr);

/// Sum over agents of the integrated squared output norm.
double trace_tracking_cost(const Trace& tr);

double trace_max_phi(const Trace& tr);
double trace_final_phi(const Trace& tr);

/// Output norm of one agent at the final recorded time.
std::vector<double> trace_final_y_norms(const Trace& tr);

}  // namespace cpf
