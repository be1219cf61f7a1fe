#include "cpf/simulation.hpp"

#include <algorithm>
#include <cmath>

namespace cpf {

namespace {

enum class Mode { Cpf, Decoupled, Consensus };

struct AgentRuntime {
    MpcContext ctx;
    AgentFlowState state;
    std::optional<DecisionVars> dec;
    AuxConsensusSignal sig;
    double j_star = 0.0;
    double stage_accum = 0.0;
};

std::map<int, double> neighbor_snapshot(const CommGraph& g, int agent,
                                        const Eigen::VectorXd& gammas)
{
    std::map<int, double> out;
    for (int j : g.neighbors(agent)) out[j] = gammas(j);
    return out;
}

double network_phi(const CommGraph& g, const std::vector<AgentRuntime>& agents)
{
    Eigen::VectorXd gam(static_cast<int>(agents.size()));
    for (std::size_t i = 0; i < agents.size(); ++i) gam(static_cast<int>(i)) = agents[i].state.gamma;
    return disagreement(gam, g).phi;
}

/// Inputs that stay constant across one integration chunk (a maximal span on
/// which the applied piecewise-constant signals do not switch). Evaluated at
/// the chunk midpoint so boundary roundoff cannot select a neighboring piece.
struct ChunkInputs {
    VehicleInput u;       // ignored in Decoupled mode (feedback law)
    double v_gamma = 0.0;
    double u_gamma_aux = 0.0;
};

ChunkInputs chunk_inputs(Mode mode, const AgentRuntime& a, double t_k, double chunk_mid)
{
    ChunkInputs c;
    c.u_gamma_aux = a.sig.eval(chunk_mid);
    if (mode == Mode::Cpf) {
        const MpcWeights& w = a.ctx.model.weights;
        const double hseg = w.T / w.n_segments;
        int idx = static_cast<int>(std::floor((chunk_mid - t_k) / hseg));
        idx = std::clamp(idx, 0, w.n_segments - 1);
        c.u = VehicleInput{a.dec->u_segments(idx, 0), a.dec->u_segments(idx, 1),
                           a.dec->u_segments(idx, 2)};
        c.v_gamma = a.dec->v_segments(idx);
    }
    return c;
}

/// Full input vector of agent i at (t, state) given the chunk constants.
FlowInputs flow_inputs(Mode mode, const AgentRuntime& a, const ChunkInputs& c, double t,
                       const AgentFlowState& state, const SpeedSpec& speed)
{
    FlowInputs in;
    in.g_speed = speed.eval(t);
    in.u_gamma_aux = c.u_gamma_aux;
    in.v_gamma = c.v_gamma;
    switch (mode) {
        case Mode::Cpf:
            in.u = c.u;
            break;
        case Mode::Decoupled:
            in.u = k_aux(t, state.pose, state.gamma, in.u_gamma_aux, a.ctx.model.path,
                         effective_gains(a.ctx.model, speed, t), a.ctx.model.offset);
            break;
        case Mode::Consensus:
            in.u = VehicleInput{};
            break;
    }
    return in;
}

/// Stage integrand l + l_c of agent i with explicit inputs.
double stage_integrand(const AgentRuntime& a, double t, const AgentFlowState& state,
                       const FlowInputs& in)
{
    const double u_gamma = in.u_gamma_aux + state.eta;
    return stage_cost(t, state.pose, in.u, state.gamma, u_gamma, a.ctx.model.weights,
                      a.ctx.model, &a.ctx.speed) +
           consensus_stage_cost(state.eta, in.v_gamma, a.ctx.model.weights);
}

Trace run(const Scenario& sc, Mode mode)
{
    {
        const std::vector<std::string> errors = validate_scenario(sc);
        if (!errors.empty()) {
            std::string joined;
            for (const std::string& e : errors) joined += e + "\n";
            throw ValidationError(joined);
        }
    }

    const int n = static_cast<int>(sc.agents.size());
    const std::vector<double> samples = sc.sample_times();
    const double t_end = sc.end_time();

    Trace tr;
    tr.scenario_name = sc.name;
    tr.mode = mode == Mode::Cpf ? "cpf" : (mode == Mode::Decoupled ? "decoupled" : "consensus");
    tr.n_agents = n;
    tr.sample_times = samples;

    std::vector<AgentRuntime> agents;
    agents.reserve(n);
    for (int i = 0; i < n; ++i) {
        AgentRuntime a{MpcContext{sc.agents[i].model, sc.speed, sc.graph, sc.gain, i},
                       AgentFlowState{}, std::nullopt, AuxConsensusSignal{}, 0.0, 0.0};
        a.state.pose.p = sc.agents[i].initial.p;
        a.state.pose.R = reorthonormalize(sc.agents[i].initial.R);
        a.state.gamma = sc.agents[i].gamma0;
        // The baselines have no deviation state; only the cpf loop carries eta.
        a.state.eta = mode == Mode::Cpf ? sc.agents[i].eta0 : 0.0;
        agents.push_back(std::move(a));
    }

    const MpcWeights& w0 = sc.agents.front().model.weights;
    const double hseg = w0.T / w0.n_segments;
    std::vector<FlowInputs> last_inputs(n);

    auto record_row = [&](const AgentRuntime& a, int i, double t, const FlowInputs& in,
                          double phi) {
        TraceRow row;
        row.t = t;
        row.agent = i;
        row.pose = a.state.pose;
        row.gamma = a.state.gamma;
        row.eta = a.state.eta;
        row.y = output_y(a.state.pose, a.ctx.model.offset, a.ctx.model.path, a.state.gamma);
        row.u = in.u;
        row.v_gamma = in.v_gamma;
        row.u_gamma_aux = in.u_gamma_aux;
        row.phi = phi;
        row.j_star = a.j_star;
        tr.rows.push_back(row);
    };

    for (std::size_t k = 0; k < samples.size(); ++k) {
        const double t_k = samples[k];
        const double t_next = (k + 1 < samples.size()) ? samples[k + 1] : t_end;
        const double delta_k = t_next - t_k;

        // Exchange: freeze the coordination snapshot of the whole network.
        Eigen::VectorXd snapshot(n);
        for (int i = 0; i < n; ++i) snapshot(i) = agents[i].state.gamma;

        // Per-agent solves against the frozen snapshot.
        for (int i = 0; i < n; ++i) {
            AgentRuntime& a = agents[i];
            ProblemParams params;
            params.t = t_k;
            params.x = a.state.pose;
            params.gamma = a.state.gamma;
            params.gamma_neighbors = neighbor_snapshot(sc.graph, i, snapshot);
            params.eta = a.state.eta;
            params.t0 = sc.timing.t0;
            params.sample_delta_k = delta_k;

            a.sig = build_aux_signal(a.ctx, params);
            a.stage_accum = 0.0;

            SampleRecord rec;
            rec.t = t_k;
            rec.agent = i;
            rec.kcon_norm = std::abs(a.sig.value) * delta_k;  // k_con = value * delta_k

            if (mode == Mode::Cpf) {
                std::optional<DecisionVars> warm;
                if (a.dec) {
                    warm = shift_warm_start(a.ctx, *a.dec, t_k - samples[k - 1], params);
                    const Prediction warm_pred =
                        predict(params, *warm, a.ctx.model, sc.speed, a.sig);
                    rec.warm_violation =
                        constraint_violations(params, warm_pred, *warm, a.ctx.model.weights,
                                              a.ctx.model, a.ctx.envelope_active())
                            .max_violation();
                }
                try {
                    const SolveResult res = solve(a.ctx, params, sc.solver, warm);
                    a.dec = res.dec;
                    a.j_star = res.cost;
                    rec.j_star = res.cost;
                    rec.iterations = res.diag.iterations;
                    rec.cost_evaluations = res.diag.cost_evaluations;
                    rec.max_violation = res.diag.max_violation;
                } catch (const InfeasibleError& e) {
                    tr.samples.push_back(rec);
                    throw SimulationAborted(
                        "sample " + std::to_string(k) + ", agent " + std::to_string(i + 1) +
                            ": " + e.what(),
                        std::move(tr));
                }
            }
            tr.samples.push_back(rec);
        }

        // Apply open-loop over [t_k, t_next): integrate all agents in lockstep
        // on chunks within which every input is constant.
        std::vector<double> cuts{t_k};
        if (mode == Mode::Cpf) {
            for (int j = 1; j < w0.n_segments; ++j) {
                const double b = t_k + j * hseg;
                if (b < t_next - 1e-12) cuts.push_back(b);
                else break;
            }
        }
        cuts.push_back(t_next);

        for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
            const double a_t = cuts[c];
            const double b_t = cuts[c + 1];
            const double mid = 0.5 * (a_t + b_t);
            const int n_sub = std::max(1, static_cast<int>(std::llround((b_t - a_t) / sc.timing.dt)));
            const double h = (b_t - a_t) / n_sub;

            std::vector<ChunkInputs> cin(n);
            for (int i = 0; i < n; ++i) cin[i] = chunk_inputs(mode, agents[i], t_k, mid);

            // Row at the chunk start carries the chunk's (right-continuous) inputs.
            const double phi_now = network_phi(sc.graph, agents);
            std::vector<double> f_prev(n);
            for (int i = 0; i < n; ++i) {
                const FlowInputs in =
                    flow_inputs(mode, agents[i], cin[i], a_t, agents[i].state, sc.speed);
                record_row(agents[i], i, a_t, in, phi_now);
                f_prev[i] = stage_integrand(agents[i], a_t, agents[i].state, in);
            }

            for (int m = 0; m < n_sub; ++m) {
                const double t = a_t + m * h;
                const double t_new = a_t + (m + 1) * h;
                for (int i = 0; i < n; ++i) {
                    AgentRuntime& a = agents[i];
                    const ChunkInputs& ci = cin[i];
                    const InputSignal sig_fn = [&](double tt, const AgentFlowState& ss) {
                        return flow_inputs(mode, a, ci, tt, ss, sc.speed);
                    };
                    a.state = integrate(a.state, sig_fn, t, h, 1);
                }
                const double phi_new = network_phi(sc.graph, agents);
                for (int i = 0; i < n; ++i) {
                    AgentRuntime& a = agents[i];
                    const FlowInputs in = flow_inputs(mode, a, cin[i], t_new, a.state, sc.speed);
                    const double f_new = stage_integrand(a, t_new, a.state, in);
                    a.stage_accum += 0.5 * h * (f_prev[i] + f_new);
                    f_prev[i] = f_new;
                    last_inputs[i] = in;
                    // Interior points get rows; chunk ends are recorded by the
                    // next chunk (or below, at the end of the run).
                    if (m + 1 < n_sub) record_row(a, i, t_new, in, phi_new);
                }
            }
        }

        for (int i = 0; i < n; ++i) {
            tr.samples[tr.samples.size() - n + i].stage_integral = agents[i].stage_accum;
        }
    }

    // Final rows at the end of the run, repeating the last applied input.
    const double phi_final = network_phi(sc.graph, agents);
    for (int i = 0; i < n; ++i) {
        record_row(agents[i], i, t_end, last_inputs[i], phi_final);
    }
    return tr;
}

}  // namespace

Trace run_cpf(const Scenario& sc) { return run(sc, Mode::Cpf); }
Trace run_decoupled(const Scenario& sc) { return run(sc, Mode::Decoupled); }
Trace run_consensus_only(const Scenario& sc) { return run(sc, Mode::Consensus); }

Trace run_scenario(const Scenario& sc, const std::string& mode)
{
    if (mode == "cpf") return run_cpf(sc);
    if (mode == "decoupled") return run_decoupled(sc);
    if (mode == "consensus") return run_consensus_only(sc);
    throw ValidationError("mode: must be one of cpf | decoupled | consensus, got '" + mode + "'");
}

namespace {

/// Rows of one agent at the exact sample times (and the run end), by index.
std::vector<const TraceRow*> rows_at_times(const Trace& tr, int agent,
                                           const std::vector<double>& times)
{
    std::vector<const TraceRow*> out;
    out.reserve(times.size());
    std::size_t cursor = 0;
    for (double t : times) {
        const TraceRow* found = nullptr;
        for (; cursor < tr.rows.size(); ++cursor) {
            const TraceRow& r = tr.rows[cursor];
            if (r.agent != agent) continue;
            if (std::abs(r.t - t) <= 1e-9) {
                found = &r;
                break;
            }
            if (r.t > t + 1e-9) break;
        }
        if (!found) throw ValidationError("trace: no row at a required sample time");
        out.push_back(found);
    }
    return out;
}

}  // namespace

std::vector<ValueDecreaseReport> trace_value_decrease(const Scenario& sc, const Trace& tr)
{
    const int n = tr.n_agents;
    const std::vector<double> times =
        tr.sample_times.empty() ? sc.sample_times() : tr.sample_times;
    std::vector<ValueDecreaseReport> reports;

    if (tr.samples.size() == times.size() * static_cast<std::size_t>(n)) {
        for (int i = 0; i < n; ++i) {
            std::vector<double> j_star, stage, kcon;
            for (const SampleRecord& s : tr.samples) {
                if (s.agent != i) continue;
                j_star.push_back(s.j_star);
                stage.push_back(s.stage_integral);
                kcon.push_back(s.kcon_norm);
            }
            reports.push_back(value_decrease_check(times, j_star, stage, kcon,
                                                   sc.timing.delta_lb, sc.solver_tol,
                                                   sc.beta_gain));
        }
        return reports;
    }

    // No per-sample records (trace loaded from CSV): rebuild them from rows.
    std::vector<double> boundaries = times;
    boundaries.push_back(sc.end_time());
    std::vector<std::vector<const TraceRow*>> at_bounds;
    for (int i = 0; i < n; ++i) at_bounds.push_back(rows_at_times(tr, i, boundaries));

    for (int i = 0; i < n; ++i) {
        const AgentModel& model = sc.agents[i].model;
        std::vector<const TraceRow*> rows;
        for (const TraceRow& r : tr.rows) {
            if (r.agent == i) rows.push_back(&r);
        }

        std::vector<double> j_star, stage, kcon;
        std::size_t cursor = 0;
        for (std::size_t k = 0; k < times.size(); ++k) {
            j_star.push_back(at_bounds[i][k]->j_star);

            std::map<int, double> nbrs;
            for (int j : sc.graph.neighbors(i)) nbrs[j] = at_bounds[j][k]->gamma;
            const double action =
                consensus_law(sc.graph, sc.gain, i, at_bounds[i][k]->gamma, nbrs);
            kcon.push_back(std::abs(action));

            // Trapezoid of l + l_c between this sample and the next, with the
            // consensus feedforward reconstructed from the frozen snapshot.
            const double t_next = boundaries[k + 1];
            const double uaux = action / (t_next - boundaries[k]);
            while (cursor < rows.size() && rows[cursor]->t < boundaries[k] - 1e-9) ++cursor;
            double acc = 0.0;
            double f_prev = 0.0;
            bool have_prev = false;
            for (std::size_t c = cursor; c < rows.size() && rows[c]->t <= t_next + 1e-9; ++c) {
                const TraceRow& r = *rows[c];
                const double f =
                    stage_cost(r.t, r.pose, r.u, r.gamma, uaux + r.eta, model.weights, model,
                               &sc.speed) +
                    consensus_stage_cost(r.eta, r.v_gamma, model.weights);
                if (have_prev) acc += 0.5 * (r.t - rows[c - 1]->t) * (f_prev + f);
                f_prev = f;
                have_prev = true;
                cursor = c;
            }
            stage.push_back(acc);
        }
        reports.push_back(value_decrease_check(times, j_star, stage, kcon, sc.timing.delta_lb,
                                               sc.solver_tol, sc.beta_gain));
    }
    return reports;
}

IssTraceReport trace_iss_check(const Scenario& sc, const Trace& tr)
{
    const int n = tr.n_agents;
    std::vector<double> boundaries = tr.sample_times;
    boundaries.push_back(sc.end_time());

    std::vector<std::vector<const TraceRow*>> per_agent;
    for (int i = 0; i < n; ++i) per_agent.push_back(rows_at_times(tr, i, boundaries));

    IssTraceReport rep;
    for (std::size_t k = 0; k + 1 < boundaries.size(); ++k) {
        const double delta_k = boundaries[k + 1] - boundaries[k];
        Eigen::VectorXd xi_k(n), xi_k1(n), eta_disc(n);
        for (int i = 0; i < n; ++i) {
            xi_k(i) = per_agent[i][k]->gamma;
            xi_k1(i) = per_agent[i][k + 1]->gamma;
        }
        // Common-speed displacement over the interval (exact for constant g).
        double g_int = 0.0;
        if (sc.speed.is_constant()) {
            g_int = sc.speed.v_d * delta_k;
        } else {
            const int steps = 64;
            const double h = delta_k / steps;
            for (int m = 0; m < steps; ++m) {
                g_int += 0.5 * h *
                         (sc.speed.eval(boundaries[k] + m * h) +
                          sc.speed.eval(boundaries[k] + (m + 1) * h));
            }
        }
        for (int i = 0; i < n; ++i) {
            std::map<int, double> nbrs;
            for (int j : sc.graph.neighbors(i)) nbrs[j] = xi_k(j);
            const double kcon = consensus_law(sc.graph, sc.gain, i, xi_k(i), nbrs);
            eta_disc(i) = xi_k1(i) - xi_k(i) - g_int - kcon;
        }
        const IssStepReport step = iss_step_check(sc.graph, sc.gain, xi_k, eta_disc, xi_k1);
        ++rep.checks;
        if (!step.pass) ++rep.failures;
        rep.min_margin = std::min(rep.min_margin, step.margin);
    }
    return rep;
}

double trace_tracking_cost(const Trace& tr)
{
    // Trapezoid of ||y||^2 per agent over the recorded rows.
    double total = 0.0;
    for (int i = 0; i < tr.n_agents; ++i) {
        const TraceRow* prev = nullptr;
        for (const TraceRow& r : tr.rows) {
            if (r.agent != i) continue;
            if (prev) {
                total += 0.5 * (r.t - prev->t) * (prev->y.squaredNorm() + r.y.squaredNorm());
            }
            prev = &r;
        }
    }
    return total;
}

double trace_max_phi(const Trace& tr)
{
    double m = 0.0;
    for (const TraceRow& r : tr.rows) m = std::max(m, r.phi);
    return m;
}

double trace_final_phi(const Trace& tr)
{
    return tr.rows.empty() ? 0.0 : tr.rows.back().phi;
}

std::vector<double> trace_final_y_norms(const Trace& tr)
{
    std::vector<double> out(tr.n_agents, 0.0);
    const double t_last = tr.rows.back().t;
    for (auto it = tr.rows.rbegin(); it != tr.rows.rend(); ++it) {
        if (std::abs(it->t - t_last) > 1e-12) break;
        out[it->agent] = it->y.norm();
    }
    return out;
}

}  // namespace cpf
