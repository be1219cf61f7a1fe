#include "cpf/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cpf {

using nlohmann::json;

std::vector<double> Scenario::sample_times() const
{
    if (!timing.samples.empty()) return timing.samples;
    std::vector<double> out;
    const double t_end = end_time();
    for (double t = timing.t0; t < t_end - 1e-9; t += timing.delta) out.push_back(t);
    return out;
}

namespace {

Eigen::Vector3d parse_vec3(const json& j, const std::string& field)
{
    if (!j.is_array() || j.size() != 3) {
        throw ValidationError(field + ": expected an array of 3 numbers");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

/// Scalar -> s*I, [3] -> diagonal, [9] -> full row-major.
Eigen::Matrix3d parse_mat3(const json& j, const std::string& field)
{
    if (j.is_number()) {
        return j.get<double>() * Eigen::Matrix3d::Identity();
    }
    if (j.is_array() && j.size() == 3) {
        Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
        for (int i = 0; i < 3; ++i) m(i, i) = j[i].get<double>();
        return m;
    }
    if (j.is_array() && j.size() == 9) {
        Eigen::Matrix3d m;
        for (int i = 0; i < 3; ++i) {
            for (int c = 0; c < 3; ++c) m(i, c) = j[3 * i + c].get<double>();
        }
        return m;
    }
    throw ValidationError(field + ": expected a scalar, 3 diagonal entries, or 9 row-major entries");
}

Eigen::Matrix3d rotation_rpy(double roll, double pitch, double yaw)
{
    return (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
            Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
            Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
        .toRotationMatrix();
}

PathKind parse_kind(const std::string& s)
{
    if (s == "line") return PathKind::Line;
    if (s == "circular_helix") return PathKind::CircularHelix;
    if (s == "sinusoid_offset_line") return PathKind::SinusoidOffsetLine;
    throw ValidationError("path.kind: unknown kind '" + s +
                          "' (expected line | circular_helix | sinusoid_offset_line)");
}

PathSpec parse_path(const json& j)
{
    PathSpec p;
    p.kind = parse_kind(j.at("kind").get<std::string>());
    if (j.contains("origin")) p.origin = parse_vec3(j["origin"], "path.origin");
    if (j.contains("direction")) p.direction = parse_vec3(j["direction"], "path.direction");
    if (j.contains("radius")) p.radius = j["radius"].get<double>();
    if (j.contains("pitch")) p.pitch = j["pitch"].get<double>();
    if (j.contains("angular_rate")) p.angular_rate = j["angular_rate"].get<double>();
    if (j.contains("amplitude")) p.amplitude = j["amplitude"].get<double>();
    if (j.contains("spatial_frequency")) p.spatial_frequency = j["spatial_frequency"].get<double>();
    if (j.contains("lateral_offset"))
        p.lateral_offset = parse_vec3(j["lateral_offset"], "path.lateral_offset");
    if (j.contains("allow_unbounded")) p.allow_unbounded = j["allow_unbounded"].get<bool>();
    return p;
}

Pose parse_initial(const json& j)
{
    Pose pose;
    pose.p = parse_vec3(j.at("position"), "initial.position");
    if (j.contains("rpy")) {
        const Eigen::Vector3d rpy = parse_vec3(j["rpy"], "initial.rpy");
        pose.R = rotation_rpy(rpy.x(), rpy.y(), rpy.z());
    } else if (j.contains("rotation")) {
        pose.R = parse_mat3(j["rotation"], "initial.rotation");
        if (so3_defect(pose.R) > 1e-6 || pose.R.determinant() < 0.0) {
            throw ValidationError("initial.rotation: not a rotation matrix (orthonormality off by more than 1e-6)");
        }
        pose.R = reorthonormalize(pose.R);
    }
    return pose;
}

AgentSpec parse_agent(const json& j, const SpeedSpec& speed)
{
    AgentSpec a;
    a.initial = parse_initial(j.at("initial"));
    a.gamma0 = j.value("gamma0", 0.0);
    a.eta0 = j.value("eta0", 0.0);
    a.model.offset.eps = parse_vec3(j.at("offset"), "agent.offset");
    a.model.path = parse_path(j.at("path"));

    const json& gj = j.at("gains");
    a.model.gains.K = parse_mat3(gj.at("K"), "gains.K");
    a.model.gains.v_d = gj.value("v_d", speed.v_d);
    a.model.gains.lambda_eta = gj.value("lambda_eta", 1.0);

    const json& wj = j.at("weights");
    MpcWeights w;
    w.Q = parse_mat3(wj.at("Q"), "weights.Q");
    w.U = parse_mat3(wj.at("U"), "weights.U");
    w.Qc = wj.value("Qc", 1.0);
    w.Uc = wj.value("Uc", 1.0);
    w.m_eta = wj.value("m_eta", 2.0);
    w.lambda_eta = wj.value("lambda_eta", 1.0);
    w.a_eta = wj.value("a_eta", 1e3);
    w.lambda_eta_env = wj.value("lambda_eta_env", 1e-3);
    w.r_eta = wj.value("r_eta", 1.0);
    w.T = wj.at("T").get<double>();
    w.n_segments = wj.value("n_segments", 8);
    w.substeps = wj.value("substeps", 4);
    a.model.weights = w;

    if (j.contains("input_box")) {
        const json& bj = j["input_box"];
        a.model.input_box = InputBounds{bj.at("v_max").get<double>(),
                                        bj.at("w2_max").get<double>(),
                                        bj.at("w3_max").get<double>()};
    } else {
        a.model.input_box =
            aux_input_bounds(a.model.path, a.model.offset, a.model.gains, w.r_eta);
    }
    a.model.v_gamma_max = j.value("v_gamma_max", w.r_eta * w.lambda_eta);
    if (j.contains("output_box")) {
        a.model.output_box = parse_vec3(j["output_box"], "agent.output_box");
    }
    return a;
}

}  // namespace

std::vector<std::string> validate_scenario(const Scenario& sc)
{
    std::vector<std::string> errors;
    auto fail = [&errors](const std::string& msg) { errors.push_back(msg); };

    if (sc.agents.empty()) {
        fail("agents: at least one agent is required");
        return errors;
    }
    if (sc.graph.size() != static_cast<int>(sc.agents.size())) {
        fail("graph: node count must equal the number of agents");
    }

    try {
        validate_gain(sc.graph, sc.gain);
    } catch (const ValidationError& e) {
        fail(e.what());
    }
    if (!sc.graph.is_balanced()) {
        fail("graph: must be balanced (per-node in-weights equal out-weights) for the "
             "consensus law to be convergent");
    }
    if (!sc.graph.is_strongly_connected()) {
        fail("graph: must be strongly connected for the network to reach consensus");
    }

    if (!(sc.timing.delta_lb > 0.0)) {
        fail("timing.delta_lb: required and must be > 0 (lower bound of the sampling interval)");
    }
    if (!(sc.timing.duration > 0.0)) fail("timing.duration: must be > 0");
    if (!(sc.timing.dt > 0.0)) fail("timing.dt: must be > 0");
    if (sc.timing.samples.empty() && !(sc.timing.delta > 0.0)) {
        fail("timing.delta: must be > 0 when no explicit sample list is given");
    }

    if (sc.mode != "cpf" && sc.mode != "decoupled" && sc.mode != "consensus") {
        fail("mode: must be one of cpf | decoupled | consensus");
    }

    const MpcWeights& w0 = sc.agents.front().model.weights;
    for (std::size_t i = 0; i < sc.agents.size(); ++i) {
        const std::string tag = "agent " + std::to_string(i + 1) + ": ";
        const AgentSpec& a = sc.agents[i];
        try {
            validate_model(a.model);
        } catch (const ValidationError& e) {
            fail(tag + e.what());
        }
        if (a.model.weights.T != w0.T || a.model.weights.n_segments != w0.n_segments ||
            a.model.weights.substeps != w0.substeps) {
            fail(tag + "weights.T/n_segments/substeps: must match across agents "
                       "(shared sampling and transcription grid)");
        }
        if (sc.speed.is_constant() && std::abs(a.model.gains.v_d - sc.speed.v_d) > 1e-12) {
            fail(tag + "gains.v_d: must equal the common speed v_d");
        }
        if (so3_defect(a.initial.R) > 1e-6) {
            fail(tag + "initial rotation: not orthonormal");
        }
    }

    if (!sc.timing.samples.empty()) {
        if (std::abs(sc.timing.samples.front() - sc.timing.t0) > 1e-12) {
            fail("timing.samples: first sample must equal t0");
        }
        for (std::size_t k = 0; k + 1 < sc.timing.samples.size(); ++k) {
            if (sc.timing.samples[k + 1] <= sc.timing.samples[k]) {
                fail("timing.samples: must be strictly increasing");
                break;
            }
        }
    }
    // Every sampling interval (including the one closed by the end of the run)
    // must fit within [delta_lb, T].
    if (errors.empty()) {
        std::vector<double> ts = sc.sample_times();
        ts.push_back(sc.end_time());
        for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
            const double dk = ts[k + 1] - ts[k];
            if (dk < sc.timing.delta_lb - 1e-12 || dk > w0.T + 1e-12) {
                std::ostringstream msg;
                msg << "timing: sampling interval " << dk << " at t=" << ts[k]
                    << " outside [delta_lb=" << sc.timing.delta_lb << ", T=" << w0.T
                    << "] (sampled-data scheme requires delta_lb <= delta_k <= T)";
                fail(msg.str());
                break;
            }
        }
    }

    if (!(sc.solver.feasibility_tol > 0.0)) fail("solver.feasibility_tol: must be > 0");
    if (!(sc.beta_gain >= 0.0)) fail("diagnostics.beta_gain: must be >= 0");
    for (std::size_t i = 1; i < sc.speed.table.size(); ++i) {
        if (sc.speed.table[i].first <= sc.speed.table[i - 1].first) {
            fail("speed.table: time points must be strictly increasing");
            break;
        }
    }
    return errors;
}

Scenario parse_scenario(const std::string& json_text)
{
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("scenario: malformed JSON: ") + e.what());
    }

    Scenario sc;
    std::vector<std::string> errors;
    try {
        sc.name = j.value("name", "scenario");
        sc.mode = j.value("mode", "cpf");

        const json& tj = j.at("timing");
        sc.timing.t0 = tj.value("t0", 0.0);
        sc.timing.delta = tj.value("delta", 0.1);
        sc.timing.duration = tj.value("duration", 0.0);
        sc.timing.dt = tj.value("dt", 1e-3);
        if (tj.contains("delta_lb")) {
            sc.timing.delta_lb = tj["delta_lb"].get<double>();
        } else {
            errors.push_back("timing.delta_lb: required field is missing "
                             "(lower bound of the sampling interval)");
        }
        if (tj.contains("samples")) {
            sc.timing.samples = tj["samples"].get<std::vector<double>>();
        }

        if (j.contains("speed")) {
            const json& gj = j["speed"];
            sc.speed.v_d = gj.value("v_d", 2.0);
            if (gj.contains("table")) {
                for (const auto& row : gj["table"]) {
                    sc.speed.table.emplace_back(row[0].get<double>(), row[1].get<double>());
                }
            }
        }

        const json& grj = j.at("graph");
        std::vector<GraphEdge> edges;
        for (const auto& ej : grj.at("edges")) {
            GraphEdge e;
            e.from = ej.at("from").get<int>() - 1;  // agents are numbered from 1 in the file
            e.to = ej.at("to").get<int>() - 1;
            e.weight = ej.value("weight", 1.0);
            edges.push_back(e);
        }
        const int n_agents = static_cast<int>(j.at("agents").size());
        sc.graph = CommGraph(n_agents, edges);
        sc.gain.eps_bar = grj.at("eps_bar").get<double>();

        for (const auto& aj : j.at("agents")) {
            sc.agents.push_back(parse_agent(aj, sc.speed));
        }

        if (j.contains("solver")) {
            const json& sj = j["solver"];
            sc.solver.max_iterations = sj.value("max_iterations", sc.solver.max_iterations);
            sc.solver.penalty_rounds = sj.value("penalty_rounds", sc.solver.penalty_rounds);
            sc.solver.penalty_initial = sj.value("penalty_initial", sc.solver.penalty_initial);
            sc.solver.penalty_factor = sj.value("penalty_factor", sc.solver.penalty_factor);
            sc.solver.feasibility_tol = sj.value("feasibility_tol", sc.solver.feasibility_tol);
            sc.solver.target_tol = sj.value("target_tol", sc.solver.target_tol);
            sc.solver.fd_step = sj.value("fd_step", sc.solver.fd_step);
            sc.solver.gradient_tol = sj.value("gradient_tol", sc.solver.gradient_tol);
            sc.solver.cost_tol = sj.value("cost_tol", sc.solver.cost_tol);
            sc.solver.lbfgs_memory = sj.value("lbfgs_memory", sc.solver.lbfgs_memory);
        }
        if (j.contains("diagnostics")) {
            const json& dj = j["diagnostics"];
            sc.beta_gain = dj.value("beta_gain", sc.beta_gain);
            sc.solver_tol = dj.value("solver_tol", sc.solver_tol);
            sc.consensus_spread_tol = dj.value("consensus_spread_tol", sc.consensus_spread_tol);
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("scenario: ") + e.what());
    }

    std::vector<std::string> more = validate_scenario(sc);
    errors.insert(errors.end(), more.begin(), more.end());
    if (!errors.empty()) {
        std::string joined = "scenario validation failed:";
        for (const std::string& e : errors) joined += "\n  - " + e;
        throw ValidationError(joined);
    }
    return sc;
}

Scenario load_scenario(const std::string& path)
{
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot read scenario file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_scenario(ss.str());
}

}  // namespace cpf
