#include "cpf/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

namespace cpf {

namespace {

constexpr double kTimeEps = 1e-12;

struct SegmentIn {
    VehicleInput u;
    double v = 0.0;
    double uaux = 0.0;
};

struct Rates {
    Eigen::Vector3d dp;
    Eigen::Matrix3d dR;
    double dgamma = 0.0;
    double deta = 0.0;
};

inline Rates rates_at(const AgentFlowState& s, const SegmentIn& in, double g)
{
    Rates r;
    r.dp = s.pose.R.col(0) * in.u.v1;
    r.dR = s.pose.R * skew(in.u.omega());
    r.dgamma = g + in.uaux + s.eta;
    r.deta = in.v;
    return r;
}

inline AgentFlowState offset_state(const AgentFlowState& s, const Rates& r, double h)
{
    AgentFlowState out;
    out.pose.p = s.pose.p + h * r.dp;
    out.pose.R = s.pose.R + h * r.dR;
    out.gamma = s.gamma + h * r.dgamma;
    out.eta = s.eta + h * r.deta;
    return out;
}

AgentFlowState rk4_const(const AgentFlowState& s, double t, double h, const SegmentIn& in,
                         const SpeedSpec& speed)
{
    const double g1 = speed.eval(t);
    const double g2 = speed.eval(t + 0.5 * h);
    const double g4 = speed.eval(t + h);

    const Rates k1 = rates_at(s, in, g1);
    const Rates k2 = rates_at(offset_state(s, k1, 0.5 * h), in, g2);
    const Rates k3 = rates_at(offset_state(s, k2, 0.5 * h), in, g2);
    const Rates k4 = rates_at(offset_state(s, k3, h), in, g4);

    AgentFlowState out;
    out.pose.p = s.pose.p + h / 6.0 * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp);
    out.pose.R = s.pose.R + h / 6.0 * (k1.dR + 2.0 * k2.dR + 2.0 * k3.dR + k4.dR);
    out.gamma = s.gamma + h / 6.0 * (k1.dgamma + 2.0 * k2.dgamma + 2.0 * k3.dgamma + k4.dgamma);
    out.eta = s.eta + h / 6.0 * (k1.deta + 2.0 * k2.deta + 2.0 * k3.deta + k4.deta);
    out.pose.R = reorthonormalize(out.pose.R);
    return out;
}

/// Integrates one input segment [a, b], splitting at the consensus-signal
/// cutoff so every RK4 step sees constant inputs.
AgentFlowState advance_segment(AgentFlowState s, double a, double b, SegmentIn in,
                               const AuxConsensusSignal& sig, const SpeedSpec& speed,
                               int substeps)
{
    double edges[3] = {a, b, b};
    int n_pieces = 1;
    if (sig.active_until > a + kTimeEps && sig.active_until < b - kTimeEps) {
        edges[1] = sig.active_until;
        edges[2] = b;
        n_pieces = 2;
    }
    for (int p = 0; p < n_pieces; ++p) {
        const double pa = edges[p];
        const double pb = edges[p + 1];
        in.uaux = sig.eval(0.5 * (pa + pb));
        const double h = (pb - pa) / substeps;
        for (int k = 0; k < substeps; ++k) {
            s = rk4_const(s, pa + k * h, h, in, speed);
        }
    }
    return s;
}

inline VehicleInput clamp_input(VehicleInput u, const InputBounds& box)
{
    u.v1 = std::clamp(u.v1, -box.v_max, box.v_max);
    u.w2 = std::clamp(u.w2, -box.w2_max, box.w2_max);
    u.w3 = std::clamp(u.w3, -box.w3_max, box.w3_max);
    return u;
}

double eta_tube_bound(const MpcWeights& w, double t, double t0)
{
    return w.a_eta * std::exp(-w.lambda_eta_env * (t - t0));
}

}  // namespace

void validate_weights(const MpcWeights& w)
{
    auto check_psd = [](const Eigen::Matrix3d& m, const char* name) {
        if ((m - m.transpose()).norm() > 1e-12) {
            throw ValidationError(std::string("weights.") + name + ": must be symmetric");
        }
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m);
        if (es.eigenvalues()(0) < -1e-12) {
            throw ValidationError(std::string("weights.") + name + ": must be positive semidefinite");
        }
    };
    check_psd(w.Q, "Q");
    check_psd(w.U, "U");
    if (!(w.Qc > 0.0)) throw ValidationError("weights.Qc: must be > 0");
    if (!(w.Uc > 0.0)) throw ValidationError("weights.Uc: must be > 0");
    if (w.m_eta < 0.0) throw ValidationError("weights.m_eta: must be >= 0");
    if (!(w.lambda_eta > 0.0)) throw ValidationError("weights.lambda_eta: must be > 0");
    if (w.a_eta < 0.0) throw ValidationError("weights.a_eta: must be >= 0");
    if (!(w.lambda_eta_env > 0.0)) throw ValidationError("weights.lambda_eta_env: must be > 0");
    if (w.r_eta < 0.0) throw ValidationError("weights.r_eta: must be >= 0");
    if (!(w.T > 0.0)) throw ValidationError("weights.T: horizon must be > 0");
    if (w.n_segments < 1) throw ValidationError("weights.n_segments: must be >= 1");
    if (w.substeps < 2 || w.substeps % 2 != 0) {
        throw ValidationError("weights.substeps: must be even and >= 2 (Simpson quadrature grid)");
    }
    // Terminal-controller domination of the consensus stage cost:
    //   Qc + lambda_eta^2 Uc <= m_eta lambda_eta.
    const double lhs = w.Qc + w.lambda_eta * w.lambda_eta * w.Uc;
    if (lhs > w.m_eta * w.lambda_eta + 1e-12) {
        std::ostringstream msg;
        msg << "weights.m_eta: terminal consensus weight too small: Qc + lambda_eta^2*Uc = " << lhs
            << " must not exceed m_eta*lambda_eta = " << w.m_eta * w.lambda_eta;
        throw ValidationError(msg.str());
    }
}

double SpeedSpec::eval(double t) const
{
    if (table.empty()) return v_d;
    if (t <= table.front().first) return table.front().second;
    if (t >= table.back().first) return table.back().second;
    for (std::size_t i = 1; i < table.size(); ++i) {
        if (t <= table[i].first) {
            const auto& [t0, g0] = table[i - 1];
            const auto& [t1, g1] = table[i];
            const double a = (t - t0) / (t1 - t0);
            return g0 + a * (g1 - g0);
        }
    }
    return table.back().second;
}

void validate_model(const AgentModel& model)
{
    validate_path(model.path);
    validate_gains(model.gains);
    validate_weights(model.weights);
    delta_matrix(model.offset);  // throws when eps(0) == 0

    if (std::abs(model.gains.lambda_eta - model.weights.lambda_eta) > 1e-12) {
        throw ValidationError("gains.lambda_eta: must equal weights.lambda_eta (one deviation rate)");
    }
    const InputBounds aux = aux_input_bounds(model.path, model.offset, model.gains,
                                             model.weights.r_eta);
    if (model.input_box.v_max < aux.v_max - 1e-9 || model.input_box.w2_max < aux.w2_max - 1e-9 ||
        model.input_box.w3_max < aux.w3_max - 1e-9) {
        throw ValidationError(
            "model.input_box: must contain the auxiliary-law bounds so the "
            "auxiliary controller stays feasible");
    }
    if (model.v_gamma_max < model.weights.r_eta * model.weights.lambda_eta - 1e-12) {
        throw ValidationError(
            "model.v_gamma_max: must be >= r_eta*lambda_eta so the terminal "
            "controller's rate stays admissible");
    }
    if (model.output_box && model.output_box->minCoeff() <= 0.0) {
        throw ValidationError("model.output_box: bounds must be > 0 when given");
    }
}

DecisionVars DecisionVars::zero(int n_segments)
{
    DecisionVars d;
    d.u_segments = Eigen::MatrixXd::Zero(n_segments, 3);
    d.v_segments = Eigen::VectorXd::Zero(n_segments);
    return d;
}

void Prediction::clear()
{
    times.clear();
    poses.clear();
    gammas.clear();
    etas.clear();
    ys.clear();
    us.clear();
    vs.clear();
    u_gamma_aux.clear();
    pieces.clear();
}

AuxConsensusSignal build_aux_signal(const MpcContext& ctx, const ProblemParams& params)
{
    return aux_consensus_signal(params.t, params.sample_delta_k, ctx.graph, ctx.gain, ctx.agent,
                                params.gamma, params.gamma_neighbors);
}

void predict_into(const ProblemParams& params, const DecisionVars& dec, const AgentModel& model,
                  const SpeedSpec& speed, const AuxConsensusSignal& aux_signal, Prediction& out)
{
    const MpcWeights& w = model.weights;
    const int n = w.n_segments;
    if (dec.u_segments.rows() != n || dec.v_segments.size() != n) {
        throw ValidationError("predict: decision variables do not match n_segments");
    }
    const double hseg = w.T / n;

    out.clear();
    const std::size_t cap = static_cast<std::size_t>((n + 1) * (w.substeps + 1));
    out.times.reserve(cap);
    out.poses.reserve(cap);
    out.gammas.reserve(cap);
    out.etas.reserve(cap);
    out.ys.reserve(cap);
    out.us.reserve(cap);
    out.vs.reserve(cap);
    out.u_gamma_aux.reserve(cap);

    AgentFlowState s{params.x, params.gamma, params.eta};

    auto record = [&](double t, const SegmentIn& in) {
        out.times.push_back(t);
        out.poses.push_back(s.pose);
        out.gammas.push_back(s.gamma);
        out.etas.push_back(s.eta);
        out.ys.push_back(output_y(s.pose, model.offset, model.path, s.gamma));
        out.us.push_back(in.u.as_vector());
        out.vs.push_back(in.v);
        out.u_gamma_aux.push_back(in.uaux);
    };

    for (int j = 0; j < n; ++j) {
        const double a = params.t + j * hseg;
        const double b = (j == n - 1) ? params.t + w.T : params.t + (j + 1) * hseg;
        SegmentIn in;
        in.u = VehicleInput{dec.u_segments(j, 0), dec.u_segments(j, 1), dec.u_segments(j, 2)};
        in.v = dec.v_segments(j);

        double edges[3] = {a, b, b};
        int n_pieces = 1;
        if (aux_signal.active_until > a + kTimeEps && aux_signal.active_until < b - kTimeEps) {
            edges[1] = aux_signal.active_until;
            edges[2] = b;
            n_pieces = 2;
        }
        for (int p = 0; p < n_pieces; ++p) {
            const double pa = edges[p];
            const double pb = edges[p + 1];
            in.uaux = aux_signal.eval(0.5 * (pa + pb));
            const double h = (pb - pa) / w.substeps;
            Prediction::Piece piece{static_cast<int>(out.times.size()), w.substeps + 1, h};
            record(pa, in);
            for (int k = 0; k < w.substeps; ++k) {
                s = rk4_const(s, pa + k * h, h, in, speed);
                record(pa + (k + 1) * h, in);
            }
            out.pieces.push_back(piece);
        }
    }
}

Prediction predict(const ProblemParams& params, const DecisionVars& dec, const AgentModel& model,
                   const SpeedSpec& speed, const AuxConsensusSignal& aux_signal)
{
    Prediction out;
    predict_into(params, dec, model, speed, aux_signal, out);
    return out;
}

AuxGains effective_gains(const AgentModel& model, const SpeedSpec& speed, double t)
{
    AuxGains gains = model.gains;
    if (!speed.is_constant()) gains.v_d = speed.eval(t);
    return gains;
}

double stage_cost(double t, const Pose& x, const VehicleInput& u, double gamma, double u_gamma,
                  const MpcWeights& w, const AgentModel& model, const SpeedSpec* speed)
{
    const Eigen::Vector3d y = output_y(x, model.offset, model.path, gamma);
    const AuxGains gains =
        speed ? effective_gains(model, *speed, t) : model.gains;
    const VehicleInput ka = k_aux(t, x, gamma, u_gamma, model.path, gains, model.offset);
    const Eigen::Vector3d du = u.as_vector() - ka.as_vector();
    return y.dot(w.Q * y) + du.dot(w.U * du);
}

double consensus_stage_cost(double eta, double v_gamma, const MpcWeights& w)
{
    return w.Qc * eta * eta + w.Uc * v_gamma * v_gamma;
}

double terminal_cost(const Eigen::Vector3d& y_terminal, const MpcWeights& w,
                     const AuxGains& gains)
{
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(w.Q);
    const double q_max = es.eigenvalues()(2);
    const double n = y_terminal.norm();
    return q_max / (3.0 * lambda_min_K(gains)) * n * n * n;
}

double total_cost_of_prediction(const Prediction& pred, const MpcWeights& w,
                                const AgentModel& model, const SpeedSpec* speed)
{
    double j = 0.0;
    for (const Prediction::Piece& piece : pred.pieces) {
        double acc = 0.0;
        for (int i = 0; i < piece.count; ++i) {
            const int idx = piece.first + i;
            const VehicleInput u{pred.us[idx].x(), pred.us[idx].y(), pred.us[idx].z()};
            const double u_gamma = pred.u_gamma_aux[idx] + pred.etas[idx];
            const double f =
                stage_cost(pred.times[idx], pred.poses[idx], u, pred.gammas[idx], u_gamma, w,
                           model, speed) +
                consensus_stage_cost(pred.etas[idx], pred.vs[idx], w);
            const double weight = (i == 0 || i == piece.count - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
            acc += weight * f;
        }
        j += piece.h / 3.0 * acc;
    }
    j += terminal_cost(pred.terminal_y(), w, model.gains);
    const double eta_t = pred.terminal_eta();
    j += 0.5 * w.m_eta * eta_t * eta_t;
    return j;
}

double total_cost(const ProblemParams& params, const DecisionVars& dec, const AgentModel& model,
                  const SpeedSpec& speed, const AuxConsensusSignal& aux_signal)
{
    const Prediction pred = predict(params, dec, model, speed, aux_signal);
    return total_cost_of_prediction(pred, model.weights, model, &speed);
}

double ConstraintSlacks::min_slack() const
{
    double m = std::numeric_limits<double>::infinity();
    if (u_box.size() > 0) m = std::min(m, u_box.minCoeff());
    if (v_box.size() > 0) m = std::min(m, v_box.minCoeff());
    m = std::min(m, terminal_eta);
    if (envelope.size() > 0) m = std::min(m, envelope.minCoeff());
    if (output_box.size() > 0) m = std::min(m, output_box.minCoeff());
    return m;
}

ConstraintSlacks constraint_violations(const ProblemParams& params, const Prediction& pred,
                                       const DecisionVars& dec, const MpcWeights& w,
                                       const AgentModel& model, bool envelope_active)
{
    const int n = w.n_segments;
    ConstraintSlacks s;
    s.u_box.resize(3 * n);
    s.v_box.resize(n);
    for (int j = 0; j < n; ++j) {
        s.u_box(3 * j + 0) = model.input_box.v_max - std::abs(dec.u_segments(j, 0));
        s.u_box(3 * j + 1) = model.input_box.w2_max - std::abs(dec.u_segments(j, 1));
        s.u_box(3 * j + 2) = model.input_box.w3_max - std::abs(dec.u_segments(j, 2));
        s.v_box(j) = model.v_gamma_max - std::abs(dec.v_segments(j));
    }
    s.terminal_eta = w.r_eta - std::abs(pred.terminal_eta());
    if (envelope_active) {
        const double bound = eta_tube_bound(w, params.t, params.t0);
        s.envelope.resize(static_cast<int>(pred.etas.size()));
        for (std::size_t i = 0; i < pred.etas.size(); ++i) {
            s.envelope(static_cast<int>(i)) = bound - std::abs(pred.etas[i]);
        }
    }
    if (model.output_box) {
        s.output_box.resize(static_cast<int>(3 * pred.ys.size()));
        for (std::size_t i = 0; i < pred.ys.size(); ++i) {
            for (int c = 0; c < 3; ++c) {
                s.output_box(static_cast<int>(3 * i + c)) =
                    (*model.output_box)(c)-std::abs(pred.ys[i](c));
            }
        }
    }
    return s;
}

DecisionVars auxiliary_pair(const MpcContext& ctx, const ProblemParams& params)
{
    const AgentModel& model = ctx.model;
    const MpcWeights& w = model.weights;
    const AuxConsensusSignal sig = build_aux_signal(ctx, params);
    const int n = w.n_segments;
    const double hseg = w.T / n;

    DecisionVars dec = DecisionVars::zero(n);
    AgentFlowState s{params.x, params.gamma, params.eta};
    for (int j = 0; j < n; ++j) {
        const double tau = params.t + j * hseg;
        const double uaux = sig.eval(tau + 1e-9 * hseg);
        VehicleInput u = k_aux(tau, s.pose, s.gamma, uaux + s.eta, model.path,
                               effective_gains(model, ctx.speed, tau), model.offset);
        u = clamp_input(u, model.input_box);
        const double v = std::clamp(-w.lambda_eta * s.eta, -model.v_gamma_max, model.v_gamma_max);

        dec.u_segments.row(j) = u.as_vector().transpose();
        dec.v_segments(j) = v;

        const double b = (j == n - 1) ? params.t + w.T : params.t + (j + 1) * hseg;
        s = advance_segment(s, tau, b, SegmentIn{u, v, 0.0}, sig, ctx.speed, w.substeps);
    }
    return dec;
}

DecisionVars shift_warm_start(const MpcContext& ctx, const DecisionVars& prev_dec, double delta,
                              const ProblemParams& p_new)
{
    const AgentModel& model = ctx.model;
    const MpcWeights& w = model.weights;
    const int n = w.n_segments;
    const double hseg = w.T / n;
    if (!(delta > 0.0) || delta > w.T + kTimeEps) {
        throw ValidationError("shift_warm_start: delta must lie in (0, T]");
    }
    if (prev_dec.u_segments.rows() != n) {
        throw ValidationError("shift_warm_start: previous decision has wrong segment count");
    }

    const AuxConsensusSignal sig = build_aux_signal(ctx, p_new);
    const double prev_t = p_new.t - delta;

    DecisionVars dec = DecisionVars::zero(n);
    AgentFlowState s{p_new.x, p_new.gamma, p_new.eta};
    for (int j = 0; j < n; ++j) {
        const double tau = p_new.t + j * hseg;
        VehicleInput u;
        double v = 0.0;
        if (tau < prev_t + w.T - 1e-9 * hseg) {
            int idx = static_cast<int>(std::floor((tau - prev_t) / hseg + 1e-9));
            idx = std::clamp(idx, 0, n - 1);
            u = VehicleInput{prev_dec.u_segments(idx, 0), prev_dec.u_segments(idx, 1),
                             prev_dec.u_segments(idx, 2)};
            v = prev_dec.v_segments(idx);
        } else {
            const double uaux = sig.eval(tau + 1e-9 * hseg);
            u = clamp_input(k_aux(tau, s.pose, s.gamma, uaux + s.eta, model.path,
                                  effective_gains(model, ctx.speed, tau), model.offset),
                            model.input_box);
            v = std::clamp(-w.lambda_eta * s.eta, -model.v_gamma_max, model.v_gamma_max);
        }
        dec.u_segments.row(j) = u.as_vector().transpose();
        dec.v_segments(j) = v;

        const double b = (j == n - 1) ? p_new.t + w.T : p_new.t + (j + 1) * hseg;
        s = advance_segment(s, tau, b, SegmentIn{u, v, 0.0}, sig, ctx.speed, w.substeps);
    }
    return dec;
}

namespace {

struct PackedProblem {
    const MpcContext* ctx = nullptr;
    const ProblemParams* params = nullptr;
    AuxConsensusSignal sig;
    Eigen::VectorXd lb, ub;
    int n_vars = 0;
    mutable Prediction pred;
    mutable DecisionVars dec;
    mutable int evals = 0;

    void init(const MpcContext& c, const ProblemParams& p)
    {
        ctx = &c;
        params = &p;
        sig = build_aux_signal(c, p);
        const int n = c.model.weights.n_segments;
        n_vars = 4 * n;
        lb.resize(n_vars);
        ub.resize(n_vars);
        for (int j = 0; j < n; ++j) {
            ub(4 * j + 0) = c.model.input_box.v_max;
            ub(4 * j + 1) = c.model.input_box.w2_max;
            ub(4 * j + 2) = c.model.input_box.w3_max;
            ub(4 * j + 3) = c.model.v_gamma_max;
        }
        lb = -ub;
        dec = DecisionVars::zero(n);
    }

    void unpack(const Eigen::VectorXd& z) const
    {
        const int n = ctx->model.weights.n_segments;
        for (int j = 0; j < n; ++j) {
            dec.u_segments(j, 0) = z(4 * j + 0);
            dec.u_segments(j, 1) = z(4 * j + 1);
            dec.u_segments(j, 2) = z(4 * j + 2);
            dec.v_segments(j) = z(4 * j + 3);
        }
    }

    Eigen::VectorXd pack(const DecisionVars& d) const
    {
        const int n = ctx->model.weights.n_segments;
        Eigen::VectorXd z(n_vars);
        for (int j = 0; j < n; ++j) {
            z(4 * j + 0) = d.u_segments(j, 0);
            z(4 * j + 1) = d.u_segments(j, 1);
            z(4 * j + 2) = d.u_segments(j, 2);
            z(4 * j + 3) = d.v_segments(j);
        }
        return z;
    }

    Eigen::VectorXd project(Eigen::VectorXd z) const
    {
        return z.cwiseMax(lb).cwiseMin(ub);
    }

    // Cost plus squared hinge of the non-box constraints. Box constraints are
    // maintained by projection and never penalized.
    double eval(const Eigen::VectorXd& z, double rho, double* cost_out, double* viol_out) const
    {
        ++evals;
        unpack(z);
        predict_into(*params, dec, ctx->model, ctx->speed, sig, pred);
        const double cost =
            total_cost_of_prediction(pred, ctx->model.weights, ctx->model, &ctx->speed);

        double pen = 0.0;
        double worst = 0.0;
        auto add = [&](double slack) {
            if (slack < 0.0) {
                pen += slack * slack;
                worst = std::max(worst, -slack);
            }
        };
        const MpcWeights& w = ctx->model.weights;
        add(w.r_eta - std::abs(pred.terminal_eta()));
        if (ctx->envelope_active()) {
            const double bound = eta_tube_bound(w, params->t, params->t0);
            for (double e : pred.etas) add(bound - std::abs(e));
        }
        if (ctx->model.output_box) {
            for (const Eigen::Vector3d& y : pred.ys) {
                for (int c = 0; c < 3; ++c) add((*ctx->model.output_box)(c) - std::abs(y(c)));
            }
        }
        if (cost_out) *cost_out = cost;
        if (viol_out) *viol_out = worst;
        return cost + rho * pen;
    }

    Eigen::VectorXd fd_gradient(const Eigen::VectorXd& z, double rho, double h) const
    {
        Eigen::VectorXd g(n_vars);
        Eigen::VectorXd zp = z;
        for (int i = 0; i < n_vars; ++i) {
            const double zi = z(i);
            zp(i) = zi + h;
            const double fp = eval(zp, rho, nullptr, nullptr);
            zp(i) = zi - h;
            const double fm = eval(zp, rho, nullptr, nullptr);
            zp(i) = zi;
            g(i) = (fp - fm) / (2.0 * h);
        }
        return g;
    }
};

struct LbfgsMemory {
    std::deque<Eigen::VectorXd> s, y;
    std::deque<double> rho;
    int capacity = 8;

    void clear()
    {
        s.clear();
        y.clear();
        rho.clear();
    }

    void push(const Eigen::VectorXd& si, const Eigen::VectorXd& yi)
    {
        const double sy = si.dot(yi);
        if (sy <= 1e-12 * si.norm() * yi.norm()) return;
        s.push_back(si);
        y.push_back(yi);
        rho.push_back(1.0 / sy);
        while (static_cast<int>(s.size()) > capacity) {
            s.pop_front();
            y.pop_front();
            rho.pop_front();
        }
    }

    Eigen::VectorXd direction(const Eigen::VectorXd& g) const
    {
        Eigen::VectorXd q = g;
        const int m = static_cast<int>(s.size());
        std::vector<double> alpha(m);
        for (int i = m - 1; i >= 0; --i) {
            alpha[i] = rho[i] * s[i].dot(q);
            q -= alpha[i] * y[i];
        }
        if (m > 0) {
            const double gamma = s.back().dot(y.back()) / y.back().squaredNorm();
            q *= gamma;
        }
        for (int i = 0; i < m; ++i) {
            const double beta = rho[i] * y[i].dot(q);
            q += (alpha[i] - beta) * s[i];
        }
        return -q;
    }
};

// Inner loop: projected quasi-Newton descent of the penalized objective at
// fixed rho. Updates z in place; returns iterations spent.
int minimize_penalized(const PackedProblem& prob, Eigen::VectorXd& z, double rho,
                       const SolverOptions& opts)
{
    LbfgsMemory mem;
    mem.capacity = opts.lbfgs_memory;

    double f = prob.eval(z, rho, nullptr, nullptr);
    Eigen::VectorXd g = prob.fd_gradient(z, rho, opts.fd_step);
    int stall = 0;

    int iter = 0;
    for (; iter < opts.max_iterations; ++iter) {
        // Projected-gradient stationarity on the box.
        double pg_inf = 0.0;
        for (int i = 0; i < prob.n_vars; ++i) {
            const bool at_lb = z(i) <= prob.lb(i) + 1e-14;
            const bool at_ub = z(i) >= prob.ub(i) - 1e-14;
            if ((at_lb && g(i) > 0.0) || (at_ub && g(i) < 0.0)) continue;
            pg_inf = std::max(pg_inf, std::abs(g(i)));
        }
        if (pg_inf < opts.gradient_tol) break;

        Eigen::VectorXd d = mem.direction(g);
        if (d.dot(g) > -1e-14) d = -g;

        double alpha = 1.0;
        double f_new = f;
        Eigen::VectorXd z_new = z;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            z_new = prob.project(z + alpha * d);
            f_new = prob.eval(z_new, rho, nullptr, nullptr);
            const double decrease = g.dot(z_new - z);
            if (f_new <= f + 1e-4 * decrease && f_new < f) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
            if (alpha < 1e-14) break;
        }
        if (!accepted) break;

        const Eigen::VectorXd g_new = prob.fd_gradient(z_new, rho, opts.fd_step);
        mem.push(z_new - z, g_new - g);

        const double improvement = f - f_new;
        z = z_new;
        f = f_new;
        g = g_new;
        if (improvement < opts.cost_tol * (1.0 + std::abs(f))) {
            if (++stall >= 2) break;
        } else {
            stall = 0;
        }
    }
    return iter;
}

}  // namespace

SolveResult solve(const MpcContext& ctx, const ProblemParams& params, const SolverOptions& opts,
                  const std::optional<DecisionVars>& warm)
{
    PackedProblem prob;
    prob.init(ctx, params);

    const DecisionVars ref_dec = warm ? *warm : auxiliary_pair(ctx, params);
    const Eigen::VectorXd z_ref = prob.project(prob.pack(ref_dec));

    double ref_cost = 0.0, ref_viol = 0.0;
    prob.eval(z_ref, 0.0, &ref_cost, &ref_viol);

    SolveResult result;
    result.diag.reference_cost = ref_cost;

    Eigen::VectorXd z = z_ref;
    double rho = opts.penalty_initial;
    int iterations = 0;
    for (int round = 0; round < opts.penalty_rounds; ++round) {
        iterations += minimize_penalized(prob, z, rho, opts);
        double viol = 0.0;
        prob.eval(z, 0.0, nullptr, &viol);
        if (viol <= opts.target_tol) break;
        rho *= opts.penalty_factor;
    }

    double cand_cost = 0.0, cand_viol = 0.0;
    prob.eval(z, 0.0, &cand_cost, &cand_viol);

    const bool cand_ok =
        cand_viol <= std::max(opts.feasibility_tol, ref_viol) && cand_cost <= ref_cost;
    if (!cand_ok) {
        z = z_ref;
        cand_cost = ref_cost;
        cand_viol = ref_viol;
        result.diag.used_reference = true;
    }

    if (cand_viol > opts.feasibility_tol) {
        prob.unpack(z);
        std::ostringstream msg;
        msg << "mpc solve: no iterate within the budget met the feasibility tolerance "
            << opts.feasibility_tol << " (best max violation " << cand_viol << ")";
        throw InfeasibleError(msg.str(), prob.dec, cand_viol);
    }

    prob.unpack(z);
    result.dec = prob.dec;
    result.cost = cand_cost;
    result.diag.iterations = iterations;
    result.diag.cost_evaluations = prob.evals;
    result.diag.max_violation = cand_viol;
    return result;
}

ValueDecreaseReport value_decrease_check(const std::vector<double>& sample_times,
                                         const std::vector<double>& j_star,
                                         const std::vector<double>& stage_integrals,
                                         const std::vector<double>& kcon_norms, double delta_lb,
                                         double solver_tol, double beta_gain)
{
    if (sample_times.size() != j_star.size() || stage_integrals.size() + 1 < sample_times.size() ||
        kcon_norms.size() + 1 < sample_times.size()) {
        throw ValidationError("value_decrease_check: inconsistent trace lengths");
    }
    if (!(delta_lb > 0.0)) {
        throw ValidationError("value_decrease_check: delta_lb must be > 0");
    }
    ValueDecreaseReport rep;
    for (std::size_t k = 0; k + 1 < sample_times.size(); ++k) {
        const double lhs = j_star[k + 1] - j_star[k] + stage_integrals[k];
        const double budget = beta_gain * kcon_norms[k] / delta_lb + solver_tol;
        ++rep.checks;
        if (lhs > budget) {
            ++rep.flagged;
            rep.flagged_samples.push_back(static_cast<int>(k));
            rep.max_excess = std::max(rep.max_excess, lhs - budget);
        }
    }
    return rep;
}

}  // namespace cpf
