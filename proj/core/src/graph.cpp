#include "cpf/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

namespace cpf {

namespace {

void bfs(const Eigen::MatrixXd& adj, int start, bool transpose, std::vector<bool>& seen)
{
    const int n = static_cast<int>(adj.rows());
    std::queue<int> frontier;
    frontier.push(start);
    seen.assign(n, false);
    seen[start] = true;
    while (!frontier.empty()) {
        const int i = frontier.front();
        frontier.pop();
        for (int j = 0; j < n; ++j) {
            const double w = transpose ? adj(j, i) : adj(i, j);
            if (w > 0.0 && !seen[j]) {
                seen[j] = true;
                frontier.push(j);
            }
        }
    }
}

}  // namespace

CommGraph::CommGraph(int n_agents, std::vector<GraphEdge> edges)
    : n_agents_(n_agents), edges_(std::move(edges))
{
    if (n_agents_ < 1) {
        throw ValidationError("graph.n_agents: must be >= 1");
    }
    adj_ = Eigen::MatrixXd::Zero(n_agents_, n_agents_);
    std::set<std::pair<int, int>> seen;
    for (const GraphEdge& e : edges_) {
        std::ostringstream tag;
        tag << "graph.edge (" << e.from << "," << e.to << ")";
        if (e.from < 0 || e.from >= n_agents_ || e.to < 0 || e.to >= n_agents_) {
            throw ValidationError(tag.str() + ": node index out of range [0," +
                                  std::to_string(n_agents_ - 1) + "]");
        }
        if (e.from == e.to) {
            throw ValidationError(tag.str() + ": self-edges are not allowed");
        }
        if (!(e.weight > 0.0)) {
            throw ValidationError(tag.str() + ": weight must be strictly positive");
        }
        if (!seen.insert({e.from, e.to}).second) {
            throw ValidationError(tag.str() + ": duplicate edge");
        }
        adj_(e.from, e.to) = e.weight;
    }
}

std::vector<int> CommGraph::neighbors(int i) const
{
    std::vector<int> out;
    for (int j = 0; j < n_agents_; ++j) {
        if (adj_(i, j) > 0.0) out.push_back(j);
    }
    return out;
}

double CommGraph::weight(int i, int j) const { return adj_(i, j); }

double CommGraph::out_degree(int i) const { return adj_.row(i).sum(); }

double CommGraph::in_degree(int i) const { return adj_.col(i).sum(); }

bool CommGraph::is_balanced(double tol) const
{
    for (int i = 0; i < n_agents_; ++i) {
        if (std::abs(out_degree(i) - in_degree(i)) > tol) return false;
    }
    return true;
}

bool CommGraph::is_strongly_connected() const
{
    if (n_agents_ == 1) return true;
    std::vector<bool> fwd, bwd;
    bfs(adj_, 0, false, fwd);
    bfs(adj_, 0, true, bwd);
    for (int i = 0; i < n_agents_; ++i) {
        if (!fwd[i] || !bwd[i]) return false;
    }
    return true;
}

bool CommGraph::is_isolated(int i) const
{
    return out_degree(i) == 0.0 && in_degree(i) == 0.0;
}

Eigen::MatrixXd CommGraph::adjacency() const { return adj_; }

double max_degree(const CommGraph& g)
{
    double d = 0.0;
    for (int i = 0; i < g.size(); ++i) d = std::max(d, g.out_degree(i));
    return d;
}

void validate_gain(const CommGraph& g, ConsensusGain gain)
{
    const double delta = max_degree(g);
    const double upper = delta > 0.0 ? 1.0 / delta : std::numeric_limits<double>::infinity();
    if (!(gain.eps_bar > 0.0) || !(gain.eps_bar < upper)) {
        std::ostringstream msg;
        msg << "gain.eps_bar: " << gain.eps_bar << " outside (0, 1/max_degree = " << upper
            << ") required for a primitive Perron matrix";
        throw ValidationError(msg.str());
    }
}

Eigen::MatrixXd laplacian(const CommGraph& g)
{
    const Eigen::MatrixXd a = g.adjacency();
    Eigen::MatrixXd l = -a;
    for (int i = 0; i < g.size(); ++i) l(i, i) = a.row(i).sum();
    return l;
}

Eigen::MatrixXd perron(const CommGraph& g, ConsensusGain gain)
{
    validate_gain(g, gain);
    const int n = g.size();
    return Eigen::MatrixXd::Identity(n, n) - gain.eps_bar * laplacian(g);
}

double lambda2(const CommGraph& g)
{
    const Eigen::MatrixXd l = laplacian(g);
    const Eigen::MatrixXd ls = 0.5 * (l + l.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ls);
    if (g.size() < 2) return 0.0;
    return es.eigenvalues()(1);
}

double mu2(const CommGraph& g, ConsensusGain gain)
{
    return 1.0 - gain.eps_bar * lambda2(g);
}

PerronReport verify_perron(const CommGraph& g, ConsensusGain gain)
{
    const int n = g.size();
    const Eigen::MatrixXd p =
        Eigen::MatrixXd::Identity(n, n) - gain.eps_bar * laplacian(g);

    PerronReport rep;
    rep.nonnegative = (p.minCoeff() >= -1e-12);

    const Eigen::VectorXd row_sums = p.rowwise().sum();
    const Eigen::VectorXd col_sums = p.colwise().sum();
    rep.row_stochastic =
        rep.nonnegative && (row_sums.array() - 1.0).abs().maxCoeff() <= 1e-12;
    rep.doubly_stochastic =
        rep.row_stochastic && (col_sums.array() - 1.0).abs().maxCoeff() <= 1e-12;

    Eigen::EigenSolver<Eigen::MatrixXd> es(p);
    rep.eigenvalue_moduli.resize(n);
    double closest_to_one = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        rep.eigenvalue_moduli[i] = std::abs(es.eigenvalues()(i));
        closest_to_one = std::min(closest_to_one, std::abs(es.eigenvalues()(i) - 1.0));
    }
    std::sort(rep.eigenvalue_moduli.begin(), rep.eigenvalue_moduli.end(), std::greater<>());
    rep.max_modulus = rep.eigenvalue_moduli.front();
    rep.second_modulus = n > 1 ? rep.eigenvalue_moduli[1] : 0.0;
    rep.spectrum_in_unit_disk = rep.max_modulus <= 1.0 + 1e-12;
    rep.has_unit_eigenvalue = closest_to_one <= 1e-9;
    // Numeric proxy for primitivity: the maximum-modulus eigenvalue is unique
    // within a relative gap (a single node is trivially primitive).
    rep.primitive =
        (rep.max_modulus - rep.second_modulus) > 1e-9 * std::max(rep.max_modulus, 1e-300);
    return rep;
}

double consensus_law(const CommGraph& g, ConsensusGain gain, int agent, double gamma_i,
                     const std::map<int, double>& gamma_neighbors)
{
    validate_gain(g, gain);
    const std::vector<int> nbrs = g.neighbors(agent);
    if (gamma_neighbors.size() != nbrs.size()) {
        throw ValidationError("consensus_law: neighbor values must cover exactly the neighborhood of agent " +
                              std::to_string(agent));
    }
    double sum = 0.0;
    for (int j : nbrs) {
        const auto it = gamma_neighbors.find(j);
        if (it == gamma_neighbors.end()) {
            throw ValidationError("consensus_law: missing value for neighbor " + std::to_string(j));
        }
        sum += g.weight(agent, j) * (gamma_i - it->second);
    }
    return -gain.eps_bar * sum;
}

DisagreementSnapshot disagreement(const Eigen::VectorXd& values, const CommGraph& g)
{
    if (values.size() != g.size()) {
        throw ValidationError("disagreement: value vector length must equal the number of agents");
    }
    DisagreementSnapshot s;
    s.alpha = values.mean();
    s.delta = values.array() - s.alpha;
    s.phi = 0.0;
    for (const GraphEdge& e : g.edges()) {
        const double d = values(e.from) - values(e.to);
        s.phi += d * d;
    }
    return s;
}

bool at_consensus(const Eigen::VectorXd& values, double tol)
{
    return values.size() == 0 || (values.maxCoeff() - values.minCoeff()) < tol;
}

IssStepReport iss_step_check(const CommGraph& g, ConsensusGain gain, const Eigen::VectorXd& xi_k,
                             const Eigen::VectorXd& eta_k, const Eigen::VectorXd& xi_k1, double tol)
{
    if (!g.is_balanced() || !g.is_strongly_connected()) {
        throw ValidationError("iss_step_check: requires a balanced, strongly connected graph");
    }
    validate_gain(g, gain);

    const DisagreementSnapshot dk = disagreement(xi_k, g);
    const DisagreementSnapshot dk1 = disagreement(xi_k1, g);
    const Eigen::VectorXd delta_eta = eta_k.array() - eta_k.mean();

    IssStepReport rep;
    rep.mu2 = mu2(g, gain);
    rep.lambda_phi = 0.5 * (1.0 - rep.mu2 * rep.mu2);
    const double a = std::sqrt(0.5 * (1.0 - rep.mu2 * rep.mu2));
    const double b = -rep.mu2 / a;
    rep.c = b * b + 1.0;
    rep.phi_k = dk.delta.squaredNorm();
    rep.phi_k1 = dk1.delta.squaredNorm();
    rep.lhs = rep.phi_k1;
    rep.rhs = (1.0 - rep.lambda_phi) * rep.phi_k + rep.c * delta_eta.squaredNorm();
    rep.margin = rep.rhs - rep.lhs;
    rep.pass = rep.lhs <= rep.rhs + tol;
    return rep;
}

double beta_envelope(double r, double s, const CommGraph& g, ConsensusGain gain,
                     double lambda_eta_min, double a_eta_max, int k0)
{
    if (r < 0.0 || s < 0.0) {
        throw ValidationError("beta_envelope: r and s must be non-negative");
    }
    validate_gain(g, gain);

    const double m2 = mu2(g, gain);
    const double lambda_phi = 0.5 * (1.0 - m2 * m2);
    const double q = 1.0 - lambda_phi;
    const double a = std::sqrt(0.5 * (1.0 - m2 * m2));
    const double b = -m2 / a;
    const double c = b * b + 1.0;

    const Eigen::MatrixXd l = laplacian(g);
    const double l_norm = l.jacobiSvd().singularValues()(0);

    const double n_steps = std::floor(s) + static_cast<double>(k0);
    const double decay_q = std::pow(q, 0.5 * n_steps);
    const double decay_e = std::exp(-lambda_eta_min * n_steps);

    double d = 0.0;
    if (a_eta_max > 0.0) {
        const double denom = std::abs(1.0 - q * std::exp(2.0 * lambda_eta_min));
        d = c * static_cast<double>(g.size()) * a_eta_max * a_eta_max *
            std::exp(2.0 * lambda_eta_min) / denom;
    }
    return l_norm * decay_q * r + l_norm * std::sqrt(d) * (decay_e + decay_q);
}

}  // namespace cpf
