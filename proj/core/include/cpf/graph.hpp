#pragma once

#include <map>
#include <vector>

#include <Eigen/Dense>

#include "cpf/errors.hpp"

namespace cpf {

/// One directed communication link: agent `from` can read the coordination
/// value of agent `to`, with coupling weight `weight` > 0.
struct GraphEdge {
    int from = 0;
    int to = 0;
    double weight = 1.0;
};

/// Weighted digraph over the agents of the network. Edge (i,j) means agent i
/// has access to agent j's coordination value. Agents are indexed from 0.
class CommGraph {
public:
    CommGraph(int n_agents, std::vector<GraphEdge> edges);

    int size() const { return n_agents_; }
    const std::vector<GraphEdge>& edges() const { return edges_; }

    /// Out-neighborhood of agent i (the agents whose values i can read), sorted.
    std::vector<int> neighbors(int i) const;

    /// Weight a_ij, or 0 when (i,j) is not an edge.
    double weight(int i, int j) const;

    /// Sum of outgoing weights of node i.
    double out_degree(int i) const;
    /// Sum of incoming weights of node i.
    double in_degree(int i) const;

    /// True when every node has matching in- and out-weight sums. The provided
    /// consensus law requires a balanced graph (doubly stochastic Perron matrix).
    bool is_balanced(double tol = 1e-12) const;

    /// True when every pair of nodes is mutually reachable along directed edges.
    bool is_strongly_connected() const;

    /// True when agent i neither reads nor is read by any other agent.
    bool is_isolated(int i) const;

    /// Weighted adjacency matrix A with [A]_ij = a_ij.
    Eigen::MatrixXd adjacency() const;

private:
    int n_agents_;
    std::vector<GraphEdge> edges_;
    Eigen::MatrixXd adj_;  // cached adjacency
};

/// Perron iteration parameter. Valid range (0, 1/max_degree); checked by the
/// operations that rely on it, not at construction, so that boundary values
/// can still be probed diagnostically.
struct ConsensusGain {
    double eps_bar = 0.0;
};

/// Throws ValidationError unless 0 < eps_bar < 1/max_degree(g).
void validate_gain(const CommGraph& g, ConsensusGain gain);

/// Maximum degree: max over nodes of summed outgoing weights.
double max_degree(const CommGraph& g);

/// Graph Laplacian L = D - A (degree matrix minus adjacency). Row sums are zero.
Eigen::MatrixXd laplacian(const CommGraph& g);

/// Perron matrix P = I - eps_bar * L. Throws when the gain is out of range.
Eigen::MatrixXd perron(const CommGraph& g, ConsensusGain gain);

/// Algebraic connectivity: second-smallest eigenvalue of Ls = (L + L')/2.
double lambda2(const CommGraph& g);

/// Contraction factor of the Perron matrix on the disagreement subspace,
/// mu2 = 1 - eps_bar * lambda2(Ls).
double mu2(const CommGraph& g, ConsensusGain gain);

/// Numeric property report for the Perron matrix. `primitive` uses a numeric
/// proxy for the algebraic property: the maximum-modulus eigenvalue is unique
/// within relative gap 1e-9.
struct PerronReport {
    bool nonnegative = false;
    bool row_stochastic = false;
    bool doubly_stochastic = false;
    bool spectrum_in_unit_disk = false;
    bool has_unit_eigenvalue = false;
    bool primitive = false;
    double max_modulus = 0.0;
    double second_modulus = 0.0;
    std::vector<double> eigenvalue_moduli;  // sorted descending

    bool all_ok() const
    {
        return nonnegative && row_stochastic && doubly_stochastic && spectrum_in_unit_disk &&
               has_unit_eigenvalue && primitive;
    }
};

PerronReport verify_perron(const CommGraph& g, ConsensusGain gain);

/// Distributed consensus action for agent i:
///   -eps_bar * sum_{j in N(i)} a_ij * (gamma_i - gamma_j).
/// `gamma_neighbors` must hold exactly the out-neighborhood of i.
double consensus_law(const CommGraph& g, ConsensusGain gain, int agent, double gamma_i,
                     const std::map<int, double>& gamma_neighbors);

/// Disagreement state of the network at one instant.
struct DisagreementSnapshot {
    Eigen::VectorXd delta;  // values minus network mean
    double alpha = 0.0;     // network mean
    double phi = 0.0;       // sum over edges of squared pairwise differences
};

DisagreementSnapshot disagreement(const Eigen::VectorXd& values, const CommGraph& g);

/// True when the maximum pairwise spread of the values is below tol.
bool at_consensus(const Eigen::VectorXd& values, double tol = 1e-9);

/// One-step ISS-Lyapunov decrease check for the closed-loop disagreement
/// dynamics delta(k+1) = P delta(k) + delta_eta(k):
///   Phi(k+1) <= (1 - lambda_phi) Phi(k) + c ||delta_eta(k)||^2.
/// Constants follow the disagreement analysis: lambda_phi = (1 - mu2^2)/2,
/// a = sqrt((1-mu2^2)/2), b = -mu2/a, c = b^2 + 1.
struct IssStepReport {
    double phi_k = 0.0;
    double phi_k1 = 0.0;
    double lambda_phi = 0.0;
    double mu2 = 0.0;
    double c = 0.0;
    double lhs = 0.0;     // Phi(k+1)
    double rhs = 0.0;     // (1-lambda_phi) Phi(k) + c ||delta_eta||^2
    double margin = 0.0;  // rhs - lhs
    bool pass = false;
};

/// Requires a balanced, strongly connected graph and a valid gain.
IssStepReport iss_step_check(const CommGraph& g, ConsensusGain gain, const Eigen::VectorXd& xi_k,
                             const Eigen::VectorXd& eta_k, const Eigen::VectorXd& xi_k1,
                             double tol = 1e-9);

/// Explicit class-KL envelope bounding the consensus action along closed-loop
/// runs with exponentially decaying disturbance ||eta(k)|| <= a_eta_max *
/// exp(-lambda_eta_min (k - k0)):
///   beta(r, s) = ||L|| q^{(floor(s)+k0)/2} r
///              + ||L|| sqrt(d) (exp(-lambda_eta_min (floor(s)+k0)) + q^{(floor(s)+k0)/2})
/// with q = 1 - lambda_phi and d the geometric-sum constant
/// d = c n a_eta_max^2 e^{2 lambda} / |1 - q e^{2 lambda}|. The absolute value
/// keeps the constant positive for every parameter combination (the plain
/// denominator changes sign with the relative decay rates while the underlying
/// geometric sum it bounds stays positive).
double beta_envelope(double r, double s, const CommGraph& g, ConsensusGain gain,
                     double lambda_eta_min, double a_eta_max, int k0 = 0);

}  // namespace cpf
