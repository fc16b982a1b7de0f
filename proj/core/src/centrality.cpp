#include "graphscore/centrality.hpp"

#include <algorithm>
#include <cmath>

namespace graphscore {

std::vector<DegreeTriple> total_degrees(const Graph& g) {
    std::vector<DegreeTriple> out(g.node_count());
    for (NodeId i = 0; i < g.node_count(); ++i) {
        const std::size_t od = g.out_degree(i);
        if (g.directed()) {
            const std::size_t id = g.in_degree(i);
            out[i] = {id, od, id + od};
        } else {
            out[i] = {od, od, od};
        }
    }
    return out;
}

namespace {

// y = A x, with (Ax)_i = sum_j A_ij x_j; A_ij is the weight of arc i->j.
void apply_adjacency(const Graph& g, const std::vector<double>& x, std::vector<double>& y) {
    y.assign(x.size(), 0.0);
    for (NodeId i = 0; i < g.node_count(); ++i) {
        double acc = 0.0;
        for (const auto& nb : g.out_neighbors(i)) acc += nb.weight * x[nb.id];
        y[i] = acc;
    }
}

// A directed graph has spectral radius 0 exactly when it is acyclic
// (nilpotent adjacency). Kahn's algorithm; undirected graphs with an edge
// always have a positive leading eigenvalue.
bool is_acyclic_directed(const Graph& g) {
    const NodeId n = g.node_count();
    std::vector<std::size_t> indeg(n);
    for (NodeId i = 0; i < n; ++i) indeg[i] = g.in_degree(i);
    std::vector<NodeId> stack;
    for (NodeId i = 0; i < n; ++i)
        if (indeg[i] == 0) stack.push_back(i);
    std::size_t removed = 0;
    while (!stack.empty()) {
        const NodeId u = stack.back();
        stack.pop_back();
        ++removed;
        for (const auto& nb : g.out_neighbors(u))
            if (--indeg[nb.id] == 0) stack.push_back(nb.id);
    }
    return removed == n;
}

} // namespace

CentralityScores eigenvector_centrality(const Graph& g, double tol, std::size_t max_iter) {
    if (g.edge_count() == 0) raise(Errc::InvalidArgument, "eigenvector centrality needs at least one edge");
    if (g.directed() && is_acyclic_directed(g))
        raise(Errc::ZeroSpectralRadius,
              "leading eigenvalue is 0 (directed acyclic structure); use PageRank instead");
    const NodeId n = g.node_count();

    std::vector<double> x(n, 1.0 / static_cast<double>(n));
    std::vector<double> ax(n), next(n);

    double lambda = 0.0, residual = 0.0;
    std::size_t iter = 0;
    for (; iter < max_iter; ++iter) {
        apply_adjacency(g, x, ax);

        // Rayleigh estimate of the eigenvalue of A and the contract residual
        double xx = 0.0, xax = 0.0;
        for (NodeId i = 0; i < n; ++i) {
            xx += x[i] * x[i];
            xax += x[i] * ax[i];
        }
        lambda = xax / xx;
        // the contract is stated in the returned scale (scores maxing at 1),
        // so measure the residual there, not on the unit-norm iterate
        residual = 0.0;
        for (NodeId i = 0; i < n; ++i) residual = std::max(residual, std::abs(ax[i] - lambda * x[i]));
        residual /= *std::max_element(x.begin(), x.end());
        if (lambda > 0.0 && residual <= tol * lambda) break;

        // shifted step: next = (A + I) x, renormalized
        double norm = 0.0;
        for (NodeId i = 0; i < n; ++i) {
            next[i] = ax[i] + x[i];
            norm += next[i] * next[i];
        }
        norm = std::sqrt(norm);
        if (!(norm > 0.0) || !std::isfinite(norm))
            raise(Errc::ZeroSpectralRadius, "power iteration collapsed; graph has no positive eigenvalue");
        for (NodeId i = 0; i < n; ++i) x[i] = next[i] / norm;
    }

    if (lambda <= tol) {
        // nilpotent adjacency (e.g. a DAG) decays toward eigenvalue 0
        raise(Errc::ZeroSpectralRadius,
              "leading eigenvalue is 0 (acyclic directed structure); use PageRank instead");
    }
    if (iter == max_iter && residual > tol * lambda) {
        raise(Errc::NonConvergence, "eigenvector centrality did not converge in " + std::to_string(max_iter) +
                                        " iterations (residual " + std::to_string(residual) + ")");
    }

    const double mx = *std::max_element(x.begin(), x.end());
    CentralityScores out;
    out.scores.resize(n);
    for (NodeId i = 0; i < n; ++i) out.scores[i] = std::max(x[i], 0.0) / mx;
    out.method = "eigenvector";
    out.iterations = iter + 1;
    out.residual = residual;
    out.eigenvalue = lambda;
    return out;
}

CentralityScores pagerank(const Graph& g, double damping, double tol, std::size_t max_iter) {
    if (g.node_count() == 0) raise(Errc::InvalidArgument, "pagerank needs at least one node");
    if (!(damping >= 0.0 && damping < 1.0)) raise(Errc::InvalidArgument, "damping must lie in [0,1)");
    const NodeId n = g.node_count();
    const double uniform = 1.0 / static_cast<double>(n);

    std::vector<double> out_weight(n, 0.0);
    for (NodeId i = 0; i < n; ++i)
        for (const auto& nb : g.out_neighbors(i)) out_weight[i] += nb.weight;

    std::vector<double> x(n, uniform), next(n);
    std::size_t iter = 0;
    double delta = 0.0;
    for (; iter < max_iter; ++iter) {
        double dangling = 0.0;
        for (NodeId i = 0; i < n; ++i)
            if (out_weight[i] == 0.0) dangling += x[i];

        std::fill(next.begin(), next.end(), (1.0 - damping) * uniform + damping * dangling * uniform);
        for (NodeId i = 0; i < n; ++i) {
            if (out_weight[i] == 0.0) continue;
            const double share = damping * x[i] / out_weight[i];
            for (const auto& nb : g.out_neighbors(i)) next[nb.id] += share * nb.weight;
        }

        delta = 0.0;
        for (NodeId i = 0; i < n; ++i) delta += std::abs(next[i] - x[i]);
        x.swap(next);
        if (delta <= tol) break;
    }
    if (delta > tol)
        raise(Errc::NonConvergence, "pagerank did not converge in " + std::to_string(max_iter) +
                                        " iterations (residual " + std::to_string(delta) + ")");

    // guard the sum-to-one invariant against drift
    double sum = 0.0;
    for (double v : x) sum += v;
    for (double& v : x) v /= sum;

    CentralityScores out;
    out.scores = std::move(x);
    out.method = "pagerank";
    out.iterations = iter + 1;
    out.residual = delta;
    return out;
}

} // namespace graphscore
