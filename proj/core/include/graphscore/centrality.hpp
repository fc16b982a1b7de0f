#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graphscore/graph.hpp"

namespace graphscore {

struct DegreeTriple {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t total = 0;
};

// Unweighted connection counts. Directed: total = in + out; undirected:
// in = out = total.
std::vector<DegreeTriple> total_degrees(const Graph& g);

struct CentralityScores {
    std::vector<double> scores;
    std::string method;
    std::size_t iterations = 0;
    double residual = 0.0;
    double eigenvalue = 0.0; // leading eigenvalue estimate (eigenvector method only)
};

// Right leading eigenvector of the adjacency matrix by power iteration,
// max-normalized. Iterates on A+I (same eigenvectors of the dominant
// eigenvalue, no bipartite period-2 stalls) while the convergence contract
// ||Ax - lambda x||_inf <= tol*lambda is checked against A itself.
// Graphs whose leading eigenvalue is 0 (e.g. DAGs) are rejected with
// Errc::ZeroSpectralRadius.
CentralityScores eigenvector_centrality(const Graph& g, double tol = 1e-8, std::size_t max_iter = 1000);

// Standard damped PageRank with edge weights as transition probabilities and
// uniform redistribution of dangling mass. Scores sum to 1.
CentralityScores pagerank(const Graph& g, double damping = 0.85, double tol = 1e-10,
                          std::size_t max_iter = 200);

} // namespace graphscore
