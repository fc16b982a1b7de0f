#pragma once

#include <cstdint>
#include <vector>

#include "graphscore/graph.hpp"

namespace graphscore {

struct CommunityAssignment {
    std::vector<std::uint32_t> community; // dense ids 0..k-1, renumbered by first occurrence
    std::size_t n_communities = 0;
    double modularity = 0.0;
};

// Newman modularity of a partition on the (symmetrized) graph.
double modularity(const Graph& g, const std::vector<std::uint32_t>& community, double resolution = 1.0);

// Two-phase Louvain: seeded-shuffle local moves to a modularity optimum, then
// community aggregation, repeated until no move gains more than 1e-12.
// Directed graphs are symmetrized first. An edgeless graph yields singleton
// communities with modularity 0.
CommunityAssignment louvain(const Graph& g, double resolution = 1.0, std::uint64_t seed = 0);

} // namespace graphscore
