#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graphscore/datagen.hpp"
#include "graphscore/graph.hpp"
#include "graphscore/table.hpp"

namespace graphscore {

// Per-user unweighted means of the named base columns over graph neighbors.
// Unipartite graphs average over All-direction neighbors; bipartite graphs
// average over users sharing at least one entity (the user projection), self
// excluded. Users absent from the graph or without neighbors get NaN, as does
// any row whose whole neighborhood carries NaN in the source column.
FeatureMatrix neighbor_feature_average(const Graph& g, const UserTable& users,
                                       const std::vector<std::string>& columns);

struct GraphFeatureBlock {
    FeatureMatrix columns; // exactly 11, rows aligned with the UserTable

    struct Diagnostics {
        std::size_t eigenvector_iterations = 0;
        double eigenvector_residual = 0.0;
        double eigenvalue = 0.0;
        std::size_t pagerank_iterations = 0;
        double pagerank_residual = 0.0;
        double modularity = 0.0;
        std::size_t n_communities = 0;
    } diagnostics;
};

// The 11-column block for one relation graph, columns named
//   <p>_in_deg, <p>_out_deg, <p>_total_deg, <p>_eigenvector, <p>_pagerank,
//   <p>_community_id, <p>_community_size, <p>_avg_f0 .. <p>_avg_f3
// where <p> is `prefix`. Centralities and communities are computed on the
// graph as stored (bipartite graphs keep their entity nodes; community size
// counts nodes of every kind). Users absent from the graph get zero degrees
// and centralities, community id -1 with size 0, and NaN neighbor averages.
// Labels are never read here; only user keys and base feature columns are.
GraphFeatureBlock graph_feature_block(const Graph& g, const UserTable& users,
                                      const std::string& prefix, std::uint64_t seed);

// Base behavioral columns followed by each block's 11 columns, in order.
FeatureMatrix assemble_training_table(const UserTable& base,
                                      const std::vector<GraphFeatureBlock>& blocks);

// CSV export, header `user,<block column names...>`.
void write_feature_block_csv(const std::string& path, const UserTable& users,
                             const GraphFeatureBlock& block);

} // namespace graphscore
