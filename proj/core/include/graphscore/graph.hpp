#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "graphscore/error.hpp"

namespace graphscore {

using NodeId = std::uint32_t;

enum class NodeKind : std::uint8_t { User, CreditCard, Device, Bin, Geohash };

const char* to_string(NodeKind k);
std::optional<NodeKind> node_kind_from_string(std::string_view s);

enum class DedupMode : std::uint8_t {
    Sum,    // parallel edges accumulate weight (transfer multiplicity is signal)
    Binary, // parallel edges collapse to weight 1
};

enum class Direction : std::uint8_t { Out, In, All };

struct EdgeRecord {
    std::string src;
    std::string dst;
    double weight = 1.0;
};

struct GraphSpec {
    bool directed = false;
    NodeKind src_kind = NodeKind::User;
    NodeKind dst_kind = NodeKind::User;
    DedupMode dedup = DedupMode::Sum;

    bool bipartite() const { return src_kind != dst_kind; }
};

struct Neighbor {
    NodeId id;
    double weight;

    bool operator==(const Neighbor&) const = default;
};

// Immutable sparse graph with typed nodes. External string keys map to dense
// ids in insertion order (first appearance in the edge list, src before dst).
// Undirected edges are stored symmetrically; directed graphs keep both out-
// and in-adjacency. Neighbor lists are sorted by NodeId. Self-loops in the
// input are dropped at build time and counted in stats().
class Graph {
public:
    struct BuildStats {
        std::size_t dropped_self_loops = 0;
        std::size_t duplicate_edges = 0;
    };

    static Graph build(const std::vector<EdgeRecord>& edges, const GraphSpec& spec);

    NodeId node_count() const { return static_cast<NodeId>(keys_.size()); }
    std::size_t edge_count() const { return edge_count_; } // arcs if directed, edges if undirected
    bool directed() const { return spec_.directed; }
    const GraphSpec& spec() const { return spec_; }
    const BuildStats& stats() const { return stats_; }

    NodeKind kind(NodeId n) const { return kinds_[check(n)]; }
    const std::string& key(NodeId n) const { return keys_[check(n)]; }
    std::optional<NodeId> find(std::string_view key) const;

    std::span<const Neighbor> out_neighbors(NodeId n) const { return adj(out_offsets_, out_, check(n)); }
    std::span<const Neighbor> in_neighbors(NodeId n) const {
        check(n);
        return spec_.directed ? adj(in_offsets_, in_, n) : adj(out_offsets_, out_, n);
    }
    // Direction::All on directed graphs merges Out and In, summing weights of
    // antiparallel arcs.
    std::vector<Neighbor> neighbors(NodeId n, Direction dir) const;

    std::size_t out_degree(NodeId n) const { return out_neighbors(n).size(); }
    std::size_t in_degree(NodeId n) const { return in_neighbors(n).size(); }

    double total_weight() const { return total_weight_; } // sum over stored arcs/edges

    // Nodes of the given kind, in id order.
    std::vector<NodeId> nodes_of_kind(NodeKind k) const;

    // Undirected weighted view: for directed graphs, antiparallel arcs merge
    // with summed weights. Used by Louvain and the GNN operators.
    Graph symmetrized() const;

private:
    Graph() = default;

    // Assembles CSR adjacency from a deduplicated arc map. Keys with no arcs
    // stay as isolated nodes.
    static Graph from_parts(const GraphSpec& spec, std::vector<std::string> keys,
                            std::vector<NodeKind> kinds,
                            const std::map<std::pair<NodeId, NodeId>, double>& arcs);

    NodeId check(NodeId n) const {
        if (n >= keys_.size()) raise(Errc::NodeOutOfRange, "node id " + std::to_string(n) + " out of range");
        return n;
    }

    static std::span<const Neighbor> adj(const std::vector<std::size_t>& offsets,
                                         const std::vector<Neighbor>& flat, NodeId n) {
        return {flat.data() + offsets[n], flat.data() + offsets[n + 1]};
    }

    GraphSpec spec_;
    BuildStats stats_;
    std::vector<std::string> keys_;
    std::unordered_map<std::string, NodeId> index_;
    std::vector<NodeKind> kinds_;
    std::vector<std::size_t> out_offsets_;
    std::vector<Neighbor> out_;
    std::vector<std::size_t> in_offsets_; // empty for undirected graphs
    std::vector<Neighbor> in_;
    std::size_t edge_count_ = 0;
    double total_weight_ = 0.0;

    friend Graph bipartite_user_projection(const Graph& g);
};

inline Graph build_graph(const std::vector<EdgeRecord>& edges, const GraphSpec& spec) {
    return Graph::build(edges, spec);
}

// Projects a bipartite graph onto its User side: two users become adjacent
// iff they share at least one entity neighbor, with weight = number of shared
// entities. Every user node of g carries over (isolated if it shares nothing);
// ids are re-densified following g's id order.
Graph bipartite_user_projection(const Graph& g);

// Edge-list CSV, header `src,dst,weight`; the weight column is optional and
// defaults to 1.
std::vector<EdgeRecord> read_edge_csv(const std::string& path);
void write_edge_csv(const std::string& path, const std::vector<EdgeRecord>& edges);

} // namespace graphscore
