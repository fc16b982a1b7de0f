#include "graphscore/louvain.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <unordered_map>
#include <utility>

#include "graphscore/rng.hpp"

namespace graphscore {

namespace {

constexpr double kMinGain = 1e-12;

// Working multigraph for the aggregation phases. self_weight[i] holds the
// full internal mass of a super-node (every internal arc counted in both
// directions), so k_i = self_weight[i] + sum of incident edge weights and
// 2m stays constant across aggregations.
struct WorkGraph {
    std::vector<std::vector<Neighbor>> adj;
    std::vector<double> self_weight;
    std::vector<double> degree; // k_i
    double two_m = 0.0;

    std::size_t size() const { return adj.size(); }
};

WorkGraph from_graph(const Graph& g) {
    WorkGraph w;
    const NodeId n = g.node_count();
    w.adj.resize(n);
    w.self_weight.assign(n, 0.0);
    w.degree.assign(n, 0.0);
    for (NodeId i = 0; i < n; ++i) {
        auto span = g.out_neighbors(i);
        w.adj[i].assign(span.begin(), span.end());
        for (const auto& nb : span) w.degree[i] += nb.weight;
        w.two_m += w.degree[i];
    }
    return w;
}

double partition_modularity(const WorkGraph& w, const std::vector<std::uint32_t>& comm, double gamma) {
    if (w.two_m <= 0.0) return 0.0;
    std::size_t k = 0;
    for (auto c : comm) k = std::max<std::size_t>(k, c + 1);
    std::vector<double> in(k, 0.0), tot(k, 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
        tot[comm[i]] += w.degree[i];
        in[comm[i]] += w.self_weight[i];
        for (const auto& nb : w.adj[i])
            if (comm[nb.id] == comm[i]) in[comm[i]] += nb.weight;
    }
    double q = 0.0;
    for (std::size_t c = 0; c < k; ++c)
        q += in[c] / w.two_m - gamma * (tot[c] / w.two_m) * (tot[c] / w.two_m);
    return q;
}

std::size_t densify(std::vector<std::uint32_t>& comm) {
    std::unordered_map<std::uint32_t, std::uint32_t> remap;
    for (auto& c : comm) {
        auto [it, inserted] = remap.try_emplace(c, static_cast<std::uint32_t>(remap.size()));
        c = it->second;
    }
    return remap.size();
}

// Repeated local moves until no node improves; returns whether any node moved.
bool local_phase(const WorkGraph& w, std::vector<std::uint32_t>& comm, double gamma, Rng& rng) {
    const std::size_t n = w.size();
    std::vector<double> tot(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) tot[comm[i]] += w.degree[i];

    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    rng.shuffle(order);

    std::unordered_map<std::uint32_t, double> links; // community -> k_{i,c}
    std::vector<std::pair<std::uint32_t, double>> cand;
    bool any_move = false;
    bool improved = true;
    while (improved) {
        improved = false;
        for (const auto i : order) {
            const std::uint32_t old_c = comm[i];
            const double k_i = w.degree[i];
            links.clear();
            links.try_emplace(old_c, 0.0);
            for (const auto& nb : w.adj[i]) links[comm[nb.id]] += nb.weight;

            // Sorted candidate list keeps the scan deterministic and breaks
            // gain ties toward the smallest community id.
            cand.assign(links.begin(), links.end());
            std::sort(cand.begin(), cand.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });

            tot[old_c] -= k_i;
            double base = 0.0;
            for (const auto& [c, kic] : cand)
                if (c == old_c) base = kic - gamma * tot[c] * k_i / w.two_m;

            std::uint32_t best_c = old_c;
            double best_gain = 0.0;
            for (const auto& [c, kic] : cand) {
                if (c == old_c) continue;
                const double gain = (kic - gamma * tot[c] * k_i / w.two_m) - base;
                if (gain > best_gain + kMinGain) {
                    best_gain = gain;
                    best_c = c;
                }
            }
            if (best_gain <= kMinGain) best_c = old_c;

            tot[best_c] += k_i;
            if (best_c != old_c) {
                comm[i] = best_c;
                improved = true;
                any_move = true;
            }
        }
    }
    return any_move;
}

WorkGraph aggregate(const WorkGraph& w, const std::vector<std::uint32_t>& comm, std::size_t k) {
    WorkGraph out;
    out.adj.resize(k);
    out.self_weight.assign(k, 0.0);
    out.degree.assign(k, 0.0);
    out.two_m = w.two_m;

    std::vector<std::unordered_map<std::uint32_t, double>> acc(k);
    for (std::size_t i = 0; i < w.size(); ++i) {
        const auto ci = comm[i];
        out.self_weight[ci] += w.self_weight[i];
        for (const auto& nb : w.adj[i]) {
            const auto cj = comm[nb.id];
            if (cj == ci)
                out.self_weight[ci] += nb.weight;
            else
                acc[ci][cj] += nb.weight;
        }
    }
    for (std::size_t c = 0; c < k; ++c) {
        out.adj[c].reserve(acc[c].size());
        for (const auto& [d, wt] : acc[c]) out.adj[c].push_back({d, wt});
        std::sort(out.adj[c].begin(), out.adj[c].end(),
                  [](const Neighbor& a, const Neighbor& b) { return a.id < b.id; });
        out.degree[c] = out.self_weight[c];
        for (const auto& nb : out.adj[c]) out.degree[c] += nb.weight;
    }
    return out;
}

} // namespace

double modularity(const Graph& g, const std::vector<std::uint32_t>& community, double resolution) {
    const Graph sym = g.directed() ? g.symmetrized() : g;
    if (community.size() != sym.node_count())
        raise(Errc::ShapeMismatch, "community vector size does not match node count");
    return partition_modularity(from_graph(sym), community, resolution);
}

CommunityAssignment louvain(const Graph& g, double resolution, std::uint64_t seed) {
    const Graph sym = g.directed() ? g.symmetrized() : g;
    const NodeId n = sym.node_count();

    CommunityAssignment result;
    result.community.resize(n);
    std::iota(result.community.begin(), result.community.end(), 0u);
    result.n_communities = n;
    result.modularity = 0.0;
    if (sym.edge_count() == 0) return result;

    WorkGraph w = from_graph(sym);
    std::vector<std::uint32_t> node_to_super(n);
    std::iota(node_to_super.begin(), node_to_super.end(), 0u);

    for (std::size_t level = 0;; ++level) {
        std::vector<std::uint32_t> comm(w.size());
        std::iota(comm.begin(), comm.end(), 0u);
        Rng rng = Rng::substream(seed, "louvain/level" + std::to_string(level));
        const bool moved = local_phase(w, comm, resolution, rng);
        if (!moved) break;

        const std::size_t k = densify(comm);
        for (NodeId i = 0; i < n; ++i) node_to_super[i] = comm[node_to_super[i]];
        if (k == w.size() || k == 1) break;
        w = aggregate(w, comm, k);
    }

    result.community = std::move(node_to_super);
    result.n_communities = densify(result.community);
    result.modularity = partition_modularity(from_graph(sym), result.community, resolution);
    return result;
}

} // namespace graphscore
