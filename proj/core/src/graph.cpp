#include "graphscore/graph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <utility>

namespace graphscore {

const char* to_string(NodeKind k) {
    switch (k) {
        case NodeKind::User: return "user";
        case NodeKind::CreditCard: return "credit_card";
        case NodeKind::Device: return "device";
        case NodeKind::Bin: return "bin";
        case NodeKind::Geohash: return "geohash";
    }
    return "?";
}

std::optional<NodeKind> node_kind_from_string(std::string_view s) {
    if (s == "user") return NodeKind::User;
    if (s == "credit_card") return NodeKind::CreditCard;
    if (s == "device") return NodeKind::Device;
    if (s == "bin") return NodeKind::Bin;
    if (s == "geohash") return NodeKind::Geohash;
    return std::nullopt;
}

namespace {

NodeId intern(std::unordered_map<std::string, NodeId>& index, std::vector<std::string>& keys,
              std::vector<NodeKind>& kinds, const std::string& key, NodeKind kind) {
    auto [it, inserted] = index.try_emplace(key, static_cast<NodeId>(keys.size()));
    if (inserted) {
        keys.push_back(key);
        kinds.push_back(kind);
    } else if (kinds[it->second] != kind) {
        raise(Errc::KindMismatch,
              "key '" + key + "' appears as both " + to_string(kinds[it->second]) + " and " + to_string(kind));
    }
    return it->second;
}

void build_csr(NodeId n, const std::map<std::pair<NodeId, NodeId>, double>& arcs,
               std::vector<std::size_t>& offsets, std::vector<Neighbor>& flat, bool transpose) {
    std::vector<std::size_t> degree(n, 0);
    for (const auto& [arc, w] : arcs) degree[transpose ? arc.second : arc.first]++;
    offsets.assign(n + 1, 0);
    for (NodeId i = 0; i < n; ++i) offsets[i + 1] = offsets[i] + degree[i];
    flat.resize(arcs.size());
    std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
    // std::map iteration is (src,dst)-sorted, so forward lists come out sorted;
    // transposed lists need a per-node sort afterwards.
    for (const auto& [arc, w] : arcs) {
        const NodeId from = transpose ? arc.second : arc.first;
        const NodeId to = transpose ? arc.first : arc.second;
        flat[cursor[from]++] = Neighbor{to, w};
    }
    if (transpose) {
        for (NodeId i = 0; i < n; ++i)
            std::sort(flat.begin() + static_cast<std::ptrdiff_t>(offsets[i]),
                      flat.begin() + static_cast<std::ptrdiff_t>(offsets[i + 1]),
                      [](const Neighbor& a, const Neighbor& b) { return a.id < b.id; });
    }
}

} // namespace

Graph Graph::from_parts(const GraphSpec& spec, std::vector<std::string> keys, std::vector<NodeKind> kinds,
                        const std::map<std::pair<NodeId, NodeId>, double>& arcs) {
    Graph g;
    g.spec_ = spec;
    g.keys_ = std::move(keys);
    g.kinds_ = std::move(kinds);
    g.index_.reserve(g.keys_.size());
    for (NodeId i = 0; i < g.node_count(); ++i) g.index_.emplace(g.keys_[i], i);
    g.edge_count_ = arcs.size();
    for (const auto& [arc, w] : arcs) g.total_weight_ += w;

    const NodeId n = g.node_count();
    if (spec.directed) {
        build_csr(n, arcs, g.out_offsets_, g.out_, /*transpose=*/false);
        build_csr(n, arcs, g.in_offsets_, g.in_, /*transpose=*/true);
    } else {
        std::map<std::pair<NodeId, NodeId>, double> sym;
        for (const auto& [arc, w] : arcs) {
            sym[{arc.first, arc.second}] = w;
            sym[{arc.second, arc.first}] = w;
        }
        build_csr(n, sym, g.out_offsets_, g.out_, /*transpose=*/false);
    }
    return g;
}

Graph Graph::build(const std::vector<EdgeRecord>& edges, const GraphSpec& spec) {
    if (edges.empty()) raise(Errc::EmptyEdgeList, "edge list is empty");

    BuildStats stats;
    std::vector<std::string> keys;
    std::vector<NodeKind> kinds;
    std::unordered_map<std::string, NodeId> index;
    std::map<std::pair<NodeId, NodeId>, double> arcs;
    for (const auto& e : edges) {
        if (e.src.empty() || e.dst.empty()) raise(Errc::InvalidArgument, "empty node key in edge list");
        if (!(e.weight > 0.0)) raise(Errc::InvalidArgument, "edge weight must be > 0");
        if (e.src == e.dst) {
            if (spec.bipartite())
                raise(Errc::KindMismatch, "key '" + e.src + "' used on both sides of a bipartite edge");
            // the node still registers; a dropped self-loop is the one way to
            // declare an isolated node in an edge-list format
            intern(index, keys, kinds, e.src, spec.src_kind);
            stats.dropped_self_loops++;
            continue;
        }
        NodeId s = intern(index, keys, kinds, e.src, spec.src_kind);
        NodeId d = intern(index, keys, kinds, e.dst, spec.dst_kind);
        if (!spec.directed && s > d) std::swap(s, d);
        auto [it, inserted] = arcs.try_emplace({s, d}, e.weight);
        if (!inserted) {
            stats.duplicate_edges++;
            if (spec.dedup == DedupMode::Sum) it->second += e.weight;
        }
    }
    Graph g = from_parts(spec, std::move(keys), std::move(kinds), arcs);
    g.stats_ = stats;
    return g;
}

std::optional<NodeId> Graph::find(std::string_view key) const {
    auto it = index_.find(std::string(key));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<Neighbor> Graph::neighbors(NodeId n, Direction dir) const {
    check(n);
    if (!spec_.directed || dir == Direction::Out) {
        auto s = out_neighbors(n);
        return {s.begin(), s.end()};
    }
    if (dir == Direction::In) {
        auto s = in_neighbors(n);
        return {s.begin(), s.end()};
    }
    // merge sorted out/in lists, summing weights of antiparallel arcs
    auto out = out_neighbors(n);
    auto in = in_neighbors(n);
    std::vector<Neighbor> merged;
    merged.reserve(out.size() + in.size());
    std::size_t i = 0, j = 0;
    while (i < out.size() || j < in.size()) {
        if (j == in.size() || (i < out.size() && out[i].id < in[j].id)) {
            merged.push_back(out[i++]);
        } else if (i == out.size() || in[j].id < out[i].id) {
            merged.push_back(in[j++]);
        } else {
            merged.push_back({out[i].id, out[i].weight + in[j].weight});
            ++i;
            ++j;
        }
    }
    return merged;
}

std::vector<NodeId> Graph::nodes_of_kind(NodeKind k) const {
    std::vector<NodeId> out;
    for (NodeId i = 0; i < node_count(); ++i)
        if (kinds_[i] == k) out.push_back(i);
    return out;
}

Graph Graph::symmetrized() const {
    if (!spec_.directed) return *this;
    std::map<std::pair<NodeId, NodeId>, double> arcs;
    for (NodeId i = 0; i < node_count(); ++i)
        for (const auto& nb : out_neighbors(i)) {
            const auto key = std::minmax(i, nb.id);
            arcs[{key.first, key.second}] += nb.weight;
        }
    GraphSpec spec = spec_;
    spec.directed = false;
    return from_parts(spec, keys_, kinds_, arcs);
}

Graph bipartite_user_projection(const Graph& g) {
    if (!g.spec().bipartite()) raise(Errc::NotBipartite, "projection requires a bipartite graph");
    if (g.spec().src_kind != NodeKind::User && g.spec().dst_kind != NodeKind::User)
        raise(Errc::NotBipartite, "projection requires a User side");

    const auto users = g.nodes_of_kind(NodeKind::User);
    std::vector<std::string> keys;
    std::vector<NodeKind> kinds(users.size(), NodeKind::User);
    keys.reserve(users.size());
    std::vector<NodeId> dense(g.node_count(), 0);
    for (std::size_t i = 0; i < users.size(); ++i) {
        dense[users[i]] = static_cast<NodeId>(i);
        keys.push_back(g.key(users[i]));
    }

    std::map<std::pair<NodeId, NodeId>, double> shared;
    for (NodeId e = 0; e < g.node_count(); ++e) {
        if (g.kind(e) == NodeKind::User) continue;
        const auto nbrs = g.neighbors(e, Direction::All);
        for (std::size_t a = 0; a < nbrs.size(); ++a)
            for (std::size_t b = a + 1; b < nbrs.size(); ++b)
                shared[{dense[nbrs[a].id], dense[nbrs[b].id]}] += 1.0;
    }

    GraphSpec spec{.directed = false, .src_kind = NodeKind::User, .dst_kind = NodeKind::User,
                   .dedup = DedupMode::Sum};
    return Graph::from_parts(spec, std::move(keys), std::move(kinds), shared);
}

std::vector<EdgeRecord> read_edge_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::IoError, "cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) raise(Errc::ParseError, path + ": missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool has_weight;
    if (line == "src,dst,weight") {
        has_weight = true;
    } else if (line == "src,dst") {
        has_weight = false;
    } else {
        raise(Errc::ParseError, path + ": expected header 'src,dst[,weight]', got '" + line + "'");
    }
    std::vector<EdgeRecord> edges;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        if (c1 == std::string::npos) raise(Errc::ParseError, path + ":" + std::to_string(lineno) + ": expected 2+ columns");
        EdgeRecord e;
        e.src = line.substr(0, c1);
        const auto c2 = line.find(',', c1 + 1);
        if (c2 == std::string::npos) {
            if (has_weight) raise(Errc::ParseError, path + ":" + std::to_string(lineno) + ": missing weight column");
            e.dst = line.substr(c1 + 1);
        } else {
            if (!has_weight) raise(Errc::ParseError, path + ":" + std::to_string(lineno) + ": more columns than header");
            e.dst = line.substr(c1 + 1, c2 - c1 - 1);
            const std::string w = line.substr(c2 + 1);
            if (!w.empty()) {
                const char* last = w.data() + w.size();
                auto res = std::from_chars(w.data(), last, e.weight);
                if (res.ec != std::errc{} || res.ptr != last)
                    raise(Errc::ParseError, path + ":" + std::to_string(lineno) + ": bad weight '" + w + "'");
            }
        }
        edges.push_back(std::move(e));
    }
    return edges;
}

void write_edge_csv(const std::string& path, const std::vector<EdgeRecord>& edges) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) raise(Errc::IoError, "cannot write " + path);
    out << "src,dst,weight\n";
    char buf[64];
    for (const auto& e : edges) {
        auto res = std::to_chars(buf, buf + sizeof(buf), e.weight);
        out << e.src << ',' << e.dst << ',' << std::string_view(buf, res.ptr) << '\n';
    }
    if (!out) raise(Errc::IoError, "write failed for " + path);
}

} // namespace graphscore
