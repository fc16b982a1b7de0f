#include "graphscore/features.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <unordered_map>

#include "graphscore/centrality.hpp"
#include "graphscore/louvain.hpp"

namespace graphscore {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// node id -> user row, or npos for entity nodes. Raises if the graph holds a
// user key the table does not know.
std::vector<std::size_t> node_to_row(const Graph& g, const UserTable& users) {
    constexpr auto npos = std::numeric_limits<std::size_t>::max();
    std::unordered_map<std::string_view, std::size_t> row_of;
    row_of.reserve(users.n_users());
    for (std::size_t r = 0; r < users.n_users(); ++r) row_of.emplace(users.user_keys[r], r);

    std::vector<std::size_t> rows(g.node_count(), npos);
    for (NodeId v = 0; v < g.node_count(); ++v) {
        if (g.kind(v) != NodeKind::User) continue;
        auto it = row_of.find(g.key(v));
        if (it == row_of.end())
            raise(Errc::InvalidArgument, "graph user '" + g.key(v) + "' is not in the user table");
        rows[v] = it->second;
    }
    return rows;
}

std::string format_value(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

} // namespace

FeatureMatrix neighbor_feature_average(const Graph& g, const UserTable& users,
                                       const std::vector<std::string>& columns) {
    std::vector<const std::vector<double>*> src;
    src.reserve(columns.size());
    for (const auto& c : columns) src.push_back(&users.features.cols[users.features.column_index(c)]);

    std::optional<Graph> projection;
    if (g.spec().bipartite()) projection = bipartite_user_projection(g);
    const Graph* view = projection ? &*projection : &g;

    const auto rows = node_to_row(*view, users);
    const std::size_t n = users.n_users();

    FeatureMatrix out;
    for (std::size_t c = 0; c < columns.size(); ++c) out.append_column(columns[c], std::vector<double>(n, kNaN));

    for (NodeId v = 0; v < view->node_count(); ++v) {
        const std::size_t row = rows[v];
        if (row == std::numeric_limits<std::size_t>::max()) continue;
        const auto nbrs = view->neighbors(v, Direction::All);
        if (nbrs.empty()) continue;
        for (std::size_t c = 0; c < src.size(); ++c) {
            double sum = 0.0;
            std::size_t cnt = 0;
            for (const auto& nb : nbrs) {
                const double val = (*src[c])[rows[nb.id]];
                if (std::isnan(val)) continue;
                sum += val;
                ++cnt;
            }
            if (cnt > 0) out.cols[c][row] = sum / static_cast<double>(cnt);
        }
    }
    return out;
}

GraphFeatureBlock graph_feature_block(const Graph& g, const UserTable& users,
                                      const std::string& prefix, std::uint64_t seed) {
    const std::size_t n = users.n_users();

    const auto degrees = total_degrees(g);
    const auto eig = eigenvector_centrality(g);
    const auto pr = pagerank(g);
    const auto comms = louvain(g, 1.0, seed);

    std::vector<double> community_size(comms.n_communities, 0.0);
    for (auto c : comms.community) community_size[c] += 1.0;

    std::vector<double> in_deg(n, 0.0), out_deg(n, 0.0), total_deg(n, 0.0);
    std::vector<double> ev(n, 0.0), rank(n, 0.0), cid(n, -1.0), csize(n, 0.0);

    std::unordered_map<std::string_view, NodeId> node_of;
    node_of.reserve(g.node_count());
    for (NodeId v = 0; v < g.node_count(); ++v)
        if (g.kind(v) == NodeKind::User) node_of.emplace(g.key(v), v);

    for (std::size_t r = 0; r < n; ++r) {
        auto it = node_of.find(users.user_keys[r]);
        if (it == node_of.end()) continue;
        const NodeId v = it->second;
        in_deg[r] = static_cast<double>(degrees[v].in);
        out_deg[r] = static_cast<double>(degrees[v].out);
        total_deg[r] = static_cast<double>(degrees[v].total);
        ev[r] = eig.scores[v];
        rank[r] = pr.scores[v];
        cid[r] = static_cast<double>(comms.community[v]);
        csize[r] = community_size[comms.community[v]];
    }

    std::vector<std::string> sources(kNeighborSourceColumns.begin(), kNeighborSourceColumns.end());
    FeatureMatrix averages = neighbor_feature_average(g, users, sources);

    GraphFeatureBlock block;
    block.columns.append_column(prefix + "_in_deg", std::move(in_deg));
    block.columns.append_column(prefix + "_out_deg", std::move(out_deg));
    block.columns.append_column(prefix + "_total_deg", std::move(total_deg));
    block.columns.append_column(prefix + "_eigenvector", std::move(ev));
    block.columns.append_column(prefix + "_pagerank", std::move(rank));
    block.columns.append_column(prefix + "_community_id", std::move(cid));
    block.columns.append_column(prefix + "_community_size", std::move(csize));
    for (std::size_t c = 0; c < averages.n_cols(); ++c)
        block.columns.append_column(prefix + "_avg_" + averages.names[c], std::move(averages.cols[c]));

    block.diagnostics.eigenvector_iterations = eig.iterations;
    block.diagnostics.eigenvector_residual = eig.residual;
    block.diagnostics.eigenvalue = eig.eigenvalue;
    block.diagnostics.pagerank_iterations = pr.iterations;
    block.diagnostics.pagerank_residual = pr.residual;
    block.diagnostics.modularity = comms.modularity;
    block.diagnostics.n_communities = comms.n_communities;
    return block;
}

FeatureMatrix assemble_training_table(const UserTable& base,
                                      const std::vector<GraphFeatureBlock>& blocks) {
    FeatureMatrix table = base.features;
    for (const auto& block : blocks) {
        if (block.columns.rows() != base.n_users())
            raise(Errc::ShapeMismatch, "feature block has " + std::to_string(block.columns.rows()) +
                                           " rows, user table has " + std::to_string(base.n_users()));
        for (std::size_t c = 0; c < block.columns.n_cols(); ++c)
            table.append_column(block.columns.names[c], block.columns.cols[c]);
    }
    return table;
}

void write_feature_block_csv(const std::string& path, const UserTable& users,
                             const GraphFeatureBlock& block) {
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(Errc::IoError, "cannot open '" + path + "' for writing");
    out << "user";
    for (const auto& name : block.columns.names) out << ',' << name;
    out << '\n';
    for (std::size_t r = 0; r < users.n_users(); ++r) {
        out << users.user_keys[r];
        for (std::size_t c = 0; c < block.columns.n_cols(); ++c)
            out << ',' << format_value(block.columns.at(r, c));
        out << '\n';
    }
    if (!out) raise(Errc::IoError, "failed writing '" + path + "'");
}

} // namespace graphscore
