#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <graphscore/centrality.hpp>
#include <graphscore/features.hpp>
#include <graphscore/louvain.hpp>

using namespace graphscore;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

UserTable make_users(std::vector<std::string> keys, std::vector<std::vector<double>> feature_cols) {
    UserTable t;
    const std::size_t n = keys.size();
    t.user_keys = std::move(keys);
    t.labels.assign(n, 0);
    t.credit_line.assign(n, 100.0);
    t.profit.assign(n, 10.0);
    for (std::size_t c = 0; c < feature_cols.size(); ++c)
        t.features.append_column("f" + std::to_string(c), std::move(feature_cols[c]));
    return t;
}

GraphSpec unipartite(bool directed = false) {
    return GraphSpec{.directed = directed, .src_kind = NodeKind::User, .dst_kind = NodeKind::User,
                     .dedup = DedupMode::Sum};
}

GraphSpec bipartite_cc() {
    return GraphSpec{.directed = false, .src_kind = NodeKind::User, .dst_kind = NodeKind::CreditCard,
                     .dedup = DedupMode::Binary};
}

bool same_value(double a, double b) {
    if (std::isnan(a) || std::isnan(b)) return std::isnan(a) && std::isnan(b);
    return a == b;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

} // namespace

TEST_CASE("neighbor averages match hand loops on a unipartite graph") {
    const auto users = make_users({"u0", "u1", "u2", "u3", "u4"},
                                  {{0.1, 0.2, 0.3, 0.4, kNaN}, {kNaN, 5.0, kNaN, 7.0, kNaN}});
    const Graph g = build_graph({{"u0", "u1"}, {"u0", "u2"}, {"u1", "u2"}, {"u0", "u4"}}, unipartite());

    const auto avg = neighbor_feature_average(g, users, {"f0", "f1"});
    REQUIRE(avg.n_cols() == 2);
    REQUIRE(avg.rows() == 5);
    CHECK(avg.names == std::vector<std::string>{"f0", "f1"});

    CHECK(avg.at(0, 0) == doctest::Approx(0.25));    // u4's NaN skipped
    CHECK(avg.at(1, 0) == doctest::Approx(0.2));
    CHECK(avg.at(2, 0) == doctest::Approx(0.15));
    CHECK(std::isnan(avg.at(3, 0)));                 // u3 not in the graph
    CHECK(avg.at(4, 0) == doctest::Approx(0.1));

    CHECK(avg.at(0, 1) == doctest::Approx(5.0));
    CHECK(std::isnan(avg.at(1, 1)));                 // every neighbor is NaN
    CHECK(avg.at(2, 1) == doctest::Approx(5.0));
    CHECK(std::isnan(avg.at(3, 1)));
    CHECK(std::isnan(avg.at(4, 1)));
}

TEST_CASE("neighbor averages on a bipartite graph use the user projection, unweighted") {
    const auto users = make_users({"u0", "u1", "u2", "u3"}, {{1.0, 2.0, 3.0, 4.0}});
    const Graph g = build_graph(
        {{"u0", "cc0"}, {"u0", "cc1"}, {"u1", "cc0"}, {"u1", "cc1"}, {"u2", "cc1"}}, bipartite_cc());

    // Co-user sets from the edge list: u0 {u1, u2}, u1 {u0, u2}, u2 {u0, u1}.
    // u0 and u1 share two entities but still count once each.
    const auto avg = neighbor_feature_average(g, users, {"f0"});
    CHECK(avg.at(0, 0) == doctest::Approx(2.5));
    CHECK(avg.at(1, 0) == doctest::Approx(2.0));
    CHECK(avg.at(2, 0) == doctest::Approx(1.5));
    CHECK(std::isnan(avg.at(3, 0)));
}

TEST_CASE("graph_feature_block has the 11 named columns and plumbs graph quantities") {
    const auto users = make_users({"u0", "u1", "u2", "u3"},
                                  {{1.0, 2.0, 3.0, 4.0},
                                   {0.5, 0.6, 0.7, 0.8},
                                   {400.0, 500.0, 600.0, 700.0},
                                   {0.0, 1.0, 0.0, 1.0}});
    const Graph g = build_graph({{"u0", "u1"}, {"u1", "u2"}, {"u2", "u0"}, {"u0", "u2"}},
                                unipartite(true));

    const auto block = graph_feature_block(g, users, "p2p", 11);
    const std::vector<std::string> expected = {
        "p2p_in_deg",       "p2p_out_deg",     "p2p_total_deg", "p2p_eigenvector",
        "p2p_pagerank",     "p2p_community_id", "p2p_community_size",
        "p2p_avg_f0",       "p2p_avg_f1",      "p2p_avg_f2",    "p2p_avg_f3"};
    CHECK(block.columns.names == expected);
    REQUIRE(block.columns.n_cols() == 11);
    REQUIRE(block.columns.rows() == 4);

    // Arcs: u0->u1, u1->u2, u2->u0, u0->u2.
    CHECK(block.columns.at(0, 0) == 1.0); // in
    CHECK(block.columns.at(1, 0) == 1.0);
    CHECK(block.columns.at(2, 0) == 2.0);
    CHECK(block.columns.at(0, 1) == 2.0); // out
    CHECK(block.columns.at(1, 1) == 1.0);
    CHECK(block.columns.at(2, 1) == 1.0);
    CHECK(block.columns.at(0, 2) == 3.0); // total = in + out
    CHECK(block.columns.at(1, 2) == 2.0);
    CHECK(block.columns.at(2, 2) == 3.0);

    const auto eig = eigenvector_centrality(g);
    const auto pr = pagerank(g);
    const auto comms = louvain(g, 1.0, 11);
    for (std::size_t r = 0; r < 3; ++r) {
        const NodeId v = *g.find(users.user_keys[r]);
        CHECK(block.columns.at(r, 3) == eig.scores[v]);
        CHECK(block.columns.at(r, 4) == pr.scores[v]);
        CHECK(block.columns.at(r, 5) == static_cast<double>(comms.community[v]));
        std::size_t size = 0;
        for (auto c : comms.community)
            if (c == comms.community[v]) ++size;
        CHECK(block.columns.at(r, 6) == static_cast<double>(size));
    }
    CHECK(block.diagnostics.n_communities == comms.n_communities);
    CHECK(block.diagnostics.modularity == doctest::Approx(comms.modularity));

    // All-direction neighborhoods: u0 {u1,u2}, u1 {u0,u2}, u2 {u0,u1}.
    CHECK(block.columns.at(0, 7) == doctest::Approx(2.5));
    CHECK(block.columns.at(1, 7) == doctest::Approx(2.0));
    CHECK(block.columns.at(2, 7) == doctest::Approx(1.5));
    CHECK(block.columns.at(0, 9) == doctest::Approx(550.0));
}

TEST_CASE("users absent from the graph get sentinel values") {
    const auto users = make_users({"u0", "u1", "u2", "u3"},
                                  {{1.0, 2.0, 3.0, 4.0},
                                   {1.0, 2.0, 3.0, 4.0},
                                   {1.0, 2.0, 3.0, 4.0},
                                   {1.0, 2.0, 3.0, 4.0}});
    const Graph g = build_graph({{"u0", "u1"}, {"u1", "u2"}}, unipartite());

    const auto block = graph_feature_block(g, users, "p2p", 3);
    CHECK(block.columns.at(3, 0) == 0.0);
    CHECK(block.columns.at(3, 1) == 0.0);
    CHECK(block.columns.at(3, 2) == 0.0);
    CHECK(block.columns.at(3, 3) == 0.0);
    CHECK(block.columns.at(3, 4) == 0.0);
    CHECK(block.columns.at(3, 5) == -1.0);
    CHECK(block.columns.at(3, 6) == 0.0);
    for (std::size_t c = 7; c < 11; ++c) CHECK(std::isnan(block.columns.at(3, c)));
}

TEST_CASE("community sizes on bipartite graphs count entity nodes too") {
    const auto users = make_users({"u0", "u1"}, {{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}});
    const Graph g = build_graph({{"u0", "cc0"}, {"u1", "cc0"}}, bipartite_cc());

    const auto block = graph_feature_block(g, users, "cc", 5);
    // The two-edge star has a single community at optimum, so the size column
    // reports 3 nodes: both users plus the shared entity.
    CHECK(block.diagnostics.n_communities == 1);
    CHECK(block.columns.at(0, 6) == 3.0);
    CHECK(block.columns.at(1, 6) == 3.0);
}

TEST_CASE("blocks never read labels") {
    auto users = make_users({"u0", "u1", "u2", "u3"},
                            {{1.0, 2.0, 3.0, kNaN},
                             {0.5, 0.6, 0.7, 0.8},
                             {400.0, 500.0, 600.0, 700.0},
                             {0.0, 1.0, 0.0, 1.0}});
    const Graph g = build_graph({{"u0", "u1"}, {"u1", "u2"}, {"u2", "u3"}}, unipartite());

    const auto before = graph_feature_block(g, users, "p2p", 99);
    for (auto& y : users.labels) y = (y == 0) ? 1 : 0;
    users.labels[2] = -1;
    const auto after = graph_feature_block(g, users, "p2p", 99);

    REQUIRE(before.columns.n_cols() == after.columns.n_cols());
    for (std::size_t c = 0; c < before.columns.n_cols(); ++c)
        for (std::size_t r = 0; r < before.columns.rows(); ++r)
            CHECK(same_value(before.columns.at(r, c), after.columns.at(r, c)));
}

TEST_CASE("assemble_training_table stacks base columns then each block in order") {
    const auto users = make_users({"u0", "u1", "u2"},
                                  {{1.0, 2.0, 3.0},
                                   {0.1, 0.2, 0.3},
                                   {400.0, 500.0, 600.0},
                                   {0.0, 1.0, 1.0}});
    const Graph ga = build_graph({{"u0", "u1"}, {"u1", "u2"}}, unipartite());
    const Graph gb = build_graph({{"u0", "cc0"}, {"u1", "cc0"}}, bipartite_cc());
    const auto ba = graph_feature_block(ga, users, "a", 1);
    const auto bb = graph_feature_block(gb, users, "b", 2);

    const auto table = assemble_training_table(users, {ba, bb});
    REQUIRE(table.n_cols() == 4 + 11 + 11);
    CHECK(table.names[0] == "f0");
    CHECK(table.names[3] == "f3");
    CHECK(table.names[4] == "a_in_deg");
    CHECK(table.names[14] == "a_avg_f3");
    CHECK(table.names[15] == "b_in_deg");
    CHECK(table.names[25] == "b_avg_f3");
    for (std::size_t r = 0; r < 3; ++r) {
        CHECK(table.at(r, 0) == users.features.at(r, 0));
        CHECK(same_value(table.at(r, 4), ba.columns.at(r, 0)));
        CHECK(same_value(table.at(r, 25), bb.columns.at(r, 10)));
    }
}

TEST_CASE("assemble_training_table rejects misaligned blocks") {
    const auto users3 = make_users({"u0", "u1", "u2"},
                                   {{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}});
    const auto users4 = make_users({"u0", "u1", "u2", "u3"},
                                   {{1.0, 2.0, 3.0, 4.0},
                                    {1.0, 2.0, 3.0, 4.0},
                                    {1.0, 2.0, 3.0, 4.0},
                                    {1.0, 2.0, 3.0, 4.0}});
    const Graph g = build_graph({{"u0", "u1"}}, unipartite());
    const auto wrong = graph_feature_block(g, users4, "a", 1);
    try {
        assemble_training_table(users3, {wrong});
        FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::ShapeMismatch);
    }
}

TEST_CASE("feature block CSV has a user column and blank cells for NaN") {
    const auto users = make_users({"u0", "u1", "u2", "u3"},
                                  {{1.0, 2.0, 3.0, 4.0},
                                   {1.0, 2.0, 3.0, 4.0},
                                   {1.0, 2.0, 3.0, 4.0},
                                   {1.0, 2.0, 3.0, 4.0}});
    const Graph g = build_graph({{"u0", "u1"}, {"u1", "u2"}}, unipartite());
    const auto block = graph_feature_block(g, users, "p2p", 3);

    const auto path = (std::filesystem::temp_directory_path() / "graphscore_block_test.csv").string();
    write_feature_block_csv(path, users, block);

    std::ifstream in(path);
    REQUIRE(in.good());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    std::filesystem::remove(path);

    REQUIRE(lines.size() == 5);
    auto header = split_csv_line(lines[0]);
    REQUIRE(header.size() == 12);
    CHECK(header[0] == "user");
    CHECK(header[1] == "p2p_in_deg");
    CHECK(header[11] == "p2p_avg_f3");

    const auto u3 = split_csv_line(lines[4]);
    REQUIRE(u3.size() == 12);
    CHECK(u3[0] == "u3");
    CHECK(u3[6] == "-1");  // community id sentinel
    for (std::size_t f = 8; f < 12; ++f) CHECK(u3[f].empty());

    const auto u0 = split_csv_line(lines[1]);
    CHECK(u0[0] == "u0");
    for (std::size_t f = 1; f < 12; ++f) CHECK(!u0[f].empty());
}
