#include <doctest.h>

#include <filesystem>
#include <vector>

#include "graphscore/error.hpp"
#include "graphscore/graph.hpp"

using namespace graphscore;

namespace {

GraphSpec undirected_users() {
    GraphSpec s;
    s.directed = false;
    return s;
}

GraphSpec directed_users() {
    GraphSpec s;
    s.directed = true;
    return s;
}

} // namespace

TEST_CASE("build assigns dense ids in first-appearance order") {
    const std::vector<EdgeRecord> edges = {{"c", "a", 1.0}, {"a", "b", 1.0}};
    const Graph g = Graph::build(edges, undirected_users());
    CHECK(g.node_count() == 3);
    CHECK(g.key(0) == "c");
    CHECK(g.key(1) == "a");
    CHECK(g.key(2) == "b");
    CHECK(g.find("a").value() == 1);
    CHECK_FALSE(g.find("zz").has_value());
}

TEST_CASE("empty edge list is rejected") {
    CHECK_THROWS_AS(Graph::build({}, undirected_users()), Error);
}

TEST_CASE("duplicate edges accumulate or collapse by dedup mode") {
    const std::vector<EdgeRecord> edges = {{"a", "b", 1.0}, {"a", "b", 2.5}};
    GraphSpec sum = undirected_users();
    const Graph gs = Graph::build(edges, sum);
    CHECK(gs.edge_count() == 1);
    CHECK(gs.out_neighbors(0)[0].weight == doctest::Approx(3.5));
    CHECK(gs.stats().duplicate_edges == 1);

    GraphSpec bin = undirected_users();
    bin.dedup = DedupMode::Binary;
    const Graph gb = Graph::build(edges, bin);
    CHECK(gb.out_neighbors(0)[0].weight == doctest::Approx(1.0));
}

TEST_CASE("self loops are dropped and counted") {
    const std::vector<EdgeRecord> edges = {{"a", "a", 1.0}, {"a", "b", 1.0}};
    const Graph g = Graph::build(edges, undirected_users());
    CHECK(g.stats().dropped_self_loops == 1);
    CHECK(g.edge_count() == 1);
}

TEST_CASE("directed adjacency separates out and in") {
    const std::vector<EdgeRecord> edges = {{"a", "b", 2.0}, {"c", "b", 1.0}};
    const Graph g = Graph::build(edges, directed_users());
    const auto a = g.find("a").value();
    const auto b = g.find("b").value();
    CHECK(g.out_degree(a) == 1);
    CHECK(g.in_degree(a) == 0);
    CHECK(g.in_degree(b) == 2);
    CHECK(g.out_degree(b) == 0);

    const auto all = g.neighbors(b, Direction::All);
    CHECK(all.size() == 2);
}

TEST_CASE("Direction::All merges antiparallel arcs with summed weight") {
    const std::vector<EdgeRecord> edges = {{"a", "b", 2.0}, {"b", "a", 3.0}};
    const Graph g = Graph::build(edges, directed_users());
    const auto a = g.find("a").value();
    const auto all = g.neighbors(a, Direction::All);
    REQUIRE(all.size() == 1);
    CHECK(all[0].weight == doctest::Approx(5.0));
}

TEST_CASE("symmetrized merges antiparallel arcs") {
    const std::vector<EdgeRecord> edges = {{"a", "b", 2.0}, {"b", "a", 3.0}, {"b", "c", 1.0}};
    const Graph g = Graph::build(edges, directed_users());
    const Graph s = g.symmetrized();
    CHECK_FALSE(s.directed());
    CHECK(s.edge_count() == 2);
    const auto a = s.find("a").value();
    REQUIRE(s.out_degree(a) == 1);
    CHECK(s.out_neighbors(a)[0].weight == doctest::Approx(5.0));
}

TEST_CASE("bipartite projection connects users sharing an entity") {
    GraphSpec spec;
    spec.src_kind = NodeKind::User;
    spec.dst_kind = NodeKind::Device;
    const std::vector<EdgeRecord> edges = {
        {"u1", "d1", 1.0}, {"u2", "d1", 1.0}, {"u3", "d2", 1.0}, {"u1", "d2", 1.0}, {"u1", "d3", 1.0},
        {"u2", "d3", 1.0},
    };
    const Graph g = Graph::build(edges, spec);
    const Graph p = bipartite_user_projection(g);
    CHECK(p.node_count() == 3);
    const auto u1 = p.find("u1").value();
    const auto u2 = p.find("u2").value();
    const auto u3 = p.find("u3").value();
    // u1-u2 share d1 and d3, u1-u3 share d2, u2-u3 share nothing
    auto weight_between = [&](NodeId x, NodeId ydst) {
        for (const auto& nb : p.out_neighbors(x))
            if (nb.id == ydst) return nb.weight;
        return 0.0;
    };
    CHECK(weight_between(u1, u2) == doctest::Approx(2.0));
    CHECK(weight_between(u1, u3) == doctest::Approx(1.0));
    CHECK(weight_between(u2, u3) == doctest::Approx(0.0));
}

TEST_CASE("projection keeps users that share nothing as isolated nodes") {
    GraphSpec spec;
    spec.src_kind = NodeKind::User;
    spec.dst_kind = NodeKind::Bin;
    const std::vector<EdgeRecord> edges = {{"u1", "b1", 1.0}, {"u2", "b2", 1.0}};
    const Graph p = bipartite_user_projection(Graph::build(edges, spec));
    CHECK(p.node_count() == 2);
    CHECK(p.out_degree(p.find("u1").value()) == 0);
}

TEST_CASE("projection rejects unipartite input") {
    const Graph g = Graph::build({{"a", "b", 1.0}}, undirected_users());
    CHECK_THROWS_AS(bipartite_user_projection(g), Error);
}

TEST_CASE("edge csv round-trips") {
    const std::vector<EdgeRecord> edges = {{"a", "b", 1.5}, {"b", "c", 1.0}};
    const auto path = (std::filesystem::temp_directory_path() / "graphscore_edges_test.csv").string();
    write_edge_csv(path, edges);
    const auto back = read_edge_csv(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].src == "a");
    CHECK(back[0].dst == "b");
    CHECK(back[0].weight == doctest::Approx(1.5));
    std::filesystem::remove(path);
}
