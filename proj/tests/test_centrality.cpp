#include <doctest.h>

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "graphscore/centrality.hpp"
#include "graphscore/datagen.hpp"
#include "graphscore/error.hpp"
#include "graphscore/rng.hpp"

using namespace graphscore;

namespace {

GraphSpec spec(bool directed) {
    GraphSpec s;
    s.directed = directed;
    return s;
}

Eigen::MatrixXd dense_adjacency(const Graph& g) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(g.node_count(), g.node_count());
    for (NodeId i = 0; i < g.node_count(); ++i)
        for (const auto& nb : g.out_neighbors(i)) a(i, nb.id) = nb.weight;
    return a;
}

Graph random_graph(std::uint64_t seed, std::size_t n, std::size_t arcs, bool directed) {
    Rng rng(seed);
    std::vector<EdgeRecord> edges;
    for (std::size_t k = 0; k < arcs; ++k) {
        const auto s = rng.below(n);
        auto d = rng.below(n);
        if (s == d) d = (d + 1) % n;
        edges.push_back({"n" + std::to_string(s), "n" + std::to_string(d), 0.5 + rng.uniform()});
    }
    return Graph::build(edges, spec(directed));
}

// Dense PageRank oracle: solve (I - d T^T) x = (1-d)/n with dangling rows
// replaced by uniform transitions.
Eigen::VectorXd pagerank_oracle(const Graph& g, double damping) {
    const auto n = static_cast<Eigen::Index>(g.node_count());
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n);
    for (NodeId i = 0; i < g.node_count(); ++i) {
        const auto nbrs = g.out_neighbors(i);
        double w = 0.0;
        for (const auto& nb : nbrs) w += nb.weight;
        if (w > 0.0) {
            for (const auto& nb : nbrs) t(i, nb.id) = nb.weight / w;
        } else {
            for (Eigen::Index j = 0; j < n; ++j) t(i, j) = 1.0 / static_cast<double>(n);
        }
    }
    const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) - damping * t.transpose();
    const Eigen::VectorXd b =
        Eigen::VectorXd::Constant(n, (1.0 - damping) / static_cast<double>(n));
    return m.colPivHouseholderQr().solve(b);
}

} // namespace

TEST_CASE("total_degrees splits in/out on directed graphs") {
    const Graph g = Graph::build({{"a", "b", 1.0}, {"a", "c", 1.0}, {"c", "a", 1.0}}, spec(true));
    const auto deg = total_degrees(g);
    const auto a = g.find("a").value();
    CHECK(deg[a].out == 2);
    CHECK(deg[a].in == 1);
    CHECK(deg[a].total == 3);
    const auto b = g.find("b").value();
    CHECK(deg[b].total == 1);
}

TEST_CASE("total_degrees counts undirected edges once") {
    const Graph g = Graph::build({{"a", "b", 1.0}, {"b", "c", 1.0}}, spec(false));
    const auto deg = total_degrees(g);
    const auto b = g.find("b").value();
    CHECK(deg[b].in == 2);
    CHECK(deg[b].out == 2);
    CHECK(deg[b].total == 2);
}

TEST_CASE("eigenvector centrality on the 4-star matches sqrt(3)") {
    const Graph g = Graph::build({{"c", "l1", 1.0}, {"c", "l2", 1.0}, {"c", "l3", 1.0}}, spec(false));
    const auto res = eigenvector_centrality(g);
    CHECK(res.eigenvalue == doctest::Approx(std::sqrt(3.0)).epsilon(1e-7));
    const auto c = g.find("c").value();
    CHECK(res.scores[c] == doctest::Approx(1.0));
    for (const char* leaf : {"l1", "l2", "l3"})
        CHECK(res.scores[g.find(leaf).value()] == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-7));
}

TEST_CASE("eigenvector centrality satisfies its residual contract on random graphs") {
    for (std::uint64_t s = 1; s <= 8; ++s) {
        const Graph g = random_graph(s, 30, 120, s % 2 == 0);
        const auto res = eigenvector_centrality(g, 1e-10);
        const Eigen::MatrixXd a = dense_adjacency(g);
        Eigen::VectorXd x(g.node_count());
        for (NodeId i = 0; i < g.node_count(); ++i) x[i] = res.scores[i];
        const double resid = (a * x - res.eigenvalue * x).cwiseAbs().maxCoeff();
        CHECK(resid <= 1e-10 * res.eigenvalue + 1e-14);
    }
}

TEST_CASE("eigenvector centrality rejects DAGs") {
    const Graph g = Graph::build({{"a", "b", 1.0}, {"b", "c", 1.0}, {"a", "c", 1.0}}, spec(true));
    try {
        eigenvector_centrality(g);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::ZeroSpectralRadius);
    }
}

TEST_CASE("pagerank on a cycle is uniform") {
    std::vector<EdgeRecord> edges;
    for (int i = 0; i < 5; ++i)
        edges.push_back({"n" + std::to_string(i), "n" + std::to_string((i + 1) % 5), 1.0});
    const Graph g = Graph::build(edges, spec(true));
    const auto res = pagerank(g);
    for (NodeId i = 0; i < g.node_count(); ++i) CHECK(res.scores[i] == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("pagerank matches the dense linear-solve oracle") {
    for (std::uint64_t s = 1; s <= 6; ++s) {
        const Graph g = random_graph(100 + s, 40, 150, true);
        const auto res = pagerank(g, 0.85, 1e-13, 500);
        const Eigen::VectorXd oracle = pagerank_oracle(g, 0.85);
        double sum = 0.0;
        for (NodeId i = 0; i < g.node_count(); ++i) sum += res.scores[i];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
        for (NodeId i = 0; i < g.node_count(); ++i)
            CHECK(res.scores[i] == doctest::Approx(oracle[i]).epsilon(1e-8));
    }
}

TEST_CASE("pagerank handles dangling nodes") {
    const Graph g = Graph::build({{"a", "b", 1.0}, {"c", "b", 1.0}}, spec(true));
    const auto res = pagerank(g, 0.85, 1e-14, 500);
    const Eigen::VectorXd oracle = pagerank_oracle(g, 0.85);
    for (NodeId i = 0; i < g.node_count(); ++i)
        CHECK(res.scores[i] == doctest::Approx(oracle[i]).epsilon(1e-10));
}
