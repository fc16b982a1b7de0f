#include <string>
#include <unordered_map>

#include <benchmark/benchmark.h>

#include "graphscore/centrality.hpp"
#include "graphscore/datagen.hpp"
#include "graphscore/gbdt.hpp"
#include "graphscore/gnn.hpp"
#include "graphscore/louvain.hpp"

namespace {

using namespace graphscore;

constexpr std::uint64_t kSeed = 7;

UserTable bench_users(std::size_t n) {
    GenConfig cfg;
    cfg.n_users = n;
    cfg.n_features = 32;
    return generate_users(cfg, kSeed);
}

Graph bench_p2p(const UserTable& users) {
    RelationSpec spec;
    spec.kind = RelationKind::P2P;
    spec.mean_degree = 5.0;
    spec.homophily = 0.5;
    spec.directed = true;
    return Graph::build(generate_relation_edges(users, spec, kSeed), spec.graph_spec());
}

void BM_Pagerank(benchmark::State& state) {
    const auto users = bench_users(static_cast<std::size_t>(state.range(0)));
    const Graph g = bench_p2p(users);
    for (auto _ : state) benchmark::DoNotOptimize(pagerank(g));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(g.edge_count()));
}
BENCHMARK(BM_Pagerank)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_EigenvectorCentrality(benchmark::State& state) {
    const auto users = bench_users(static_cast<std::size_t>(state.range(0)));
    const Graph g = bench_p2p(users);
    for (auto _ : state) benchmark::DoNotOptimize(eigenvector_centrality(g));
}
BENCHMARK(BM_EigenvectorCentrality)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_Louvain(benchmark::State& state) {
    const auto users = bench_users(static_cast<std::size_t>(state.range(0)));
    const Graph g = bench_p2p(users);
    for (auto _ : state) benchmark::DoNotOptimize(louvain(g, 1.0, kSeed));
}
BENCHMARK(BM_Louvain)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_GbdtFit(benchmark::State& state) {
    const auto users = bench_users(static_cast<std::size_t>(state.range(0)));
    std::vector<std::int8_t> y;
    for (std::size_t i = 0; i < users.n_users(); ++i) y.push_back(users.labels[i] > 0 ? 1 : 0);
    GbdtParams params;
    params.n_trees = 20;
    params.seed = kSeed;
    for (auto _ : state) benchmark::DoNotOptimize(fit_gbdt(users.features, y, params));
}
BENCHMARK(BM_GbdtFit)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_GnnEpoch(benchmark::State& state) {
    const auto users = bench_users(static_cast<std::size_t>(state.range(0)));
    const Graph g = bench_p2p(users);
    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < users.n_users(); ++i) row_of.emplace(users.user_keys[i], i);
    Eigen::MatrixXd x(g.node_count(), users.features.n_cols());
    std::vector<std::int8_t> y(g.node_count());
    for (NodeId v = 0; v < g.node_count(); ++v) {
        const std::size_t r = row_of.at(g.key(v));
        for (std::size_t c = 0; c < users.features.n_cols(); ++c)
            x(v, static_cast<Eigen::Index>(c)) = users.features.cols[c][r];
        y[v] = users.labels[r] > 0 ? 1 : 0;
    }
    TrainConfig tc;
    tc.epochs = 1;
    tc.seed = kSeed;
    tc.train_mask.assign(g.node_count(), 1);
    tc.test_mask.assign(g.node_count(), 0);
    GnnArch arch;
    arch.type = static_cast<GnnArchType>(state.range(1));
    for (auto _ : state) benchmark::DoNotOptimize(train_gnn(g, x, y, arch, tc));
}
BENCHMARK(BM_GnnEpoch)
    ->Args({2000, 0})
    ->Args({2000, 1})
    ->Args({2000, 2})
    ->Args({2000, 3})
    ->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
