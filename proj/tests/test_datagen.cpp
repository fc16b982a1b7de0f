#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <unordered_map>

#include "graphscore/datagen.hpp"
#include "graphscore/error.hpp"

using namespace graphscore;

namespace {

double label_agreement_rate(const UserTable& users, const std::vector<EdgeRecord>& edges) {
    std::unordered_map<std::string, std::int8_t> label_of;
    for (std::size_t i = 0; i < users.n_users(); ++i) label_of.emplace(users.user_keys[i], users.labels[i]);
    std::size_t same = 0;
    std::size_t both = 0;
    for (const auto& e : edges) {
        const auto a = label_of.at(e.src);
        const auto b = label_of.at(e.dst);
        if (a < 0 || b < 0) continue;
        ++both;
        if (a == b) ++same;
    }
    REQUIRE(both > 0);
    return static_cast<double>(same) / static_cast<double>(both);
}

} // namespace

TEST_CASE("generate_users hits the configured default rate and schema") {
    GenConfig cfg;
    cfg.n_users = 20000;
    cfg.n_features = 10;
    const UserTable t = generate_users(cfg, 42);
    CHECK(t.n_users() == 20000);
    CHECK(t.features.n_cols() == 10);
    CHECK(t.features.names[0] == "f0");
    CHECK(t.features.names[9] == "f9");

    std::size_t pos = 0;
    for (std::size_t i = 0; i < t.n_users(); ++i) {
        REQUIRE(t.labels[i] >= -1);
        REQUIRE(t.labels[i] <= 1);
        if (t.labels[i] == 1) ++pos;
        CHECK(t.credit_line[i] > 0.0);
        CHECK(t.profit[i] == doctest::Approx(0.1 * t.credit_line[i]));
        CHECK(t.features.cols[0][i] >= 0.0);
        CHECK(t.features.cols[0][i] <= 1.0);
        CHECK(t.features.cols[1][i] >= 0.0);
        CHECK(t.features.cols[1][i] <= 1.0);
        CHECK(t.features.cols[2][i] >= 300.0);
        CHECK(t.features.cols[2][i] <= 850.0);
        const double f3 = t.features.cols[3][i];
        CHECK((f3 == 0.0 || f3 == 1.0));
    }
    const double rate = static_cast<double>(pos) / static_cast<double>(t.n_users());
    CHECK(rate == doctest::Approx(0.129).epsilon(0.08));
}

TEST_CASE("labeled_fraction marks the remainder unlabeled") {
    GenConfig cfg;
    cfg.n_users = 5000;
    cfg.n_features = 6;
    cfg.labeled_fraction = 0.6;
    const UserTable t = generate_users(cfg, 1);
    const double frac = static_cast<double>(t.n_labeled()) / static_cast<double>(t.n_users());
    CHECK(frac == doctest::Approx(0.6).epsilon(0.05));
}

TEST_CASE("same seed regenerates identical users") {
    GenConfig cfg;
    cfg.n_users = 200;
    cfg.n_features = 8;
    const UserTable a = generate_users(cfg, 99);
    const UserTable b = generate_users(cfg, 99);
    CHECK(a.user_keys == b.user_keys);
    CHECK(a.labels == b.labels);
    CHECK(a.credit_line == b.credit_line);
    for (std::size_t c = 0; c < a.features.n_cols(); ++c) CHECK(a.features.cols[c] == b.features.cols[c]);
}

TEST_CASE("p2p arc count matches the mean degree target") {
    GenConfig cfg;
    cfg.n_users = 4000;
    cfg.n_features = 6;
    const UserTable t = generate_users(cfg, 3);
    RelationSpec spec;
    spec.kind = RelationKind::P2P;
    spec.mean_degree = 4.86;
    spec.directed = true;
    const auto edges = generate_relation_edges(t, spec, 3);
    CHECK(edges.size() == static_cast<std::size_t>(std::llround(4000 * 4.86 / 2.0)));
}

TEST_CASE("homophily zero matches the label-mix baseline and increases monotonically") {
    GenConfig cfg;
    cfg.n_users = 6000;
    cfg.n_features = 6;
    const UserTable t = generate_users(cfg, 17);

    RelationSpec spec;
    spec.kind = RelationKind::P2P;
    spec.mean_degree = 6.0;
    spec.directed = true;

    spec.homophily = 0.0;
    const double r0 = label_agreement_rate(t, generate_relation_edges(t, spec, 17));
    spec.homophily = 0.5;
    const double r5 = label_agreement_rate(t, generate_relation_edges(t, spec, 17));
    spec.homophily = 0.9;
    const double r9 = label_agreement_rate(t, generate_relation_edges(t, spec, 17));

    // at h=0 endpoints pair independently of labels: p^2 + (1-p)^2
    std::size_t pos = 0;
    std::size_t lab = 0;
    for (std::size_t i = 0; i < t.n_users(); ++i) {
        if (!t.labeled(i)) continue;
        ++lab;
        if (t.labels[i] == 1) ++pos;
    }
    const double p = static_cast<double>(pos) / static_cast<double>(lab);
    const double base = p * p + (1.0 - p) * (1.0 - p);
    CHECK(r0 == doctest::Approx(base).epsilon(0.05));
    CHECK(r5 > r0 + 0.05);
    CHECK(r9 > r5 + 0.05);
}

TEST_CASE("bipartite relations emit user-to-entity edges with degree near target") {
    GenConfig cfg;
    cfg.n_users = 3000;
    cfg.n_features = 6;
    const UserTable t = generate_users(cfg, 23);
    RelationSpec spec;
    spec.kind = RelationKind::DV;
    spec.mean_degree = 2.86;
    spec.entities = 900;
    const auto edges = generate_relation_edges(t, spec, 23);
    const double mean_deg = static_cast<double>(edges.size()) / static_cast<double>(t.n_users());
    CHECK(mean_deg == doctest::Approx(2.86).epsilon(0.05));
    for (const auto& e : edges) {
        CHECK(e.src.starts_with("u"));
        CHECK(e.dst.starts_with("dv"));
    }
}

TEST_CASE("dataset save/load round-trip is exact") {
    GenConfig cfg;
    cfg.n_users = 150;
    cfg.n_features = 6;
    Dataset ds;
    ds.seed = 5;
    ds.users = generate_users(cfg, 5);
    RelationSpec p2p;
    p2p.kind = RelationKind::P2P;
    p2p.mean_degree = 3.0;
    p2p.directed = true;
    ds.relations.emplace_back(p2p, generate_relation_edges(ds.users, p2p, 5));
    RelationSpec cc;
    cc.kind = RelationKind::CC;
    cc.mean_degree = 2.0;
    cc.entities = 60;
    ds.relations.emplace_back(cc, generate_relation_edges(ds.users, cc, 5));

    const auto dir = (std::filesystem::temp_directory_path() / "graphscore_ds_test").string();
    std::filesystem::remove_all(dir);
    save_dataset(ds, cfg, dir);
    const Dataset back = load_dataset(dir);

    CHECK(back.seed == ds.seed);
    CHECK(back.users.user_keys == ds.users.user_keys);
    CHECK(back.users.labels == ds.users.labels);
    CHECK(back.users.credit_line == ds.users.credit_line);
    CHECK(back.users.profit == ds.users.profit);
    CHECK(back.users.features.names == ds.users.features.names);
    for (std::size_t c = 0; c < ds.users.features.n_cols(); ++c)
        CHECK(back.users.features.cols[c] == ds.users.features.cols[c]);
    REQUIRE(back.relations.size() == 2);
    CHECK(back.relations[0].first.kind == RelationKind::P2P);
    CHECK(back.relations[0].second.size() == ds.relations[0].second.size());
    for (std::size_t i = 0; i < ds.relations[0].second.size(); ++i) {
        CHECK(back.relations[0].second[i].src == ds.relations[0].second[i].src);
        CHECK(back.relations[0].second[i].dst == ds.relations[0].second[i].dst);
        CHECK(back.relations[0].second[i].weight == ds.relations[0].second[i].weight);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("load_dataset without a manifest raises MissingManifest") {
    const auto dir = (std::filesystem::temp_directory_path() / "graphscore_ds_missing").string();
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    try {
        load_dataset(dir);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::MissingManifest);
    }
    std::filesystem::remove_all(dir);
}
