#include "graphscore/config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

#include "graphscore/error.hpp"

namespace graphscore {

namespace {

using nlohmann::json;

std::string join_path(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object())
        raise(Errc::ConfigInvalid, "'" + (path.empty() ? std::string("<root>") : path) + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::none_of(allowed.begin(), allowed.end(),
                         [&](const char* a) { return it.key() == a; }))
            raise(Errc::ConfigInvalid, "unknown config key '" + join_path(path, it.key()) + "'");
    }
}

const json& require(const json& j, const std::string& path, const char* key) {
    if (!j.contains(key)) raise(Errc::ConfigInvalid, "missing required config block '" + join_path(path, key) + "'");
    return j.at(key);
}

double get_num(const json& j, const std::string& path, const char* key, double def) {
    if (!j.contains(key)) return def;
    const auto& v = j.at(key);
    if (!v.is_number()) raise(Errc::ConfigInvalid, "'" + join_path(path, key) + "' must be a number");
    return v.get<double>();
}

std::size_t get_count(const json& j, const std::string& path, const char* key, std::size_t def) {
    if (!j.contains(key)) return def;
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
        raise(Errc::ConfigInvalid, "'" + join_path(path, key) + "' must be a non-negative integer");
    return v.get<std::size_t>();
}

bool get_bool(const json& j, const std::string& path, const char* key, bool def) {
    if (!j.contains(key)) return def;
    const auto& v = j.at(key);
    if (!v.is_boolean()) raise(Errc::ConfigInvalid, "'" + join_path(path, key) + "' must be a boolean");
    return v.get<bool>();
}

void check_range(double v, double lo, double hi, const std::string& what) {
    if (!(v >= lo) || !(v <= hi))
        raise(Errc::ConfigInvalid, "'" + what + "' must lie in [" + std::to_string(lo) + ", " +
                                       std::to_string(hi) + "]");
}

GenConfig parse_users(const json& j) {
    check_keys(j, "users",
               {"n_users", "default_rate", "n_features", "labeled_fraction", "signal_columns",
                "signal_strength", "credit_line_log_mean", "credit_line_log_sigma", "profit_fraction"});
    GenConfig g;
    g.n_users = get_count(j, "users", "n_users", g.n_users);
    g.default_rate = get_num(j, "users", "default_rate", g.default_rate);
    g.n_features = get_count(j, "users", "n_features", g.n_features);
    g.labeled_fraction = get_num(j, "users", "labeled_fraction", g.labeled_fraction);
    g.signal_columns = get_count(j, "users", "signal_columns", g.signal_columns);
    g.signal_strength = get_num(j, "users", "signal_strength", g.signal_strength);
    g.credit_line_log_mean = get_num(j, "users", "credit_line_log_mean", g.credit_line_log_mean);
    g.credit_line_log_sigma = get_num(j, "users", "credit_line_log_sigma", g.credit_line_log_sigma);
    g.profit_fraction = get_num(j, "users", "profit_fraction", g.profit_fraction);

    if (g.n_users == 0) raise(Errc::ConfigInvalid, "'users.n_users' must be positive");
    if (!(g.default_rate > 0.0) || !(g.default_rate < 1.0))
        raise(Errc::ConfigInvalid, "'users.default_rate' must lie in (0, 1)");
    if (g.n_features < kNeighborSourceColumns.size())
        raise(Errc::ConfigInvalid, "'users.n_features' must be at least " +
                                       std::to_string(kNeighborSourceColumns.size()));
    if (!(g.labeled_fraction > 0.0) || !(g.labeled_fraction <= 1.0))
        raise(Errc::ConfigInvalid, "'users.labeled_fraction' must lie in (0, 1]");
    if (g.signal_columns > g.n_features)
        raise(Errc::ConfigInvalid, "'users.signal_columns' cannot exceed 'users.n_features'");
    if (!(g.signal_strength >= 0.0)) raise(Errc::ConfigInvalid, "'users.signal_strength' must be non-negative");
    if (!(g.credit_line_log_sigma >= 0.0))
        raise(Errc::ConfigInvalid, "'users.credit_line_log_sigma' must be non-negative");
    if (!(g.profit_fraction > 0.0)) raise(Errc::ConfigInvalid, "'users.profit_fraction' must be positive");
    return g;
}

std::vector<RelationSpec> parse_relations(const json& j) {
    if (!j.is_array()) raise(Errc::ConfigInvalid, "'relations' must be an array");
    std::vector<RelationSpec> out;
    std::vector<bool> seen(5, false);
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string path = "relations[" + std::to_string(i) + "]";
        const auto& rj = j[i];
        check_keys(rj, path, {"kind", "mean_degree", "entities", "homophily", "directed"});
        RelationSpec spec;
        const auto& kj = require(rj, path, "kind");
        if (!kj.is_string()) raise(Errc::ConfigInvalid, "'" + path + ".kind' must be a string");
        const auto kind = relation_kind_from_string(kj.get<std::string>());
        if (!kind)
            raise(Errc::ConfigInvalid, "'" + path + ".kind' names unknown relation '" +
                                           kj.get<std::string>() + "'");
        spec.kind = *kind;
        if (seen[static_cast<std::size_t>(spec.kind)])
            raise(Errc::ConfigInvalid, "duplicate relation kind '" + std::string(to_string(spec.kind)) + "'");
        seen[static_cast<std::size_t>(spec.kind)] = true;

        spec.mean_degree = get_num(rj, path, "mean_degree", spec.mean_degree);
        spec.entities = get_count(rj, path, "entities", spec.entities);
        spec.homophily = get_num(rj, path, "homophily", spec.homophily);
        spec.directed = get_bool(rj, path, "directed", spec.kind == RelationKind::P2P);

        if (!(spec.mean_degree > 0.0)) raise(Errc::ConfigInvalid, "'" + path + ".mean_degree' must be positive");
        check_range(spec.homophily, 0.0, 1.0, path + ".homophily");
        const bool bipartite = spec.kind != RelationKind::P2P;
        if (bipartite && spec.entities == 0)
            raise(Errc::ConfigInvalid, "'" + path + ".entities' is required for bipartite relations");
        if (!bipartite && spec.entities != 0)
            raise(Errc::ConfigInvalid, "'" + path + ".entities' does not apply to p2p");
        if (bipartite && spec.directed)
            raise(Errc::ConfigInvalid, "'" + path + ".directed' does not apply to bipartite relations");
        out.push_back(spec);
    }
    if (out.empty()) raise(Errc::ConfigInvalid, "'relations' must list at least one relation");
    return out;
}

GbdtParams parse_gbdt(const json& j) {
    check_keys(j, "gbdt",
               {"n_trees", "learning_rate", "max_depth", "min_child_weight", "l2_reg", "gamma", "subsample"});
    GbdtParams p;
    p.n_trees = get_count(j, "gbdt", "n_trees", p.n_trees);
    p.learning_rate = get_num(j, "gbdt", "learning_rate", p.learning_rate);
    p.max_depth = get_count(j, "gbdt", "max_depth", p.max_depth);
    p.min_child_weight = get_num(j, "gbdt", "min_child_weight", p.min_child_weight);
    p.l2_reg = get_num(j, "gbdt", "l2_reg", p.l2_reg);
    p.gamma = get_num(j, "gbdt", "gamma", p.gamma);
    p.subsample = get_num(j, "gbdt", "subsample", p.subsample);
    if (p.n_trees == 0) raise(Errc::ConfigInvalid, "'gbdt.n_trees' must be positive");
    if (!(p.learning_rate > 0.0)) raise(Errc::ConfigInvalid, "'gbdt.learning_rate' must be positive");
    if (p.max_depth == 0) raise(Errc::ConfigInvalid, "'gbdt.max_depth' must be positive");
    if (!(p.min_child_weight >= 0.0)) raise(Errc::ConfigInvalid, "'gbdt.min_child_weight' must be non-negative");
    if (!(p.l2_reg >= 0.0)) raise(Errc::ConfigInvalid, "'gbdt.l2_reg' must be non-negative");
    if (!(p.gamma >= 0.0)) raise(Errc::ConfigInvalid, "'gbdt.gamma' must be non-negative");
    if (!(p.subsample > 0.0) || !(p.subsample <= 1.0))
        raise(Errc::ConfigInvalid, "'gbdt.subsample' must lie in (0, 1]");
    return p;
}

BootstrapProtocol parse_bootstrap(const json& j) {
    check_keys(j, "bootstrap", {"n_runs", "train_fraction", "threshold"});
    BootstrapProtocol b;
    b.n_runs = get_count(j, "bootstrap", "n_runs", b.n_runs);
    b.train_fraction = get_num(j, "bootstrap", "train_fraction", b.train_fraction);
    b.threshold = get_num(j, "bootstrap", "threshold", b.threshold);
    if (b.n_runs == 0) raise(Errc::ConfigInvalid, "'bootstrap.n_runs' must be positive");
    if (!(b.train_fraction > 0.0) || !(b.train_fraction < 1.0))
        raise(Errc::ConfigInvalid, "'bootstrap.train_fraction' must lie in (0, 1)");
    if (!(b.threshold > 0.0) || !(b.threshold < 1.0))
        raise(Errc::ConfigInvalid, "'bootstrap.threshold' must lie in (0, 1)");
    return b;
}

GnnGridConfig parse_gnn(const json& j) {
    check_keys(j, "gnn",
               {"archs", "hidden", "learning_rate", "epochs", "momentum", "n_runs", "train_fraction"});
    GnnGridConfig g;
    if (j.contains("archs")) {
        const auto& aj = j.at("archs");
        if (!aj.is_array()) raise(Errc::ConfigInvalid, "'gnn.archs' must be an array of strings");
        g.archs.clear();
        for (const auto& e : aj) {
            if (!e.is_string()) raise(Errc::ConfigInvalid, "'gnn.archs' must be an array of strings");
            const auto t = gnn_arch_from_string(e.get<std::string>());
            if (!t)
                raise(Errc::ConfigInvalid, "'gnn.archs' names unknown architecture '" +
                                               e.get<std::string>() + "'");
            if (std::find(g.archs.begin(), g.archs.end(), *t) != g.archs.end())
                raise(Errc::ConfigInvalid, "'gnn.archs' lists '" + e.get<std::string>() + "' twice");
            g.archs.push_back(*t);
        }
    }
    g.hidden = get_count(j, "gnn", "hidden", g.hidden);
    g.learning_rate = get_num(j, "gnn", "learning_rate", g.learning_rate);
    g.epochs = get_count(j, "gnn", "epochs", g.epochs);
    g.momentum = get_num(j, "gnn", "momentum", g.momentum);
    g.n_runs = get_count(j, "gnn", "n_runs", g.n_runs);
    g.train_fraction = get_num(j, "gnn", "train_fraction", g.train_fraction);
    if (g.hidden == 0) raise(Errc::ConfigInvalid, "'gnn.hidden' must be positive");
    if (!(g.learning_rate > 0.0)) raise(Errc::ConfigInvalid, "'gnn.learning_rate' must be positive");
    if (g.epochs == 0) raise(Errc::ConfigInvalid, "'gnn.epochs' must be positive");
    if (!(g.momentum >= 0.0) || g.momentum >= 1.0)
        raise(Errc::ConfigInvalid, "'gnn.momentum' must lie in [0, 1)");
    if (g.n_runs == 0) raise(Errc::ConfigInvalid, "'gnn.n_runs' must be positive");
    if (!(g.train_fraction > 0.0) || !(g.train_fraction < 1.0))
        raise(Errc::ConfigInvalid, "'gnn.train_fraction' must lie in (0, 1)");
    return g;
}

} // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        raise(Errc::ParseError, std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, "", {"seed", "out_dir", "users", "relations", "cost", "gbdt", "bootstrap", "gnn"});

    ExperimentConfig cfg;
    const auto& sj = require(j, "", "seed");
    if (!sj.is_number_integer() || sj.get<std::int64_t>() < 0)
        raise(Errc::ConfigInvalid, "'seed' must be a non-negative integer");
    cfg.seed = sj.get<std::uint64_t>();

    cfg.users = parse_users(require(j, "", "users"));
    cfg.relations = parse_relations(require(j, "", "relations"));
    if (j.contains("gbdt")) cfg.gbdt = parse_gbdt(j.at("gbdt"));
    if (j.contains("bootstrap")) cfg.bootstrap = parse_bootstrap(j.at("bootstrap"));
    if (j.contains("gnn")) cfg.gnn = parse_gnn(j.at("gnn"));
    if (j.contains("cost")) {
        const auto& cj = j.at("cost");
        check_keys(cj, "cost", {"loss_given_default", "alt_fp_cost"});
        cfg.loss_given_default = get_num(cj, "cost", "loss_given_default", cfg.loss_given_default);
        if (cj.contains("alt_fp_cost")) {
            cfg.alt_fp_cost = get_num(cj, "cost", "alt_fp_cost", 0.0);
            if (!(*cfg.alt_fp_cost >= 0.0))
                raise(Errc::ConfigInvalid, "'cost.alt_fp_cost' must be non-negative");
        }
        if (!(cfg.loss_given_default > 0.0) || !(cfg.loss_given_default <= 1.0))
            raise(Errc::ConfigInvalid, "'cost.loss_given_default' must lie in (0, 1]");
    }
    if (j.contains("out_dir")) {
        const auto& oj = j.at("out_dir");
        if (!oj.is_string()) raise(Errc::ConfigInvalid, "'out_dir' must be a string");
        cfg.out_dir = oj.get<std::string>();
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(Errc::IoError, "cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_experiment_config(ss.str());
}

std::string canonical_config_json(const ExperimentConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["users"] = {
        {"n_users", cfg.users.n_users},
        {"default_rate", cfg.users.default_rate},
        {"n_features", cfg.users.n_features},
        {"labeled_fraction", cfg.users.labeled_fraction},
        {"signal_columns", cfg.users.signal_columns},
        {"signal_strength", cfg.users.signal_strength},
        {"credit_line_log_mean", cfg.users.credit_line_log_mean},
        {"credit_line_log_sigma", cfg.users.credit_line_log_sigma},
        {"profit_fraction", cfg.users.profit_fraction},
    };
    auto relations = json::array();
    for (const auto& r : cfg.relations)
        relations.push_back({
            {"kind", to_string(r.kind)},
            {"mean_degree", r.mean_degree},
            {"entities", r.entities},
            {"homophily", r.homophily},
            {"directed", r.directed},
        });
    j["relations"] = std::move(relations);
    j["gbdt"] = {
        {"n_trees", cfg.gbdt.n_trees},
        {"learning_rate", cfg.gbdt.learning_rate},
        {"max_depth", cfg.gbdt.max_depth},
        {"min_child_weight", cfg.gbdt.min_child_weight},
        {"l2_reg", cfg.gbdt.l2_reg},
        {"gamma", cfg.gbdt.gamma},
        {"subsample", cfg.gbdt.subsample},
    };
    j["bootstrap"] = {
        {"n_runs", cfg.bootstrap.n_runs},
        {"train_fraction", cfg.bootstrap.train_fraction},
        {"threshold", cfg.bootstrap.threshold},
    };
    auto archs = json::array();
    for (const auto a : cfg.gnn.archs) archs.push_back(to_string(a));
    j["gnn"] = {
        {"archs", std::move(archs)},
        {"hidden", cfg.gnn.hidden},
        {"learning_rate", cfg.gnn.learning_rate},
        {"epochs", cfg.gnn.epochs},
        {"momentum", cfg.gnn.momentum},
        {"n_runs", cfg.gnn.n_runs},
        {"train_fraction", cfg.gnn.train_fraction},
    };
    j["cost"] = {
        {"loss_given_default", cfg.loss_given_default},
        // null selects the population-median default, distinct from any fixed value
        {"alt_fp_cost", cfg.alt_fp_cost ? json(*cfg.alt_fp_cost) : json(nullptr)},
    };
    return j.dump(); // object keys serialize sorted
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    const std::string s = canonical_config_json(cfg);
    std::uint64_t h = 1469598103934665603ull;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace graphscore
