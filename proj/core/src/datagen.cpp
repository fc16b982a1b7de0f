#include "graphscore/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "graphscore/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace graphscore {

namespace {

constexpr int kDatasetFormatVersion = 1;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, const std::string& context) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        raise(Errc::ParseError, context + ": bad number '" + std::string(s) + "'");
    return v;
}

std::string entity_prefix(RelationKind k) {
    switch (k) {
        case RelationKind::P2P: return "u";
        case RelationKind::CC: return "cc";
        case RelationKind::DV: return "dv";
        case RelationKind::BIN: return "bin";
        case RelationKind::GEO: return "geo";
    }
    return "?";
}

} // namespace

const char* to_string(RelationKind k) {
    switch (k) {
        case RelationKind::P2P: return "p2p";
        case RelationKind::CC: return "cc";
        case RelationKind::DV: return "dv";
        case RelationKind::BIN: return "bin";
        case RelationKind::GEO: return "geo";
    }
    return "?";
}

std::optional<RelationKind> relation_kind_from_string(std::string_view s) {
    if (s == "p2p") return RelationKind::P2P;
    if (s == "cc") return RelationKind::CC;
    if (s == "dv") return RelationKind::DV;
    if (s == "bin") return RelationKind::BIN;
    if (s == "geo") return RelationKind::GEO;
    return std::nullopt;
}

NodeKind entity_kind(RelationKind k) {
    switch (k) {
        case RelationKind::P2P: return NodeKind::User;
        case RelationKind::CC: return NodeKind::CreditCard;
        case RelationKind::DV: return NodeKind::Device;
        case RelationKind::BIN: return NodeKind::Bin;
        case RelationKind::GEO: return NodeKind::Geohash;
    }
    return NodeKind::User;
}

GraphSpec RelationSpec::graph_spec() const {
    GraphSpec gs;
    gs.directed = directed;
    gs.src_kind = NodeKind::User;
    gs.dst_kind = entity_kind(kind);
    gs.dedup = (kind == RelationKind::P2P) ? DedupMode::Sum : DedupMode::Binary;
    return gs;
}

std::size_t UserTable::n_labeled() const {
    std::size_t n = 0;
    for (auto l : labels) n += (l >= 0);
    return n;
}

UserTable generate_users(const GenConfig& cfg, std::uint64_t seed) {
    if (cfg.n_users < 2) raise(Errc::InvalidArgument, "n_users must be >= 2");
    if (!(cfg.default_rate > 0.0 && cfg.default_rate < 1.0))
        raise(Errc::InvalidArgument, "default_rate must lie in (0,1)");
    if (cfg.n_features < kNeighborSourceColumns.size())
        raise(Errc::InvalidArgument, "n_features must be >= 4 (neighbor-average source columns)");

    const std::size_t n = cfg.n_users;
    UserTable t;
    t.user_keys.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        char buf[24];
        std::snprintf(buf, sizeof(buf), "u%06zu", i);
        t.user_keys[i] = buf;
    }

    // ground-truth labels, then the observability mask
    Rng label_rng = Rng::substream(seed, "users/labels");
    std::vector<std::int8_t> truth(n);
    for (std::size_t i = 0; i < n; ++i) truth[i] = label_rng.bernoulli(cfg.default_rate) ? 1 : 0;

    Rng observed_rng = Rng::substream(seed, "users/observed");
    t.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        t.labels[i] = observed_rng.bernoulli(cfg.labeled_fraction) ? truth[i] : std::int8_t{-1};

    // signal plan: which plain columns carry label shift, and how much
    Rng signal_rng = Rng::substream(seed, "users/signal");
    std::vector<double> shift(cfg.n_features, 0.0);
    {
        std::vector<std::size_t> plain;
        for (std::size_t c = kNeighborSourceColumns.size(); c < cfg.n_features; ++c) plain.push_back(c);
        signal_rng.shuffle(plain);
        const std::size_t k = std::min(cfg.signal_columns, plain.size());
        for (std::size_t s = 0; s < k; ++s) {
            const double magnitude = signal_rng.uniform(0.5, 1.5) * cfg.signal_strength;
            shift[plain[s]] = signal_rng.bernoulli(0.5) ? magnitude : -magnitude;
        }
    }

    Rng feat_rng = Rng::substream(seed, "users/features");
    t.features.names.resize(cfg.n_features);
    t.features.cols.assign(cfg.n_features, std::vector<double>(n));
    for (std::size_t c = 0; c < cfg.n_features; ++c) t.features.names[c] = "f" + std::to_string(c);
    for (std::size_t i = 0; i < n; ++i) {
        const double y = truth[i];
        // behavioral source columns with mild class-conditional separation;
        // homophily turns their neighborhood averages into the planted lift
        t.features.cols[0][i] = sigmoid(feat_rng.normal(-1.6 + 0.12 * y, 0.7));
        t.features.cols[1][i] = sigmoid(feat_rng.normal(0.4 - 0.12 * y, 0.9));
        t.features.cols[2][i] = std::clamp(feat_rng.normal(580.0 - 12.0 * y, 90.0), 300.0, 850.0);
        t.features.cols[3][i] = feat_rng.bernoulli(0.3 - 0.04 * y) ? 1.0 : 0.0;
        for (std::size_t c = kNeighborSourceColumns.size(); c < cfg.n_features; ++c)
            t.features.cols[c][i] = feat_rng.normal() + shift[c] * (2.0 * y - 1.0);
    }

    Rng money_rng = Rng::substream(seed, "users/money");
    t.credit_line.resize(n);
    t.profit.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        t.credit_line[i] = money_rng.lognormal(cfg.credit_line_log_mean, cfg.credit_line_log_sigma);
        t.profit[i] = cfg.profit_fraction * t.credit_line[i];
    }
    return t;
}

std::vector<EdgeRecord> generate_relation_edges(const UserTable& users, const RelationSpec& spec,
                                                std::uint64_t seed) {
    if (!(spec.homophily >= 0.0 && spec.homophily <= 1.0))
        raise(Errc::InvalidArgument, "homophily must lie in [0,1]");
    if (!(spec.mean_degree > 0.0)) raise(Errc::InvalidArgument, "mean_degree must be > 0");
    const std::size_t n = users.n_users();
    if (n < 2) raise(Errc::InvalidArgument, "need at least 2 users");

    Rng rng = Rng::substream(seed, std::string("edges/") + to_string(spec.kind));
    const double h = spec.homophily;

    std::array<std::vector<std::uint32_t>, 2> by_label;
    for (std::size_t i = 0; i < n; ++i)
        if (users.labeled(i)) by_label[users.labels[i]].push_back(static_cast<std::uint32_t>(i));

    std::vector<EdgeRecord> edges;

    if (spec.kind == RelationKind::P2P) {
        const auto target = static_cast<std::size_t>(std::llround(spec.mean_degree * static_cast<double>(n) / 2.0));
        if (target > n * (n - 1)) raise(Errc::InvalidArgument, "mean_degree too large for n_users");
        std::unordered_set<std::uint64_t> seen;
        seen.reserve(target * 2);
        edges.reserve(target);
        while (edges.size() < target) {
            const auto src = static_cast<std::uint32_t>(rng.below(n));
            std::uint32_t dst;
            const std::vector<std::uint32_t>* pool =
                users.labeled(src) ? &by_label[users.labels[src]] : nullptr;
            if (pool && pool->size() > 1 && rng.bernoulli(h)) {
                do {
                    dst = (*pool)[rng.below(pool->size())];
                } while (dst == src);
            } else {
                do {
                    dst = static_cast<std::uint32_t>(rng.below(n));
                } while (dst == src);
            }
            const std::uint64_t arc = (static_cast<std::uint64_t>(src) << 32) | dst;
            if (seen.insert(arc).second)
                edges.push_back({users.user_keys[src], users.user_keys[dst], 1.0});
        }
        return edges;
    }

    // bipartite kinds
    if (spec.entities == 0) raise(Errc::InvalidArgument, "entity count must be > 0 for bipartite relations");
    const std::size_t m = spec.entities;
    std::vector<std::string> entity_keys(m);
    for (std::size_t e = 0; e < m; ++e) {
        char buf[24];
        std::snprintf(buf, sizeof(buf), "%s%06zu", entity_prefix(spec.kind).c_str(), e);
        entity_keys[e] = buf;
    }

    // latent entity affinity follows the visible label marginal
    double p_hat = 0.5;
    if (!by_label[0].empty() || !by_label[1].empty())
        p_hat = static_cast<double>(by_label[1].size()) /
                static_cast<double>(by_label[0].size() + by_label[1].size());
    std::array<std::vector<std::uint32_t>, 2> entity_pool;
    for (std::size_t e = 0; e < m; ++e)
        entity_pool[rng.bernoulli(p_hat) ? 1 : 0].push_back(static_cast<std::uint32_t>(e));

    const double base = std::floor(spec.mean_degree);
    const double extra = spec.mean_degree - base;
    std::unordered_set<std::uint32_t> used;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t k = static_cast<std::size_t>(base) + (rng.bernoulli(extra) ? 1 : 0);
        k = std::min(k, m);
        used.clear();
        for (std::size_t s = 0; s < k; ++s) {
            std::uint32_t e = 0;
            bool placed = false;
            for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
                const std::vector<std::uint32_t>* pool = nullptr;
                if (users.labeled(i) && !entity_pool[users.labels[i]].empty() && rng.bernoulli(h))
                    pool = &entity_pool[users.labels[i]];
                e = pool ? (*pool)[rng.below(pool->size())] : static_cast<std::uint32_t>(rng.below(m));
                placed = used.insert(e).second;
            }
            if (!placed) break; // entity set exhausted for this user
            edges.push_back({users.user_keys[i], entity_keys[e], 1.0});
        }
    }
    return edges;
}

void save_dataset(const Dataset& ds, const GenConfig& cfg, const std::string& dir) {
    fs::create_directories(dir);
    const auto& t = ds.users;

    {
        std::ofstream out(fs::path(dir) / "users.csv", std::ios::trunc);
        if (!out) raise(Errc::IoError, "cannot write users.csv under " + dir);
        out << "user,y,cl,r";
        for (const auto& name : t.features.names) out << ',' << name;
        out << '\n';
        for (std::size_t i = 0; i < t.n_users(); ++i) {
            out << t.user_keys[i] << ',';
            if (t.labeled(i)) out << static_cast<int>(t.labels[i]);
            out << ',' << format_double(t.credit_line[i]) << ',' << format_double(t.profit[i]);
            for (const auto& col : t.features.cols) out << ',' << format_double(col[i]);
            out << '\n';
        }
        if (!out) raise(Errc::IoError, "write failed for users.csv");
    }

    json manifest;
    manifest["format_version"] = kDatasetFormatVersion;
    manifest["seed"] = ds.seed;
    manifest["generator"] = {
        {"n_users", cfg.n_users},
        {"default_rate", cfg.default_rate},
        {"n_features", cfg.n_features},
        {"labeled_fraction", cfg.labeled_fraction},
        {"signal_columns", cfg.signal_columns},
        {"signal_strength", cfg.signal_strength},
        {"credit_line_log_mean", cfg.credit_line_log_mean},
        {"credit_line_log_sigma", cfg.credit_line_log_sigma},
        {"profit_fraction", cfg.profit_fraction},
    };
    manifest["relations"] = json::array();
    for (const auto& [spec, edges] : ds.relations) {
        write_edge_csv((fs::path(dir) / ("edges_" + std::string(to_string(spec.kind)) + ".csv")).string(), edges);
        manifest["relations"].push_back({
            {"kind", to_string(spec.kind)},
            {"mean_degree", spec.mean_degree},
            {"entities", spec.entities},
            {"homophily", spec.homophily},
            {"directed", spec.directed},
        });
    }

    std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!mf) raise(Errc::IoError, "cannot write manifest.json under " + dir);
    mf << manifest.dump(2) << '\n';
}

Dataset load_dataset(const std::string& dir) {
    const fs::path root(dir);
    if (!fs::exists(root / "manifest.json")) raise(Errc::MissingManifest, "no manifest.json in " + dir);

    json manifest;
    {
        std::ifstream mf(root / "manifest.json");
        try {
            mf >> manifest;
        } catch (const json::exception& e) {
            raise(Errc::ParseError, std::string("manifest.json: ") + e.what());
        }
    }
    if (!manifest.contains("format_version") || manifest["format_version"].get<int>() != kDatasetFormatVersion)
        raise(Errc::ParseError, "manifest.json: unsupported format_version");

    Dataset ds;
    ds.seed = manifest.value("seed", std::uint64_t{0});

    const std::size_t n_features = manifest["generator"]["n_features"].get<std::size_t>();

    // users.csv
    {
        std::ifstream in(root / "users.csv");
        if (!in) raise(Errc::IoError, "cannot open users.csv in " + dir);
        std::string line;
        if (!std::getline(in, line)) raise(Errc::ParseError, "users.csv: missing header");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::vector<std::string> header;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            const auto c = line.find(',', pos);
            header.push_back(line.substr(pos, c == std::string::npos ? std::string::npos : c - pos));
            if (c == std::string::npos) break;
            pos = c + 1;
        }
        if (header.size() != 4 + n_features || header[0] != "user" || header[1] != "y" || header[2] != "cl" ||
            header[3] != "r")
            raise(Errc::ColumnMismatch, "users.csv: header does not match manifest (expected user,y,cl,r,f0..f" +
                                            std::to_string(n_features - 1) + ")");

        UserTable& t = ds.users;
        t.features.names.assign(header.begin() + 4, header.end());
        t.features.cols.assign(n_features, {});

        std::size_t lineno = 1;
        std::vector<std::string_view> cells;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            cells.clear();
            std::string_view sv(line);
            std::size_t p = 0;
            while (p <= sv.size()) {
                const auto c = sv.find(',', p);
                cells.push_back(sv.substr(p, c == std::string_view::npos ? std::string_view::npos : c - p));
                if (c == std::string_view::npos) break;
                p = c + 1;
            }
            const std::string ctx = "users.csv:" + std::to_string(lineno);
            if (cells.size() != header.size())
                raise(Errc::ColumnMismatch, ctx + ": expected " + std::to_string(header.size()) + " columns, got " +
                                                std::to_string(cells.size()));
            t.user_keys.emplace_back(cells[0]);
            if (cells[1].empty()) {
                t.labels.push_back(-1);
            } else if (cells[1] == "0" || cells[1] == "1") {
                t.labels.push_back(cells[1] == "1" ? 1 : 0);
            } else {
                raise(Errc::ParseError, ctx + ": label must be 0, 1 or empty");
            }
            t.credit_line.push_back(parse_double(cells[2], ctx));
            t.profit.push_back(parse_double(cells[3], ctx));
            for (std::size_t c = 0; c < n_features; ++c)
                t.features.cols[c].push_back(parse_double(cells[4 + c], ctx));
        }
    }

    for (const auto& rel : manifest["relations"]) {
        const std::string kind_str = rel["kind"].get<std::string>();
        const auto kind = relation_kind_from_string(kind_str);
        if (!kind) raise(Errc::UnknownRelationKind, "manifest.json: unknown relation kind '" + kind_str + "'");
        RelationSpec spec;
        spec.kind = *kind;
        spec.mean_degree = rel["mean_degree"].get<double>();
        spec.entities = rel["entities"].get<std::size_t>();
        spec.homophily = rel["homophily"].get<double>();
        spec.directed = rel["directed"].get<bool>();
        ds.relations.emplace_back(spec, read_edge_csv((root / ("edges_" + kind_str + ".csv")).string()));
    }
    return ds;
}

} // namespace graphscore
