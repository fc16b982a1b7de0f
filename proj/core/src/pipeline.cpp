#include "graphscore/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <mutex>
#include <optional>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "graphscore/error.hpp"
#include "graphscore/features.hpp"
#include "graphscore/gnn.hpp"
#include "graphscore/rng.hpp"

namespace graphscore {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (const char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

std::string hash_hex(std::uint64_t h) {
    char buf[19];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, h, 16);
    return "0x" + std::string(buf, p);
}

// Append-only JSON-lines sink, safe to share across variant threads.
class JsonlLog {
public:
    JsonlLog(const fs::path& path) {
        fs::create_directories(path.parent_path());
        out_.open(path, std::ios::app | std::ios::binary);
        if (!out_) raise(Errc::IoError, "cannot open log '" + path.string() + "'");
    }

    void write(json event) {
        const std::string line = event.dump();
        std::lock_guard lock(mu_);
        out_ << line << '\n';
        out_.flush();
    }

private:
    std::ofstream out_;
    std::mutex mu_;
};

class StageTimer {
public:
    StageTimer() : start_(std::chrono::steady_clock::now()) {}
    std::int64_t ms() const {
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                                     start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

FeatureMatrix subset_rows(const FeatureMatrix& x, const std::vector<std::size_t>& rows) {
    FeatureMatrix out;
    out.names = x.names;
    out.cols.resize(x.n_cols());
    for (std::size_t c = 0; c < x.n_cols(); ++c) {
        out.cols[c].resize(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) out.cols[c][r] = x.cols[c][rows[r]];
    }
    return out;
}

Stat make_stat(const std::vector<double>& v) {
    Stat s;
    if (v.empty()) return s;
    for (const double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    if (v.size() < 2) return s;
    double ss = 0.0;
    for (const double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
    return s;
}

json stat_json(const Stat& s) { return {{"mean", s.mean}, {"stddev", s.stddev}}; }

Stat stat_from_json(const json& j) {
    Stat s;
    s.mean = j.at("mean").get<double>();
    s.stddev = j.at("stddev").get<double>();
    return s;
}

json report_json(const MetricReport& r) {
    return {
        {"auc", r.auc},
        {"cost", r.cost},
        {"costless_cost", r.costless_cost},
        {"savings", r.savings},
        {"threshold", r.threshold},
        {"n_examples", r.n_examples},
        {"n_positive", r.n_positive},
        {"loss_given_default", r.loss_given_default},
        {"alt_fp_cost", r.alt_fp_cost},
    };
}

MetricReport report_from_json(const json& j) {
    MetricReport r;
    r.auc = j.at("auc").get<double>();
    r.cost = j.at("cost").get<double>();
    r.costless_cost = j.at("costless_cost").get<double>();
    r.savings = j.at("savings").get<double>();
    r.threshold = j.at("threshold").get<double>();
    r.n_examples = j.at("n_examples").get<std::size_t>();
    r.n_positive = j.at("n_positive").get<std::size_t>();
    r.loss_given_default = j.at("loss_given_default").get<double>();
    r.alt_fp_cost = j.at("alt_fp_cost").get<double>();
    return r;
}

json variant_json(const VariantOutcome& v) {
    json j;
    j["name"] = v.name;
    j["blocks"] = v.blocks;
    j["n_columns"] = v.n_columns;
    j["ok"] = v.ok;
    j["error"] = v.error;
    if (v.ok) {
        auto runs = json::array();
        for (const auto& r : v.result.runs)
            runs.push_back({{"fixed", report_json(r.fixed)}, {"min_cost", report_json(r.min_cost)}});
        j["runs"] = std::move(runs);
        j["auc"] = stat_json(v.result.auc);
        j["cost"] = stat_json(v.result.cost);
        j["savings"] = stat_json(v.result.savings);
        j["savings_min_cost"] = stat_json(v.result.savings_min_cost);
        j["resampled_splits"] = v.result.resampled_splits;
    }
    return j;
}

VariantOutcome variant_from_json(const json& j) {
    VariantOutcome v;
    v.name = j.at("name").get<std::string>();
    v.blocks = j.at("blocks").get<std::vector<std::string>>();
    v.n_columns = j.at("n_columns").get<std::size_t>();
    v.ok = j.at("ok").get<bool>();
    v.error = j.at("error").get<std::string>();
    if (v.ok) {
        for (const auto& rj : j.at("runs"))
            v.result.runs.push_back(
                {report_from_json(rj.at("fixed")), report_from_json(rj.at("min_cost"))});
        v.result.auc = stat_from_json(j.at("auc"));
        v.result.cost = stat_from_json(j.at("cost"));
        v.result.savings = stat_from_json(j.at("savings"));
        v.result.savings_min_cost = stat_from_json(j.at("savings_min_cost"));
        v.result.resampled_splits = j.at("resampled_splits").get<std::size_t>();
    }
    return v;
}

json gnn_json(const GnnOutcome& g) {
    json j;
    j["name"] = g.name;
    j["ok"] = g.ok;
    j["error"] = g.error;
    if (g.ok) {
        auto runs = json::array();
        for (const auto& r : g.runs)
            runs.push_back({{"fixed", report_json(r.fixed)},
                            {"min_cost", report_json(r.min_cost)},
                            {"final_loss", r.final_loss},
                            {"final_train_auc", r.final_train_auc}});
        j["runs"] = std::move(runs);
        j["auc"] = stat_json(g.auc);
        j["cost"] = stat_json(g.cost);
        j["savings"] = stat_json(g.savings);
        j["savings_min_cost"] = stat_json(g.savings_min_cost);
        j["resampled_splits"] = g.resampled_splits;
    }
    return j;
}

GnnOutcome gnn_from_json(const json& j) {
    GnnOutcome g;
    g.name = j.at("name").get<std::string>();
    g.ok = j.at("ok").get<bool>();
    g.error = j.at("error").get<std::string>();
    if (g.ok) {
        for (const auto& rj : j.at("runs")) {
            GnnRunOutcome r;
            r.fixed = report_from_json(rj.at("fixed"));
            r.min_cost = report_from_json(rj.at("min_cost"));
            r.final_loss = rj.at("final_loss").get<double>();
            r.final_train_auc = rj.at("final_train_auc").get<double>();
            g.runs.push_back(std::move(r));
        }
        g.auc = stat_from_json(j.at("auc"));
        g.cost = stat_from_json(j.at("cost"));
        g.savings = stat_from_json(j.at("savings"));
        g.savings_min_cost = stat_from_json(j.at("savings_min_cost"));
        g.resampled_splits = j.at("resampled_splits").get<std::size_t>();
    }
    return g;
}

void write_json_file(const fs::path& path, const json& j) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(Errc::IoError, "cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) raise(Errc::IoError, "failed writing '" + path.string() + "'");
}

json read_json_file(const fs::path& path, const char* hint) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        raise(Errc::MissingManifest, "missing artifact '" + path.string() + "'; run `graphscore " +
                                         std::string(hint) + "` first");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        raise(Errc::ParseError, "invalid JSON in '" + path.string() + "': " + e.what());
    }
    return j;
}

// Everything the stages share, loaded or computed at most once per process.
struct Ctx {
    const ExperimentConfig& cfg;
    fs::path out;
    bool deterministic;
    JsonlLog log;

    std::optional<Dataset> ds;
    std::vector<Graph> graphs;             // aligned with dataset relations
    std::vector<GraphFeatureBlock> blocks; // aligned with graphs

    Ctx(const ExperimentConfig& c, const std::string& out_dir, bool det)
        : cfg(c), out(out_dir), deterministic(det), log(out / "logs" / "run.jsonl") {}

    Dataset& dataset() {
        if (!ds) {
            try {
                ds = load_dataset((out / "dataset").string());
            } catch (const Error& e) {
                if (e.code() == Errc::MissingManifest)
                    raise(Errc::MissingManifest,
                          std::string(e.what()) + "; run `graphscore gen` first");
                throw;
            }
        }
        return *ds;
    }

    // C^a_FP defaults to the population median profit; resolve once, before
    // any variant threads start reading it.
    std::optional<double> alt_fp_cache;
    double alt_fp() {
        if (!alt_fp_cache) {
            if (cfg.alt_fp_cost) {
                alt_fp_cache = *cfg.alt_fp_cost;
            } else {
                std::vector<double> r = dataset().users.profit;
                std::sort(r.begin(), r.end());
                const std::size_t n = r.size();
                alt_fp_cache = n % 2 ? r[n / 2] : 0.5 * (r[n / 2 - 1] + r[n / 2]);
            }
        }
        return *alt_fp_cache;
    }

    void build_graphs() {
        if (!graphs.empty()) return;
        Dataset& d = dataset();
        for (const auto& [spec, edges] : d.relations) {
            StageTimer t;
            graphs.push_back(Graph::build(edges, spec.graph_spec()));
            const Graph& g = graphs.back();
            log.write({{"event", "graph_built"},
                       {"kind", to_string(spec.kind)},
                       {"nodes", g.node_count()},
                       {"edges", g.edge_count()},
                       {"dropped_self_loops", g.stats().dropped_self_loops},
                       {"duplicate_edges", g.stats().duplicate_edges},
                       {"elapsed_ms", t.ms()}});
        }
    }

    void build_blocks(bool persist) {
        if (!blocks.empty()) return;
        build_graphs();
        Dataset& d = dataset();
        if (persist) fs::create_directories(out / "features");
        for (std::size_t i = 0; i < graphs.size(); ++i) {
            const auto kind = d.relations[i].first.kind;
            StageTimer t;
            blocks.push_back(graph_feature_block(
                graphs[i], d.users, to_string(kind),
                Rng::substream_seed(cfg.seed, std::string("features/") + to_string(kind))));
            const auto& diag = blocks.back().diagnostics;
            log.write({{"event", "feature_block"},
                       {"kind", to_string(kind)},
                       {"eigenvector_iterations", diag.eigenvector_iterations},
                       {"eigenvector_residual", diag.eigenvector_residual},
                       {"eigenvalue", diag.eigenvalue},
                       {"pagerank_iterations", diag.pagerank_iterations},
                       {"pagerank_residual", diag.pagerank_residual},
                       {"modularity", diag.modularity},
                       {"n_communities", diag.n_communities},
                       {"elapsed_ms", t.ms()}});
            if (persist)
                write_feature_block_csv(
                    (out / "features" / ("features_" + std::string(to_string(kind)) + ".csv")).string(),
                    d.users, blocks.back());
        }
    }
};

struct VariantDef {
    std::string name;
    std::vector<std::size_t> block_idx; // indices into ctx.blocks
};

std::vector<VariantDef> variant_grid(const Dataset& ds) {
    std::vector<VariantDef> defs;
    defs.push_back({"base", {}});
    for (std::size_t i = 0; i < ds.relations.size(); ++i)
        defs.push_back({to_string(ds.relations[i].first.kind), {i}});
    if (ds.relations.size() > 1) {
        VariantDef all{"all", {}};
        for (std::size_t i = 0; i < ds.relations.size(); ++i) all.block_idx.push_back(i);
        defs.push_back(std::move(all));
    }
    return defs;
}

// Labeled-row view of the assembled table plus the matching cost fields.
struct LabeledView {
    FeatureMatrix x;
    std::vector<std::int8_t> y;
    CostFields fields;
};

LabeledView labeled_view(const UserTable& users, const FeatureMatrix& full, double lgd, double alt) {
    LabeledView v;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < users.n_users(); ++i)
        if (users.labeled(i)) rows.push_back(i);
    v.x = subset_rows(full, rows);
    v.y.reserve(rows.size());
    v.fields.loss_given_default = lgd;
    v.fields.alt_fp_cost = alt;
    for (const auto r : rows) {
        v.y.push_back(users.labels[r]);
        v.fields.credit_line.push_back(users.credit_line[r]);
        v.fields.profit.push_back(users.profit[r]);
    }
    return v;
}

VariantOutcome run_variant(Ctx& ctx, const VariantDef& def) {
    VariantOutcome out;
    out.name = def.name;
    Dataset& ds = ctx.dataset();
    for (const auto i : def.block_idx) out.blocks.push_back(to_string(ds.relations[i].first.kind));
    StageTimer t;
    try {
        std::vector<GraphFeatureBlock> selected;
        for (const auto i : def.block_idx) selected.push_back(ctx.blocks[i]);
        const FeatureMatrix full = assemble_training_table(ds.users, selected);
        out.n_columns = full.n_cols();
        const LabeledView view =
            labeled_view(ds.users, full, ctx.cfg.loss_given_default, ctx.alt_fp());

        GbdtParams params = ctx.cfg.gbdt;
        params.seed = Rng::substream_seed(ctx.cfg.seed, "tabular/" + def.name);
        BootstrapProtocol proto = ctx.cfg.bootstrap;
        // one split stream for the whole grid: every variant sees the same
        // train/test partitions, so lifts are paired comparisons
        proto.seed = Rng::substream_seed(ctx.cfg.seed, "tabular/bootstrap");

        out.result = bootstrap_experiment(view.x, view.y, view.fields, proto, params);
        out.ok = true;
        ctx.log.write({{"event", "tabular_variant"},
                       {"variant", def.name},
                       {"n_columns", out.n_columns},
                       {"auc_mean", out.result.auc.mean},
                       {"auc_stddev", out.result.auc.stddev},
                       {"savings_mean", out.result.savings.mean},
                       {"savings_min_cost_mean", out.result.savings_min_cost.mean},
                       {"resampled_splits", out.result.resampled_splits},
                       {"elapsed_ms", t.ms()}});
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
        ctx.log.write({{"event", "tabular_variant_failed"},
                       {"variant", def.name},
                       {"error", out.error},
                       {"elapsed_ms", t.ms()}});
    }
    return out;
}

std::vector<VariantOutcome> tabular_grid(Ctx& ctx) {
    ctx.build_blocks(true);
    ctx.alt_fp();
    const auto defs = variant_grid(ctx.dataset());
    std::vector<VariantOutcome> outcomes(defs.size());
    if (ctx.deterministic) {
        for (std::size_t i = 0; i < defs.size(); ++i) outcomes[i] = run_variant(ctx, defs[i]);
    } else {
        std::vector<std::future<VariantOutcome>> futs;
        futs.reserve(defs.size());
        for (std::size_t i = 0; i < defs.size(); ++i)
            futs.push_back(std::async(std::launch::async,
                                      [&ctx, &defs, i] { return run_variant(ctx, defs[i]); }));
        for (std::size_t i = 0; i < defs.size(); ++i) outcomes[i] = futs[i].get();
    }
    return outcomes;
}

// Final deployable model: the ALL table fit on every labeled row, plus its
// in-sample permutation importances.
void fit_final_model(Ctx& ctx) {
    Dataset& ds = ctx.dataset();
    const FeatureMatrix full = assemble_training_table(ds.users, ctx.blocks);
    const LabeledView view = labeled_view(ds.users, full, ctx.cfg.loss_given_default, ctx.alt_fp());

    GbdtParams params = ctx.cfg.gbdt;
    params.seed = Rng::substream_seed(ctx.cfg.seed, "final/all");
    StageTimer t;
    const GbdtModel model = fit_gbdt(view.x, view.y, params);
    fs::create_directories(ctx.out / "models");
    save_gbdt(model, (ctx.out / "models" / "gbdt_all.json").string());

    const ScoreFn score = [&model](const FeatureMatrix& m) { return predict_gbdt(model, m); };
    const auto importances =
        permutation_importance(score, view.x, view.y, 3, Rng::substream_seed(ctx.cfg.seed, "importance"));
    std::ofstream csv(ctx.out / "importance.csv", std::ios::binary);
    if (!csv) raise(Errc::IoError, "cannot open importance.csv for writing");
    csv << "feature,importance\n";
    for (const auto& fi : importances) csv << csv_quote(fi.name) << ',' << fmt(fi.importance) << '\n';
    ctx.log.write({{"event", "final_model"},
                   {"n_columns", view.x.n_cols()},
                   {"n_trees", model.trees.size()},
                   {"final_train_loss", model.train_loss.empty() ? 0.0 : model.train_loss.back()},
                   {"elapsed_ms", t.ms()}});
}

// Stratified 70/30 node split over the labeled graph nodes, resampled (up to
// 3 draws) if a side would end up single-class, mirroring the tabular
// protocol.
struct NodeSplit {
    std::vector<std::uint8_t> train_mask;
    std::vector<std::uint8_t> test_mask;
    std::size_t resampled = 0;
};

NodeSplit split_nodes(const std::vector<std::int8_t>& y, double train_fraction, std::uint64_t seed,
                      std::size_t run) {
    std::vector<std::size_t> pos;
    std::vector<std::size_t> neg;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == 1) pos.push_back(i);
        if (y[i] == 0) neg.push_back(i);
    }
    NodeSplit split;
    for (std::size_t attempt = 0; attempt < 3; ++attempt) {
        Rng rng = Rng::substream(seed, "gnn/split" + std::to_string(run) + "/attempt" + std::to_string(attempt));
        rng.shuffle(pos);
        rng.shuffle(neg);
        const auto np = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(pos.size())));
        const auto nq = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(neg.size())));
        if (np == 0 || nq == 0 || np >= pos.size() || nq >= neg.size()) {
            ++split.resampled;
            continue;
        }
        split.train_mask.assign(y.size(), 0);
        split.test_mask.assign(y.size(), 0);
        for (std::size_t k = 0; k < pos.size(); ++k) (k < np ? split.train_mask : split.test_mask)[pos[k]] = 1;
        for (std::size_t k = 0; k < neg.size(); ++k) (k < nq ? split.train_mask : split.test_mask)[neg[k]] = 1;
        return split;
    }
    raise(Errc::SingleClassLabels, "could not draw a two-class node split");
}

GnnOutcome run_gnn_arch(Ctx& ctx, const Graph& g, const Eigen::MatrixXd& x,
                        const std::vector<std::int8_t>& y, const CostFields& node_fields,
                        GnnArchType type) {
    GnnOutcome out;
    out.name = to_string(type);
    StageTimer t;
    try {
        GnnArch arch;
        arch.type = type;
        arch.hidden = ctx.cfg.gnn.hidden;

        std::vector<double> aucs, costs, savs, savs_mc;
        for (std::size_t run = 0; run < ctx.cfg.gnn.n_runs; ++run) {
            const NodeSplit split = split_nodes(y, ctx.cfg.gnn.train_fraction,
                                                Rng::substream_seed(ctx.cfg.seed, "gnn/bootstrap"), run);
            out.resampled_splits += split.resampled;

            TrainConfig tc;
            tc.learning_rate = ctx.cfg.gnn.learning_rate;
            tc.epochs = ctx.cfg.gnn.epochs;
            tc.momentum = ctx.cfg.gnn.momentum;
            tc.train_mask = split.train_mask;
            tc.test_mask = split.test_mask;
            tc.seed = Rng::substream_seed(ctx.cfg.seed, "gnn/" + out.name + "/run" + std::to_string(run));

            const GnnTrainResult trained = train_gnn(g, x, y, arch, tc);
            save_gnn(trained.model,
                     (ctx.out / "models" / ("gnn_" + out.name + "_run" + std::to_string(run) + ".json"))
                         .string());
            for (std::size_t e = 0; e < trained.history.loss.size(); ++e)
                ctx.log.write({{"event", "gnn_epoch"},
                               {"arch", out.name},
                               {"run", run},
                               {"epoch", e},
                               {"loss", trained.history.loss[e]},
                               {"train_auc", trained.history.train_auc[e]}});

            const std::vector<double> probs = predict_gnn(trained.model, g, x);
            std::vector<double> scores;
            std::vector<std::int8_t> labels;
            CostFields fields;
            fields.loss_given_default = node_fields.loss_given_default;
            fields.alt_fp_cost = node_fields.alt_fp_cost;
            for (std::size_t i = 0; i < split.test_mask.size(); ++i) {
                if (!split.test_mask[i]) continue;
                scores.push_back(probs[i]);
                labels.push_back(y[i]);
                fields.credit_line.push_back(node_fields.credit_line[i]);
                fields.profit.push_back(node_fields.profit[i]);
            }

            GnnRunOutcome ro;
            ro.fixed = savings(scores, labels, fields, 0.5);
            ro.min_cost = savings_min_cost(scores, labels, fields);
            ro.final_loss = trained.history.loss.back();
            ro.final_train_auc = trained.history.train_auc.back();
            aucs.push_back(ro.fixed.auc);
            costs.push_back(ro.fixed.cost);
            savs.push_back(ro.fixed.savings);
            savs_mc.push_back(ro.min_cost.savings);
            out.runs.push_back(std::move(ro));
        }
        out.auc = make_stat(aucs);
        out.cost = make_stat(costs);
        out.savings = make_stat(savs);
        out.savings_min_cost = make_stat(savs_mc);
        out.ok = true;
        ctx.log.write({{"event", "gnn_arch"},
                       {"arch", out.name},
                       {"auc_mean", out.auc.mean},
                       {"auc_stddev", out.auc.stddev},
                       {"savings_mean", out.savings.mean},
                       {"elapsed_ms", t.ms()}});
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
        ctx.log.write(
            {{"event", "gnn_arch_failed"}, {"arch", out.name}, {"error", out.error}, {"elapsed_ms", t.ms()}});
    }
    return out;
}

// The GNN grid runs on the P2P graph with the base behavioral features.
std::vector<GnnOutcome> gnn_grid(Ctx& ctx) {
    ctx.build_graphs();
    Dataset& ds = ctx.dataset();
    std::size_t p2p = ds.relations.size();
    for (std::size_t i = 0; i < ds.relations.size(); ++i)
        if (ds.relations[i].first.kind == RelationKind::P2P) p2p = i;
    if (p2p == ds.relations.size()) {
        ctx.log.write({{"event", "gnn_skipped"}, {"reason", "no p2p relation configured"}});
        return {};
    }
    const Graph& g = ctx.graphs[p2p];

    std::unordered_map<std::string, std::size_t> row_of;
    row_of.reserve(ds.users.n_users());
    for (std::size_t i = 0; i < ds.users.n_users(); ++i) row_of.emplace(ds.users.user_keys[i], i);

    const auto n = static_cast<Eigen::Index>(g.node_count());
    Eigen::MatrixXd x(n, static_cast<Eigen::Index>(ds.users.features.n_cols()));
    std::vector<std::int8_t> y(g.node_count());
    CostFields node_fields;
    node_fields.loss_given_default = ctx.cfg.loss_given_default;
    node_fields.alt_fp_cost = ctx.alt_fp();
    node_fields.credit_line.resize(g.node_count());
    node_fields.profit.resize(g.node_count());
    for (NodeId v = 0; v < g.node_count(); ++v) {
        const auto it = row_of.find(g.key(v));
        if (it == row_of.end())
            raise(Errc::InvalidArgument, "graph user '" + g.key(v) + "' is not in the user table");
        const std::size_t r = it->second;
        for (std::size_t c = 0; c < ds.users.features.n_cols(); ++c)
            x(v, static_cast<Eigen::Index>(c)) = ds.users.features.cols[c][r];
        y[v] = ds.users.labels[r];
        node_fields.credit_line[v] = ds.users.credit_line[r];
        node_fields.profit[v] = ds.users.profit[r];
    }

    fs::create_directories(ctx.out / "models");
    const auto& archs = ctx.cfg.gnn.archs;
    std::vector<GnnOutcome> outcomes(archs.size());
    if (ctx.deterministic) {
        for (std::size_t i = 0; i < archs.size(); ++i)
            outcomes[i] = run_gnn_arch(ctx, g, x, y, node_fields, archs[i]);
    } else {
        std::vector<std::future<GnnOutcome>> futs;
        futs.reserve(archs.size());
        for (std::size_t i = 0; i < archs.size(); ++i)
            futs.push_back(std::async(std::launch::async, [&, i] {
                return run_gnn_arch(ctx, g, x, y, node_fields, archs[i]);
            }));
        for (std::size_t i = 0; i < archs.size(); ++i) outcomes[i] = futs[i].get();
    }
    return outcomes;
}

void write_tabular_results(Ctx& ctx, const std::vector<VariantOutcome>& outcomes) {
    json j;
    j["schema_version"] = 1;
    j["kind"] = "tabular_results";
    j["seed"] = ctx.cfg.seed;
    j["config_hash"] = hash_hex(config_hash(ctx.cfg));
    auto arr = json::array();
    for (const auto& v : outcomes) arr.push_back(variant_json(v));
    j["variants"] = std::move(arr);
    write_json_file(ctx.out / "tabular_results.json", j);
}

void write_gnn_results(Ctx& ctx, const std::vector<GnnOutcome>& outcomes) {
    json j;
    j["schema_version"] = 1;
    j["kind"] = "gnn_results";
    j["seed"] = ctx.cfg.seed;
    j["config_hash"] = hash_hex(config_hash(ctx.cfg));
    auto arr = json::array();
    for (const auto& g : outcomes) arr.push_back(gnn_json(g));
    j["archs"] = std::move(arr);
    write_json_file(ctx.out / "gnn_results.json", j);
}

void render_report(const ExperimentConfig& cfg, const fs::path& out, const PipelineResult& result) {
    json j;
    j["schema_version"] = 1;
    j["kind"] = "graphscore-report";
    j["seed"] = result.seed;
    j["config_hash"] = hash_hex(result.hash);
    auto tab = json::array();
    for (const auto& v : result.tabular) tab.push_back(variant_json(v));
    j["tabular"] = std::move(tab);
    auto gj = json::array();
    for (const auto& g : result.gnn) gj.push_back(gnn_json(g));
    j["gnn"] = std::move(gj);
    write_json_file(out / "report.json", j);

    std::ofstream csv(out / "report.csv", std::ios::binary);
    if (!csv) raise(Errc::IoError, "cannot open report.csv for writing");
    csv << "section,variant,n_columns,runs,auc_mean,auc_stddev,cost_mean,cost_stddev,savings_mean,"
           "savings_stddev,savings_min_cost_mean,savings_min_cost_stddev,status,error\n";
    const auto row = [&csv](const std::string& section, const std::string& name, std::size_t n_columns,
                            std::size_t runs, const Stat& auc_s, const Stat& cost_s, const Stat& sav,
                            const Stat& sav_mc, bool ok, const std::string& error) {
        csv << section << ',' << csv_quote(name) << ',' << n_columns << ',' << runs << ',';
        if (ok)
            csv << fmt(auc_s.mean) << ',' << fmt(auc_s.stddev) << ',' << fmt(cost_s.mean) << ','
                << fmt(cost_s.stddev) << ',' << fmt(sav.mean) << ',' << fmt(sav.stddev) << ','
                << fmt(sav_mc.mean) << ',' << fmt(sav_mc.stddev);
        else
            csv << ",,,,,,,";
        csv << ',' << (ok ? "ok" : "failed") << ',' << csv_quote(error) << '\n';
    };
    for (const auto& v : result.tabular)
        row("tabular", v.name, v.n_columns, v.result.runs.size(), v.result.auc, v.result.cost,
            v.result.savings, v.result.savings_min_cost, v.ok, v.error);
    for (const auto& g : result.gnn)
        row("gnn", g.name, cfg.users.n_features, g.runs.size(), g.auc, g.cost, g.savings,
            g.savings_min_cost, g.ok, g.error);
    if (!csv) raise(Errc::IoError, "failed writing report.csv");
    csv.close();

    json manifest;
    manifest["schema_version"] = 1;
    manifest["kind"] = "graphscore-run";
    manifest["seed"] = result.seed;
    manifest["config_hash"] = hash_hex(result.hash);
    manifest["config"] = json::parse(canonical_config_json(cfg));
    auto variants = json::array();
    for (const auto& v : result.tabular)
        variants.push_back({{"name", v.name}, {"ok", v.ok}});
    manifest["tabular_variants"] = std::move(variants);
    auto archs = json::array();
    for (const auto& g : result.gnn) archs.push_back({{"name", g.name}, {"ok", g.ok}});
    manifest["gnn_archs"] = std::move(archs);
    manifest["artifacts"] = {
        {"dataset", "dataset"},
        {"features", "features"},
        {"models", "models"},
        {"tabular_results", "tabular_results.json"},
        {"gnn_results", "gnn_results.json"},
        {"importance", "importance.csv"},
        {"eval", "eval.json"},
        {"report_json", "report.json"},
        {"report_csv", "report.csv"},
        {"log", "logs/run.jsonl"},
    };
    write_json_file(out / "manifest.json", manifest);
}

void stage_gen(Ctx& ctx) {
    StageTimer t;
    Dataset ds;
    ds.seed = ctx.cfg.seed;
    ds.users = generate_users(ctx.cfg.users, ctx.cfg.seed);
    for (const auto& spec : ctx.cfg.relations)
        ds.relations.emplace_back(spec, generate_relation_edges(ds.users, spec, ctx.cfg.seed));
    save_dataset(ds, ctx.cfg.users, (ctx.out / "dataset").string());
    ctx.log.write({{"event", "gen"},
                   {"users", ds.users.n_users()},
                   {"labeled", ds.users.n_labeled()},
                   {"relations", ds.relations.size()},
                   {"elapsed_ms", t.ms()}});
    ctx.ds = std::move(ds);
}

// In-sample scoring of the persisted final model over the ALL table.
void stage_eval(Ctx& ctx) {
    ctx.build_blocks(false);
    Dataset& ds = ctx.dataset();
    const fs::path model_path = ctx.out / "models" / "gbdt_all.json";
    if (!fs::exists(model_path))
        raise(Errc::MissingManifest,
              "missing artifact '" + model_path.string() + "'; run `graphscore train-gbdt` first");
    const GbdtModel model = load_gbdt(model_path.string());

    const FeatureMatrix full = assemble_training_table(ds.users, ctx.blocks);
    const LabeledView view = labeled_view(ds.users, full, ctx.cfg.loss_given_default, ctx.alt_fp());
    const std::vector<double> scores = predict_gbdt(model, view.x);

    json j;
    j["schema_version"] = 1;
    j["kind"] = "eval";
    j["model"] = "models/gbdt_all.json";
    j["n_examples"] = view.y.size();
    j["fixed"] = report_json(savings(scores, view.y, view.fields, ctx.cfg.bootstrap.threshold));
    j["min_cost"] = report_json(savings_min_cost(scores, view.y, view.fields));
    write_json_file(ctx.out / "eval.json", j);
    ctx.log.write({{"event", "eval"}, {"n_examples", view.y.size()}});
}

} // namespace

bool PipelineResult::partial_failure() const {
    const auto failed = [](const auto& v) { return !v.ok; };
    return std::any_of(tabular.begin(), tabular.end(), failed) ||
           std::any_of(gnn.begin(), gnn.end(), failed);
}

void run_gen(const ExperimentConfig& cfg, const std::string& out_dir) {
    Ctx ctx(cfg, out_dir, true);
    stage_gen(ctx);
}

void run_features(const ExperimentConfig& cfg, const std::string& out_dir) {
    Ctx ctx(cfg, out_dir, true);
    ctx.build_blocks(true);
}

void run_train_gbdt(const ExperimentConfig& cfg, const std::string& out_dir, bool deterministic) {
    Ctx ctx(cfg, out_dir, deterministic);
    const auto outcomes = tabular_grid(ctx);
    write_tabular_results(ctx, outcomes);
    fit_final_model(ctx);
}

void run_train_gnn(const ExperimentConfig& cfg, const std::string& out_dir, bool deterministic) {
    Ctx ctx(cfg, out_dir, deterministic);
    const auto outcomes = gnn_grid(ctx);
    write_gnn_results(ctx, outcomes);
}

void run_eval(const ExperimentConfig& cfg, const std::string& out_dir) {
    Ctx ctx(cfg, out_dir, true);
    stage_eval(ctx);
}

PipelineResult run_report(const ExperimentConfig& cfg, const std::string& out_dir) {
    Ctx ctx(cfg, out_dir, true);
    PipelineResult result;
    result.seed = cfg.seed;
    result.hash = config_hash(cfg);

    const json tj = read_json_file(ctx.out / "tabular_results.json", "train-gbdt");
    try {
        for (const auto& vj : tj.at("variants")) result.tabular.push_back(variant_from_json(vj));
    } catch (const json::exception& e) {
        raise(Errc::ParseError, std::string("malformed tabular_results.json: ") + e.what());
    }
    if (fs::exists(ctx.out / "gnn_results.json")) {
        const json gj = read_json_file(ctx.out / "gnn_results.json", "train-gnn");
        try {
            for (const auto& aj : gj.at("archs")) result.gnn.push_back(gnn_from_json(aj));
        } catch (const json::exception& e) {
            raise(Errc::ParseError, std::string("malformed gnn_results.json: ") + e.what());
        }
    }
    render_report(cfg, ctx.out, result);
    return result;
}

PipelineResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, bool deterministic) {
    Ctx ctx(cfg, out_dir, deterministic);
    StageTimer t;
    stage_gen(ctx);
    ctx.build_blocks(true);

    PipelineResult result;
    result.seed = cfg.seed;
    result.hash = config_hash(cfg);
    result.tabular = tabular_grid(ctx);
    write_tabular_results(ctx, result.tabular);
    try {
        fit_final_model(ctx);
        stage_eval(ctx);
    } catch (const std::exception& e) {
        ctx.log.write({{"event", "final_model_failed"}, {"error", e.what()}});
    }
    result.gnn = gnn_grid(ctx);
    write_gnn_results(ctx, result.gnn);

    render_report(cfg, ctx.out, result);
    ctx.log.write({{"event", "run_complete"},
                   {"partial_failure", result.partial_failure()},
                   {"elapsed_ms", t.ms()}});
    return result;
}

} // namespace graphscore
