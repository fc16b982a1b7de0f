#include "graphscore/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

#include "graphscore/error.hpp"
#include "graphscore/rng.hpp"

namespace graphscore {

namespace {

constexpr int kSchemaVersion = 1;

double sigmoid(double m) { return 1.0 / (1.0 + std::exp(-m)); }

double logistic_loss(double margin, std::int8_t y) {
    const double z = y == 1 ? -margin : margin;
    return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z)));
}

void validate_params(const GbdtParams& p) {
    if (p.n_trees < 1) raise(Errc::InvalidArgument, "n_trees must be at least 1");
    if (!(p.learning_rate > 0.0) || p.learning_rate > 1.0)
        raise(Errc::InvalidArgument, "learning_rate must lie in (0, 1]");
    if (p.max_depth < 1) raise(Errc::InvalidArgument, "max_depth must be at least 1");
    if (!(p.l2_reg >= 0.0)) raise(Errc::InvalidArgument, "l2_reg must be non-negative");
    if (!(p.gamma >= 0.0)) raise(Errc::InvalidArgument, "gamma must be non-negative");
    if (!(p.min_child_weight >= 0.0)) raise(Errc::InvalidArgument, "min_child_weight must be non-negative");
    if (!(p.subsample > 0.0) || p.subsample > 1.0)
        raise(Errc::InvalidArgument, "subsample must lie in (0, 1]");
}

struct BestSplit {
    double gain = 0.0;
    std::int32_t feature = -1;
    double threshold = 0.0;
    bool missing_left = false;
};

// Deterministic candidate ordering: gain, then lowest feature, then lowest
// threshold, then missing-left over missing-right.
bool beats(double gain, std::int32_t f, double thr, bool miss_left, const BestSplit& b) {
    if (b.feature < 0) return true;
    if (gain != b.gain) return gain > b.gain;
    if (f != b.feature) return f < b.feature;
    if (thr != b.threshold) return thr < b.threshold;
    return miss_left && !b.missing_left;
}

double split_gain(double gl, double hl, double gr, double hr, double lam, double gamma) {
    const double gs = gl + gr, hs = hl + hr;
    return 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - gs * gs / (hs + lam)) - gamma;
}

} // namespace

GbdtModel fit_gbdt(const FeatureMatrix& x, const std::vector<std::int8_t>& y, const GbdtParams& params) {
    validate_params(params);
    const std::size_t n = y.size();
    if (x.n_cols() == 0) raise(Errc::InvalidArgument, "feature matrix has no columns");
    if (x.rows() != n)
        raise(Errc::ShapeMismatch, "feature matrix has " + std::to_string(x.rows()) + " rows, labels have " +
                                       std::to_string(n));
    std::size_t n_pos = 0;
    for (auto v : y) {
        if (v != 0 && v != 1) raise(Errc::InvalidArgument, "training labels must be 0 or 1");
        n_pos += v == 1 ? 1 : 0;
    }
    if (n_pos == 0 || n_pos == n) raise(Errc::SingleClassLabels, "training labels are single-class");

    const std::size_t n_features = x.n_cols();
    for (std::size_t f = 0; f < n_features; ++f)
        for (double v : x.cols[f])
            if (std::isinf(v)) raise(Errc::NonFiniteFeature, "infinite value in column '" + x.names[f] + "'");

    // Presorted non-missing rows per feature; row index breaks value ties so
    // the order is unique.
    std::vector<std::vector<std::uint32_t>> order(n_features);
    std::vector<std::vector<double>> sorted_vals(n_features);
    for (std::size_t f = 0; f < n_features; ++f) {
        const auto& col = x.cols[f];
        auto& idx = order[f];
        idx.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i)
            if (!std::isnan(col[i])) idx.push_back(i);
        std::sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) {
            return col[a] < col[b] || (col[a] == col[b] && a < b);
        });
        sorted_vals[f].resize(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) sorted_vals[f][k] = col[idx[k]];
    }

    GbdtModel model;
    model.learning_rate = params.learning_rate;
    model.feature_names = x.names;
    const double prior = static_cast<double>(n_pos) / static_cast<double>(n);
    model.base_score = std::log(prior / (1.0 - prior));

    std::vector<double> margin(n, model.base_score);
    std::vector<double> g(n), h(n);
    std::vector<std::int32_t> node(n);
    const double lam = params.l2_reg;
    const double mcw = params.min_child_weight;

    for (std::size_t t = 0; t < params.n_trees; ++t) {
        Rng rng = Rng::substream(params.seed, "gbdt/tree" + std::to_string(t));
        for (std::size_t i = 0; i < n; ++i) {
            const bool in = params.subsample >= 1.0 || rng.bernoulli(params.subsample);
            node[i] = in ? 0 : -1;
            const double p = sigmoid(margin[i]);
            g[i] = p - static_cast<double>(y[i]);
            h[i] = p * (1.0 - p);
        }

        GbdtTree tree;
        tree.nodes.emplace_back();
        std::int32_t level_begin = 0;
        std::int32_t level_end = 1;
        for (std::size_t depth = 0; level_begin < level_end; ++depth) {
            const std::size_t width = static_cast<std::size_t>(level_end - level_begin);
            std::vector<double> node_g(width, 0.0), node_h(width, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                if (node[i] < level_begin) continue;
                const auto li = static_cast<std::size_t>(node[i] - level_begin);
                node_g[li] += g[i];
                node_h[li] += h[i];
            }

            std::vector<BestSplit> best(width);
            if (depth < params.max_depth) {
                std::vector<double> acc_g(width), acc_h(width), prev(width);
                std::vector<std::size_t> cnt(width);
                for (std::size_t f = 0; f < n_features; ++f) {
                    const auto& rows_f = order[f];
                    const auto& vals_f = sorted_vals[f];

                    // forward scan: missing values routed right
                    std::fill(acc_g.begin(), acc_g.end(), 0.0);
                    std::fill(acc_h.begin(), acc_h.end(), 0.0);
                    std::fill(cnt.begin(), cnt.end(), std::size_t{0});
                    for (std::size_t k = 0; k < rows_f.size(); ++k) {
                        const auto i = rows_f[k];
                        if (node[i] < level_begin) continue;
                        const auto li = static_cast<std::size_t>(node[i] - level_begin);
                        const double v = vals_f[k];
                        if (cnt[li] > 0 && v != prev[li]) {
                            double thr = 0.5 * (prev[li] + v);
                            if (!(thr > prev[li])) thr = v; // keep the partition at the midpoint exact
                            const double gl = acc_g[li], hl = acc_h[li];
                            const double gr = node_g[li] - gl, hr = node_h[li] - hl;
                            if (hl >= mcw && hr >= mcw) {
                                const double gain = split_gain(gl, hl, gr, hr, lam, params.gamma);
                                if (gain > 0.0 && beats(gain, static_cast<std::int32_t>(f), thr, false, best[li]))
                                    best[li] = {gain, static_cast<std::int32_t>(f), thr, false};
                            }
                        }
                        acc_g[li] += g[i];
                        acc_h[li] += h[i];
                        ++cnt[li];
                        prev[li] = v;
                    }

                    // backward scan: missing values routed left
                    std::fill(acc_g.begin(), acc_g.end(), 0.0);
                    std::fill(acc_h.begin(), acc_h.end(), 0.0);
                    std::fill(cnt.begin(), cnt.end(), std::size_t{0});
                    for (std::size_t k = rows_f.size(); k-- > 0;) {
                        const auto i = rows_f[k];
                        if (node[i] < level_begin) continue;
                        const auto li = static_cast<std::size_t>(node[i] - level_begin);
                        const double v = vals_f[k];
                        if (cnt[li] > 0 && v != prev[li]) {
                            double thr = 0.5 * (v + prev[li]);
                            if (!(thr > v)) thr = prev[li];
                            const double gr = acc_g[li], hr = acc_h[li];
                            const double gl = node_g[li] - gr, hl = node_h[li] - hr;
                            if (hl >= mcw && hr >= mcw) {
                                const double gain = split_gain(gl, hl, gr, hr, lam, params.gamma);
                                if (gain > 0.0 && beats(gain, static_cast<std::int32_t>(f), thr, true, best[li]))
                                    best[li] = {gain, static_cast<std::int32_t>(f), thr, true};
                            }
                        }
                        acc_g[li] += g[i];
                        acc_h[li] += h[i];
                        ++cnt[li];
                        prev[li] = v;
                    }
                }
            }

            for (std::size_t li = 0; li < width; ++li) {
                auto& nd = tree.nodes[static_cast<std::size_t>(level_begin) + li];
                const auto& b = best[li];
                if (b.feature >= 0) {
                    nd.feature = b.feature;
                    nd.threshold = b.threshold;
                    nd.missing_left = b.missing_left;
                    nd.left = static_cast<std::int32_t>(tree.nodes.size());
                    nd.right = nd.left + 1;
                    tree.nodes.emplace_back();
                    tree.nodes.emplace_back();
                } else {
                    nd.leaf = node_h[li] + lam > 0.0 ? -node_g[li] / (node_h[li] + lam) : 0.0;
                }
            }

            if (tree.nodes.size() > static_cast<std::size_t>(level_end)) {
                for (std::size_t i = 0; i < n; ++i) {
                    if (node[i] < level_begin) continue;
                    const auto& nd = tree.nodes[static_cast<std::size_t>(node[i])];
                    if (nd.feature < 0) continue;
                    const double v = x.cols[static_cast<std::size_t>(nd.feature)][i];
                    node[i] = std::isnan(v) ? (nd.missing_left ? nd.left : nd.right)
                                            : (v < nd.threshold ? nd.left : nd.right);
                }
            }
            level_begin = level_end;
            level_end = static_cast<std::int32_t>(tree.nodes.size());
        }

        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const GbdtNode* nd = &tree.nodes[0];
            while (nd->feature >= 0) {
                const double v = x.cols[static_cast<std::size_t>(nd->feature)][i];
                nd = &tree.nodes[static_cast<std::size_t>(
                    std::isnan(v) ? (nd->missing_left ? nd->left : nd->right)
                                  : (v < nd->threshold ? nd->left : nd->right))];
            }
            margin[i] += params.learning_rate * nd->leaf;
            loss += logistic_loss(margin[i], y[i]);
        }
        model.train_loss.push_back(loss / static_cast<double>(n));
        model.trees.push_back(std::move(tree));
    }
    return model;
}

std::vector<double> predict_gbdt(const GbdtModel& model, const FeatureMatrix& x) {
    std::vector<const std::vector<double>*> cols(model.feature_names.size());
    for (std::size_t f = 0; f < model.feature_names.size(); ++f)
        cols[f] = &x.cols[x.column_index(model.feature_names[f])];

    const std::size_t n = x.rows();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double m = model.base_score;
        for (const auto& tree : model.trees) {
            const GbdtNode* nd = &tree.nodes[0];
            while (nd->feature >= 0) {
                const double v = (*cols[static_cast<std::size_t>(nd->feature)])[i];
                nd = &tree.nodes[static_cast<std::size_t>(
                    std::isnan(v) ? (nd->missing_left ? nd->left : nd->right)
                                  : (v < nd->threshold ? nd->left : nd->right))];
            }
            m += model.learning_rate * nd->leaf;
        }
        out[i] = sigmoid(m);
    }
    return out;
}

namespace {

nlohmann::json node_to_json(const GbdtTree& tree, const std::vector<std::string>& names, std::int32_t idx) {
    const auto& nd = tree.nodes[static_cast<std::size_t>(idx)];
    if (nd.feature < 0) return nlohmann::json{{"leaf", nd.leaf}};
    return nlohmann::json{
        {"feature", names[static_cast<std::size_t>(nd.feature)]},
        {"threshold", nd.threshold},
        {"missing", nd.missing_left ? "left" : "right"},
        {"left", node_to_json(tree, names, nd.left)},
        {"right", node_to_json(tree, names, nd.right)},
    };
}

std::int32_t node_from_json(const nlohmann::json& j, GbdtTree& tree,
                            const std::unordered_map<std::string, std::int32_t>& feature_index) {
    const auto idx = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (j.contains("leaf")) {
        const double leaf = j.at("leaf").get<double>();
        if (!std::isfinite(leaf)) raise(Errc::ParseError, "non-finite leaf weight in model file");
        tree.nodes[static_cast<std::size_t>(idx)].leaf = leaf;
        return idx;
    }
    const auto fname = j.at("feature").get<std::string>();
    const auto it = feature_index.find(fname);
    if (it == feature_index.end())
        raise(Errc::SchemaMismatch, "tree references unknown feature '" + fname + "'");
    const auto missing = j.at("missing").get<std::string>();
    if (missing != "left" && missing != "right")
        raise(Errc::ParseError, "missing-direction must be 'left' or 'right'");
    tree.nodes[static_cast<std::size_t>(idx)].feature = it->second;
    tree.nodes[static_cast<std::size_t>(idx)].threshold = j.at("threshold").get<double>();
    tree.nodes[static_cast<std::size_t>(idx)].missing_left = missing == "left";
    const auto left = node_from_json(j.at("left"), tree, feature_index);
    const auto right = node_from_json(j.at("right"), tree, feature_index);
    tree.nodes[static_cast<std::size_t>(idx)].left = left;
    tree.nodes[static_cast<std::size_t>(idx)].right = right;
    return idx;
}

} // namespace

void save_gbdt(const GbdtModel& model, const std::string& path) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["model"] = "gbdt";
    j["base_score"] = model.base_score;
    j["learning_rate"] = model.learning_rate;
    j["feature_names"] = model.feature_names;
    auto trees = nlohmann::json::array();
    for (const auto& tree : model.trees) trees.push_back(node_to_json(tree, model.feature_names, 0));
    j["trees"] = std::move(trees);

    std::ofstream out(path, std::ios::binary);
    if (!out) raise(Errc::IoError, "cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) raise(Errc::IoError, "failed writing '" + path + "'");
}

GbdtModel load_gbdt(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(Errc::IoError, "cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        raise(Errc::ParseError, "invalid model JSON in '" + path + "': " + e.what());
    }
    try {
        if (!j.contains("schema_version") || !j.at("schema_version").is_number_integer())
            raise(Errc::SchemaMismatch, "model file lacks a schema_version");
        if (j.at("schema_version").get<int>() != kSchemaVersion)
            raise(Errc::SchemaMismatch, "unsupported model schema_version " + j.at("schema_version").dump());
        if (j.value("model", std::string{}) != "gbdt")
            raise(Errc::SchemaMismatch, "model file is not a gbdt model");

        GbdtModel model;
        model.base_score = j.at("base_score").get<double>();
        model.learning_rate = j.at("learning_rate").get<double>();
        model.feature_names = j.at("feature_names").get<std::vector<std::string>>();

        std::unordered_map<std::string, std::int32_t> feature_index;
        for (std::size_t f = 0; f < model.feature_names.size(); ++f)
            feature_index.emplace(model.feature_names[f], static_cast<std::int32_t>(f));

        for (const auto& tj : j.at("trees")) {
            GbdtTree tree;
            node_from_json(tj, tree, feature_index);
            model.trees.push_back(std::move(tree));
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        raise(Errc::ParseError, "malformed model JSON in '" + path + "': " + e.what());
    }
}

namespace {

FeatureMatrix subset_rows(const FeatureMatrix& x, const std::vector<std::uint32_t>& rows) {
    FeatureMatrix out;
    out.names = x.names;
    out.cols.resize(x.n_cols());
    for (std::size_t c = 0; c < x.n_cols(); ++c) {
        out.cols[c].reserve(rows.size());
        for (const auto r : rows) out.cols[c].push_back(x.cols[c][r]);
    }
    return out;
}

template <typename T>
std::vector<T> subset(const std::vector<T>& v, const std::vector<std::uint32_t>& rows) {
    std::vector<T> out;
    out.reserve(rows.size());
    for (const auto r : rows) out.push_back(v[r]);
    return out;
}

Stat make_stat(const std::vector<double>& v) {
    Stat s;
    if (v.empty()) return s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2) return s;
    double ss = 0.0;
    for (const double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
    return s;
}

} // namespace

ExperimentResult bootstrap_experiment(const FeatureMatrix& x, const std::vector<std::int8_t>& y,
                                      const CostFields& fields, const BootstrapProtocol& protocol,
                                      const GbdtParams& params) {
    if (protocol.n_runs < 1) raise(Errc::InvalidArgument, "n_runs must be at least 1");
    if (!(protocol.train_fraction > 0.0) || !(protocol.train_fraction < 1.0))
        raise(Errc::InvalidArgument, "train_fraction must lie in (0, 1)");
    if (!(protocol.threshold > 0.0) || !(protocol.threshold < 1.0))
        raise(Errc::InvalidArgument, "threshold must lie in (0, 1)");
    if (x.rows() != y.size()) raise(Errc::ShapeMismatch, "feature matrix and labels differ in length");
    if (fields.credit_line.size() != y.size() || fields.profit.size() != y.size())
        raise(Errc::ShapeMismatch, "cost fields do not match example count");

    std::vector<std::uint32_t> pos, neg;
    for (std::uint32_t i = 0; i < y.size(); ++i) {
        if (y[i] == 1)
            pos.push_back(i);
        else if (y[i] == 0)
            neg.push_back(i);
        else
            raise(Errc::InvalidArgument, "labels must be 0 or 1 for the experiment");
    }
    if (pos.empty() || neg.empty()) raise(Errc::SingleClassLabels, "experiment labels are single-class");

    ExperimentResult result;
    result.params = params;
    result.protocol = protocol;

    for (std::size_t run = 0; run < protocol.n_runs; ++run) {
        std::vector<std::uint32_t> train, test;
        bool valid = false;
        for (std::size_t attempt = 0; attempt < 3 && !valid; ++attempt) {
            Rng rng = Rng::substream(protocol.seed,
                                     "bootstrap/run" + std::to_string(run) + "/attempt" + std::to_string(attempt));
            auto p = pos;
            auto q = neg;
            rng.shuffle(p);
            rng.shuffle(q);
            const auto np = static_cast<std::size_t>(std::lround(protocol.train_fraction * static_cast<double>(p.size())));
            const auto nq = static_cast<std::size_t>(std::lround(protocol.train_fraction * static_cast<double>(q.size())));
            train.assign(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(np));
            train.insert(train.end(), q.begin(), q.begin() + static_cast<std::ptrdiff_t>(nq));
            test.assign(p.begin() + static_cast<std::ptrdiff_t>(np), p.end());
            test.insert(test.end(), q.begin() + static_cast<std::ptrdiff_t>(nq), q.end());
            valid = np > 0 && nq > 0 && np < p.size() && nq < q.size();
            if (!valid) ++result.resampled_splits;
        }
        if (!valid)
            raise(Errc::SingleClassLabels, "could not produce a two-class test split in run " + std::to_string(run));
        std::sort(train.begin(), train.end());
        std::sort(test.begin(), test.end());

        GbdtParams run_params = params;
        run_params.seed = Rng::substream_seed(params.seed, "bootstrap/fit" + std::to_string(run));
        const GbdtModel model = fit_gbdt(subset_rows(x, train), subset(y, train), run_params);

        const auto scores = predict_gbdt(model, subset_rows(x, test));
        CostFields test_fields;
        test_fields.credit_line = subset(fields.credit_line, test);
        test_fields.profit = subset(fields.profit, test);
        test_fields.loss_given_default = fields.loss_given_default;
        test_fields.alt_fp_cost = fields.alt_fp_cost;
        const auto y_test = subset(y, test);

        ExperimentRun er;
        er.fixed = savings(scores, y_test, test_fields, protocol.threshold);
        er.min_cost = savings_min_cost(scores, y_test, test_fields);
        result.runs.push_back(std::move(er));
    }

    std::vector<double> aucs, costs, savs, savs_mc;
    for (const auto& r : result.runs) {
        aucs.push_back(r.fixed.auc);
        costs.push_back(r.fixed.cost);
        savs.push_back(r.fixed.savings);
        savs_mc.push_back(r.min_cost.savings);
    }
    result.auc = make_stat(aucs);
    result.cost = make_stat(costs);
    result.savings = make_stat(savs);
    result.savings_min_cost = make_stat(savs_mc);
    return result;
}

} // namespace graphscore
