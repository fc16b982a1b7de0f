#include "graphscore/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "graphscore/error.hpp"
#include "graphscore/rng.hpp"

namespace graphscore {

namespace {

void check_binary_labels(const std::vector<std::int8_t>& labels) {
    for (auto y : labels)
        if (y != 0 && y != 1) raise(Errc::InvalidArgument, "labels must be 0 or 1 for evaluation");
}

void check_fields(const CostFields& fields, std::size_t n) {
    if (fields.credit_line.size() != n || fields.profit.size() != n)
        raise(Errc::ShapeMismatch, "cost fields do not match example count");
    if (!(fields.loss_given_default > 0.0) || fields.loss_given_default > 1.0)
        raise(Errc::InvalidArgument, "loss_given_default must lie in (0, 1]");
    if (!(fields.alt_fp_cost >= 0.0))
        raise(Errc::InvalidArgument, "alt_fp_cost must be non-negative");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(fields.credit_line[i] > 0.0) || !std::isfinite(fields.credit_line[i]))
            raise(Errc::InvalidArgument, "credit line must be positive and finite");
        if (!(fields.profit[i] >= 0.0) || !std::isfinite(fields.profit[i]))
            raise(Errc::InvalidArgument, "profit must be non-negative and finite");
    }
}

} // namespace

double auc(const std::vector<double>& scores, const std::vector<std::int8_t>& labels) {
    if (scores.size() != labels.size())
        raise(Errc::ShapeMismatch, "scores and labels differ in length");
    check_binary_labels(labels);
    const std::size_t n = scores.size();
    const std::size_t n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::int8_t{1}));
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        raise(Errc::SingleClassLabels, "AUC needs both classes present");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // midranks: equal scores share the average of their rank range
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j); // ranks are 1-based
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += midrank;
        i = j;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double total_cost(const std::vector<std::int8_t>& predicted, const std::vector<std::int8_t>& labels,
                  const CostFields& fields) {
    if (predicted.size() != labels.size())
        raise(Errc::ShapeMismatch, "predictions and labels differ in length");
    check_binary_labels(labels);
    check_fields(fields, labels.size());
    double cost = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int c = predicted[i];
        if (c != 0 && c != 1) raise(Errc::InvalidArgument, "predicted class must be 0 or 1");
        const int y = labels[i];
        cost += (1 - c) * y * fields.credit_line[i] * fields.loss_given_default;
        cost += (1 - y) * c * (fields.profit[i] + fields.alt_fp_cost);
    }
    return cost;
}

namespace {

MetricReport evaluate_at(const std::vector<double>& scores, const std::vector<std::int8_t>& labels,
                         const CostFields& fields, double threshold) {
    std::vector<std::int8_t> hard(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) hard[i] = scores[i] >= threshold ? 1 : 0;

    const std::vector<std::int8_t> all0(labels.size(), 0), all1(labels.size(), 1);
    const double cost_all0 = total_cost(all0, labels, fields);
    const double cost_all1 = total_cost(all1, labels, fields);
    const double cost_l = std::min(cost_all0, cost_all1);
    if (cost_l <= 0.0)
        raise(Errc::DegenerateCost, "costless-class baseline is zero; savings undefined");

    MetricReport report;
    report.auc = auc(scores, labels);
    report.cost = total_cost(hard, labels, fields);
    report.costless_cost = cost_l;
    report.savings = (cost_l - report.cost) / cost_l;
    report.threshold = threshold;
    report.n_examples = labels.size();
    report.n_positive = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::int8_t{1}));
    report.loss_given_default = fields.loss_given_default;
    report.alt_fp_cost = fields.alt_fp_cost;
    return report;
}

} // namespace

MetricReport savings(const std::vector<double>& scores, const std::vector<std::int8_t>& labels,
                     const CostFields& fields, double threshold) {
    if (!(threshold > 0.0) || !(threshold < 1.0))
        raise(Errc::InvalidArgument, "threshold must lie in (0, 1)");
    return evaluate_at(scores, labels, fields, threshold);
}

MetricReport savings_min_cost(const std::vector<double>& scores, const std::vector<std::int8_t>& labels,
                              const CostFields& fields) {
    if (scores.empty()) raise(Errc::InvalidArgument, "no examples to evaluate");
    if (scores.size() != labels.size())
        raise(Errc::ShapeMismatch, "scores and labels differ in length");
    check_binary_labels(labels);
    check_fields(fields, labels.size());
    const std::size_t n = scores.size();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double cost = 0.0; // start from predicting all 0: every defaulter is missed
    for (std::size_t i = 0; i < n; ++i)
        if (labels[i] == 1) cost += fields.credit_line[i] * fields.loss_given_default;

    double best_cost = cost;
    double best_threshold = std::nextafter(scores[order[0]], std::numeric_limits<double>::infinity());

    // Sweep thresholds downward; at threshold s every row with score >= s
    // flips to predicted defaulter. Strict improvement keeps the highest
    // cost-minimizing threshold.
    std::size_t k = 0;
    while (k < n) {
        const double s = scores[order[k]];
        while (k < n && scores[order[k]] == s) {
            const std::size_t i = order[k];
            if (labels[i] == 1)
                cost -= fields.credit_line[i] * fields.loss_given_default;
            else
                cost += fields.profit[i] + fields.alt_fp_cost;
            ++k;
        }
        if (cost < best_cost) {
            best_cost = cost;
            best_threshold = s;
        }
    }
    return evaluate_at(scores, labels, fields, best_threshold);
}

std::string to_json_string(const MetricReport& report, int indent) {
    nlohmann::json j{
        {"auc", report.auc},
        {"cost", report.cost},
        {"costless_cost", report.costless_cost},
        {"savings", report.savings},
        {"threshold", report.threshold},
        {"n_examples", report.n_examples},
        {"n_positive", report.n_positive},
        {"cost_params", {{"loss_given_default", report.loss_given_default}, {"alt_fp_cost", report.alt_fp_cost}}},
    };
    return j.dump(indent);
}

std::vector<FeatureImportance> permutation_importance(const ScoreFn& predict, const FeatureMatrix& x,
                                                      const std::vector<std::int8_t>& labels,
                                                      std::size_t n_repeats, std::uint64_t seed,
                                                      const MetricFn& metric) {
    if (!predict) raise(Errc::InvalidArgument, "predict function is empty");
    if (x.rows() != labels.size())
        raise(Errc::ShapeMismatch, "feature matrix and labels differ in length");
    if (n_repeats == 0) raise(Errc::InvalidArgument, "n_repeats must be positive");
    const MetricFn eval = metric ? metric : MetricFn(&auc);

    const double baseline = eval(predict(x), labels);

    std::vector<FeatureImportance> result(x.n_cols());
    FeatureMatrix shuffled = x;
    for (std::size_t c = 0; c < x.n_cols(); ++c) {
        double drop_sum = 0.0;
        for (std::size_t rep = 0; rep < n_repeats; ++rep) {
            Rng rng = Rng::substream(seed, "perm/" + x.names[c] + "/" + std::to_string(rep));
            shuffled.cols[c] = x.cols[c];
            rng.shuffle(shuffled.cols[c]);
            drop_sum += baseline - eval(predict(shuffled), labels);
        }
        shuffled.cols[c] = x.cols[c];
        result[c] = {x.names[c], drop_sum / static_cast<double>(n_repeats)};
    }
    std::stable_sort(result.begin(), result.end(),
                     [](const FeatureImportance& a, const FeatureImportance& b) { return a.importance > b.importance; });
    return result;
}

} // namespace graphscore
