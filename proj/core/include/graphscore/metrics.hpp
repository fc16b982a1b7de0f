#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "graphscore/table.hpp"

namespace graphscore {

// Example-dependent cost model: a missed defaulter costs Cl_i * L_gd, a
// declined good payer costs r_i + C_fp_alt, correct decisions cost nothing.
struct CostFields {
    std::vector<double> credit_line; // Cl_i, currency
    std::vector<double> profit;      // r_i, currency
    double loss_given_default = 0.75;
    double alt_fp_cost = 0.0; // C^a_FP, currency
};

// Mann-Whitney AUC with midrank tie handling. Positive class = default (1).
double auc(const std::vector<double>& scores, const std::vector<std::int8_t>& labels);

// Total example-dependent cost of hard predictions (1 = predicted defaulter).
double total_cost(const std::vector<std::int8_t>& predicted, const std::vector<std::int8_t>& labels,
                  const CostFields& fields);

struct MetricReport {
    double auc = 0.0;
    double cost = 0.0;
    double costless_cost = 0.0; // Cost_l, the cheaper constant prediction
    double savings = 0.0;       // (Cost_l - cost) / Cost_l
    double threshold = 0.5;     // predicted defaulter iff score >= threshold
    std::size_t n_examples = 0;
    std::size_t n_positive = 0;
    // cost-parameter echo
    double loss_given_default = 0.0;
    double alt_fp_cost = 0.0;
};

// Full evaluation at a fixed threshold. Cost_l is the cheaper of the two
// constant predictions; Cost_l = 0 is rejected as a degenerate population.
MetricReport savings(const std::vector<double>& scores, const std::vector<std::int8_t>& labels,
                     const CostFields& fields, double threshold = 0.5);

// Scans thresholds over the unique score values (plus the reject-none
// threshold above the maximum) and returns the evaluation at the
// cost-minimizing one; ties prefer the higher threshold.
MetricReport savings_min_cost(const std::vector<double>& scores, const std::vector<std::int8_t>& labels,
                              const CostFields& fields);

std::string to_json_string(const MetricReport& report, int indent = 2);

struct FeatureImportance {
    std::string name;
    double importance = 0.0; // mean metric drop under within-column shuffles
};

using ScoreFn = std::function<std::vector<double>(const FeatureMatrix&)>;
using MetricFn = std::function<double(const std::vector<double>&, const std::vector<std::int8_t>&)>;

// Permutation importance: mean drop of `metric` (default AUC) over n_repeats
// independent shuffles of each column. Shuffles draw from substreams keyed by
// column name and repeat index, so rankings are seed-stable regardless of
// evaluation order. Result is sorted by importance, descending; ties keep
// column order.
std::vector<FeatureImportance> permutation_importance(const ScoreFn& predict, const FeatureMatrix& x,
                                                      const std::vector<std::int8_t>& labels,
                                                      std::size_t n_repeats, std::uint64_t seed,
                                                      const MetricFn& metric = {});

} // namespace graphscore
