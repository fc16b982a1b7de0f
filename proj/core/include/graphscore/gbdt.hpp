#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graphscore/metrics.hpp"
#include "graphscore/table.hpp"

namespace graphscore {

struct GbdtParams {
    std::size_t n_trees = 200;
    double learning_rate = 0.1;
    std::size_t max_depth = 4;
    double min_child_weight = 1.0; // minimum hessian sum per child
    double l2_reg = 1.0;           // lambda
    double gamma = 0.0;            // split gain threshold
    double subsample = 0.8;        // per-tree row sampling fraction
    std::uint64_t seed = 0;
};

struct GbdtNode {
    std::int32_t feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    bool missing_left = true;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double leaf = 0.0; // unscaled; shrinkage applies at prediction time
};

struct GbdtTree {
    std::vector<GbdtNode> nodes; // root at index 0
};

struct GbdtModel {
    double base_score = 0.0; // log-odds of the training prior
    double learning_rate = 0.1;
    std::vector<std::string> feature_names;
    std::vector<GbdtTree> trees;
    std::vector<double> train_loss; // per-tree training logistic loss; not serialized
};

// Second-order boosting on logistic loss with exact greedy split search over
// presorted columns. NaN cells are missing values routed to the
// gain-maximizing side; infinities are rejected. Split ties break toward the
// lowest feature index, then the lowest threshold.
GbdtModel fit_gbdt(const FeatureMatrix& x, const std::vector<std::int8_t>& y, const GbdtParams& params);

// sigmoid(base + learning_rate * sum of tree outputs), columns matched to the
// training schema by name. A column the model needs but x lacks is an error
// naming that column.
std::vector<double> predict_gbdt(const GbdtModel& model, const FeatureMatrix& x);

// JSON round-trip with a mandatory schema version.
void save_gbdt(const GbdtModel& model, const std::string& path);
GbdtModel load_gbdt(const std::string& path);

struct BootstrapProtocol {
    std::size_t n_runs = 5;
    double train_fraction = 0.7;
    std::uint64_t seed = 0;
    double threshold = 0.5; // fixed-threshold mode used for the headline savings
};

struct Stat {
    double mean = 0.0;
    double stddev = 0.0; // sample standard deviation (n-1)
};

struct ExperimentRun {
    MetricReport fixed;    // evaluated at protocol.threshold
    MetricReport min_cost; // evaluated at the cost-minimizing threshold
};

struct ExperimentResult {
    std::vector<ExperimentRun> runs;
    Stat auc;
    Stat cost;
    Stat savings;          // fixed-threshold mode
    Stat savings_min_cost;
    std::size_t resampled_splits = 0; // test splits redrawn for being single-class
    GbdtParams params;
    BootstrapProtocol protocol;
};

// Repeated stratified train/test splits: fit on the train side, evaluate AUC,
// cost and savings on the held-out side. A test split missing a class is
// redrawn (counted in resampled_splits). Cost fields are given for the whole
// population and subset per run.
ExperimentResult bootstrap_experiment(const FeatureMatrix& x, const std::vector<std::int8_t>& y,
                                      const CostFields& fields, const BootstrapProtocol& protocol,
                                      const GbdtParams& params);

} // namespace graphscore
