#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graphscore/config.hpp"
#include "graphscore/gbdt.hpp"
#include "graphscore/metrics.hpp"

namespace graphscore {

// One row of the tabular grid: the base columns plus the named graph blocks.
struct VariantOutcome {
    std::string name;                // "base", "p2p", ..., "all"
    std::vector<std::string> blocks; // relation kinds whose 11-column blocks are included
    std::size_t n_columns = 0;
    bool ok = false;
    std::string error;
    ExperimentResult result; // valid only when ok
};

struct GnnRunOutcome {
    MetricReport fixed;    // test-mask metrics at threshold 0.5
    MetricReport min_cost; // test-mask metrics at the cost-minimizing threshold
    double final_loss = 0.0;
    double final_train_auc = 0.0;
};

struct GnnOutcome {
    std::string name; // architecture: "gcn", "sage", "gat", "tagcn"
    bool ok = false;
    std::string error;
    std::vector<GnnRunOutcome> runs;
    Stat auc;
    Stat cost;
    Stat savings;
    Stat savings_min_cost;
    std::size_t resampled_splits = 0;
};

struct PipelineResult {
    std::uint64_t seed = 0;
    std::uint64_t hash = 0; // config hash
    std::vector<VariantOutcome> tabular;
    std::vector<GnnOutcome> gnn;

    bool partial_failure() const;
};

// Stages persist everything under out_dir and read inputs back from there,
// so each is independently re-runnable:
//   dataset/                    gen
//   features/features_<kind>.csv   features
//   models/, tabular_results.json, importance.csv   train-gbdt
//   models/, gnn_results.json   train-gnn
//   eval.json                   eval
//   report.json, report.csv, manifest.json   report
// Every stage appends JSON lines to logs/run.jsonl.
void run_gen(const ExperimentConfig& cfg, const std::string& out_dir);
void run_features(const ExperimentConfig& cfg, const std::string& out_dir);
void run_train_gbdt(const ExperimentConfig& cfg, const std::string& out_dir, bool deterministic);
void run_train_gnn(const ExperimentConfig& cfg, const std::string& out_dir, bool deterministic);
void run_eval(const ExperimentConfig& cfg, const std::string& out_dir);

// Re-renders report.json, report.csv and manifest.json from the persisted
// stage results without recomputing anything.
PipelineResult run_report(const ExperimentConfig& cfg, const std::string& out_dir);

// The full grid: gen, features, tabular grid, GNN grid, eval, report.
// Deterministic mode forces sequential variant execution; results are
// identical either way because every variant draws from its own substream.
PipelineResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, bool deterministic);

} // namespace graphscore
