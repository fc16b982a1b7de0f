#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "graphscore/datagen.hpp"
#include "graphscore/gbdt.hpp"
#include "graphscore/gnn.hpp"

namespace graphscore {

// GNN grid settings shared by every architecture row.
struct GnnGridConfig {
    std::vector<GnnArchType> archs = {GnnArchType::GCN, GnnArchType::GraphSage, GnnArchType::GAT,
                                      GnnArchType::TAGCN};
    std::size_t hidden = 16;
    double learning_rate = 0.02;
    std::size_t epochs = 200;
    double momentum = 0.0;
    std::size_t n_runs = 5;
    double train_fraction = 0.7;
};

struct ExperimentConfig {
    std::uint64_t seed = 0; // mandatory in the file
    GenConfig users;
    std::vector<RelationSpec> relations; // distinct kinds, at most one of each
    GbdtParams gbdt;
    BootstrapProtocol bootstrap;
    GnnGridConfig gnn;
    double loss_given_default = 0.75;
    // unset means "resolve to median(r_i) of the generated population"
    std::optional<double> alt_fp_cost;
    std::string out_dir; // optional; the CLI --out flag overrides
};

// Strict parse: unknown keys anywhere in the tree are ConfigInvalid errors
// naming the offending key path; missing required blocks (`seed`, `users`,
// `relations`) are ConfigInvalid errors naming the block.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

// Canonical dump of the semantically meaningful fields (out_dir excluded),
// keys sorted, fixed float formatting. Equal configs dump identically.
std::string canonical_config_json(const ExperimentConfig& cfg);

// FNV-1a over the canonical dump.
std::uint64_t config_hash(const ExperimentConfig& cfg);

} // namespace graphscore
