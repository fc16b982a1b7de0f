#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "graphscore/graph.hpp"

namespace graphscore {

enum class NormMode : std::uint8_t {
    GcnRenorm,     // D~^{-1/2} (A+I) D~^{-1/2}, degrees of A+I
    SymNorm,       // D^{-1/2} A D^{-1/2}
    RowStochastic, // D^{-1} A (weighted mean aggregator)
    Raw,           // A as stored
};

const char* to_string(NormMode m);

struct PropagationOperator {
    Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;
    NormMode mode = NormMode::Raw;
};

// Directed graphs are symmetrized (weights summed) before normalization.
// Zero-degree rows come out as zero rows; GcnRenorm keeps a lone self-loop
// entry of 1 on isolated nodes.
PropagationOperator normalize_adjacency(const Graph& g, NormMode mode);

enum class GnnArchType : std::uint8_t { GCN, GraphSage, GAT, TAGCN };

const char* to_string(GnnArchType t);
std::optional<GnnArchType> gnn_arch_from_string(std::string_view s);

struct GnnArch {
    GnnArchType type = GnnArchType::GCN;
    std::size_t hidden = 16;
    std::size_t out = 2;
    std::size_t tagcn_k = 2;    // polynomial filter degree
    std::size_t gat_heads = 1;  // hidden layer heads (concatenated); output is single-head
    double leaky_slope = 0.2;
};

// Per-layer forwards. `relu` selects the hidden activation; the output layer
// uses the identity.

// relu(op * x * w)
Eigen::MatrixXd gcn_forward(const Eigen::MatrixXd& w, const Eigen::MatrixXd& x,
                            const PropagationOperator& op, bool relu);

// rows of relu([x | mean_op * x] * w), each scaled to unit l2 norm when
// `l2_normalize` (zero rows stay zero). mean_op must be RowStochastic.
Eigen::MatrixXd sage_forward(const Eigen::MatrixXd& w, const Eigen::MatrixXd& x,
                             const PropagationOperator& mean_op, bool relu, bool l2_normalize);

// Single-head attention over N_i ∪ {i}: alpha = softmax_j leaky(a^T [wx_i | wx_j]),
// h_i = relu(sum_j alpha_ij w x_j). `a` stacks the source and target halves.
Eigen::MatrixXd gat_forward(const Eigen::MatrixXd& w, const Eigen::VectorXd& a, const Eigen::MatrixXd& x,
                            const PropagationOperator& raw_op, double leaky_slope, bool relu);

// relu(sum_j op^j * x * g[j]), j = 0..K with K+1 coefficient matrices; powers
// are applied by iterated sparse products, never materialized.
Eigen::MatrixXd tagcn_forward(const std::vector<Eigen::MatrixXd>& g_coeffs, const Eigen::MatrixXd& x,
                              const PropagationOperator& op, bool relu);

// Weighted cross entropy over masked nodes, normalized by the masked weight
// sum: sum_i w_{y_i} * (-log softmax(logits_i)[y_i]) / sum_i w_{y_i}.
// Every masked node must carry a label in {0, 1}.
double weighted_cross_entropy(const Eigen::MatrixXd& logits, const std::vector<std::int8_t>& labels,
                              const std::vector<double>& class_weights, const std::vector<std::uint8_t>& mask);

struct Standardization {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale; // per-column std; constant columns get 1
};

// Moments from mask rows only (leakage guard); applied to every row.
Standardization fit_standardization(const Eigen::MatrixXd& x, const std::vector<std::uint8_t>& mask);
Eigen::MatrixXd apply_standardization(const Eigen::MatrixXd& x, const Standardization& s);

struct TrainConfig {
    double learning_rate = 0.02;
    std::size_t epochs = 200;
    std::vector<double> class_weights; // empty = inverse class frequency on the train mask
    std::vector<std::uint8_t> train_mask;
    std::vector<std::uint8_t> test_mask; // held out; must be disjoint from train_mask
    std::uint64_t seed = 0;
    double momentum = 0.0; // plain gradient descent by default
};

struct GnnModel {
    GnnArch arch;
    std::vector<std::string> param_names;
    std::vector<Eigen::MatrixXd> params;
    Standardization standardization;
    std::vector<double> loss_history;
    std::uint64_t seed = 0;
};

struct TrainHistory {
    std::vector<double> loss;
    std::vector<double> train_auc;
};

struct GnnTrainResult {
    GnnModel model;
    TrainHistory history;
};

// Two-layer semi-supervised training: full-batch gradient descent on weighted
// cross entropy, gradients hand-accumulated in reverse mode through the layer
// formulas. Features are standardized internally on the train mask. Raises
// TrainingDiverged (message carries the epoch) if loss or parameters go
// non-finite.
GnnTrainResult train_gnn(const Graph& g, const Eigen::MatrixXd& x, const std::vector<std::int8_t>& y,
                         const GnnArch& arch, const TrainConfig& cfg);

// Class-1 probability per node of g.
std::vector<double> predict_gnn(const GnnModel& model, const Graph& g, const Eigen::MatrixXd& x);

// Central-difference check of every parameter gradient at the seeded init.
// Returns max |analytic - numeric| / max(|analytic|, |numeric|, 1e-4) over
// all parameter entries. Instances are capped at 20 nodes / 8 features to
// keep the O(#params) loss evaluations small.
double gradient_check(const Graph& g, const Eigen::MatrixXd& x, const std::vector<std::int8_t>& y,
                      const std::vector<std::uint8_t>& train_mask, const GnnArch& arch, std::uint64_t seed,
                      double epsilon = 1e-5);

// Checkpoint JSON round-trip with a mandatory schema version.
void save_gnn(const GnnModel& model, const std::string& path);
GnnModel load_gnn(const std::string& path);

} // namespace graphscore
