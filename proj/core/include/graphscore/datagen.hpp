#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "graphscore/graph.hpp"
#include "graphscore/table.hpp"

namespace graphscore {

// Synthetic population with planted label signal. Stands in for the
// proprietary dataset so every downstream claim stays testable.

enum class RelationKind : std::uint8_t { P2P, CC, DV, BIN, GEO };

const char* to_string(RelationKind k);
std::optional<RelationKind> relation_kind_from_string(std::string_view s);
NodeKind entity_kind(RelationKind k); // User for P2P, CreditCard for CC, ...

struct UserTable {
    std::vector<std::string> user_keys;
    std::vector<std::int8_t> labels; // 1 = default, 0 = good payer, -1 = unlabeled
    std::vector<double> credit_line; // Cl_i, currency units
    std::vector<double> profit;      // r_i, currency units
    FeatureMatrix features;          // base behavioral columns f0..f{k-1}

    std::size_t n_users() const { return user_keys.size(); }
    bool labeled(std::size_t i) const { return labels[i] >= 0; }
    std::size_t n_labeled() const;
};

// The first four base columns are the neighbor-average source variables:
//   f0  rate of orders canceled due to payment error, in [0,1]
//   f1  rate of orders paid with credit card, in [0,1]
//   f2  maximum credit-card score
//   f3  prime-subscription flag, {0,1}
inline constexpr std::array<const char*, 4> kNeighborSourceColumns = {"f0", "f1", "f2", "f3"};

struct GenConfig {
    std::size_t n_users = 10000;
    double default_rate = 0.129;
    std::size_t n_features = 149;
    double labeled_fraction = 1.0;
    // label signal: a latent logistic score over `signal_columns` randomly
    // chosen plain columns, realized as class-conditional mean shifts
    std::size_t signal_columns = 20;
    double signal_strength = 0.10;
    // Cl_i ~ LogNormal, r_i = profit_fraction * Cl_i
    double credit_line_log_mean = 6.9; // exp(6.9) ~ 992 currency units
    double credit_line_log_sigma = 0.8;
    double profit_fraction = 0.1;
};

UserTable generate_users(const GenConfig& cfg, std::uint64_t seed);

struct RelationSpec {
    RelationKind kind = RelationKind::P2P;
    double mean_degree = 5.0;   // P2P: mean total degree; bipartite: mean user degree
    std::size_t entities = 0;   // bipartite kinds only
    double homophily = 0.0;     // h in [0,1]
    bool directed = false;

    GraphSpec graph_spec() const;
};

// P2P: degree-targeted random digraph; an edge keeps label-independent
// endpoints with probability 1-h and is constrained to same-label endpoints
// with probability h. Bipartite kinds: entities carry a latent label
// affinity; users attach to affinity-matching entities with probability
// boosted the same way. Unlabeled users always draw uniformly.
std::vector<EdgeRecord> generate_relation_edges(const UserTable& users, const RelationSpec& spec,
                                                std::uint64_t seed);

struct Dataset {
    UserTable users;
    std::vector<std::pair<RelationSpec, std::vector<EdgeRecord>>> relations;
    std::uint64_t seed = 0;
};

// Directory layout: users.csv (header user,y,cl,r,f0..f{k-1}), one
// edges_<kind>.csv per relation, manifest.json (seeds, config echo, format
// version). save/load round-trip is the identity, byte-equal values included.
void save_dataset(const Dataset& ds, const GenConfig& cfg, const std::string& dir);
Dataset load_dataset(const std::string& dir);

} // namespace graphscore
