#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pfl/data.hpp"
#include "pfl/mlp.hpp"

namespace pfl {

enum class StrategyKind { FedAvgFT, FedProxFT, Scaffold, PerFedAvgFO, Ditto, FedRep, FedALA };
enum class AttackKind { None, Sybil, ModelRe, Pgd, Neurotoxin, PFedBA };
enum class DefenseKind { None, MultiKrum, TrimmedMean, Dnc, FlameLite };
enum class ClientDefenseKind { None, NcLite };

std::string to_string(StrategyKind k);
std::string to_string(AttackKind k);
std::string to_string(DefenseKind k);
std::string to_string(ClientDefenseKind k);

struct StrategyConfig {
    StrategyKind kind = StrategyKind::FedAvgFT;
    double prox_mu = 0.01;        // FedProx regularization strength
    double meta_inner_lr = 0.05;  // Per-FedAvg(FO) alpha
    double meta_outer_lr = 0.1;   // Per-FedAvg(FO) beta
    double ditto_lambda = 0.1;
    int fedrep_head_layer = -1;   // -1 = last layer
    int fedala_adapt_steps = 5;
    double fedala_lr = 0.1;
};

/// Local-training knobs for one round, plus the hooks attacks thread into
/// the inner SGD loop (coordinate freezing, post-epoch projection).
struct RoundKnobs {
    int local_epochs = 2;
    double local_lr = 0.1;
    int batch_size = 8;
    const std::vector<uint8_t>* coord_trainable = nullptr;
    std::function<void(std::vector<double>&)> after_epoch;
};

enum class Role { Benign, Malicious };

struct ClientState {
    int id = 0;
    Role role = Role::Benign;
    Dataset train;      // clean training split (malicious: D_nor)
    Dataset poison_src; // malicious only: clean originals of the examples to poison
    Dataset test;       // held-out clean split
    double weight = 1.0;
    uint64_t seed = 0;

    // strategy-private state; empty vectors mean "not initialized yet"
    std::vector<double> scaffold_ci;
    std::vector<double> ditto_v;
    std::vector<double> fedrep_params;     // full vector, only head coords meaningful
    std::vector<double> fedala_prev_local;
    std::vector<double> fedala_w;          // full vector, only final-layer coords used

    size_t data_size() const { return train.size() + poison_src.size(); }
};

struct UpdateRecord {
    int client_id = 0;
    std::vector<double> update; // omega_i^t - omega^{t-1}
    double weight = 1.0;
};

/// What a strategy step hands back to the engine; SCAFFOLD also reports its
/// control-variate change so the server variate can move at the barrier.
struct LocalStepResult {
    UpdateRecord update;
    std::vector<double> scaffold_cv_delta;
    double local_model_distance = 0.0; // ||omega_local - omega_prev|| before any scaling
};

struct StrategyServerState {
    std::vector<double> scaffold_c; // empty until first scaffold round
};

struct RoundRecord {
    int round = 0;
    std::vector<int> selected;
    std::vector<int> malicious_selected;
    std::vector<int> update_client_ids;
    std::vector<double> update_norms;
    std::vector<double> malicious_local_distances;
    std::vector<int> kept_ids;         // client ids surviving the defense
    int trim_beta = 0;
    double flame_sigma = 0.0;
    bool flame_fallback = false;
    double aggregate_norm = 0.0;
    uint64_t global_checksum = 0;
};

// 1 on coordinates belonging to layers >= head_layer (-1 = last layer only).
std::vector<uint8_t> layer_coord_mask(const MlpConfig& cfg, int head_layer);

} // namespace pfl
