#pragma once

#include "pfl/attacks.hpp"
#include "pfl/defenses.hpp"
#include "pfl/fl_types.hpp"

namespace pfl {

struct DefenseConfig {
    DefenseKind kind = DefenseKind::None;
    int krum_m = 1;
    int krum_k = 0; // 0 = n - krum_m
    int trim_beta = 1;
    double dnc_filter_frac = 0.1;
    int dnc_subsample_dim = 2000;
    int dnc_iters = 1;
    double flame_noise = 0.001;
};

/// Uniform without replacement, deterministic in (seed, round), ascending.
std::vector<int> sample_clients(int n_total, int n_select, int round, uint64_t seed);

/// Weighted mean with the declared weights normalized to sum 1.
std::vector<double> fedavg_aggregate(const std::vector<UpdateRecord>& updates);

struct TrainingEnv {
    MlpConfig model;
    StrategyConfig strategy;
    AttackConfig attack;
    DefenseConfig defense;
    RoundKnobs round;
    int n_clients = 0;
    int n_select = 0;
    int rounds = 0;
    uint64_t seed = 0;
};

struct EngineState {
    std::vector<double> global;
    StrategyServerState server;
    std::vector<double> prev_global_update;
    AttackState attack;
};

RoundRecord run_round(EngineState& state, std::vector<ClientState>& clients, int t,
                      const TrainingEnv& env);

struct TrainingResult {
    std::vector<double> global;
    std::vector<RoundRecord> history;
    AttackState attack_state;
    StrategyServerState server;
};

/// T rounds from a fresh seed-deterministic global model. Clients keep their
/// strategy state across rounds and leave with it for personalization.
TrainingResult run_training(std::vector<ClientState>& clients, const TrainingEnv& env);

} // namespace pfl
