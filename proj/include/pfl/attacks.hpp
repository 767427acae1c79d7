#pragma once

#include "pfl/fl_types.hpp"
#include "pfl/strategies.hpp"

namespace pfl {

struct AttackConfig {
    AttackKind kind = AttackKind::None;
    int first_round = 1;                // T_a
    int target_class = 0;
    std::vector<double> mask;           // binary, full feature length
    double poison_rate = 0.25;
    double scale_factor = 20.0;         // ModelRe
    double pgd_radius = -1.0;           // < 0: self-calibrated per attack round
    double neurotoxin_ratio = 0.01;     // fraction of coordinates frozen
    int loss_align_steps = 50;
    int grad_align_steps = 20;
    double trigger_lr = 0.1;
    double fd_eps = 1e-4;
    double trigger_init = 0.5;

    void validate(int feature_dim) const;
    TriggerSpec initial_trigger() const;
};

struct AttackState {
    TriggerSpec trigger;
    // per-attack-round diagnostics
    std::vector<double> loss_align_final;
    std::vector<double> grad_align_final;
    std::vector<double> trigger_change_norms;
    std::vector<double> pgd_radius_used;
    std::vector<std::vector<double>> trigger_history; // masked values per attack round
};

struct TriggerOptResult {
    TriggerSpec trigger;
    std::vector<double> objective_trace; // initial value plus one entry per step
};

/// Eq-style loss alignment: frozen model, descend the mean backdoor loss
/// over D_mal in the masked trigger coordinates; projected steps with
/// backtracking (lr halved up to 5 times, else the step is dropped).
TriggerOptResult optimize_trigger_loss_align(TriggerSpec trigger, const std::vector<double>& params,
                                             const MlpConfig& model, const Dataset& d_mal_clean,
                                             int steps, double lr);

/// Gradient alignment: mean over D_mal of || grad_w L(E(x,delta),target) -
/// grad_w L(x,y) ||_2, clean per-example gradients precomputed once; the
/// trigger direction comes from central finite differences over the masked
/// coordinates only.
TriggerOptResult optimize_trigger_grad_align(TriggerSpec trigger, const std::vector<double>& params,
                                             const MlpConfig& model, const Dataset& d_mal_clean,
                                             int steps, double lr, double fd_eps);

double grad_align_objective(const TriggerSpec& trigger, const std::vector<double>& params,
                            const MlpConfig& model, const Dataset& d_mal_clean);
double loss_align_objective(const TriggerSpec& trigger, const std::vector<double>& params,
                            const MlpConfig& model, const Dataset& d_mal_clean);

/// Everything the adversary may read: the broadcast model, the previous
/// broadcast delta, and its own clients. Benign data and updates never pass
/// through here.
struct AttackContext {
    const std::vector<double>& omega_prev;
    const std::vector<double>& prev_global_update; // may be empty
    std::vector<ClientState*> selected_malicious;
    const MlpConfig& model;
    const StrategyConfig& strategy;
    RoundKnobs round;
    const StrategyServerState& server;
    int t = 1;
};

/// Runs the configured attack for one round: optionally optimizes the shared
/// trigger, rebuilds each selected malicious client's poisoned set with the
/// current trigger, and produces their updates through the normal strategy
/// path. `d_mal_union_clean` is the clean union of all malicious clients'
/// poison-designated examples.
std::vector<LocalStepResult> attack_round(AttackState& state, AttackContext& ctx,
                                          const AttackConfig& cfg, const Dataset& d_mal_union_clean);

} // namespace pfl
