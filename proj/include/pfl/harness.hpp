#pragma once

#include <map>
#include <optional>
#include <string>

#include "pfl/defenses.hpp"
#include "pfl/fl_core.hpp"

namespace pfl {

struct DataConfig {
    std::string kind = "synthetic"; // synthetic | table
    int num_classes = 4;
    int dim = 8;
    int n_per_class = 250;
    double spread = 0.06;
    std::string path;
    std::string label_column = "label";
    std::vector<std::string> feature_columns;
};

struct FederationConfig {
    int n_clients = 20;
    int n_select = 5;
    int rounds = 60;
    double dirichlet_alpha = 1.0;
    double malicious_fraction = 0.1;
    int local_epochs = 2;
    double local_lr = 0.1;
    int batch_size = 8;
};

struct EvalConfig {
    double test_fraction = 0.2;
    int personalization_epochs = 1;
    double personalization_lr = 0.1;  // 0 = reuse local_lr
    int personalization_batch = 0;    // 0 = reuse the training batch size
    ClientDefenseKind client_defense = ClientDefenseKind::None;
    int nc_opt_steps = 150;
    int nc_unlearn_epochs = 2;
};

/// Attack section as configured; the binary mask vector is materialized once
/// the feature dimension is known.
struct AttackSection {
    AttackKind kind = AttackKind::None;
    int first_round = 5;
    int target_class = 0;
    int mask_dims = 3;                 // first k coordinates, unless coords given
    std::vector<int> mask_coords;
    double poison_rate = 0.25;
    double scale_factor = 20.0;
    double pgd_radius = -1.0; // < 0 = self-calibrated
    double neurotoxin_ratio = 0.01;
    int loss_align_steps = 50;
    int grad_align_steps = 20;
    double trigger_lr = 0.1;
    double fd_eps = 1e-4;
    double trigger_init = 0.5;
};

struct ExperimentConfig {
    DataConfig data;
    std::vector<int> hidden_dims{16};
    FederationConfig federation;
    StrategyConfig strategy;
    AttackSection attack;
    DefenseConfig defense;
    EvalConfig eval;
    uint64_t seed = 1;

    void validate() const;
};

ExperimentConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ExperimentConfig& cfg); // canonical form
std::string config_hash_hex(const ExperimentConfig& cfg);

/// "section.key=value" override applied to the JSON form of a config.
ExperimentConfig apply_override(const ExperimentConfig& cfg, const std::string& key,
                                const std::string& value);

struct ClientMetrics {
    int client_id = 0;
    size_t n_train = 0;
    size_t n_test = 0;
    double acc = 0.0;
    double asr = 0.0;
    double global_acc = 0.0;
    double global_asr = 0.0;
    std::optional<double> patched_acc;
    std::optional<double> patched_asr;
    std::vector<double> nc_anomaly_index;
    std::vector<int> nc_flagged;
};

struct ExperimentReport {
    std::string config_json;
    std::string config_hash;
    std::vector<ClientMetrics> clients; // benign only
    double acc_mean = 0.0;
    double asr_mean = 0.0;
    double global_acc_mean = 0.0;
    double global_asr_mean = 0.0;
    std::optional<double> patched_acc_mean;
    std::optional<double> patched_asr_mean;
    std::vector<RoundRecord> history;
    AttackState attack_state;
    TriggerSpec eval_trigger;
    std::optional<TableScaling> scaling;
    double wall_time_seconds = 0.0;
};

double eval_acc(const std::vector<double>& params, const MlpConfig& cfg, const Dataset& test);
double eval_asr(const std::vector<double>& params, const MlpConfig& cfg, const TriggerSpec& trigger,
                const Dataset& test);

struct DistanceTable {
    std::vector<int> rounds;
    std::vector<double> mean_update_norm;    // ||delta omega_mal|| as submitted
    std::vector<double> mean_local_distance; // ||omega_mal - omega_prev|| before scaling
    double overall_update_norm = 0.0;
    double overall_local_distance = 0.0;
};

DistanceTable distance_table(const std::vector<RoundRecord>& history);

ExperimentReport run_experiment(const ExperimentConfig& cfg);

std::string report_to_json_text(const ExperimentReport& report);
std::string report_to_csv_text(const ExperimentReport& report, const ExperimentConfig& cfg);
std::string trigger_to_text(const TriggerSpec& trigger);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

} // namespace pfl
