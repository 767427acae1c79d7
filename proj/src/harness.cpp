#include "pfl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "pfl/errors.hpp"
#include "pfl/rng.hpp"
#include "pfl/strategies.hpp"

namespace pfl {

using nlohmann::json;

namespace {

StrategyKind strategy_from_string(const std::string& s) {
    if (s == "fedavg_ft") return StrategyKind::FedAvgFT;
    if (s == "fedprox_ft") return StrategyKind::FedProxFT;
    if (s == "scaffold") return StrategyKind::Scaffold;
    if (s == "per_fedavg_fo") return StrategyKind::PerFedAvgFO;
    if (s == "ditto") return StrategyKind::Ditto;
    if (s == "fedrep") return StrategyKind::FedRep;
    if (s == "fedala") return StrategyKind::FedALA;
    throw ConfigError("unknown strategy kind: " + s);
}

AttackKind attack_from_string(const std::string& s) {
    if (s == "none") return AttackKind::None;
    if (s == "sybil") return AttackKind::Sybil;
    if (s == "modelre") return AttackKind::ModelRe;
    if (s == "pgd") return AttackKind::Pgd;
    if (s == "neurotoxin") return AttackKind::Neurotoxin;
    if (s == "pfedba") return AttackKind::PFedBA;
    throw ConfigError("unknown attack kind: " + s);
}

DefenseKind defense_from_string(const std::string& s) {
    if (s == "none") return DefenseKind::None;
    if (s == "multi_krum") return DefenseKind::MultiKrum;
    if (s == "trimmed_mean") return DefenseKind::TrimmedMean;
    if (s == "dnc") return DefenseKind::Dnc;
    if (s == "flame_lite") return DefenseKind::FlameLite;
    throw ConfigError("unknown defense kind: " + s);
}

ClientDefenseKind client_defense_from_string(const std::string& s) {
    if (s == "none") return ClientDefenseKind::None;
    if (s == "nc_lite") return ClientDefenseKind::NcLite;
    throw ConfigError("unknown client defense kind: " + s);
}

void require_keys(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError("unknown key '" + it.key() + "' in config section '" + section + "'");
    }
}

template <typename T>
T get_or(const json& j, const char* key, const T& fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

} // namespace

void ExperimentConfig::validate() const {
    if (data.kind != "synthetic" && data.kind != "table")
        throw ConfigError("data.kind must be 'synthetic' or 'table'");
    if (data.kind == "synthetic") {
        if (data.num_classes < 2) throw ConfigError("data.num_classes must be >= 2");
        if (data.dim < 1) throw ConfigError("data.dim must be >= 1");
        if (data.n_per_class < 1) throw ConfigError("data.n_per_class must be >= 1");
        if (data.spread <= 0.0) throw ConfigError("data.spread must be > 0");
    } else if (data.path.empty()) {
        throw ConfigError("data.path required for table data");
    }
    for (int h : hidden_dims)
        if (h < 1) throw ConfigError("model.hidden_dims entries must be >= 1");
    if (federation.n_clients < 1) throw ConfigError("federation.n_clients must be >= 1");
    if (federation.n_select < 1 || federation.n_select > federation.n_clients)
        throw ConfigError("federation.n_select must be in [1, n_clients]");
    if (federation.rounds < 0) throw ConfigError("federation.rounds must be >= 0");
    if (federation.dirichlet_alpha <= 0.0) throw ConfigError("federation.dirichlet_alpha must be > 0");
    if (federation.malicious_fraction < 0.0 || federation.malicious_fraction > 1.0)
        throw ConfigError("federation.malicious_fraction must be in [0,1]");
    if (federation.local_epochs < 0) throw ConfigError("federation.local_epochs must be >= 0");
    if (federation.local_lr < 0.0) throw ConfigError("federation.local_lr must be >= 0");
    if (federation.batch_size < 1) throw ConfigError("federation.batch_size must be >= 1");
    if (eval.test_fraction <= 0.0 || eval.test_fraction >= 1.0)
        throw ConfigError("eval.test_fraction must be in (0,1)");
    if (eval.personalization_epochs < 0) throw ConfigError("eval.personalization_epochs must be >= 0");
    if (attack.kind != AttackKind::None) {
        if (attack.first_round < 1) throw ConfigError("attack.first_round must be >= 1");
        if (attack.poison_rate < 0.0 || attack.poison_rate > 1.0)
            throw ConfigError("attack.poison_rate must be in [0,1]");
        if (attack.scale_factor <= 0.0) throw ConfigError("attack.scale_factor must be > 0");
        if (attack.neurotoxin_ratio <= 0.0 || attack.neurotoxin_ratio >= 1.0)
            throw ConfigError("attack.neurotoxin_ratio must be in (0,1)");
        if (attack.mask_coords.empty() && attack.mask_dims < 1)
            throw ConfigError("attack.mask_dims must be >= 1 when no mask_coords are given");
    }
}

ExperimentConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    require_keys(j, "<root>", {"data", "model", "federation", "strategy", "attack", "defense", "eval", "seed"});

    ExperimentConfig c;
    if (j.contains("data")) {
        const json& d = j["data"];
        require_keys(d, "data", {"kind", "num_classes", "dim", "n_per_class", "spread", "path",
                                 "label_column", "feature_columns"});
        c.data.kind = get_or<std::string>(d, "kind", c.data.kind);
        c.data.num_classes = get_or<int>(d, "num_classes", c.data.num_classes);
        c.data.dim = get_or<int>(d, "dim", c.data.dim);
        c.data.n_per_class = get_or<int>(d, "n_per_class", c.data.n_per_class);
        c.data.spread = get_or<double>(d, "spread", c.data.spread);
        c.data.path = get_or<std::string>(d, "path", c.data.path);
        c.data.label_column = get_or<std::string>(d, "label_column", c.data.label_column);
        c.data.feature_columns = get_or<std::vector<std::string>>(d, "feature_columns", c.data.feature_columns);
    }
    if (j.contains("model")) {
        const json& m = j["model"];
        require_keys(m, "model", {"hidden_dims"});
        c.hidden_dims = get_or<std::vector<int>>(m, "hidden_dims", c.hidden_dims);
    }
    if (j.contains("federation")) {
        const json& f = j["federation"];
        require_keys(f, "federation", {"n_clients", "n_select", "rounds", "dirichlet_alpha",
                                       "malicious_fraction", "local_epochs", "local_lr", "batch_size"});
        c.federation.n_clients = get_or<int>(f, "n_clients", c.federation.n_clients);
        c.federation.n_select = get_or<int>(f, "n_select", c.federation.n_select);
        c.federation.rounds = get_or<int>(f, "rounds", c.federation.rounds);
        c.federation.dirichlet_alpha = get_or<double>(f, "dirichlet_alpha", c.federation.dirichlet_alpha);
        c.federation.malicious_fraction = get_or<double>(f, "malicious_fraction", c.federation.malicious_fraction);
        c.federation.local_epochs = get_or<int>(f, "local_epochs", c.federation.local_epochs);
        c.federation.local_lr = get_or<double>(f, "local_lr", c.federation.local_lr);
        c.federation.batch_size = get_or<int>(f, "batch_size", c.federation.batch_size);
    }
    if (j.contains("strategy")) {
        const json& s = j["strategy"];
        require_keys(s, "strategy", {"kind", "prox_mu", "meta_inner_lr", "meta_outer_lr", "ditto_lambda",
                                     "fedrep_head_layer", "fedala_adapt_steps", "fedala_lr"});
        c.strategy.kind = strategy_from_string(get_or<std::string>(s, "kind", "fedavg_ft"));
        c.strategy.prox_mu = get_or<double>(s, "prox_mu", c.strategy.prox_mu);
        c.strategy.meta_inner_lr = get_or<double>(s, "meta_inner_lr", c.strategy.meta_inner_lr);
        c.strategy.meta_outer_lr = get_or<double>(s, "meta_outer_lr", c.strategy.meta_outer_lr);
        c.strategy.ditto_lambda = get_or<double>(s, "ditto_lambda", c.strategy.ditto_lambda);
        c.strategy.fedrep_head_layer = get_or<int>(s, "fedrep_head_layer", c.strategy.fedrep_head_layer);
        c.strategy.fedala_adapt_steps = get_or<int>(s, "fedala_adapt_steps", c.strategy.fedala_adapt_steps);
        c.strategy.fedala_lr = get_or<double>(s, "fedala_lr", c.strategy.fedala_lr);
    }
    if (j.contains("attack")) {
        const json& a = j["attack"];
        require_keys(a, "attack", {"kind", "first_round", "target_class", "mask_dims", "mask_coords",
                                   "poison_rate", "scale_factor", "pgd_radius", "neurotoxin_ratio",
                                   "loss_align_steps", "grad_align_steps", "trigger_lr", "fd_eps",
                                   "trigger_init"});
        c.attack.kind = attack_from_string(get_or<std::string>(a, "kind", "none"));
        c.attack.first_round = get_or<int>(a, "first_round", c.attack.first_round);
        c.attack.target_class = get_or<int>(a, "target_class", c.attack.target_class);
        c.attack.mask_dims = get_or<int>(a, "mask_dims", c.attack.mask_dims);
        c.attack.mask_coords = get_or<std::vector<int>>(a, "mask_coords", c.attack.mask_coords);
        c.attack.poison_rate = get_or<double>(a, "poison_rate", c.attack.poison_rate);
        c.attack.scale_factor = get_or<double>(a, "scale_factor", c.attack.scale_factor);
        c.attack.pgd_radius = get_or<double>(a, "pgd_radius", c.attack.pgd_radius);
        c.attack.neurotoxin_ratio = get_or<double>(a, "neurotoxin_ratio", c.attack.neurotoxin_ratio);
        c.attack.loss_align_steps = get_or<int>(a, "loss_align_steps", c.attack.loss_align_steps);
        c.attack.grad_align_steps = get_or<int>(a, "grad_align_steps", c.attack.grad_align_steps);
        c.attack.trigger_lr = get_or<double>(a, "trigger_lr", c.attack.trigger_lr);
        c.attack.fd_eps = get_or<double>(a, "fd_eps", c.attack.fd_eps);
        c.attack.trigger_init = get_or<double>(a, "trigger_init", c.attack.trigger_init);
    }
    if (j.contains("defense")) {
        const json& d = j["defense"];
        require_keys(d, "defense", {"kind", "krum_m", "krum_k", "trim_beta", "dnc_filter_frac",
                                    "dnc_subsample_dim", "dnc_iters", "flame_noise"});
        c.defense.kind = defense_from_string(get_or<std::string>(d, "kind", "none"));
        c.defense.krum_m = get_or<int>(d, "krum_m", c.defense.krum_m);
        c.defense.krum_k = get_or<int>(d, "krum_k", c.defense.krum_k);
        c.defense.trim_beta = get_or<int>(d, "trim_beta", c.defense.trim_beta);
        c.defense.dnc_filter_frac = get_or<double>(d, "dnc_filter_frac", c.defense.dnc_filter_frac);
        c.defense.dnc_subsample_dim = get_or<int>(d, "dnc_subsample_dim", c.defense.dnc_subsample_dim);
        c.defense.dnc_iters = get_or<int>(d, "dnc_iters", c.defense.dnc_iters);
        c.defense.flame_noise = get_or<double>(d, "flame_noise", c.defense.flame_noise);
    }
    if (j.contains("eval")) {
        const json& e = j["eval"];
        require_keys(e, "eval", {"test_fraction", "personalization_epochs", "personalization_lr",
                                 "personalization_batch", "client_defense", "nc_opt_steps",
                                 "nc_unlearn_epochs"});
        c.eval.test_fraction = get_or<double>(e, "test_fraction", c.eval.test_fraction);
        c.eval.personalization_epochs = get_or<int>(e, "personalization_epochs", c.eval.personalization_epochs);
        c.eval.personalization_lr = get_or<double>(e, "personalization_lr", c.eval.personalization_lr);
        c.eval.personalization_batch = get_or<int>(e, "personalization_batch", c.eval.personalization_batch);
        c.eval.client_defense = client_defense_from_string(get_or<std::string>(e, "client_defense", "none"));
        c.eval.nc_opt_steps = get_or<int>(e, "nc_opt_steps", c.eval.nc_opt_steps);
        c.eval.nc_unlearn_epochs = get_or<int>(e, "nc_unlearn_epochs", c.eval.nc_unlearn_epochs);
    }
    c.seed = get_or<uint64_t>(j, "seed", c.seed);
    c.validate();
    return c;
}

std::string config_to_json_text(const ExperimentConfig& c) {
    json j;
    j["data"] = {{"kind", c.data.kind},
                 {"num_classes", c.data.num_classes},
                 {"dim", c.data.dim},
                 {"n_per_class", c.data.n_per_class},
                 {"spread", c.data.spread},
                 {"path", c.data.path},
                 {"label_column", c.data.label_column},
                 {"feature_columns", c.data.feature_columns}};
    j["model"] = {{"hidden_dims", c.hidden_dims}};
    j["federation"] = {{"n_clients", c.federation.n_clients},
                       {"n_select", c.federation.n_select},
                       {"rounds", c.federation.rounds},
                       {"dirichlet_alpha", c.federation.dirichlet_alpha},
                       {"malicious_fraction", c.federation.malicious_fraction},
                       {"local_epochs", c.federation.local_epochs},
                       {"local_lr", c.federation.local_lr},
                       {"batch_size", c.federation.batch_size}};
    j["strategy"] = {{"kind", to_string(c.strategy.kind)},
                     {"prox_mu", c.strategy.prox_mu},
                     {"meta_inner_lr", c.strategy.meta_inner_lr},
                     {"meta_outer_lr", c.strategy.meta_outer_lr},
                     {"ditto_lambda", c.strategy.ditto_lambda},
                     {"fedrep_head_layer", c.strategy.fedrep_head_layer},
                     {"fedala_adapt_steps", c.strategy.fedala_adapt_steps},
                     {"fedala_lr", c.strategy.fedala_lr}};
    j["attack"] = {{"kind", to_string(c.attack.kind)},
                   {"first_round", c.attack.first_round},
                   {"target_class", c.attack.target_class},
                   {"mask_dims", c.attack.mask_dims},
                   {"mask_coords", c.attack.mask_coords},
                   {"poison_rate", c.attack.poison_rate},
                   {"scale_factor", c.attack.scale_factor},
                   {"pgd_radius", c.attack.pgd_radius},
                   {"neurotoxin_ratio", c.attack.neurotoxin_ratio},
                   {"loss_align_steps", c.attack.loss_align_steps},
                   {"grad_align_steps", c.attack.grad_align_steps},
                   {"trigger_lr", c.attack.trigger_lr},
                   {"fd_eps", c.attack.fd_eps},
                   {"trigger_init", c.attack.trigger_init}};
    j["defense"] = {{"kind", to_string(c.defense.kind)},
                    {"krum_m", c.defense.krum_m},
                    {"krum_k", c.defense.krum_k},
                    {"trim_beta", c.defense.trim_beta},
                    {"dnc_filter_frac", c.defense.dnc_filter_frac},
                    {"dnc_subsample_dim", c.defense.dnc_subsample_dim},
                    {"dnc_iters", c.defense.dnc_iters},
                    {"flame_noise", c.defense.flame_noise}};
    j["eval"] = {{"test_fraction", c.eval.test_fraction},
                 {"personalization_epochs", c.eval.personalization_epochs},
                 {"personalization_lr", c.eval.personalization_lr},
                 {"personalization_batch", c.eval.personalization_batch},
                 {"client_defense", to_string(c.eval.client_defense)},
                 {"nc_opt_steps", c.eval.nc_opt_steps},
                 {"nc_unlearn_epochs", c.eval.nc_unlearn_epochs}};
    j["seed"] = c.seed;
    return j.dump(2) + "\n";
}

std::string config_hash_hex(const ExperimentConfig& cfg) {
    const std::string text = config_to_json_text(cfg);
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

ExperimentConfig apply_override(const ExperimentConfig& cfg, const std::string& key,
                                const std::string& value) {
    json j = json::parse(config_to_json_text(cfg));
    json* node = &j;
    std::string rest = key;
    size_t pos;
    while ((pos = rest.find('.')) != std::string::npos) {
        const std::string head = rest.substr(0, pos);
        if (!node->contains(head)) throw ConfigError("override: unknown section '" + head + "'");
        node = &(*node)[head];
        rest = rest.substr(pos + 1);
    }
    if (!node->contains(rest)) throw ConfigError("override: unknown key '" + key + "'");
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value; // bare strings are fine
    }
    (*node)[rest] = parsed;
    return config_from_json_text(j.dump());
}

double eval_acc(const std::vector<double>& params, const MlpConfig& cfg, const Dataset& test) {
    if (test.empty()) throw DimensionError("eval_acc: empty test set");
    size_t correct = 0;
    for (const auto& e : test.examples)
        if (predict(params, cfg, e.x) == e.y) ++correct;
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

double eval_asr(const std::vector<double>& params, const MlpConfig& cfg, const TriggerSpec& trigger,
                const Dataset& test) {
    if (test.empty()) throw DimensionError("eval_asr: empty test set");
    size_t eligible = 0, hits = 0;
    for (const auto& e : test.examples) {
        if (e.y == trigger.target) continue; // true-target examples never count
        ++eligible;
        if (predict(params, cfg, embed_trigger(e.x, trigger)) == trigger.target) ++hits;
    }
    if (eligible == 0) throw DimensionError("eval_asr: no test examples outside the target class");
    return static_cast<double>(hits) / static_cast<double>(eligible);
}

DistanceTable distance_table(const std::vector<RoundRecord>& history) {
    DistanceTable table;
    double sum_norm = 0.0, sum_dist = 0.0;
    size_t count = 0;
    for (const auto& rec : history) {
        if (rec.malicious_local_distances.empty()) continue;
        double norm = 0.0;
        size_t n_mal = rec.malicious_local_distances.size();
        // malicious update norms live in update_norms at the malicious ids
        size_t found = 0;
        for (size_t i = 0; i < rec.update_client_ids.size(); ++i) {
            for (int mid : rec.malicious_selected)
                if (rec.update_client_ids[i] == mid) {
                    norm += rec.update_norms[i];
                    ++found;
                }
        }
        if (found == 0) continue;
        double dist = std::accumulate(rec.malicious_local_distances.begin(),
                                      rec.malicious_local_distances.end(), 0.0);
        table.rounds.push_back(rec.round);
        table.mean_update_norm.push_back(norm / static_cast<double>(found));
        table.mean_local_distance.push_back(dist / static_cast<double>(n_mal));
        sum_norm += norm / static_cast<double>(found);
        sum_dist += dist / static_cast<double>(n_mal);
        ++count;
    }
    if (count > 0) {
        table.overall_update_norm = sum_norm / static_cast<double>(count);
        table.overall_local_distance = sum_dist / static_cast<double>(count);
    }
    return table;
}

namespace {

std::vector<double> build_attack_mask(const AttackSection& a, int dim) {
    std::vector<double> mask(static_cast<size_t>(dim), 0.0);
    if (!a.mask_coords.empty()) {
        for (int c : a.mask_coords) {
            if (c < 0 || c >= dim) throw ConfigError("attack.mask_coords entry out of range");
            mask[static_cast<size_t>(c)] = 1.0;
        }
    } else {
        if (a.mask_dims > dim) throw ConfigError("attack.mask_dims exceeds the feature dimension");
        for (int c = 0; c < a.mask_dims; ++c) mask[static_cast<size_t>(c)] = 1.0;
    }
    return mask;
}

AttackConfig materialize_attack(const AttackSection& a, int dim) {
    AttackConfig cfg;
    cfg.kind = a.kind;
    cfg.first_round = a.first_round;
    cfg.target_class = a.target_class;
    cfg.mask = build_attack_mask(a, dim);
    cfg.poison_rate = a.poison_rate;
    cfg.scale_factor = a.scale_factor;
    cfg.pgd_radius = a.pgd_radius;
    cfg.neurotoxin_ratio = a.neurotoxin_ratio;
    cfg.loss_align_steps = a.loss_align_steps;
    cfg.grad_align_steps = a.grad_align_steps;
    cfg.trigger_lr = a.trigger_lr;
    cfg.fd_eps = a.fd_eps;
    cfg.trigger_init = a.trigger_init;
    return cfg;
}

} // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    ExperimentReport report;
    report.config_json = config_to_json_text(cfg);
    report.config_hash = config_hash_hex(cfg);

    Dataset full;
    if (cfg.data.kind == "synthetic") {
        full = gen_synthetic(cfg.data.num_classes, cfg.data.dim, cfg.data.n_per_class,
                             cfg.data.spread, hash_seed(cfg.seed, 0x64617461));
    } else {
        TableSchema schema;
        schema.label_column = cfg.data.label_column;
        schema.feature_columns = cfg.data.feature_columns;
        auto [ds, scaling] = load_table(cfg.data.path, schema);
        full = std::move(ds);
        report.scaling = std::move(scaling);
    }

    MlpConfig model;
    model.input_dim = full.dim();
    model.hidden_dims = cfg.hidden_dims;
    model.num_classes = full.num_classes;
    model.validate();

    if (cfg.attack.target_class >= full.num_classes)
        throw ConfigError("attack.target_class out of range for this dataset");
    AttackConfig attack = materialize_attack(cfg.attack, full.dim());
    attack.validate(full.dim());
    TriggerSpec base_trigger = attack.initial_trigger();

    auto parts = dirichlet_partition(full, cfg.federation.n_clients, cfg.federation.dirichlet_alpha,
                                     hash_seed(cfg.seed, 0x70617274));

    const int n_malicious = static_cast<int>(std::llround(
        cfg.federation.malicious_fraction * static_cast<double>(cfg.federation.n_clients)));

    std::vector<ClientState> clients(static_cast<size_t>(cfg.federation.n_clients));
    for (int i = 0; i < cfg.federation.n_clients; ++i) {
        ClientState& c = clients[static_cast<size_t>(i)];
        c.id = i;
        c.role = i < n_malicious ? Role::Malicious : Role::Benign;
        c.seed = hash_seed(cfg.seed, 0x636c6e74, static_cast<uint64_t>(i));

        auto [train_idx, test_idx] = stratified_split(parts[static_cast<size_t>(i)],
                                                      cfg.eval.test_fraction, c.seed);
        Dataset train_all = subset(parts[static_cast<size_t>(i)], train_idx);
        c.test = subset(parts[static_cast<size_t>(i)], test_idx);

        if (c.role == Role::Malicious && attack.kind != AttackKind::None) {
            auto [mal_idx, nor_idx] = split_poison_indices(train_all, attack.poison_rate, c.seed);
            c.poison_src = subset(train_all, mal_idx); // clean originals, true labels
            c.train = subset(train_all, nor_idx);
        } else {
            c.train = std::move(train_all);
        }
        c.weight = static_cast<double>(c.data_size());
    }

    TrainingEnv env;
    env.model = model;
    env.strategy = cfg.strategy;
    env.attack = attack;
    env.defense = cfg.defense;
    env.round.local_epochs = cfg.federation.local_epochs;
    env.round.local_lr = cfg.federation.local_lr;
    env.round.batch_size = cfg.federation.batch_size;
    env.n_clients = cfg.federation.n_clients;
    env.n_select = cfg.federation.n_select;
    env.rounds = cfg.federation.rounds;
    env.seed = cfg.seed;

    TrainingResult training = run_training(clients, env);
    report.history = std::move(training.history);
    report.attack_state = training.attack_state;
    // fixed-trigger attacks (and no-attack baselines) evaluate with delta^0;
    // trigger-optimizing attacks use the final-round trigger
    report.eval_trigger = (attack.kind == AttackKind::PFedBA) ? training.attack_state.trigger
                                                              : base_trigger;

    const double p_lr = cfg.eval.personalization_lr > 0.0 ? cfg.eval.personalization_lr
                                                          : cfg.federation.local_lr;
    const int p_batch = cfg.eval.personalization_batch > 0 ? cfg.eval.personalization_batch
                                                           : cfg.federation.batch_size;
    double acc_sum = 0.0, asr_sum = 0.0, gacc_sum = 0.0, gasr_sum = 0.0;
    double pacc_sum = 0.0, pasr_sum = 0.0;
    size_t n_benign = 0, n_patched = 0;
    for (auto& c : clients) {
        if (c.role != Role::Benign) continue;
        std::vector<double> personal = personalize(cfg.strategy, model, training.global, c,
                                                   cfg.eval.personalization_epochs, p_lr, p_batch);
        ClientMetrics m;
        m.client_id = c.id;
        m.n_train = c.train.size();
        m.n_test = c.test.size();
        m.acc = eval_acc(personal, model, c.test);
        m.asr = eval_asr(personal, model, report.eval_trigger, c.test);
        m.global_acc = eval_acc(training.global, model, c.test);
        m.global_asr = eval_asr(training.global, model, report.eval_trigger, c.test);

        if (cfg.eval.client_defense == ClientDefenseKind::NcLite) {
            NcOptions opts;
            opts.opt_steps = cfg.eval.nc_opt_steps;
            opts.unlearn_epochs = cfg.eval.nc_unlearn_epochs;
            NcResult nc = nc_lite(personal, model, c.train, opts, hash_seed(c.seed, 0x6e63));
            m.patched_acc = eval_acc(nc.patched_model, model, c.test);
            m.patched_asr = eval_asr(nc.patched_model, model, report.eval_trigger, c.test);
            m.nc_anomaly_index = nc.anomaly_index;
            m.nc_flagged = nc.flagged;
            pacc_sum += *m.patched_acc;
            pasr_sum += *m.patched_asr;
            ++n_patched;
        }

        acc_sum += m.acc;
        asr_sum += m.asr;
        gacc_sum += m.global_acc;
        gasr_sum += m.global_asr;
        ++n_benign;
        report.clients.push_back(std::move(m));
    }
    if (n_benign == 0) throw ConfigError("experiment has no benign clients to evaluate");
    report.acc_mean = acc_sum / static_cast<double>(n_benign);
    report.asr_mean = asr_sum / static_cast<double>(n_benign);
    report.global_acc_mean = gacc_sum / static_cast<double>(n_benign);
    report.global_asr_mean = gasr_sum / static_cast<double>(n_benign);
    if (n_patched > 0) {
        report.patched_acc_mean = pacc_sum / static_cast<double>(n_patched);
        report.patched_asr_mean = pasr_sum / static_cast<double>(n_patched);
    }

    report.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

std::string report_to_json_text(const ExperimentReport& r) {
    json j;
    j["config"] = json::parse(r.config_json);
    j["config_hash"] = r.config_hash;
    j["acc_mean"] = r.acc_mean;
    j["asr_mean"] = r.asr_mean;
    j["global_acc_mean"] = r.global_acc_mean;
    j["global_asr_mean"] = r.global_asr_mean;
    if (r.patched_acc_mean) j["patched_acc_mean"] = *r.patched_acc_mean;
    if (r.patched_asr_mean) j["patched_asr_mean"] = *r.patched_asr_mean;

    json jc = json::array();
    for (const auto& m : r.clients) {
        json c = {{"client_id", m.client_id}, {"n_train", m.n_train}, {"n_test", m.n_test},
                  {"acc", m.acc},             {"asr", m.asr},
                  {"global_acc", m.global_acc}, {"global_asr", m.global_asr}};
        if (m.patched_acc) c["patched_acc"] = *m.patched_acc;
        if (m.patched_asr) c["patched_asr"] = *m.patched_asr;
        if (!m.nc_anomaly_index.empty()) c["nc_anomaly_index"] = m.nc_anomaly_index;
        if (!m.nc_flagged.empty()) c["nc_flagged"] = m.nc_flagged;
        jc.push_back(std::move(c));
    }
    j["clients"] = std::move(jc);

    json jh = json::array();
    for (const auto& rec : r.history) {
        char checksum_hex[17];
        std::snprintf(checksum_hex, sizeof(checksum_hex), "%016llx",
                      static_cast<unsigned long long>(rec.global_checksum));
        json e = {{"round", rec.round},
                  {"selected", rec.selected},
                  {"malicious_selected", rec.malicious_selected},
                  {"update_client_ids", rec.update_client_ids},
                  {"update_norms", rec.update_norms},
                  {"kept_ids", rec.kept_ids},
                  {"aggregate_norm", rec.aggregate_norm},
                  {"global_checksum", std::string(checksum_hex)}};
        if (rec.trim_beta > 0) e["trim_beta"] = rec.trim_beta;
        if (rec.flame_sigma > 0.0) e["flame_sigma"] = rec.flame_sigma;
        if (rec.flame_fallback) e["flame_fallback"] = true;
        jh.push_back(std::move(e));
    }
    j["rounds"] = std::move(jh);

    DistanceTable table = distance_table(r.history);
    j["distance_table"] = {{"rounds", table.rounds},
                           {"mean_update_norm", table.mean_update_norm},
                           {"mean_local_distance", table.mean_local_distance},
                           {"overall_update_norm", table.overall_update_norm},
                           {"overall_local_distance", table.overall_local_distance}};

    j["attack_diagnostics"] = {{"loss_align_final", r.attack_state.loss_align_final},
                               {"grad_align_final", r.attack_state.grad_align_final},
                               {"trigger_change_norms", r.attack_state.trigger_change_norms},
                               {"pgd_radius_used", r.attack_state.pgd_radius_used},
                               {"trigger_history", r.attack_state.trigger_history}};

    json jt;
    jt["target"] = r.eval_trigger.target;
    json coords = json::array();
    for (int c : r.eval_trigger.mask_coords())
        coords.push_back({{"coord", c}, {"value", r.eval_trigger.delta[static_cast<size_t>(c)]}});
    jt["values"] = std::move(coords);
    j["trigger"] = std::move(jt);

    if (r.scaling) {
        j["table_scaling"] = {{"feature_columns", r.scaling->feature_columns},
                              {"label_column", r.scaling->label_column},
                              {"col_min", r.scaling->col_min},
                              {"col_max", r.scaling->col_max},
                              {"label_names", r.scaling->label_names}};
    }
    j["wall_time_seconds"] = r.wall_time_seconds;
    return j.dump(2) + "\n";
}

namespace {

std::string fmt_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

} // namespace

std::string report_to_csv_text(const ExperimentReport& r, const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "config_hash,strategy,attack,defense,client_id,acc,asr\n";
    const std::string prefix = r.config_hash + "," + to_string(cfg.strategy.kind) + "," +
                               to_string(cfg.attack.kind) + "," + to_string(cfg.defense.kind) + ",";
    for (const auto& m : r.clients)
        out << prefix << m.client_id << "," << fmt_metric(m.acc) << "," << fmt_metric(m.asr) << "\n";
    out << prefix << "mean," << fmt_metric(r.acc_mean) << "," << fmt_metric(r.asr_mean) << "\n";
    return out.str();
}

std::string trigger_to_text(const TriggerSpec& trigger) {
    std::ostringstream out;
    out << "# Feature ID: Value (target class " << trigger.target << ")\n";
    for (int c : trigger.mask_coords()) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", trigger.delta[static_cast<size_t>(c)]);
        out << c << ": " << buf << "\n";
    }
    return out.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace pfl
