#include "pfl/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pfl/errors.hpp"
#include "pfl/rng.hpp"

namespace pfl {

std::string to_string(StrategyKind k) {
    switch (k) {
        case StrategyKind::FedAvgFT: return "fedavg_ft";
        case StrategyKind::FedProxFT: return "fedprox_ft";
        case StrategyKind::Scaffold: return "scaffold";
        case StrategyKind::PerFedAvgFO: return "per_fedavg_fo";
        case StrategyKind::Ditto: return "ditto";
        case StrategyKind::FedRep: return "fedrep";
        case StrategyKind::FedALA: return "fedala";
    }
    return "?";
}

std::string to_string(AttackKind k) {
    switch (k) {
        case AttackKind::None: return "none";
        case AttackKind::Sybil: return "sybil";
        case AttackKind::ModelRe: return "modelre";
        case AttackKind::Pgd: return "pgd";
        case AttackKind::Neurotoxin: return "neurotoxin";
        case AttackKind::PFedBA: return "pfedba";
    }
    return "?";
}

std::string to_string(DefenseKind k) {
    switch (k) {
        case DefenseKind::None: return "none";
        case DefenseKind::MultiKrum: return "multi_krum";
        case DefenseKind::TrimmedMean: return "trimmed_mean";
        case DefenseKind::Dnc: return "dnc";
        case DefenseKind::FlameLite: return "flame_lite";
    }
    return "?";
}

std::string to_string(ClientDefenseKind k) {
    return k == ClientDefenseKind::NcLite ? "nc_lite" : "none";
}

std::vector<uint8_t> layer_coord_mask(const MlpConfig& cfg, int head_layer) {
    ParamLayout layout(cfg);
    int first = head_layer;
    if (first < 0) first = static_cast<int>(layout.layers.size()) - 1;
    if (first < 0 || first >= static_cast<int>(layout.layers.size()))
        throw IndexError("head layer index out of range");
    std::vector<uint8_t> mask(layout.total, 0);
    for (size_t l = static_cast<size_t>(first); l < layout.layers.size(); ++l) {
        const auto& spec = layout.layers[l];
        const size_t nw = static_cast<size_t>(spec.in) * static_cast<size_t>(spec.out);
        std::fill(mask.begin() + static_cast<long>(spec.w_offset),
                  mask.begin() + static_cast<long>(spec.w_offset + nw), uint8_t{1});
        std::fill(mask.begin() + static_cast<long>(spec.b_offset),
                  mask.begin() + static_cast<long>(spec.b_offset + spec.out), uint8_t{1});
    }
    return mask;
}

namespace {

std::vector<uint8_t> and_masks(const std::vector<uint8_t>& a, const std::vector<uint8_t>* b) {
    if (!b) return a;
    std::vector<uint8_t> out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] && (*b)[i];
    return out;
}

std::vector<uint8_t> invert_mask(const std::vector<uint8_t>& a) {
    std::vector<uint8_t> out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] ? 0 : 1;
    return out;
}

// Blend on final-layer coordinates: w*global + (1-w)*prev, elsewhere global.
std::vector<double> ala_blend(const std::vector<double>& global, const std::vector<double>& prev,
                              const std::vector<double>& w, const std::vector<uint8_t>& final_mask) {
    std::vector<double> out = global;
    for (size_t i = 0; i < out.size(); ++i)
        if (final_mask[i]) out[i] = w[i] * global[i] + (1.0 - w[i]) * prev[i];
    return out;
}

LocalStepResult plain_update(const MlpConfig& model, const std::vector<double>& global,
                             std::vector<double> local, int client_id, double weight) {
    LocalStepResult res;
    res.update.client_id = client_id;
    res.update.weight = weight;
    res.update.update = vec_sub(local, global);
    res.local_model_distance = l2_norm(res.update.update);
    (void)model;
    return res;
}

std::vector<double> per_fedavg_fo_train(const std::vector<double>& global, const MlpConfig& model,
                                        const Dataset& data, const RoundKnobs& rk,
                                        double inner_lr, double outer_lr, uint64_t seed) {
    if (data.empty()) throw DimensionError("per_fedavg_fo: empty dataset");
    std::vector<double> theta = global;
    const size_t n = data.size();
    std::vector<size_t> order(n);
    for (int epoch = 0; epoch < rk.local_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), size_t{0});
        Rng rng(hash_seed(seed, 0x65706f63, static_cast<uint64_t>(epoch)));
        rng.shuffle(order);
        std::vector<std::vector<size_t>> batches;
        for (size_t start = 0; start < n; start += static_cast<size_t>(rk.batch_size)) {
            const size_t end = std::min(n, start + static_cast<size_t>(rk.batch_size));
            batches.emplace_back(order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(end));
        }
        // consecutive batch pairs (support A, query B); a trailing odd batch is skipped
        for (size_t k = 0; k + 1 < batches.size(); k += 2) {
            LossGrad ga = loss_and_grad(theta, model, batch_features(data, batches[k]),
                                        batch_labels(data, batches[k]));
            std::vector<double> adapted = theta;
            for (size_t i = 0; i < adapted.size(); ++i) adapted[i] -= inner_lr * ga.grad[i];
            LossGrad gb = loss_and_grad(adapted, model, batch_features(data, batches[k + 1]),
                                        batch_labels(data, batches[k + 1]));
            if (rk.coord_trainable)
                for (size_t i = 0; i < gb.grad.size(); ++i)
                    if (!(*rk.coord_trainable)[i]) gb.grad[i] = 0.0;
            for (size_t i = 0; i < theta.size(); ++i) theta[i] -= outer_lr * gb.grad[i];
        }
        if (rk.after_epoch) rk.after_epoch(theta);
    }
    return theta;
}

} // namespace

LocalStepResult local_step(const StrategyConfig& sc, const MlpConfig& model,
                           const std::vector<double>& global, ClientState& client,
                           const Dataset& train_data, const RoundKnobs& rk,
                           const StrategyServerState& server, uint64_t step_seed) {
    const double weight = static_cast<double>(client.data_size());
    SgdHooks hooks;
    hooks.trainable = rk.coord_trainable;
    hooks.after_epoch = rk.after_epoch;

    switch (sc.kind) {
        case StrategyKind::FedAvgFT: {
            auto local = sgd_train(global, model, train_data, rk.local_epochs, rk.local_lr,
                                   rk.batch_size, step_seed, hooks);
            return plain_update(model, global, std::move(local), client.id, weight);
        }
        case StrategyKind::FedProxFT: {
            hooks.prox_center = &global;
            hooks.prox_mu = sc.prox_mu;
            auto local = sgd_train(global, model, train_data, rk.local_epochs, rk.local_lr,
                                   rk.batch_size, step_seed, hooks);
            return plain_update(model, global, std::move(local), client.id, weight);
        }
        case StrategyKind::Scaffold: {
            const size_t p = global.size();
            if (client.scaffold_ci.empty()) client.scaffold_ci.assign(p, 0.0);
            std::vector<double> server_c = server.scaffold_c.empty() ? std::vector<double>(p, 0.0)
                                                                     : server.scaffold_c;
            std::vector<double> offset(p);
            for (size_t i = 0; i < p; ++i) offset[i] = server_c[i] - client.scaffold_ci[i];
            hooks.grad_offset = &offset;
            auto local = sgd_train(global, model, train_data, rk.local_epochs, rk.local_lr,
                                   rk.batch_size, step_seed, hooks);
            LocalStepResult res = plain_update(model, global, local, client.id, weight);

            // option II variate refresh: c_i+ = c_i - c + (global - local)/(K lr)
            const int steps = rk.local_epochs * num_batches(train_data.size(), rk.batch_size);
            res.scaffold_cv_delta.assign(p, 0.0);
            if (steps > 0 && rk.local_lr > 0.0) {
                const double inv = 1.0 / (static_cast<double>(steps) * rk.local_lr);
                for (size_t i = 0; i < p; ++i) {
                    double ci_new = client.scaffold_ci[i] - server_c[i] + (global[i] - local[i]) * inv;
                    res.scaffold_cv_delta[i] = ci_new - client.scaffold_ci[i];
                    client.scaffold_ci[i] = ci_new;
                }
            }
            return res;
        }
        case StrategyKind::PerFedAvgFO: {
            auto local = per_fedavg_fo_train(global, model, train_data, rk, sc.meta_inner_lr,
                                             sc.meta_outer_lr, step_seed);
            return plain_update(model, global, std::move(local), client.id, weight);
        }
        case StrategyKind::Ditto: {
            auto local = sgd_train(global, model, train_data, rk.local_epochs, rk.local_lr,
                                   rk.batch_size, step_seed, hooks);
            LocalStepResult res = plain_update(model, global, std::move(local), client.id, weight);
            // private model advances separately under a prox pull to global
            if (client.ditto_v.empty()) client.ditto_v = global;
            SgdHooks ditto_hooks;
            ditto_hooks.prox_center = &global;
            ditto_hooks.prox_mu = sc.ditto_lambda;
            ditto_hooks.trainable = rk.coord_trainable;
            client.ditto_v = sgd_train(client.ditto_v, model, train_data, rk.local_epochs, rk.local_lr,
                                       rk.batch_size, hash_seed(step_seed, 0x646974746f), ditto_hooks);
            return res;
        }
        case StrategyKind::FedRep: {
            const auto head = layer_coord_mask(model, sc.fedrep_head_layer);
            const auto encoder = invert_mask(head);
            std::vector<double> local = global;
            if (!client.fedrep_params.empty())
                for (size_t i = 0; i < local.size(); ++i)
                    if (head[i]) local[i] = client.fedrep_params[i];

            SgdHooks head_hooks = hooks;
            auto head_mask = and_masks(head, rk.coord_trainable);
            head_hooks.trainable = &head_mask;
            local = sgd_train(local, model, train_data, rk.local_epochs, rk.local_lr,
                              rk.batch_size, hash_seed(step_seed, 0x68656164), head_hooks);

            SgdHooks enc_hooks = hooks;
            auto enc_mask = and_masks(encoder, rk.coord_trainable);
            enc_hooks.trainable = &enc_mask;
            local = sgd_train(local, model, train_data, rk.local_epochs, rk.local_lr,
                              rk.batch_size, hash_seed(step_seed, 0x656e63), enc_hooks);

            client.fedrep_params = local;
            LocalStepResult res = plain_update(model, global, std::move(local), client.id, weight);
            for (size_t i = 0; i < res.update.update.size(); ++i)
                if (head[i]) res.update.update[i] = 0.0; // only the encoder aggregates
            return res;
        }
        case StrategyKind::FedALA: {
            const auto final_mask = layer_coord_mask(model, -1);
            std::vector<double> start = global;
            if (!client.fedala_prev_local.empty()) {
                if (client.fedala_w.empty()) client.fedala_w.assign(global.size(), 1.0);
                for (int step = 0; step < sc.fedala_adapt_steps; ++step) {
                    std::vector<double> blended = ala_blend(global, client.fedala_prev_local,
                                                            client.fedala_w, final_mask);
                    LossGrad lg = loss_and_grad(blended, model, train_data);
                    bool moved = false;
                    for (size_t i = 0; i < global.size(); ++i) {
                        if (!final_mask[i]) continue;
                        double gw = lg.grad[i] * (global[i] - client.fedala_prev_local[i]);
                        double nw = client.fedala_w[i] - sc.fedala_lr * gw;
                        nw = std::min(1.0, std::max(0.0, nw));
                        if (nw != client.fedala_w[i]) moved = true;
                        client.fedala_w[i] = nw;
                    }
                    if (!moved) break;
                }
                start = ala_blend(global, client.fedala_prev_local, client.fedala_w, final_mask);
            }
            auto local = sgd_train(start, model, train_data, rk.local_epochs, rk.local_lr,
                                   rk.batch_size, step_seed, hooks);
            client.fedala_prev_local = local;
            return plain_update(model, global, std::move(local), client.id, weight);
        }
    }
    throw std::logic_error("local_step: unknown strategy");
}

std::vector<double> personalize(const StrategyConfig& sc, const MlpConfig& model,
                                const std::vector<double>& global, const ClientState& client,
                                int epochs, double lr, int batch_size) {
    if (client.train.empty()) throw DimensionError("personalize: client has no clean data");
    const uint64_t seed = hash_seed(client.seed, 0x70657273);

    switch (sc.kind) {
        case StrategyKind::FedAvgFT:
        case StrategyKind::Scaffold:
        case StrategyKind::PerFedAvgFO:
            return sgd_train(global, model, client.train, epochs, lr, batch_size, seed);
        case StrategyKind::FedProxFT: {
            SgdHooks hooks;
            hooks.prox_center = &global;
            hooks.prox_mu = sc.prox_mu;
            return sgd_train(global, model, client.train, epochs, lr, batch_size, seed, hooks);
        }
        case StrategyKind::Ditto: {
            if (!client.ditto_v.empty()) return client.ditto_v;
            SgdHooks hooks;
            hooks.prox_center = &global;
            hooks.prox_mu = sc.ditto_lambda;
            return sgd_train(global, model, client.train, epochs, lr, batch_size, seed, hooks);
        }
        case StrategyKind::FedRep: {
            const auto head = layer_coord_mask(model, sc.fedrep_head_layer);
            std::vector<double> params = global;
            if (!client.fedrep_params.empty())
                for (size_t i = 0; i < params.size(); ++i)
                    if (head[i]) params[i] = client.fedrep_params[i];
            SgdHooks hooks;
            hooks.trainable = &head;
            return sgd_train(params, model, client.train, epochs, lr, batch_size, seed, hooks);
        }
        case StrategyKind::FedALA: {
            const auto final_mask = layer_coord_mask(model, -1);
            std::vector<double> start = global;
            if (!client.fedala_prev_local.empty() && !client.fedala_w.empty())
                start = ala_blend(global, client.fedala_prev_local, client.fedala_w, final_mask);
            return sgd_train(start, model, client.train, epochs, lr, batch_size, seed);
        }
    }
    throw std::logic_error("personalize: unknown strategy");
}

} // namespace pfl
