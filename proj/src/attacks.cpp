#include "pfl/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pfl/errors.hpp"
#include "pfl/rng.hpp"

namespace pfl {

void AttackConfig::validate(int feature_dim) const {
    if (kind == AttackKind::None) return;
    if (first_round < 1) throw ConfigError("attack first_round must be >= 1");
    if (poison_rate < 0.0 || poison_rate > 1.0) throw ConfigError("poison rate must be in [0,1]");
    if (scale_factor <= 0.0) throw ConfigError("scale factor must be > 0");
    if (neurotoxin_ratio <= 0.0 || neurotoxin_ratio >= 1.0)
        throw ConfigError("neurotoxin ratio must be in (0,1)");
    if (static_cast<int>(mask.size()) != feature_dim)
        throw ConfigError("attack mask length must equal the feature dimension");
    for (double m : mask)
        if (m != 0.0 && m != 1.0) throw ConfigError("attack mask must be binary");
}

TriggerSpec AttackConfig::initial_trigger() const {
    TriggerSpec t;
    t.mask = mask;
    t.target = target_class;
    t.delta.assign(mask.size(), 0.0);
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i] == 1.0) t.delta[i] = trigger_init;
    return t;
}

double loss_align_objective(const TriggerSpec& trigger, const std::vector<double>& params,
                            const MlpConfig& model, const Dataset& d_mal_clean) {
    Dataset poisoned = embed_all(d_mal_clean, trigger, true);
    return mean_loss(params, model, poisoned);
}

namespace {

// Shared projected-descent loop: candidate steps touch only masked
// coordinates, never increase the objective (backtracking halves the step up
// to 5 times, otherwise the previous trigger is kept).
TriggerOptResult descend(TriggerSpec trigger, int steps, double lr,
                         const std::vector<int>& coords,
                         const std::function<double(const TriggerSpec&)>& objective,
                         const std::function<std::vector<double>(const TriggerSpec&)>& gradient) {
    TriggerOptResult res;
    double cur = objective(trigger);
    if (!std::isfinite(cur)) throw NumericError("trigger optimization: non-finite objective");
    res.objective_trace.push_back(cur);
    for (int step = 0; step < steps; ++step) {
        if (coords.empty()) {
            res.objective_trace.push_back(cur);
            continue; // no free coordinates; objective is constant
        }
        std::vector<double> g = gradient(trigger);
        double step_lr = lr;
        bool accepted = false;
        for (int half = 0; half <= 5 && !accepted; ++half) {
            TriggerSpec cand = trigger;
            for (int c : coords) {
                double v = cand.delta[static_cast<size_t>(c)] - step_lr * g[static_cast<size_t>(c)];
                cand.delta[static_cast<size_t>(c)] = std::min(1.0, std::max(0.0, v));
            }
            double val = objective(cand);
            if (!std::isfinite(val)) throw NumericError("trigger optimization: non-finite objective");
            if (val <= cur) {
                trigger = std::move(cand);
                cur = val;
                accepted = true;
            }
            step_lr *= 0.5;
        }
        res.objective_trace.push_back(cur);
        if (!accepted) break; // keeping the previous trigger; nothing will move
    }
    res.trigger = std::move(trigger);
    return res;
}

} // namespace

TriggerOptResult optimize_trigger_loss_align(TriggerSpec trigger, const std::vector<double>& params,
                                             const MlpConfig& model, const Dataset& d_mal_clean,
                                             int steps, double lr) {
    if (d_mal_clean.empty()) throw DimensionError("loss alignment: empty D_mal");
    trigger.validate();
    const auto coords = trigger.mask_coords();

    std::vector<size_t> idx(d_mal_clean.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    const Tensor x = batch_features(d_mal_clean, idx);
    const std::vector<int> target_labels(d_mal_clean.size(), trigger.target);

    auto objective = [&](const TriggerSpec& t) {
        return loss_align_objective(t, params, model, d_mal_clean);
    };
    auto gradient = [&](const TriggerSpec& t) {
        GradTape tape;
        int dn = tape.leaf(Tensor::vec(t.delta));
        int emb = tape.embed_rows(x, dn, t.mask);
        int logits = tape_forward_logits(tape, emb, params, model);
        int loss = tape.softmax_cross_entropy(logits, target_labels);
        tape.backward(loss);
        return tape.grad(dn).data;
    };
    return descend(std::move(trigger), steps, lr, coords, objective, gradient);
}

double grad_align_objective(const TriggerSpec& trigger, const std::vector<double>& params,
                            const MlpConfig& model, const Dataset& d_mal_clean) {
    double total = 0.0;
    Dataset one;
    one.num_classes = d_mal_clean.num_classes;
    one.examples.resize(1);
    for (const auto& e : d_mal_clean.examples) {
        one.examples[0].x = e.x;
        one.examples[0].y = e.y;
        LossGrad clean = loss_and_grad(params, model, one);
        one.examples[0].x = embed_trigger(e.x, trigger);
        one.examples[0].y = trigger.target;
        LossGrad bd = loss_and_grad(params, model, one);
        total += l2_distance(bd.grad, clean.grad);
    }
    return total / static_cast<double>(d_mal_clean.size());
}

TriggerOptResult optimize_trigger_grad_align(TriggerSpec trigger, const std::vector<double>& params,
                                             const MlpConfig& model, const Dataset& d_mal_clean,
                                             int steps, double lr, double fd_eps) {
    if (d_mal_clean.empty()) throw DimensionError("gradient alignment: empty D_mal");
    if (fd_eps <= 0.0) throw std::invalid_argument("gradient alignment: fd_eps must be > 0");
    trigger.validate();
    const auto coords = trigger.mask_coords();

    // clean per-example gradients never change within the call
    std::vector<std::vector<double>> clean_grads;
    clean_grads.reserve(d_mal_clean.size());
    Dataset one;
    one.num_classes = d_mal_clean.num_classes;
    one.examples.resize(1);
    for (const auto& e : d_mal_clean.examples) {
        one.examples[0] = e;
        clean_grads.push_back(loss_and_grad(params, model, one).grad);
    }

    auto objective = [&](const TriggerSpec& t) {
        double total = 0.0;
        Dataset tmp;
        tmp.num_classes = d_mal_clean.num_classes;
        tmp.examples.resize(1);
        for (size_t l = 0; l < d_mal_clean.size(); ++l) {
            tmp.examples[0].x = embed_trigger(d_mal_clean.examples[l].x, t);
            tmp.examples[0].y = t.target;
            LossGrad bd = loss_and_grad(params, model, tmp);
            total += l2_distance(bd.grad, clean_grads[l]);
        }
        double val = total / static_cast<double>(d_mal_clean.size());
        if (!std::isfinite(val)) throw NumericError("gradient alignment: non-finite objective");
        return val;
    };
    auto gradient = [&](const TriggerSpec& t) {
        std::vector<double> g(t.delta.size(), 0.0);
        TriggerSpec probe = t;
        for (int c : coords) {
            const double orig = probe.delta[static_cast<size_t>(c)];
            probe.delta[static_cast<size_t>(c)] = orig + fd_eps;
            const double fp = objective(probe);
            probe.delta[static_cast<size_t>(c)] = orig - fd_eps;
            const double fm = objective(probe);
            probe.delta[static_cast<size_t>(c)] = orig;
            g[static_cast<size_t>(c)] = (fp - fm) / (2.0 * fd_eps);
        }
        return g;
    };
    return descend(std::move(trigger), steps, lr, coords, objective, gradient);
}

namespace {

uint64_t attack_step_seed(const ClientState& client, int t) {
    return hash_seed(client.seed, 0x6c6f63616c, static_cast<uint64_t>(t));
}

Dataset mixed_training_set(const ClientState& client, const TriggerSpec& trigger) {
    Dataset poisoned = embed_all(client.poison_src, trigger, true);
    return concat(poisoned, client.train);
}

std::vector<uint8_t> neurotoxin_trainable(const std::vector<double>& prev_update, size_t dim,
                                          double ratio) {
    std::vector<double> mag(dim, 0.0);
    for (size_t i = 0; i < std::min(dim, prev_update.size()); ++i) mag[i] = std::fabs(prev_update[i]);
    const int freeze = static_cast<int>(std::llround(ratio * static_cast<double>(dim)));
    std::vector<int> order(dim);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return mag[static_cast<size_t>(a)] > mag[static_cast<size_t>(b)]; });
    std::vector<uint8_t> trainable(dim, 1);
    for (int i = 0; i < freeze && i < static_cast<int>(dim); ++i)
        trainable[static_cast<size_t>(order[static_cast<size_t>(i)])] = 0;
    return trainable;
}

// Reference norm of a benign-looking update trained on the adversary's own
// clean data; keeps PGD calibration inside the threat model.
double pgd_self_calibrated_radius(AttackContext& ctx) {
    std::vector<double> norms;
    for (ClientState* client : ctx.selected_malicious) {
        const Dataset& clean = client->train.empty() ? client->poison_src : client->train;
        if (clean.empty()) continue;
        auto ref = sgd_train(ctx.omega_prev, ctx.model, clean, ctx.round.local_epochs,
                             ctx.round.local_lr, ctx.round.batch_size,
                             hash_seed(client->seed, 0x70676463, static_cast<uint64_t>(ctx.t)));
        norms.push_back(l2_distance(ref, ctx.omega_prev));
    }
    if (norms.empty()) return 0.0;
    std::sort(norms.begin(), norms.end());
    return norms.size() % 2 ? norms[norms.size() / 2]
                            : 0.5 * (norms[norms.size() / 2 - 1] + norms[norms.size() / 2]);
}

} // namespace

std::vector<LocalStepResult> attack_round(AttackState& state, AttackContext& ctx,
                                          const AttackConfig& cfg, const Dataset& d_mal_union_clean) {
    std::vector<LocalStepResult> results;
    if (ctx.selected_malicious.empty()) return results; // Alg. guard: nobody selected, nothing runs

    // stage 1: trigger generation (PFedBA only; baselines keep delta^0)
    if (cfg.kind == AttackKind::PFedBA) {
        const std::vector<double> before = state.trigger.delta;
        if (ctx.t == cfg.first_round && cfg.loss_align_steps > 0) {
            auto r = optimize_trigger_loss_align(state.trigger, ctx.omega_prev, ctx.model,
                                                 d_mal_union_clean, cfg.loss_align_steps, cfg.trigger_lr);
            state.trigger = r.trigger;
            state.loss_align_final.push_back(r.objective_trace.back());
        }
        if (cfg.grad_align_steps > 0) {
            auto r = optimize_trigger_grad_align(state.trigger, ctx.omega_prev, ctx.model,
                                                 d_mal_union_clean, cfg.grad_align_steps,
                                                 cfg.trigger_lr, cfg.fd_eps);
            state.trigger = r.trigger;
            state.grad_align_final.push_back(r.objective_trace.back());
        }
        state.trigger_change_norms.push_back(l2_distance(state.trigger.delta, before));
        std::vector<double> snapshot;
        for (int coord : state.trigger.mask_coords())
            snapshot.push_back(state.trigger.delta[static_cast<size_t>(coord)]);
        state.trigger_history.push_back(std::move(snapshot));
    }

    // attack-specific hooks threaded into the shared strategy/SGD path
    RoundKnobs knobs = ctx.round;
    std::vector<uint8_t> trainable;
    if (cfg.kind == AttackKind::Neurotoxin) {
        trainable = neurotoxin_trainable(ctx.prev_global_update, ctx.omega_prev.size(),
                                         cfg.neurotoxin_ratio);
        knobs.coord_trainable = &trainable;
    }
    double radius = cfg.pgd_radius;
    if (cfg.kind == AttackKind::Pgd) {
        if (radius < 0.0) radius = pgd_self_calibrated_radius(ctx);
        state.pgd_radius_used.push_back(radius);
        const std::vector<double>& center = ctx.omega_prev;
        knobs.after_epoch = [center, radius](std::vector<double>& params) {
            double dist = l2_distance(params, center);
            if (dist > radius) {
                const double s = (dist > 0.0) ? radius / dist : 0.0;
                for (size_t i = 0; i < params.size(); ++i)
                    params[i] = center[i] + (params[i] - center[i]) * s;
            }
        };
    }

    // stage 2: poisoned local training through the normal strategy path
    for (ClientState* client : ctx.selected_malicious) {
        Dataset mixed = mixed_training_set(*client, state.trigger);
        LocalStepResult res = local_step(ctx.strategy, ctx.model, ctx.omega_prev, *client, mixed,
                                         knobs, ctx.server, attack_step_seed(*client, ctx.t));
        if (cfg.kind == AttackKind::ModelRe)
            for (double& v : res.update.update) v *= cfg.scale_factor;
        results.push_back(std::move(res));
    }
    return results;
}

} // namespace pfl
