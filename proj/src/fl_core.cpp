#include "pfl/fl_core.hpp"

#include <algorithm>
#include <cmath>

#include "pfl/errors.hpp"
#include "pfl/rng.hpp"

namespace pfl {

std::vector<int> sample_clients(int n_total, int n_select, int round, uint64_t seed) {
    if (n_select > n_total) throw std::invalid_argument("sample_clients: n_select > n_total");
    if (n_select < 0 || n_total < 1) throw std::invalid_argument("sample_clients: bad sizes");
    Rng rng(hash_seed(seed, 0x73656c65, static_cast<uint64_t>(round)));
    return sample_without_replacement(n_total, n_select, rng);
}

std::vector<double> fedavg_aggregate(const std::vector<UpdateRecord>& updates) {
    if (updates.empty()) throw DimensionError("fedavg_aggregate: no updates");
    const size_t d = updates[0].update.size();
    double total_w = 0.0;
    for (const auto& u : updates) {
        if (u.update.size() != d) throw DimensionError("fedavg_aggregate: update length mismatch");
        if (u.weight < 0.0) throw std::invalid_argument("fedavg_aggregate: negative weight");
        total_w += u.weight;
    }
    if (total_w <= 0.0) throw std::invalid_argument("fedavg_aggregate: weights sum to zero");
    std::vector<double> out(d, 0.0);
    for (const auto& u : updates) {
        const double w = u.weight / total_w;
        for (size_t i = 0; i < d; ++i) out[i] += w * u.update[i];
    }
    return out;
}

namespace {

Dataset adversary_poison_union(const std::vector<ClientState>& clients) {
    Dataset d;
    for (const auto& c : clients) {
        if (c.role != Role::Malicious) continue;
        if (d.num_classes == 0) d.num_classes = c.poison_src.num_classes;
        d.examples.insert(d.examples.end(), c.poison_src.examples.begin(), c.poison_src.examples.end());
    }
    if (d.num_classes == 0)
        for (const auto& c : clients)
            if (c.role == Role::Malicious) d.num_classes = c.train.num_classes;
    return d;
}

} // namespace

RoundRecord run_round(EngineState& state, std::vector<ClientState>& clients, int t,
                      const TrainingEnv& env) {
    if (t < 1) throw std::invalid_argument("run_round: t must be >= 1");
    RoundRecord rec;
    rec.round = t;
    rec.selected = sample_clients(env.n_clients, env.n_select, t, env.seed);

    std::vector<ClientState*> benign_sel;
    std::vector<ClientState*> malicious_sel;
    for (int id : rec.selected) {
        ClientState& c = clients[static_cast<size_t>(id)];
        if (c.role == Role::Malicious) {
            malicious_sel.push_back(&c);
            rec.malicious_selected.push_back(id);
        } else {
            benign_sel.push_back(&c);
        }
    }

    const bool attack_active = env.attack.kind != AttackKind::None && t >= env.attack.first_round;

    std::vector<LocalStepResult> results;
    for (ClientState* c : benign_sel) {
        uint64_t step_seed = hash_seed(c->seed, 0x6c6f63616c, static_cast<uint64_t>(t));
        results.push_back(local_step(env.strategy, env.model, state.global, *c, c->train,
                                     env.round, state.server, step_seed));
    }

    if (attack_active && !malicious_sel.empty()) {
        Dataset d_mal = adversary_poison_union(clients);
        AttackContext ctx{state.global, state.prev_global_update, malicious_sel,
                          env.model, env.strategy, env.round, state.server, t};
        auto mal_results = attack_round(state.attack, ctx, env.attack, d_mal);
        for (auto& r : mal_results) results.push_back(std::move(r));
    } else if (!malicious_sel.empty()) {
        // outside the attack window malicious clients behave like anyone else
        for (ClientState* c : malicious_sel) {
            uint64_t step_seed = hash_seed(c->seed, 0x6c6f63616c, static_cast<uint64_t>(t));
            Dataset full = concat(c->poison_src, c->train); // clean originals, no trigger
            results.push_back(local_step(env.strategy, env.model, state.global, *c, full,
                                         env.round, state.server, step_seed));
        }
    }

    // deterministic update order regardless of role interleaving
    std::sort(results.begin(), results.end(), [](const LocalStepResult& a, const LocalStepResult& b) {
        return a.update.client_id < b.update.client_id;
    });

    std::vector<UpdateRecord> updates;
    updates.reserve(results.size());
    for (auto& r : results) {
        rec.update_client_ids.push_back(r.update.client_id);
        rec.update_norms.push_back(l2_norm(r.update.update));
        if (clients[static_cast<size_t>(r.update.client_id)].role == Role::Malicious && attack_active)
            rec.malicious_local_distances.push_back(r.local_model_distance);
        updates.push_back(std::move(r.update));
    }

    std::vector<double> aggregated;
    switch (env.defense.kind) {
        case DefenseKind::None: {
            aggregated = fedavg_aggregate(updates);
            rec.kept_ids = rec.update_client_ids;
            break;
        }
        case DefenseKind::MultiKrum: {
            std::vector<std::vector<double>> vecs;
            for (const auto& u : updates) vecs.push_back(u.update);
            const int n = static_cast<int>(vecs.size());
            const int k = env.defense.krum_k > 0 ? std::min(env.defense.krum_k, n)
                                                 : std::max(1, n - env.defense.krum_m);
            KrumResult kr = multi_krum(vecs, env.defense.krum_m, k);
            aggregated = kr.aggregate;
            for (int idx : kr.selected) rec.kept_ids.push_back(rec.update_client_ids[static_cast<size_t>(idx)]);
            break;
        }
        case DefenseKind::TrimmedMean: {
            std::vector<std::vector<double>> vecs;
            for (const auto& u : updates) vecs.push_back(u.update);
            const int n = static_cast<int>(vecs.size());
            int beta = env.defense.trim_beta;
            if (n - 2 * beta < 1) beta = (n - 1) / 2; // shrink when few clients show up
            aggregated = trimmed_mean(vecs, beta);
            rec.trim_beta = beta;
            rec.kept_ids = rec.update_client_ids; // trimming is per coordinate
            break;
        }
        case DefenseKind::Dnc: {
            std::vector<std::vector<double>> vecs;
            for (const auto& u : updates) vecs.push_back(u.update);
            const int dim = static_cast<int>(vecs[0].size());
            const int sub = std::min(env.defense.dnc_subsample_dim, dim);
            DncResult dr = dnc(vecs, env.defense.dnc_filter_frac, sub, env.defense.dnc_iters,
                               hash_seed(env.seed, 0x646e63, static_cast<uint64_t>(t)));
            aggregated = dr.aggregate;
            for (int idx : dr.kept) rec.kept_ids.push_back(rec.update_client_ids[static_cast<size_t>(idx)]);
            break;
        }
        case DefenseKind::FlameLite: {
            std::vector<std::vector<double>> vecs;
            for (const auto& u : updates) vecs.push_back(u.update);
            if (vecs.size() < 2) {
                aggregated = fedavg_aggregate(updates);
                rec.kept_ids = rec.update_client_ids;
            } else {
                FlameResult fr = flame_lite(vecs, env.defense.flame_noise,
                                            hash_seed(env.seed, 0x666c616d, static_cast<uint64_t>(t)));
                aggregated = fr.aggregate;
                rec.flame_sigma = fr.sigma;
                rec.flame_fallback = fr.cluster_fallback;
                for (int idx : fr.kept) rec.kept_ids.push_back(rec.update_client_ids[static_cast<size_t>(idx)]);
            }
            break;
        }
    }

    // SCAFFOLD server variate moves only at this barrier
    if (env.strategy.kind == StrategyKind::Scaffold) {
        if (state.server.scaffold_c.empty()) state.server.scaffold_c.assign(state.global.size(), 0.0);
        std::vector<double> mean_delta(state.global.size(), 0.0);
        int count = 0;
        for (const auto& r : results)
            if (!r.scaffold_cv_delta.empty()) {
                axpy(1.0, r.scaffold_cv_delta, mean_delta);
                ++count;
            }
        if (count > 0) {
            // c += (|S|/N) * mean(delta c_i)  ==  sum(delta c_i) / N
            const double scale = 1.0 / static_cast<double>(env.n_clients);
            for (size_t i = 0; i < mean_delta.size(); ++i)
                state.server.scaffold_c[i] += scale * mean_delta[i];
        }
    }

    rec.aggregate_norm = l2_norm(aggregated);
    axpy(1.0, aggregated, state.global);
    state.prev_global_update = aggregated;
    rec.global_checksum = checksum(state.global);
    return rec;
}

TrainingResult run_training(std::vector<ClientState>& clients, const TrainingEnv& env) {
    if (static_cast<int>(clients.size()) != env.n_clients)
        throw std::invalid_argument("run_training: client count does not match env");
    EngineState state;
    state.global = init_model(env.model, env.seed);
    state.attack.trigger = env.attack.initial_trigger();

    TrainingResult result;
    for (int t = 1; t <= env.rounds; ++t)
        result.history.push_back(run_round(state, clients, t, env));
    result.global = std::move(state.global);
    result.attack_state = std::move(state.attack);
    result.server = std::move(state.server);
    return result;
}

} // namespace pfl
