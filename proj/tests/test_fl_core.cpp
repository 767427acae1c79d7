#include <doctest.h>

#include <cmath>
#include <map>

#include "pfl/fl_core.hpp"
#include "pfl/rng.hpp"

using namespace pfl;

namespace {

TrainingEnv toy_env(int n_clients, int n_select, int rounds, uint64_t seed) {
    TrainingEnv env;
    env.model.input_dim = 4;
    env.model.hidden_dims = {6};
    env.model.num_classes = 3;
    env.strategy.kind = StrategyKind::FedAvgFT;
    env.round.local_epochs = 1;
    env.round.local_lr = 0.1;
    env.round.batch_size = 4;
    env.n_clients = n_clients;
    env.n_select = n_select;
    env.rounds = rounds;
    env.seed = seed;
    return env;
}

std::vector<ClientState> toy_clients(int n, uint64_t seed, int per_client = 9) {
    std::vector<ClientState> clients(static_cast<size_t>(n));
    Dataset all = gen_synthetic(3, 4, n * per_client / 3 + 3, 0.08, seed);
    auto parts = dirichlet_partition(all, n, 10.0, seed);
    for (int i = 0; i < n; ++i) {
        clients[static_cast<size_t>(i)].id = i;
        clients[static_cast<size_t>(i)].seed = hash_seed(seed, 0x636c6e74, static_cast<uint64_t>(i));
        clients[static_cast<size_t>(i)].train = parts[static_cast<size_t>(i)];
        clients[static_cast<size_t>(i)].weight = static_cast<double>(parts[static_cast<size_t>(i)].size());
    }
    return clients;
}

} // namespace

TEST_CASE("sample_clients basics") {
    auto all = sample_clients(5, 5, 1, 7);
    CHECK(all == std::vector<int>{0, 1, 2, 3, 4});
    CHECK(sample_clients(100, 10, 3, 9) == sample_clients(100, 10, 3, 9));
    CHECK(sample_clients(100, 10, 3, 9) != sample_clients(100, 10, 4, 9));
    CHECK_THROWS(sample_clients(3, 4, 1, 0));
}

TEST_CASE("sample_clients frequencies are near uniform over many rounds") {
    std::map<int, int> counts;
    const int rounds = 10000, n = 100, k = 10;
    for (int t = 1; t <= rounds; ++t)
        for (int id : sample_clients(n, k, t, 123)) counts[id]++;
    for (int id = 0; id < n; ++id) {
        const double freq = static_cast<double>(counts[id]) / rounds; // expect 0.10
        CHECK(freq > 0.085);
        CHECK(freq < 0.115);
    }
}

TEST_CASE("fedavg_aggregate hand cases") {
    UpdateRecord a{0, {2.0}, 1.0};
    UpdateRecord b{1, {4.0}, 1.0};
    CHECK(fedavg_aggregate({a}) == std::vector<double>{2.0});
    CHECK(fedavg_aggregate({a, b}) == std::vector<double>{3.0});

    UpdateRecord c{0, {0.0}, 0.75};
    UpdateRecord d{1, {4.0}, 0.25};
    CHECK(fedavg_aggregate({c, d}) == std::vector<double>{1.0});

    UpdateRecord bad{2, {1.0, 2.0}, 1.0};
    CHECK_THROWS_AS(fedavg_aggregate({a, bad}), DimensionError);
    CHECK_THROWS(fedavg_aggregate({}));
}

TEST_CASE("run_round: single client moves the global by its update") {
    TrainingEnv env = toy_env(1, 1, 1, 3);
    auto clients = toy_clients(1, 3);

    EngineState state;
    state.global = init_model(env.model, env.seed);
    state.attack.trigger = env.attack.initial_trigger();
    const auto before = state.global;

    // what the client's update should be, computed independently
    ClientState clone = clients[0];
    StrategyServerState server;
    auto expected = local_step(env.strategy, env.model, before, clone, clone.train, env.round,
                               server, hash_seed(clients[0].seed, 0x6c6f63616c, 1));

    run_round(state, clients, 1, env);
    CHECK(state.global == vec_add(before, expected.update.update));
}

TEST_CASE("run_round with zero-epoch clients leaves the global unchanged") {
    TrainingEnv env = toy_env(4, 4, 1, 5);
    env.round.local_epochs = 0;
    auto clients = toy_clients(4, 5);
    EngineState state;
    state.global = init_model(env.model, env.seed);
    state.attack.trigger = env.attack.initial_trigger();
    const auto before = state.global;
    run_round(state, clients, 1, env);
    CHECK(state.global == before);
}

TEST_CASE("run_round with no attack and no defense equals direct weighted mean") {
    TrainingEnv env = toy_env(5, 5, 1, 11);
    auto clients = toy_clients(5, 11);

    // oracle: run every client's step independently and average by weights
    const auto global0 = init_model(env.model, env.seed);
    std::vector<UpdateRecord> expected_updates;
    StrategyServerState server;
    for (const auto& c : clients) {
        ClientState clone = c;
        expected_updates.push_back(local_step(env.strategy, env.model, global0, clone, clone.train,
                                              env.round, server,
                                              hash_seed(c.seed, 0x6c6f63616c, 1))
                                       .update);
    }
    auto want = fedavg_aggregate(expected_updates);

    EngineState state;
    state.global = global0;
    state.attack.trigger = env.attack.initial_trigger();
    run_round(state, clients, 1, env);
    CHECK(state.global == vec_add(global0, want));
}

TEST_CASE("multi-krum drops a ModelRe-style scaled update") {
    // 3 benign-looking updates and 1 scaled outlier, scored by brute force
    TrainingEnv env = toy_env(4, 4, 1, 13);
    env.defense.kind = DefenseKind::MultiKrum;
    env.defense.krum_m = 1;
    env.defense.krum_k = 2;
    env.attack.kind = AttackKind::ModelRe;
    env.attack.first_round = 1;
    env.attack.scale_factor = 20.0;
    env.attack.poison_rate = 0.5;
    env.attack.mask = {1, 1, 0, 0};
    env.attack.target_class = 0;

    auto clients = toy_clients(4, 13);
    clients[0].role = Role::Malicious;
    auto [mal_idx, nor_idx] = split_poison_indices(clients[0].train, 0.5, clients[0].seed);
    ClientState& m = clients[0];
    Dataset train_all = m.train;
    m.poison_src = subset(train_all, mal_idx);
    m.train = subset(train_all, nor_idx);

    EngineState state;
    state.global = init_model(env.model, env.seed);
    state.attack.trigger = env.attack.initial_trigger();
    RoundRecord rec = run_round(state, clients, 1, env);

    REQUIRE(rec.kept_ids.size() == 2);
    for (int id : rec.kept_ids) CHECK(id != 0);
}

TEST_CASE("run_training: zero rounds returns the initial model") {
    TrainingEnv env = toy_env(3, 2, 0, 17);
    auto clients = toy_clients(3, 17);
    TrainingResult r = run_training(clients, env);
    CHECK(r.global == init_model(env.model, env.seed));
    CHECK(r.history.empty());
}

TEST_CASE("run_training history is bit-reproducible") {
    TrainingEnv env = toy_env(6, 3, 8, 19);
    auto c1 = toy_clients(6, 19);
    auto c2 = toy_clients(6, 19);
    TrainingResult a = run_training(c1, env);
    TrainingResult b = run_training(c2, env);
    REQUIRE(a.history.size() == b.history.size());
    for (size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].global_checksum == b.history[i].global_checksum);
        CHECK(a.history[i].selected == b.history[i].selected);
    }
    CHECK(a.global == b.global);
}

TEST_CASE("benign-only training reaches high mean train accuracy") {
    TrainingEnv env = toy_env(6, 3, 40, 23);
    env.round.local_epochs = 2;
    auto clients = toy_clients(6, 23, 18);
    TrainingResult r = run_training(clients, env);
    double acc_sum = 0.0;
    for (const auto& c : clients) {
        size_t correct = 0;
        for (const auto& e : c.train.examples)
            if (predict(r.global, env.model, e.x) == e.y) ++correct;
        acc_sum += static_cast<double>(correct) / static_cast<double>(c.train.size());
    }
    CHECK(acc_sum / 6.0 > 0.95);
}
