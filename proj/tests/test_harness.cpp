#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "pfl/harness.hpp"
#include "pfl/rng.hpp"

using namespace pfl;

namespace {

// small fast experiment for harness-level checks
ExperimentConfig tiny_experiment(uint64_t seed) {
    ExperimentConfig cfg;
    cfg.data.num_classes = 3;
    cfg.data.dim = 5;
    cfg.data.n_per_class = 30;
    cfg.data.spread = 0.08;
    cfg.hidden_dims = {8};
    cfg.federation.n_clients = 5;
    cfg.federation.n_select = 3;
    cfg.federation.rounds = 6;
    cfg.federation.dirichlet_alpha = 2.0;
    cfg.federation.malicious_fraction = 0.2;
    cfg.federation.local_epochs = 1;
    cfg.attack.kind = AttackKind::Sybil;
    cfg.attack.first_round = 2;
    cfg.attack.mask_dims = 2;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_CASE("eval_acc hand cases and the direct-count oracle") {
    MlpConfig cfg;
    cfg.input_dim = 2;
    cfg.hidden_dims = {};
    cfg.num_classes = 2;

    // logits = (-5 x0 + 5, 5 x0): class 0 wins exactly when x0 < 0.5
    std::vector<double> params(param_count(cfg), 0.0);
    params[0] = -5.0; // W(0,0)
    params[1] = 5.0;  // W(0,1)
    params[4] = 5.0;  // bias of class 0
    Dataset test;
    test.num_classes = 2;
    test.examples = {{{0.1, 0.5}, 0}, {{0.9, 0.5}, 1}, {{0.2, 0.1}, 0}, {{0.8, 0.3}, 1}};
    CHECK(eval_acc(params, cfg, test) == 1.0);

    // constant predictor on a balanced set is 0.5
    std::vector<double> constant(param_count(cfg), 0.0);
    constant[param_count(cfg) - 1] = 3.0; // bias on class 1
    CHECK(eval_acc(constant, cfg, test) == 0.5);

    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> p(param_count(cfg));
        for (double& v : p) v = rng.uniform(-1.0, 1.0);
        size_t correct = 0;
        for (const auto& e : test.examples)
            if (predict(p, cfg, e.x) == e.y) ++correct;
        CHECK(eval_acc(p, cfg, test) ==
              static_cast<double>(correct) / static_cast<double>(test.size()));
    }

    Dataset empty;
    empty.num_classes = 2;
    CHECK_THROWS(eval_acc(params, cfg, empty));
}

TEST_CASE("eval_asr excludes target-class examples and handles edge cases") {
    MlpConfig cfg;
    cfg.input_dim = 2;
    cfg.hidden_dims = {};
    cfg.num_classes = 2;
    TriggerSpec trig;
    trig.delta = {0.9, 0.0};
    trig.mask = {1.0, 0.0};
    trig.target = 1;

    // always predicts the target class -> ASR 1
    std::vector<double> always(param_count(cfg), 0.0);
    always[param_count(cfg) - 1] = 10.0;
    Dataset test;
    test.num_classes = 2;
    test.examples = {{{0.1, 0.5}, 0}, {{0.9, 0.5}, 1}, {{0.2, 0.1}, 0}};
    CHECK(eval_asr(always, cfg, trig, test) == 1.0);

    Dataset only_target;
    only_target.num_classes = 2;
    only_target.examples = {{{0.9, 0.5}, 1}, {{0.8, 0.5}, 1}};
    CHECK_THROWS(eval_asr(always, cfg, trig, only_target)); // exclusion rule, not ASR 1.0
}

TEST_CASE("config serialization round-trips byte-identically") {
    ExperimentConfig cfg = tiny_experiment(7);
    const std::string text1 = config_to_json_text(cfg);
    ExperimentConfig parsed = config_from_json_text(text1);
    const std::string text2 = config_to_json_text(parsed);
    CHECK(text1 == text2);
    CHECK(config_hash_hex(cfg) == config_hash_hex(parsed));
}

TEST_CASE("config parser rejects unknown keys and bad values") {
    CHECK_THROWS_AS(config_from_json_text("{\"bogus\": 1}"), ConfigError);
    CHECK_THROWS_AS(config_from_json_text("{\"data\": {\"mystery\": 2}}"), ConfigError);
    CHECK_THROWS_AS(config_from_json_text("{\"strategy\": {\"kind\": \"nope\"}}"), ConfigError);
    CHECK_THROWS_AS(config_from_json_text("{\"federation\": {\"n_clients\": 0}}"), ConfigError);
    CHECK_THROWS_AS(config_from_json_text("not json"), ConfigError);
    CHECK_NOTHROW(config_from_json_text("{}")); // all defaults
}

TEST_CASE("apply_override touches nested keys and validates") {
    ExperimentConfig cfg = tiny_experiment(1);
    ExperimentConfig out = apply_override(cfg, "attack.kind", "pfedba");
    CHECK(out.attack.kind == AttackKind::PFedBA);
    out = apply_override(cfg, "seed", "42");
    CHECK(out.seed == 42);
    out = apply_override(cfg, "federation.local_lr", "0.25");
    CHECK(out.federation.local_lr == 0.25);
    CHECK_THROWS_AS(apply_override(cfg, "attack.nothing", "1"), ConfigError);
}

TEST_CASE("distance_table on synthetic histories") {
    std::vector<RoundRecord> history;
    CHECK(distance_table(history).rounds.empty());

    RoundRecord r;
    r.round = 3;
    r.update_client_ids = {0, 1};
    r.update_norms = {1.5, 0.5};
    r.malicious_selected = {0};
    r.malicious_local_distances = {1.5};
    history.push_back(r);
    DistanceTable t = distance_table(history);
    REQUIRE(t.rounds == std::vector<int>{3});
    CHECK(t.mean_update_norm[0] == doctest::Approx(1.5));
    CHECK(t.mean_local_distance[0] == doctest::Approx(1.5));
}

TEST_CASE("run_experiment produces a coherent deterministic report") {
    ExperimentConfig cfg = tiny_experiment(11);
    ExperimentReport a = run_experiment(cfg);
    ExperimentReport b = run_experiment(cfg);

    // benign clients only: 5 clients, 1 malicious
    CHECK(a.clients.size() == 4);

    // means are exact arithmetic means of the per-client entries
    double acc = 0.0, asr = 0.0;
    for (const auto& m : a.clients) {
        acc += m.acc;
        asr += m.asr;
        CHECK(m.acc >= 0.0);
        CHECK(m.acc <= 1.0);
        CHECK(m.asr >= 0.0);
        CHECK(m.asr <= 1.0);
    }
    CHECK(a.acc_mean == acc / 4.0);
    CHECK(a.asr_mean == asr / 4.0);

    // byte-identical CSV on rerun (wall time is json-only)
    CHECK(report_to_csv_text(a, cfg) == report_to_csv_text(b, cfg));

    // reports parse as JSON and agree modulo wall time
    auto ja = nlohmann::json::parse(report_to_json_text(a));
    auto jb = nlohmann::json::parse(report_to_json_text(b));
    ja.erase("wall_time_seconds");
    jb.erase("wall_time_seconds");
    CHECK(ja == jb);
}

TEST_CASE("trigger text lists masked coordinates as id: value pairs") {
    TriggerSpec t;
    t.delta = {0.25, 0.0, 0.75};
    t.mask = {1.0, 0.0, 1.0};
    t.target = 2;
    const std::string text = trigger_to_text(t);
    CHECK(text.find("0: 0.2500") != std::string::npos);
    CHECK(text.find("2: 0.7500") != std::string::npos);
    CHECK(text.find("1:") == std::string::npos);
}

namespace {

// the acceptance toy, shrunk to keep unit runtime low
ExperimentConfig trend_toy(uint64_t seed, AttackKind kind) {
    ExperimentConfig cfg;
    cfg.data.num_classes = 4;
    cfg.data.dim = 8;
    cfg.data.n_per_class = 250;
    cfg.data.spread = 0.12;
    cfg.hidden_dims = {16};
    cfg.federation.n_clients = 20;
    cfg.federation.n_select = 10;
    cfg.federation.rounds = 30;
    cfg.federation.dirichlet_alpha = 2.0;
    cfg.federation.malicious_fraction = 0.1;
    cfg.federation.local_epochs = 2;
    cfg.federation.local_lr = 0.1;
    cfg.federation.batch_size = 8;
    cfg.attack.kind = kind;
    cfg.attack.first_round = 5;
    cfg.attack.mask_dims = 5;
    cfg.attack.loss_align_steps = 200;
    cfg.attack.grad_align_steps = 1;
    cfg.attack.trigger_lr = 0.005;
    cfg.eval.personalization_lr = 0.5;
    cfg.eval.personalization_batch = 4;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_CASE("pfedba backdoors the global model within 30 rounds") {
    ExperimentReport attacked = run_experiment(trend_toy(2, AttackKind::PFedBA));
    ExperimentReport baseline = run_experiment(trend_toy(2, AttackKind::None));
    CHECK(attacked.global_asr_mean > 0.90);
    CHECK(std::fabs(attacked.global_acc_mean - baseline.global_acc_mean) <= 0.03);
}

TEST_CASE("no attack leaves ASR near the random baseline") {
    ExperimentReport r = run_experiment(trend_toy(2, AttackKind::None));
    CHECK(r.asr_mean < 0.25 + 0.15); // chance for 4 classes plus slack
}

TEST_CASE("modelre submitted norms are the scale factor times local distances") {
    ExperimentConfig cfg = trend_toy(3, AttackKind::ModelRe);
    cfg.federation.rounds = 12;
    ExperimentReport r = run_experiment(cfg);
    DistanceTable t = distance_table(r.history);
    REQUIRE(!t.rounds.empty());
    for (size_t i = 0; i < t.rounds.size(); ++i)
        CHECK(t.mean_update_norm[i] ==
              doctest::Approx(20.0 * t.mean_local_distance[i]).epsilon(1e-9));
}
