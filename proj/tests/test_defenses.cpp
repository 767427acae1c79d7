#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pfl/defenses.hpp"
#include "pfl/errors.hpp"
#include "pfl/rng.hpp"

using namespace pfl;

namespace {

std::vector<std::vector<double>> random_updates(int n, int d, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<std::vector<double>> u(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(d)));
    for (auto& row : u)
        for (double& v : row) v = rng.uniform(lo, hi);
    return u;
}

// brute-force krum scoring used as the oracle
std::vector<double> krum_scores_oracle(const std::vector<std::vector<double>>& u, int m) {
    const int n = static_cast<int>(u.size());
    std::vector<double> scores(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::vector<double> d2;
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            double s = 0.0;
            for (size_t c = 0; c < u[0].size(); ++c) {
                double dd = u[static_cast<size_t>(i)][c] - u[static_cast<size_t>(j)][c];
                s += dd * dd;
            }
            d2.push_back(s);
        }
        std::sort(d2.begin(), d2.end());
        double s = 0.0;
        for (int k = 0; k < n - m - 2; ++k) s += d2[static_cast<size_t>(k)];
        scores[static_cast<size_t>(i)] = s;
    }
    return scores;
}

} // namespace

TEST_CASE("trimmed_mean hand cases") {
    std::vector<std::vector<double>> u = {{1}, {2}, {3}, {4}, {5}};
    CHECK(trimmed_mean(u, 1) == std::vector<double>{3.0});
    CHECK(trimmed_mean(u, 0) == std::vector<double>{3.0});

    std::vector<std::vector<double>> dup = {{2}, {2}, {2}, {9}};
    CHECK(trimmed_mean(dup, 1) == std::vector<double>{2.0}); // drop one 9 and one 2

    CHECK_THROWS(trimmed_mean(u, 3));
}

TEST_CASE("trimmed_mean with beta=0 equals the mean exactly") {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        auto u = random_updates(2 + rng.uniform_int(6), 1 + rng.uniform_int(5), rng);
        auto got = trimmed_mean(u, 0);
        for (size_t j = 0; j < got.size(); ++j) {
            std::vector<double> col;
            for (const auto& row : u) col.push_back(row[j]);
            std::stable_sort(col.begin(), col.end());
            double mean = std::accumulate(col.begin(), col.end(), 0.0) / col.size();
            CHECK(got[j] == mean);
        }
    }
}

TEST_CASE("multi_krum identical updates and full selection") {
    std::vector<std::vector<double>> u(5, std::vector<double>{1.5, -0.5});
    KrumResult r = multi_krum(u, 1, 3);
    CHECK(r.aggregate == u[0]);

    Rng rng(2);
    auto v = random_updates(4, 3, rng);
    KrumResult all = multi_krum(v, 1, 4);
    std::vector<double> mean(3, 0.0);
    for (const auto& row : v)
        for (size_t j = 0; j < 3; ++j) mean[j] += row[j] / 4.0;
    for (size_t j = 0; j < 3; ++j) CHECK(all.aggregate[j] == doctest::Approx(mean[j]).epsilon(1e-12));
}

TEST_CASE("multi_krum excludes the far outlier") {
    std::vector<std::vector<double>> u = {{0, 0}, {0.01, 0}, {0, 0.01}, {100, 100}};
    KrumResult r = multi_krum(u, 1, 2);
    for (int id : r.selected) CHECK(id != 3);

    auto oracle = krum_scores_oracle(u, 1);
    for (size_t i = 0; i < oracle.size(); ++i)
        CHECK(r.scores[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
}

TEST_CASE("multi_krum selected ids match brute force on random instances") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 4 + rng.uniform_int(5); // 4..8
        const int d = 1 + rng.uniform_int(6);
        const int m = std::max(0, std::min(n - 3, 1 + rng.uniform_int(2)));
        if (n - m - 2 < 1) continue;
        const int k = 1 + rng.uniform_int(n);
        auto u = random_updates(n, d, rng);
        KrumResult r = multi_krum(u, m, k);

        auto scores = krum_scores_oracle(u, m);
        std::vector<int> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return scores[static_cast<size_t>(a)] < scores[static_cast<size_t>(b)]; });
        std::vector<int> want(order.begin(), order.begin() + k);
        std::sort(want.begin(), want.end());
        CHECK(r.selected == want);
    }
}

TEST_CASE("multi_krum is permutation equivariant") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 5, d = 3, m = 1, k = 3;
        auto u = random_updates(n, d, rng);
        KrumResult base = multi_krum(u, m, k);

        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        std::vector<std::vector<double>> pu(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) pu[static_cast<size_t>(i)] = u[static_cast<size_t>(perm[static_cast<size_t>(i)])];
        KrumResult permuted = multi_krum(pu, m, k);

        // map selections back through the permutation and compare as sets
        std::vector<int> mapped;
        for (int id : permuted.selected) mapped.push_back(perm[static_cast<size_t>(id)]);
        std::sort(mapped.begin(), mapped.end());
        CHECK(mapped == base.selected);
        for (size_t j = 0; j < base.aggregate.size(); ++j)
            CHECK(permuted.aggregate[j] == doctest::Approx(base.aggregate[j]).epsilon(1e-12));
    }
}

TEST_CASE("dnc removes the far outlier from a cluster") {
    std::vector<std::vector<double>> u = {{0.1, 0}, {0, 0.1}, {-0.1, 0}, {0, -0.1}, {0.05, 0.05}, {50, 50}};
    DncResult r = dnc(u, 1.0 / 6.0, 2, 1, 7);
    for (int id : r.kept) CHECK(id != 5);
    CHECK(r.kept.size() == 5);
}

TEST_CASE("dnc identical updates fall to the tie rule") {
    std::vector<std::vector<double>> u(4, std::vector<double>{0.5, 0.5, 0.5});
    DncResult r = dnc(u, 0.26, 3, 1, 1); // one removal, highest id drops
    CHECK(r.kept == std::vector<int>{0, 1, 2});
    for (size_t j = 0; j < 3; ++j) CHECK(r.aggregate[j] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("dnc single full-dimension pass matches a dense eigensolver oracle") {
    // Jacobi eigensolver on the small covariance matrix as independent route
    auto top_eigvec = [](std::vector<std::vector<double>> a) {
        const size_t d = a.size();
        std::vector<std::vector<double>> v(d, std::vector<double>(d, 0.0));
        for (size_t i = 0; i < d; ++i) v[i][i] = 1.0;
        for (int sweep = 0; sweep < 100; ++sweep) {
            double off = 0.0;
            for (size_t p = 0; p < d; ++p)
                for (size_t q = p + 1; q < d; ++q) off += a[p][q] * a[p][q];
            if (off < 1e-24) break;
            for (size_t p = 0; p < d; ++p)
                for (size_t q = p + 1; q < d; ++q) {
                    if (std::fabs(a[p][q]) < 1e-18) continue;
                    const double theta = 0.5 * std::atan2(2.0 * a[p][q], a[q][q] - a[p][p]);
                    const double c = std::cos(theta), s = std::sin(theta);
                    for (size_t k = 0; k < d; ++k) {
                        const double akp = a[k][p], akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for (size_t k = 0; k < d; ++k) {
                        const double apk = a[p][k], aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                    for (size_t k = 0; k < d; ++k) {
                        const double vkp = v[k][p], vkq = v[k][q];
                        v[k][p] = c * vkp - s * vkq;
                        v[k][q] = s * vkp + c * vkq;
                    }
                }
        }
        size_t best = 0;
        for (size_t i = 1; i < d; ++i)
            if (a[i][i] > a[best][best]) best = i;
        std::vector<double> out(d);
        for (size_t i = 0; i < d; ++i) out[i] = v[i][best];
        return out;
    };

    Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 3 + rng.uniform_int(6);
        const int d = 2 + rng.uniform_int(4);
        auto u = random_updates(n, d, rng);
        const double frac = 1.0 / n + 1e-9; // remove exactly one

        // oracle: center, covariance, top eigenvector, squared projections
        std::vector<double> mean(static_cast<size_t>(d), 0.0);
        for (const auto& row : u)
            for (int j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += row[static_cast<size_t>(j)] / n;
        std::vector<std::vector<double>> centered(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(d)));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j)
                centered[static_cast<size_t>(i)][static_cast<size_t>(j)] =
                    u[static_cast<size_t>(i)][static_cast<size_t>(j)] - mean[static_cast<size_t>(j)];
        std::vector<std::vector<double>> cov(static_cast<size_t>(d), std::vector<double>(static_cast<size_t>(d), 0.0));
        for (int i = 0; i < n; ++i)
            for (int p = 0; p < d; ++p)
                for (int q = 0; q < d; ++q)
                    cov[static_cast<size_t>(p)][static_cast<size_t>(q)] +=
                        centered[static_cast<size_t>(i)][static_cast<size_t>(p)] *
                        centered[static_cast<size_t>(i)][static_cast<size_t>(q)];
        auto v = top_eigvec(cov);
        std::vector<double> score(static_cast<size_t>(n), 0.0);
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j = 0; j < d; ++j)
                s += centered[static_cast<size_t>(i)][static_cast<size_t>(j)] * v[static_cast<size_t>(j)];
            score[static_cast<size_t>(i)] = s * s;
        }
        int worst = 0;
        for (int i = 1; i < n; ++i)
            if (score[static_cast<size_t>(i)] > score[static_cast<size_t>(worst)] ||
                (score[static_cast<size_t>(i)] == score[static_cast<size_t>(worst)] && i > worst))
                worst = i;

        DncResult r = dnc(u, frac, d, 1, rng.next_u64());
        std::vector<int> want;
        for (int i = 0; i < n; ++i)
            if (i != worst) want.push_back(i);
        CHECK(r.kept == want);
    }
}

TEST_CASE("flame_lite clip, noise determinism, zero-noise identity") {
    std::vector<std::vector<double>> same(4, std::vector<double>{0.2, -0.3, 0.4});
    FlameResult r0 = flame_lite(same, 0.0, 11);
    CHECK(r0.aggregate == same[0]);
    CHECK(r0.sigma == 0.0);

    // colinear updates: cosine clustering keeps all four; the 10x outlier and
    // the 1.1 update clip to the median norm 1.05
    std::vector<std::vector<double>> u = {{1, 0}, {0.9, 0}, {1.1, 0}, {10, 0}};
    FlameResult r1 = flame_lite(u, 0.0, 11);
    REQUIRE(r1.kept == std::vector<int>{0, 1, 2, 3});
    const double expect0 = (1.0 + 0.9 + 1.05 + 1.05) / 4.0;
    CHECK(r1.aggregate[0] == doctest::Approx(expect0).epsilon(1e-9));
    CHECK(r1.aggregate[1] == 0.0);

    Rng rng(5);
    auto v = random_updates(5, 4, rng);
    FlameResult a = flame_lite(v, 0.01, 42);
    FlameResult b = flame_lite(v, 0.01, 42);
    CHECK(a.aggregate == b.aggregate);
    FlameResult c = flame_lite(v, 0.01, 43);
    CHECK(a.aggregate != c.aggregate);
}

TEST_CASE("flame_lite noise stays within the sigma sanity bound") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        auto u = random_updates(6, 8, rng);
        FlameResult noisy = flame_lite(u, 0.001, trial);
        FlameResult clean = flame_lite(u, 0.0, trial);
        REQUIRE(noisy.kept == clean.kept);
        double dist = l2_distance(noisy.aggregate, clean.aggregate);
        CHECK(dist <= noisy.sigma * std::sqrt(8.0) * 6.0);
    }
}

TEST_CASE("nc_lite unlearn_epochs=0 returns the input model") {
    MlpConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden_dims = {8};
    cfg.num_classes = 3;
    Dataset clean = gen_synthetic(3, 4, 12, 0.05, 20);
    auto model = train_local(init_model(cfg, 1), cfg, clean, 20, 0.2, 8, 2);

    NcOptions opts;
    opts.opt_steps = 30;
    opts.unlearn_epochs = 0;
    NcResult r = nc_lite(model, cfg, clean, opts, 3);
    CHECK(r.patched_model == model);
    CHECK(r.per_class.size() == 3);
}

namespace {

// the reference suite for the reverse-engineering checks: 12 well-separated
// classes give the MAD statistic enough samples to be meaningful
struct NcReference {
    MlpConfig cfg;
    Dataset train, test;
    TriggerSpec trigger;
    uint64_t seed;
};

NcReference nc_reference(uint64_t s) {
    NcReference ref;
    ref.seed = s;
    ref.cfg.input_dim = 16;
    ref.cfg.hidden_dims = {16};
    ref.cfg.num_classes = 12;
    Dataset full = gen_synthetic(12, 16, 18, 0.04, 200 + s);
    auto [tr_idx, te_idx] = stratified_split(full, 1.0 / 3.0, 200 + s);
    ref.train = subset(full, tr_idx);
    ref.test = subset(full, te_idx);
    ref.trigger.delta.assign(16, 0.0);
    ref.trigger.mask.assign(16, 0.0);
    for (int c = 0; c < 3; ++c) {
        ref.trigger.delta[static_cast<size_t>(c)] = 1.0;
        ref.trigger.mask[static_cast<size_t>(c)] = 1.0;
    }
    ref.trigger.target = 0;
    return ref;
}

double reference_asr(const NcReference& ref, const std::vector<double>& model) {
    size_t hit = 0, total = 0;
    for (const auto& e : ref.test.examples) {
        if (e.y == ref.trigger.target) continue;
        ++total;
        if (predict(model, ref.cfg, embed_trigger(e.x, ref.trigger)) == ref.trigger.target) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(total);
}

} // namespace

TEST_CASE("nc_lite does not flag a backdoor-free model") {
    for (uint64_t s = 6; s < 16; ++s) {
        NcReference ref = nc_reference(s);
        auto model = train_local(init_model(ref.cfg, s), ref.cfg, ref.train, 40, 0.2, 8, s);
        NcOptions opts;
        opts.unlearn_epochs = 0;
        NcResult r = nc_lite(model, ref.cfg, ref.train, opts, s);
        CHECK(r.flagged.empty());
    }
}

TEST_CASE("nc_lite flags and patches a patch-trigger backdoor") {
    int target_hits = 0;
    double post_asr_sum = 0.0;
    int runs = 0;
    for (uint64_t s = 6; s < 16; ++s) {
        NcReference ref = nc_reference(s);
        auto [mal, nor] = split_poison(ref.train, 0.4, ref.trigger, s);
        auto model = train_local(init_model(ref.cfg, s), ref.cfg, concat(mal, nor), 40, 0.2, 8, s);
        REQUIRE(reference_asr(ref, model) > 0.8); // the backdoor took

        NcResult r = nc_lite(model, ref.cfg, ref.train, NcOptions{}, s);
        for (int f : r.flagged)
            if (f == ref.trigger.target) ++target_hits;
        post_asr_sum += reference_asr(ref, r.patched_model);
        ++runs;
    }
    CHECK(target_hits == runs); // reverse engineering finds the patch
    CHECK(post_asr_sum / runs < 0.30);
}

TEST_CASE("defenses are deterministic given inputs and seed") {
    Rng rng(21);
    auto u = random_updates(6, 5, rng);
    CHECK(trimmed_mean(u, 1) == trimmed_mean(u, 1));
    CHECK(multi_krum(u, 1, 3).aggregate == multi_krum(u, 1, 3).aggregate);
    CHECK(dnc(u, 0.2, 5, 2, 9).aggregate == dnc(u, 0.2, 5, 2, 9).aggregate);
    CHECK(flame_lite(u, 0.001, 9).aggregate == flame_lite(u, 0.001, 9).aggregate);
}

TEST_CASE("nc_lite degenerate MAD flags nothing") {
    MlpConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden_dims = {6};
    cfg.num_classes = 3;
    Dataset clean = gen_synthetic(3, 4, 10, 0.1, 5);
    auto model = init_model(cfg, 1);
    NcOptions opts;
    opts.opt_steps = 0; // every class keeps the identical init mask, MAD = 0
    opts.unlearn_epochs = 2;
    NcResult r = nc_lite(model, cfg, clean, opts, 2);
    for (double a : r.anomaly_index) CHECK(a == 0.0);
    CHECK(r.flagged.empty());
    CHECK(r.patched_model == model); // nothing flagged, nothing unlearned
}
