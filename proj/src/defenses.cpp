#include "pfl/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "pfl/errors.hpp"
#include "pfl/rng.hpp"

namespace pfl {

namespace {

void check_equal_lengths(const std::vector<std::vector<double>>& updates) {
    if (updates.empty()) throw DimensionError("defense: no updates");
    for (const auto& u : updates)
        if (u.size() != updates[0].size()) throw DimensionError("defense: update length mismatch");
}

std::vector<double> plain_mean(const std::vector<std::vector<double>>& updates, const std::vector<int>& ids) {
    std::vector<double> out(updates[0].size(), 0.0);
    for (int id : ids)
        for (size_t i = 0; i < out.size(); ++i) out[i] += updates[static_cast<size_t>(id)][i];
    for (double& v : out) v /= static_cast<double>(ids.size());
    return out;
}

} // namespace

std::vector<double> trimmed_mean(const std::vector<std::vector<double>>& updates, int beta) {
    check_equal_lengths(updates);
    const int n = static_cast<int>(updates.size());
    if (beta < 0) throw std::invalid_argument("trimmed_mean: beta must be >= 0");
    if (n - 2 * beta < 1) throw std::invalid_argument("trimmed_mean: n - 2*beta must be >= 1");
    const size_t d = updates[0].size();
    std::vector<double> out(d, 0.0);
    std::vector<double> col(static_cast<size_t>(n));
    for (size_t j = 0; j < d; ++j) {
        for (int i = 0; i < n; ++i) col[static_cast<size_t>(i)] = updates[static_cast<size_t>(i)][j];
        std::stable_sort(col.begin(), col.end());
        double s = 0.0;
        for (int i = beta; i < n - beta; ++i) s += col[static_cast<size_t>(i)];
        out[j] = s / static_cast<double>(n - 2 * beta);
    }
    return out;
}

KrumResult multi_krum(const std::vector<std::vector<double>>& updates, int m_assumed, int k_select) {
    check_equal_lengths(updates);
    const int n = static_cast<int>(updates.size());
    const int neighbors = n - m_assumed - 2;
    if (neighbors < 1) throw std::invalid_argument("multi_krum: need n - m - 2 >= 1");
    if (k_select < 1 || k_select > n) throw std::invalid_argument("multi_krum: k_select out of range");

    std::vector<std::vector<double>> dist2(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(n), 0.0));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (size_t c = 0; c < updates[0].size(); ++c) {
                double dd = updates[static_cast<size_t>(i)][c] - updates[static_cast<size_t>(j)][c];
                s += dd * dd;
            }
            dist2[static_cast<size_t>(i)][static_cast<size_t>(j)] = s;
            dist2[static_cast<size_t>(j)][static_cast<size_t>(i)] = s;
        }

    KrumResult res;
    res.scores.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::vector<double> row;
        row.reserve(static_cast<size_t>(n) - 1);
        for (int j = 0; j < n; ++j)
            if (j != i) row.push_back(dist2[static_cast<size_t>(i)][static_cast<size_t>(j)]);
        std::sort(row.begin(), row.end());
        double s = 0.0;
        for (int k = 0; k < neighbors; ++k) s += row[static_cast<size_t>(k)];
        res.scores[static_cast<size_t>(i)] = s;
    }

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return res.scores[static_cast<size_t>(a)] < res.scores[static_cast<size_t>(b)];
    });
    res.selected.assign(order.begin(), order.begin() + k_select);
    std::sort(res.selected.begin(), res.selected.end());
    res.aggregate = plain_mean(updates, res.selected);
    return res;
}

DncResult dnc(const std::vector<std::vector<double>>& updates, double filter_frac, int subsample_dim,
              int n_iters, uint64_t seed) {
    check_equal_lengths(updates);
    const int n = static_cast<int>(updates.size());
    const size_t d = updates[0].size();
    if (filter_frac <= 0.0 || filter_frac >= 1.0) throw std::invalid_argument("dnc: filter_frac must be in (0,1)");
    if (subsample_dim < 1 || static_cast<size_t>(subsample_dim) > d)
        throw std::invalid_argument("dnc: subsample_dim must be in [1, param length]");
    if (n_iters < 1) throw std::invalid_argument("dnc: n_iters must be >= 1");

    const int n_remove = std::min(n - 1, static_cast<int>(std::llround(filter_frac * n)));
    std::set<int> kept_set;
    for (int i = 0; i < n; ++i) kept_set.insert(i);

    for (int iter = 0; iter < n_iters; ++iter) {
        Rng rng(hash_seed(seed, 0x646e63, static_cast<uint64_t>(iter)));
        std::vector<size_t> coords(d);
        std::iota(coords.begin(), coords.end(), size_t{0});
        if (static_cast<size_t>(subsample_dim) < d) {
            // partial Fisher-Yates, first subsample_dim entries
            for (int i = 0; i < subsample_dim; ++i) {
                int j = i + rng.uniform_int(static_cast<int>(d) - i);
                std::swap(coords[static_cast<size_t>(i)], coords[static_cast<size_t>(j)]);
            }
            coords.resize(static_cast<size_t>(subsample_dim));
            std::sort(coords.begin(), coords.end());
        }

        const size_t k = coords.size();
        std::vector<std::vector<double>> proj(static_cast<size_t>(n), std::vector<double>(k));
        std::vector<double> mean(k, 0.0);
        for (int i = 0; i < n; ++i)
            for (size_t c = 0; c < k; ++c) {
                proj[static_cast<size_t>(i)][c] = updates[static_cast<size_t>(i)][coords[c]];
                mean[c] += proj[static_cast<size_t>(i)][c];
            }
        for (double& m : mean) m /= static_cast<double>(n);
        for (int i = 0; i < n; ++i)
            for (size_t c = 0; c < k; ++c) proj[static_cast<size_t>(i)][c] -= mean[c];

        // top right-singular direction of the centered matrix, power iteration
        std::vector<double> v(k);
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
        double nv = l2_norm(v);
        if (nv == 0.0) v[0] = 1.0, nv = 1.0;
        for (auto& x : v) x /= nv;
        for (int step = 0; step < 100; ++step) {
            std::vector<double> bv(static_cast<size_t>(n), 0.0);
            for (int i = 0; i < n; ++i) bv[static_cast<size_t>(i)] = dot(proj[static_cast<size_t>(i)], v);
            std::vector<double> next(k, 0.0);
            for (int i = 0; i < n; ++i)
                for (size_t c = 0; c < k; ++c) next[c] += proj[static_cast<size_t>(i)][c] * bv[static_cast<size_t>(i)];
            double norm = l2_norm(next);
            if (norm == 0.0) break; // centered matrix is zero; scores all equal
            for (double& x : next) x /= norm;
            double diff = 0.0;
            for (size_t c = 0; c < k; ++c) diff += (next[c] - v[c]) * (next[c] - v[c]);
            v = std::move(next);
            if (std::sqrt(diff) <= 1e-9) break;
        }

        std::vector<double> score(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            double s = dot(proj[static_cast<size_t>(i)], v);
            score[static_cast<size_t>(i)] = s * s;
        }
        // remove the n_remove highest scores; equal scores drop the higher id
        std::vector<int> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (score[static_cast<size_t>(a)] != score[static_cast<size_t>(b)])
                return score[static_cast<size_t>(a)] > score[static_cast<size_t>(b)];
            return a > b;
        });
        for (int r = 0; r < n_remove; ++r) kept_set.erase(order[static_cast<size_t>(r)]);
    }

    if (kept_set.empty()) throw NumericError("dnc: every update was filtered out");
    DncResult res;
    res.kept.assign(kept_set.begin(), kept_set.end());
    res.aggregate = plain_mean(updates, res.kept);
    return res;
}

FlameResult flame_lite(const std::vector<std::vector<double>>& updates, double lambda_noise, uint64_t seed) {
    check_equal_lengths(updates);
    const int n = static_cast<int>(updates.size());
    if (n < 2) throw std::invalid_argument("flame_lite: need at least 2 updates");

    std::vector<double> norms(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) norms[static_cast<size_t>(i)] = l2_norm(updates[static_cast<size_t>(i)]);

    // pairwise cosine distances; zero vectors treated as distance 1 to everything
    auto cos_dist = [&](int i, int j) {
        const double ni = norms[static_cast<size_t>(i)], nj = norms[static_cast<size_t>(j)];
        if (ni == 0.0 || nj == 0.0) return (ni == 0.0 && nj == 0.0) ? 0.0 : 1.0;
        return 1.0 - dot(updates[static_cast<size_t>(i)], updates[static_cast<size_t>(j)]) / (ni * nj);
    };
    std::vector<double> all_d;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) all_d.push_back(cos_dist(i, j));
    std::sort(all_d.begin(), all_d.end());
    const double median_d = all_d.empty() ? 0.0 : (all_d.size() % 2 ? all_d[all_d.size() / 2]
                                                                    : 0.5 * (all_d[all_d.size() / 2 - 1] + all_d[all_d.size() / 2]));

    // greedy largest group with all pairwise distances <= median; seeds tried
    // in id order, members added in id order, so ties are deterministic
    std::vector<int> best;
    for (int s = 0; s < n; ++s) {
        std::vector<int> group{s};
        for (int j = 0; j < n; ++j) {
            if (j == s) continue;
            bool ok = true;
            for (int g : group)
                if (cos_dist(j, g) > median_d + 1e-12) ok = false;
            if (ok) group.push_back(j);
        }
        if (group.size() > best.size()) {
            std::sort(group.begin(), group.end());
            best = group;
        }
    }
    FlameResult res;
    if (static_cast<int>(best.size()) <= n / 2) {
        res.cluster_fallback = true;
        best.resize(static_cast<size_t>(n));
        std::iota(best.begin(), best.end(), 0);
    }
    res.kept = best;

    std::vector<double> kept_norms;
    for (int id : res.kept) kept_norms.push_back(norms[static_cast<size_t>(id)]);
    std::sort(kept_norms.begin(), kept_norms.end());
    const double med_norm = kept_norms.size() % 2 ? kept_norms[kept_norms.size() / 2]
                                                  : 0.5 * (kept_norms[kept_norms.size() / 2 - 1] + kept_norms[kept_norms.size() / 2]);

    std::vector<double> agg(updates[0].size(), 0.0);
    for (int id : res.kept) {
        const auto& u = updates[static_cast<size_t>(id)];
        const double nu = norms[static_cast<size_t>(id)];
        const double scale = (nu > med_norm && nu > 0.0) ? med_norm / nu : 1.0;
        for (size_t c = 0; c < agg.size(); ++c) agg[c] += u[c] * scale;
    }
    for (double& v : agg) v /= static_cast<double>(res.kept.size());

    res.sigma = lambda_noise * med_norm;
    if (res.sigma > 0.0) {
        Rng rng(hash_seed(seed, 0x666c616d));
        for (double& v : agg) v += res.sigma * rng.normal();
    }
    res.aggregate = std::move(agg);
    return res;
}

namespace {

double nc_objective(const std::vector<double>& model, const MlpConfig& cfg, const Tensor& x,
                    const std::vector<int>& target_labels, const std::vector<double>& delta,
                    const std::vector<double>& mask, double gamma, double* mask_l1_out) {
    GradTape tape;
    int dn = tape.leaf(Tensor::vec(delta));
    int mn = tape.leaf(Tensor::vec(mask));
    int emb = tape.soft_embed_rows(x, dn, mn);
    int logits = tape_forward_logits(tape, emb, model, cfg);
    int ce = tape.softmax_cross_entropy(logits, target_labels);
    int obj = tape.add(ce, tape.scale(tape.l1_norm(mn), gamma));
    if (mask_l1_out) {
        double l1 = 0.0;
        for (double m : mask) l1 += std::fabs(m);
        *mask_l1_out = l1;
    }
    return tape.value(obj).data[0];
}

} // namespace

NcResult nc_lite(const std::vector<double>& model, const MlpConfig& cfg, const Dataset& clean_data,
                 const NcOptions& opts, uint64_t seed) {
    if (clean_data.empty()) throw DimensionError("nc_lite: empty clean data");
    std::set<int> classes_present;
    for (const auto& e : clean_data.examples) classes_present.insert(e.y);
    if (classes_present.size() < 2) throw std::invalid_argument("nc_lite: clean data must span >= 2 classes");

    const int d = cfg.input_dim;
    const int num_classes = cfg.num_classes;
    std::vector<size_t> all_idx(clean_data.size());
    std::iota(all_idx.begin(), all_idx.end(), size_t{0});
    const Tensor x = batch_features(clean_data, all_idx);

    NcResult res;
    res.per_class.resize(static_cast<size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c) {
        std::vector<int> target_labels(clean_data.size(), c);
        std::vector<double> delta(static_cast<size_t>(d), 0.5);
        std::vector<double> mask(static_cast<size_t>(d), 0.5);

        double cur = nc_objective(model, cfg, x, target_labels, delta, mask, opts.mask_l1_gamma, nullptr);
        for (int step = 0; step < opts.opt_steps; ++step) {
            GradTape tape;
            int dn = tape.leaf(Tensor::vec(delta));
            int mn = tape.leaf(Tensor::vec(mask));
            int emb = tape.soft_embed_rows(x, dn, mn);
            int logits = tape_forward_logits(tape, emb, model, cfg);
            int ce = tape.softmax_cross_entropy(logits, target_labels);
            int obj = tape.add(ce, tape.scale(tape.l1_norm(mn), opts.mask_l1_gamma));
            tape.backward(obj);
            const Tensor& gd = tape.grad(dn);
            const Tensor& gm = tape.grad(mn);

            // projected step with halving on non-improvement
            double lr = opts.opt_lr;
            bool accepted = false;
            for (int half = 0; half <= 5 && !accepted; ++half) {
                std::vector<double> nd = delta, nm = mask;
                for (int j = 0; j < d; ++j) {
                    nd[static_cast<size_t>(j)] -= lr * gd.data[static_cast<size_t>(j)];
                    nm[static_cast<size_t>(j)] -= lr * gm.data[static_cast<size_t>(j)];
                }
                clamp01(nd);
                clamp01(nm);
                double cand = nc_objective(model, cfg, x, target_labels, nd, nm, opts.mask_l1_gamma, nullptr);
                if (cand <= cur) {
                    delta = std::move(nd);
                    mask = std::move(nm);
                    cur = cand;
                    accepted = true;
                }
                lr *= 0.5;
            }
            if (!accepted) break; // converged for this class
        }

        auto& slot = res.per_class[static_cast<size_t>(c)];
        slot.delta = delta;
        slot.soft_mask = mask;
        slot.mask_l1 = std::accumulate(mask.begin(), mask.end(), 0.0);
        slot.final_loss = cur;
    }

    // anomaly index via median absolute deviation over the mask L1 norms
    std::vector<double> l1s;
    for (const auto& pc : res.per_class) l1s.push_back(pc.mask_l1);
    std::vector<double> sorted = l1s;
    std::sort(sorted.begin(), sorted.end());
    const double med = sorted.size() % 2 ? sorted[sorted.size() / 2]
                                         : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
    std::vector<double> dev;
    for (double v : l1s) dev.push_back(std::fabs(v - med));
    std::sort(dev.begin(), dev.end());
    const double mad = dev.size() % 2 ? dev[dev.size() / 2]
                                      : 0.5 * (dev[dev.size() / 2 - 1] + dev[dev.size() / 2]);

    res.anomaly_index.assign(static_cast<size_t>(num_classes), 0.0);
    if (mad > 0.0) {
        for (int c = 0; c < num_classes; ++c) {
            res.anomaly_index[static_cast<size_t>(c)] = std::fabs(l1s[static_cast<size_t>(c)] - med) / (1.4826 * mad);
            // a reversed backdoor shows up as an abnormally SMALL mask; large
            // masks are never trigger candidates
            if (res.anomaly_index[static_cast<size_t>(c)] > opts.anomaly_threshold &&
                l1s[static_cast<size_t>(c)] < med)
                res.flagged.push_back(c);
        }
    }

    // unlearning patch: clean data plus reversed-trigger inputs relabeled to
    // their true labels
    res.patched_model = model;
    if (opts.unlearn_epochs > 0 && !res.flagged.empty()) {
        Dataset augmented = clean_data;
        for (int c : res.flagged) {
            const auto& pc = res.per_class[static_cast<size_t>(c)];
            for (const auto& e : clean_data.examples) {
                Example p;
                p.x.resize(static_cast<size_t>(d));
                for (int j = 0; j < d; ++j) {
                    const double m = pc.soft_mask[static_cast<size_t>(j)];
                    p.x[static_cast<size_t>(j)] = e.x[static_cast<size_t>(j)] * (1.0 - m) +
                                                  pc.delta[static_cast<size_t>(j)] * m;
                }
                p.y = e.y;
                augmented.examples.push_back(std::move(p));
            }
        }
        res.patched_model = sgd_train(res.patched_model, cfg, augmented, opts.unlearn_epochs,
                                      opts.unlearn_lr, opts.unlearn_batch_size,
                                      hash_seed(seed, 0x756e6c72));
    }
    return res;
}

} // namespace pfl
