#pragma once

#include <cstdint>
#include <vector>

#include "pfl/data.hpp"
#include "pfl/mlp.hpp"

namespace pfl {

/// Coordinate-wise: sort the n values, drop the beta largest and beta
/// smallest, average the rest. Sorting is stable on duplicates.
std::vector<double> trimmed_mean(const std::vector<std::vector<double>>& updates, int beta);

struct KrumResult {
    std::vector<int> selected; // indices into the update list, ascending
    std::vector<double> aggregate;
    std::vector<double> scores;
};

/// Score(i) = sum of squared L2 distances to the n-m-2 nearest neighbours
/// (self excluded); the k_select lowest scores win, ties to the lower index.
KrumResult multi_krum(const std::vector<std::vector<double>>& updates, int m_assumed, int k_select);

struct DncResult {
    std::vector<int> kept;
    std::vector<double> aggregate;
};

DncResult dnc(const std::vector<std::vector<double>>& updates, double filter_frac, int subsample_dim,
              int n_iters, uint64_t seed);

struct FlameResult {
    std::vector<int> kept;
    std::vector<double> aggregate;
    double sigma = 0.0;
    bool cluster_fallback = false; // degenerate grouping kept everyone
};

/// Median-cosine grouping, clip to the median norm, average, add Gaussian
/// noise with sigma = lambda_noise * median norm.
FlameResult flame_lite(const std::vector<std::vector<double>>& updates, double lambda_noise, uint64_t seed);

struct NcClassResult {
    std::vector<double> delta;
    std::vector<double> soft_mask; // in [0,1]^d, L1 drives the anomaly index
    double mask_l1 = 0.0;
    double final_loss = 0.0;
};

struct NcResult {
    std::vector<NcClassResult> per_class;
    std::vector<double> anomaly_index;
    std::vector<int> flagged;
    std::vector<double> patched_model;
};

struct NcOptions {
    int opt_steps = 300;
    int unlearn_epochs = 4;
    double mask_l1_gamma = 0.01;
    double opt_lr = 0.3;
    double unlearn_lr = 0.1;
    int unlearn_batch_size = 8;
    double anomaly_threshold = 2.0;
};

/// Neural-Cleanse style trigger reverse engineering plus unlearning patch.
NcResult nc_lite(const std::vector<double>& model, const MlpConfig& cfg, const Dataset& clean_data,
                 const NcOptions& opts, uint64_t seed);

} // namespace pfl
