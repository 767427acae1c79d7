#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "pfl/autodiff.hpp"
#include "pfl/data.hpp"
#include "pfl/tensor.hpp"

namespace pfl {

/// Fully connected ReLU classifier. The last layer is linear (logits).
struct MlpConfig {
    int input_dim = 0;
    std::vector<int> hidden_dims;
    int num_classes = 0;

    void validate() const;
    int num_layers() const { return static_cast<int>(hidden_dims.size()) + 1; }
};

/// Deterministic layer-major flattening: W0, b0, W1, b1, ... with W stored
/// row-major as (in x out). The layout is a pure function of the config, so
/// two models with the same config have coordinate-comparable flat vectors.
struct ParamLayout {
    struct Layer {
        int in = 0, out = 0;
        size_t w_offset = 0, b_offset = 0;
    };
    std::vector<Layer> layers;
    size_t total = 0;

    explicit ParamLayout(const MlpConfig& cfg);
};

size_t param_count(const MlpConfig& cfg);

std::vector<double> init_model(const MlpConfig& cfg, uint64_t seed);

// Per-layer (W, b) views of a flat vector and back. Round-trips exactly.
std::vector<std::pair<Tensor, Tensor>> unflatten(const MlpConfig& cfg, const std::vector<double>& flat);
std::vector<double> flatten(const MlpConfig& cfg, const std::vector<std::pair<Tensor, Tensor>>& layers);

Tensor batch_features(const Dataset& data, const std::vector<size_t>& idx);
std::vector<int> batch_labels(const Dataset& data, const std::vector<size_t>& idx);

Tensor forward_logits(const std::vector<double>& params, const MlpConfig& cfg, const Tensor& x);

/// Continues a tape from an already-built input node; params enter the tape
/// as constants (set `params_as_leaves` when their gradient is needed) and
/// the created leaf ids are appended to `param_nodes` when non-null.
int tape_forward_logits(GradTape& tape, int x_node, const std::vector<double>& params,
                        const MlpConfig& cfg, bool params_as_leaves = false,
                        std::vector<int>* param_nodes = nullptr);

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

LossGrad loss_and_grad(const std::vector<double>& params, const MlpConfig& cfg, const Dataset& batch);
LossGrad loss_and_grad(const std::vector<double>& params, const MlpConfig& cfg, const Tensor& x,
                       const std::vector<int>& labels);

double mean_loss(const std::vector<double>& params, const MlpConfig& cfg, const Dataset& data);

int predict(const std::vector<double>& params, const MlpConfig& cfg, const std::vector<double>& features);

/// Knobs the training loop honors on every step. `trainable`, when set,
/// zeroes gradient coordinates outside the mask (FedRep phases, Neurotoxin).
/// `after_epoch` runs once per epoch on the current parameters (PGD ball
/// projection).
struct SgdHooks {
    const std::vector<double>* prox_center = nullptr;
    double prox_mu = 0.0;
    const std::vector<double>* grad_offset = nullptr;
    const std::vector<uint8_t>* trainable = nullptr;
    std::function<void(std::vector<double>&)> after_epoch;
};

int num_batches(size_t n, int batch_size);

/// Mini-batch SGD; per-epoch shuffle stream is hash(seed, epoch), so results
/// do not depend on how work is scheduled across clients.
std::vector<double> sgd_train(std::vector<double> params, const MlpConfig& cfg, const Dataset& data,
                              int epochs, double lr, int batch_size, uint64_t seed,
                              const SgdHooks& hooks = {});

struct ProxSpec {
    std::vector<double> center;
    double mu = 0.0;
};

std::vector<double> train_local(std::vector<double> params, const MlpConfig& cfg, const Dataset& data,
                                int epochs, double lr, int batch_size, uint64_t seed,
                                const ProxSpec* prox = nullptr);

} // namespace pfl
