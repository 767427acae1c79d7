#include "pfl/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pfl/errors.hpp"
#include "pfl/rng.hpp"

namespace pfl {

void MlpConfig::validate() const {
    if (input_dim < 1) throw DimensionError("model input_dim must be positive");
    if (num_classes < 2) throw DimensionError("model num_classes must be >= 2");
    for (int h : hidden_dims)
        if (h < 1) throw DimensionError("hidden layer sizes must be positive");
}

ParamLayout::ParamLayout(const MlpConfig& cfg) {
    cfg.validate();
    std::vector<int> dims;
    dims.push_back(cfg.input_dim);
    for (int h : cfg.hidden_dims) dims.push_back(h);
    dims.push_back(cfg.num_classes);
    size_t off = 0;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        Layer layer;
        layer.in = dims[l];
        layer.out = dims[l + 1];
        layer.w_offset = off;
        off += static_cast<size_t>(layer.in) * static_cast<size_t>(layer.out);
        layer.b_offset = off;
        off += static_cast<size_t>(layer.out);
        layers.push_back(layer);
    }
    total = off;
}

size_t param_count(const MlpConfig& cfg) { return ParamLayout(cfg).total; }

std::vector<double> init_model(const MlpConfig& cfg, uint64_t seed) {
    ParamLayout layout(cfg);
    std::vector<double> flat(layout.total, 0.0);
    for (size_t l = 0; l < layout.layers.size(); ++l) {
        const auto& layer = layout.layers[l];
        Rng rng(hash_seed(seed, 0x696e6974, l));
        const double bound = std::sqrt(6.0 / static_cast<double>(layer.in));
        const size_t nw = static_cast<size_t>(layer.in) * static_cast<size_t>(layer.out);
        for (size_t i = 0; i < nw; ++i) flat[layer.w_offset + i] = rng.uniform(-bound, bound);
        // biases start at zero
    }
    return flat;
}

std::vector<std::pair<Tensor, Tensor>> unflatten(const MlpConfig& cfg, const std::vector<double>& flat) {
    ParamLayout layout(cfg);
    if (flat.size() != layout.total) throw DimensionError("unflatten: parameter vector length mismatch");
    std::vector<std::pair<Tensor, Tensor>> out;
    for (const auto& layer : layout.layers) {
        const size_t nw = static_cast<size_t>(layer.in) * static_cast<size_t>(layer.out);
        Tensor w({layer.in, layer.out},
                 std::vector<double>(flat.begin() + static_cast<long>(layer.w_offset),
                                     flat.begin() + static_cast<long>(layer.w_offset + nw)));
        Tensor b({layer.out},
                 std::vector<double>(flat.begin() + static_cast<long>(layer.b_offset),
                                     flat.begin() + static_cast<long>(layer.b_offset + layer.out)));
        out.emplace_back(std::move(w), std::move(b));
    }
    return out;
}

std::vector<double> flatten(const MlpConfig& cfg, const std::vector<std::pair<Tensor, Tensor>>& layers) {
    ParamLayout layout(cfg);
    if (layers.size() != layout.layers.size()) throw DimensionError("flatten: layer count mismatch");
    std::vector<double> flat(layout.total, 0.0);
    for (size_t l = 0; l < layers.size(); ++l) {
        const auto& spec = layout.layers[l];
        const auto& [w, b] = layers[l];
        if (w.shape != std::vector<int>{spec.in, spec.out} || b.shape != std::vector<int>{spec.out})
            throw DimensionError("flatten: layer shape mismatch");
        std::copy(w.data.begin(), w.data.end(), flat.begin() + static_cast<long>(spec.w_offset));
        std::copy(b.data.begin(), b.data.end(), flat.begin() + static_cast<long>(spec.b_offset));
    }
    return flat;
}

Tensor batch_features(const Dataset& data, const std::vector<size_t>& idx) {
    if (idx.empty()) throw DimensionError("batch_features: empty batch");
    const int d = data.dim();
    Tensor x = Tensor::zeros({static_cast<int>(idx.size()), d});
    for (size_t r = 0; r < idx.size(); ++r) {
        const auto& e = data.examples[idx[r]];
        if (static_cast<int>(e.x.size()) != d) throw DimensionError("batch_features: ragged example");
        for (int j = 0; j < d; ++j) x.at(static_cast<int>(r), j) = e.x[static_cast<size_t>(j)];
    }
    return x;
}

std::vector<int> batch_labels(const Dataset& data, const std::vector<size_t>& idx) {
    std::vector<int> y(idx.size());
    for (size_t r = 0; r < idx.size(); ++r) y[r] = data.examples[idx[r]].y;
    return y;
}

Tensor forward_logits(const std::vector<double>& params, const MlpConfig& cfg, const Tensor& x) {
    if (x.shape.size() != 2 || x.cols() != cfg.input_dim)
        throw DimensionError("forward: feature dimension does not match model input");
    auto layers = unflatten(cfg, params);
    Tensor h = x;
    for (size_t l = 0; l < layers.size(); ++l) {
        Tensor z = matmul_values(h, layers[l].first);
        const int n = z.rows(), m = z.cols();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) z.at(i, j) += layers[l].second.data[static_cast<size_t>(j)];
        if (l + 1 < layers.size())
            for (double& v : z.data)
                if (v < 0.0) v = 0.0;
        h = std::move(z);
    }
    return h;
}

int tape_forward_logits(GradTape& tape, int x_node, const std::vector<double>& params,
                        const MlpConfig& cfg, bool params_as_leaves, std::vector<int>* param_nodes) {
    auto layers = unflatten(cfg, params);
    int h = x_node;
    for (size_t l = 0; l < layers.size(); ++l) {
        int w = tape.leaf(std::move(layers[l].first));
        int b = tape.leaf(std::move(layers[l].second));
        if (params_as_leaves && param_nodes) {
            param_nodes->push_back(w);
            param_nodes->push_back(b);
        }
        int z = tape.add_rowvec(tape.matmul(h, w), b);
        h = (l + 1 < layers.size()) ? tape.relu(z) : z;
    }
    return h;
}

LossGrad loss_and_grad(const std::vector<double>& params, const MlpConfig& cfg, const Tensor& x,
                       const std::vector<int>& labels) {
    GradTape tape;
    int xn = tape.constant(x);
    std::vector<int> param_nodes;
    int logits = tape_forward_logits(tape, xn, params, cfg, true, &param_nodes);
    int loss = tape.softmax_cross_entropy(logits, labels);
    tape.backward(loss);

    LossGrad out;
    out.loss = tape.value(loss).data[0];
    out.grad.assign(params.size(), 0.0);
    ParamLayout layout(cfg);
    for (size_t l = 0; l < layout.layers.size(); ++l) {
        const auto& spec = layout.layers[l];
        const Tensor& gw = tape.grad(param_nodes[2 * l]);
        const Tensor& gb = tape.grad(param_nodes[2 * l + 1]);
        std::copy(gw.data.begin(), gw.data.end(), out.grad.begin() + static_cast<long>(spec.w_offset));
        std::copy(gb.data.begin(), gb.data.end(), out.grad.begin() + static_cast<long>(spec.b_offset));
    }
    return out;
}

LossGrad loss_and_grad(const std::vector<double>& params, const MlpConfig& cfg, const Dataset& batch) {
    if (batch.empty()) throw DimensionError("loss_and_grad: empty batch");
    std::vector<size_t> idx(batch.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    return loss_and_grad(params, cfg, batch_features(batch, idx), batch_labels(batch, idx));
}

double mean_loss(const std::vector<double>& params, const MlpConfig& cfg, const Dataset& data) {
    if (data.empty()) throw DimensionError("mean_loss: empty dataset");
    std::vector<size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    Tensor logits = forward_logits(params, cfg, batch_features(data, idx));
    const auto labels = batch_labels(data, idx);
    double total = 0.0;
    const int n = logits.rows(), c = logits.cols();
    for (int i = 0; i < n; ++i) {
        double mx = logits.at(i, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, logits.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < c; ++j) sum += std::exp(logits.at(i, j) - mx);
        total += mx + std::log(sum) - logits.at(i, labels[static_cast<size_t>(i)]);
    }
    return total / n;
}

int predict(const std::vector<double>& params, const MlpConfig& cfg, const std::vector<double>& features) {
    if (static_cast<int>(features.size()) != cfg.input_dim)
        throw DimensionError("predict: feature dimension mismatch");
    Tensor x({1, cfg.input_dim}, features);
    Tensor logits = forward_logits(params, cfg, x);
    int best = 0;
    // ties break toward the smallest class index
    for (int j = 1; j < logits.cols(); ++j)
        if (logits.at(0, j) > logits.at(0, best)) best = j;
    return best;
}

int num_batches(size_t n, int batch_size) {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    return static_cast<int>((n + static_cast<size_t>(batch_size) - 1) / static_cast<size_t>(batch_size));
}

std::vector<double> sgd_train(std::vector<double> params, const MlpConfig& cfg, const Dataset& data,
                              int epochs, double lr, int batch_size, uint64_t seed,
                              const SgdHooks& hooks) {
    if (epochs < 0) throw std::invalid_argument("sgd_train: epochs must be >= 0");
    if (lr < 0.0) throw std::invalid_argument("sgd_train: lr must be >= 0");
    if (epochs == 0 || lr == 0.0) return params;
    if (data.empty()) throw DimensionError("sgd_train: empty dataset with epochs > 0");
    if (hooks.prox_center && hooks.prox_center->size() != params.size())
        throw DimensionError("sgd_train: prox center length mismatch");
    if (hooks.grad_offset && hooks.grad_offset->size() != params.size())
        throw DimensionError("sgd_train: gradient offset length mismatch");
    if (hooks.trainable && hooks.trainable->size() != params.size())
        throw DimensionError("sgd_train: trainable mask length mismatch");

    const size_t n = data.size();
    std::vector<size_t> order(n);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::iota(order.begin(), order.end(), size_t{0});
        Rng rng(hash_seed(seed, 0x65706f63, static_cast<uint64_t>(epoch)));
        rng.shuffle(order);
        for (size_t start = 0; start < n; start += static_cast<size_t>(batch_size)) {
            const size_t end = std::min(n, start + static_cast<size_t>(batch_size));
            std::vector<size_t> idx(order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(end));
            LossGrad lg = loss_and_grad(params, cfg, batch_features(data, idx), batch_labels(data, idx));
            if (hooks.prox_mu != 0.0 && hooks.prox_center)
                for (size_t i = 0; i < params.size(); ++i)
                    lg.grad[i] += hooks.prox_mu * (params[i] - (*hooks.prox_center)[i]);
            if (hooks.grad_offset)
                for (size_t i = 0; i < params.size(); ++i) lg.grad[i] += (*hooks.grad_offset)[i];
            if (hooks.trainable)
                for (size_t i = 0; i < params.size(); ++i)
                    if (!(*hooks.trainable)[i]) lg.grad[i] = 0.0;
            for (size_t i = 0; i < params.size(); ++i) params[i] -= lr * lg.grad[i];
        }
        if (hooks.after_epoch) hooks.after_epoch(params);
    }
    return params;
}

std::vector<double> train_local(std::vector<double> params, const MlpConfig& cfg, const Dataset& data,
                                int epochs, double lr, int batch_size, uint64_t seed,
                                const ProxSpec* prox) {
    SgdHooks hooks;
    if (prox) {
        hooks.prox_center = &prox->center;
        hooks.prox_mu = prox->mu;
    }
    return sgd_train(std::move(params), cfg, data, epochs, lr, batch_size, seed, hooks);
}

} // namespace pfl
