#include "pfl/autodiff.hpp"

#include <cmath>
#include <string>

namespace pfl {

int GradTape::push(Tensor value, std::function<void(GradTape&)> back) {
    Node n;
    n.grad = Tensor::zeros(value.shape);
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

void GradTape::check_id(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
        throw TapeError("node id " + std::to_string(id) + " is not on this tape");
}

int GradTape::leaf(Tensor value) { return push(std::move(value), nullptr); }

const Tensor& GradTape::value(int id) const {
    check_id(id);
    return nodes_[static_cast<size_t>(id)].value;
}

const Tensor& GradTape::grad(int id) const {
    check_id(id);
    return nodes_[static_cast<size_t>(id)].grad;
}

int GradTape::matmul(int a, int b) {
    check_id(a);
    check_id(b);
    Tensor c = matmul_values(node(a).value, node(b).value);
    int out = push(std::move(c), nullptr);
    node(out).back = [a, b, out](GradTape& t) {
        const Tensor& ga = t.node(a).value;
        const Tensor& gb = t.node(b).value;
        const Tensor& gc = t.node(out).grad;
        Tensor& da = t.node(a).grad;
        Tensor& db = t.node(b).grad;
        const int n = ga.rows(), k = ga.cols(), m = gb.cols();
        // dA += dC * B^T ; dB += A^T * dC
        for (int i = 0; i < n; ++i)
            for (int p = 0; p < k; ++p) {
                double s = 0.0;
                for (int j = 0; j < m; ++j) s += gc.at(i, j) * gb.at(p, j);
                da.at(i, p) += s;
            }
        for (int p = 0; p < k; ++p)
            for (int j = 0; j < m; ++j) {
                double s = 0.0;
                for (int i = 0; i < n; ++i) s += ga.at(i, p) * gc.at(i, j);
                db.at(p, j) += s;
            }
    };
    return out;
}

int GradTape::add_rowvec(int x, int bias) {
    check_id(x);
    check_id(bias);
    const Tensor& xv = node(x).value;
    const Tensor& bv = node(bias).value;
    if (bv.shape.size() != 1 || xv.shape.size() != 2 || xv.cols() != bv.shape[0])
        throw DimensionError("add_rowvec: bias length must equal matrix columns");
    Tensor out = xv;
    const int n = xv.rows(), m = xv.cols();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out.at(i, j) += bv.data[static_cast<size_t>(j)];
    int id = push(std::move(out), nullptr);
    node(id).back = [x, bias, id](GradTape& t) {
        const Tensor& g = t.node(id).grad;
        Tensor& dx = t.node(x).grad;
        Tensor& db = t.node(bias).grad;
        const int n = g.rows(), m = g.cols();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) {
                dx.at(i, j) += g.at(i, j);
                db.data[static_cast<size_t>(j)] += g.at(i, j);
            }
    };
    return id;
}

int GradTape::relu(int x) {
    check_id(x);
    Tensor out = node(x).value;
    for (double& d : out.data)
        if (d < 0.0) d = 0.0;
    int id = push(std::move(out), nullptr);
    node(id).back = [x, id](GradTape& t) {
        const Tensor& g = t.node(id).grad;
        const Tensor& xv = t.node(x).value;
        Tensor& dx = t.node(x).grad;
        for (size_t i = 0; i < g.data.size(); ++i)
            if (xv.data[i] > 0.0) dx.data[i] += g.data[i];
    };
    return id;
}

int GradTape::add(int a, int b) {
    check_id(a);
    check_id(b);
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    if (!av.same_shape(bv)) throw DimensionError("add: shape mismatch");
    Tensor out = av;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
    int id = push(std::move(out), nullptr);
    node(id).back = [a, b, id](GradTape& t) {
        const Tensor& g = t.node(id).grad;
        Tensor& da = t.node(a).grad;
        Tensor& db = t.node(b).grad;
        for (size_t i = 0; i < g.data.size(); ++i) {
            da.data[i] += g.data[i];
            db.data[i] += g.data[i];
        }
    };
    return id;
}

int GradTape::scale(int a, double c) {
    check_id(a);
    Tensor out = node(a).value;
    for (double& d : out.data) d *= c;
    int id = push(std::move(out), nullptr);
    node(id).back = [a, c, id](GradTape& t) {
        const Tensor& g = t.node(id).grad;
        Tensor& da = t.node(a).grad;
        for (size_t i = 0; i < g.data.size(); ++i) da.data[i] += c * g.data[i];
    };
    return id;
}

int GradTape::l1_norm(int a) {
    check_id(a);
    double s = 0.0;
    for (double d : node(a).value.data) s += std::fabs(d);
    int id = push(Tensor::scalar(s), nullptr);
    node(id).back = [a, id](GradTape& t) {
        const double g = t.node(id).grad.data[0];
        const Tensor& av = t.node(a).value;
        Tensor& da = t.node(a).grad;
        for (size_t i = 0; i < av.data.size(); ++i) {
            if (av.data[i] > 0.0) da.data[i] += g;
            else if (av.data[i] < 0.0) da.data[i] -= g;
            // subgradient 0 at exactly 0
        }
    };
    return id;
}

int GradTape::softmax_cross_entropy(int logits, const std::vector<int>& labels) {
    check_id(logits);
    const Tensor& lv = node(logits).value;
    if (lv.shape.size() != 2) throw DimensionError("softmax_cross_entropy: logits must be rank 2");
    const int n = lv.rows(), c = lv.cols();
    if (static_cast<int>(labels.size()) != n)
        throw DimensionError("softmax_cross_entropy: one label per row required");
    for (int y : labels)
        if (y < 0 || y >= c) throw IndexError("label " + std::to_string(y) + " out of range [0," + std::to_string(c) + ")");

    Tensor probs = Tensor::zeros({n, c});
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double mx = lv.at(i, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, lv.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < c; ++j) sum += std::exp(lv.at(i, j) - mx);
        const double lse = mx + std::log(sum);
        for (int j = 0; j < c; ++j) probs.at(i, j) = std::exp(lv.at(i, j) - lse);
        total += lse - lv.at(i, labels[static_cast<size_t>(i)]);
    }
    int id = push(Tensor::scalar(total / n), nullptr);
    node(id).back = [logits, id, labels, probs, n](GradTape& t) {
        const double g = t.node(id).grad.data[0];
        Tensor& dl = t.node(logits).grad;
        const int c = dl.cols();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) {
                double ind = (j == labels[static_cast<size_t>(i)]) ? 1.0 : 0.0;
                dl.at(i, j) += g * (probs.at(i, j) - ind) / n;
            }
    };
    return id;
}

int GradTape::embed_rows(const Tensor& x, int delta, const std::vector<double>& mask) {
    check_id(delta);
    const Tensor& dv = node(delta).value;
    if (x.shape.size() != 2) throw DimensionError("embed_rows: x must be rank 2");
    const int n = x.rows(), d = x.cols();
    if (dv.shape.size() != 1 || dv.shape[0] != d || static_cast<int>(mask.size()) != d)
        throw DimensionError("embed_rows: delta/mask length must equal feature dim");
    Tensor out = Tensor::zeros({n, d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            const double m = mask[static_cast<size_t>(j)];
            out.at(i, j) = x.at(i, j) * (1.0 - m) + dv.data[static_cast<size_t>(j)] * m;
        }
    int id = push(std::move(out), nullptr);
    node(id).back = [delta, id, mask, n, d](GradTape& t) {
        const Tensor& g = t.node(id).grad;
        Tensor& dd = t.node(delta).grad;
        for (int j = 0; j < d; ++j) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += g.at(i, j);
            dd.data[static_cast<size_t>(j)] += s * mask[static_cast<size_t>(j)];
        }
    };
    return id;
}

int GradTape::soft_embed_rows(const Tensor& x, int delta, int mask) {
    check_id(delta);
    check_id(mask);
    const Tensor& dv = node(delta).value;
    const Tensor& mv = node(mask).value;
    if (x.shape.size() != 2) throw DimensionError("soft_embed_rows: x must be rank 2");
    const int n = x.rows(), d = x.cols();
    if (dv.shape.size() != 1 || dv.shape[0] != d || mv.shape.size() != 1 || mv.shape[0] != d)
        throw DimensionError("soft_embed_rows: delta/mask length must equal feature dim");
    Tensor out = Tensor::zeros({n, d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            const double m = mv.data[static_cast<size_t>(j)];
            out.at(i, j) = x.at(i, j) * (1.0 - m) + dv.data[static_cast<size_t>(j)] * m;
        }
    Tensor xc = x; // keep a copy for backward
    int id = push(std::move(out), nullptr);
    node(id).back = [delta, mask, id, xc, n, d](GradTape& t) {
        const Tensor& g = t.node(id).grad;
        const Tensor& dv = t.node(delta).value;
        const Tensor& mv = t.node(mask).value;
        Tensor& dd = t.node(delta).grad;
        Tensor& dm = t.node(mask).grad;
        for (int j = 0; j < d; ++j) {
            double sd = 0.0, sm = 0.0;
            for (int i = 0; i < n; ++i) {
                sd += g.at(i, j);
                sm += g.at(i, j) * (dv.data[static_cast<size_t>(j)] - xc.at(i, j));
            }
            dd.data[static_cast<size_t>(j)] += sd * mv.data[static_cast<size_t>(j)];
            dm.data[static_cast<size_t>(j)] += sm;
        }
    };
    return id;
}

void GradTape::backward(int scalar_node) {
    check_id(scalar_node);
    if (backward_done_)
        throw TapeError("backward already ran on this tape; build a new tape");
    if (node(scalar_node).value.size() != 1)
        throw TapeError("backward requires a scalar output node");
    backward_done_ = true;
    node(scalar_node).grad.data[0] = 1.0;
    for (int id = scalar_node; id >= 0; --id) {
        auto& n = nodes_[static_cast<size_t>(id)];
        if (n.back) n.back(*this);
    }
}

std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> x, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("finite_diff_grad: eps must be > 0");
    std::vector<double> g(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + eps;
        const double fp = f(x);
        x[i] = orig - eps;
        const double fm = f(x);
        x[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("finite_diff_grad: function evaluated to a non-finite value");
        g[i] = (fp - fm) / (2.0 * eps);
    }
    return g;
}

} // namespace pfl
