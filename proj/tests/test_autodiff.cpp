#include <doctest.h>

#include <cmath>

#include "pfl/autodiff.hpp"
#include "pfl/mlp.hpp"
#include "pfl/rng.hpp"

using namespace pfl;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// naive triple-loop product, the oracle matmul is checked against
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
    Tensor c = Tensor::zeros({a.rows(), b.cols()});
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (int k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
            c.at(i, j) = s;
        }
    return c;
}

} // namespace

TEST_CASE("matmul identity and hand arithmetic") {
    Tensor id = Tensor::row_matrix(2, 2, {1, 0, 0, 1});
    Tensor m = Tensor::row_matrix(2, 2, {1, 2, 3, 4});
    CHECK(matmul_values(id, m).data == m.data);

    Tensor a = Tensor::row_matrix(1, 2, {1, 2});
    Tensor b = Tensor::row_matrix(2, 1, {3, 4});
    Tensor c = matmul_values(a, b);
    CHECK(c.data.size() == 1);
    CHECK(c.data[0] == 11.0);
}

TEST_CASE("matmul matches triple-loop oracle exactly") {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor a = random_tensor({3, 4}, rng);
        Tensor b = random_tensor({4, 2}, rng);
        Tensor got = matmul_values(a, b);
        Tensor want = matmul_oracle(a, b);
        for (size_t i = 0; i < got.data.size(); ++i) CHECK(got.data[i] == want.data[i]);
    }
}

TEST_CASE("matmul shape mismatch throws") {
    Tensor a = Tensor::row_matrix(2, 3, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::row_matrix(2, 2, {1, 2, 3, 4});
    CHECK_THROWS_AS(matmul_values(a, b), DimensionError);
}

TEST_CASE("softmax cross entropy: uniform, saturated, high-precision oracle") {
    GradTape tape;
    int logits = tape.constant(Tensor::row_matrix(1, 2, {0, 0}));
    int loss = tape.softmax_cross_entropy(logits, {0});
    CHECK(tape.value(loss).data[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    GradTape tape2;
    int big = tape2.constant(Tensor::row_matrix(1, 2, {1000.0, -1000.0}));
    int loss2 = tape2.softmax_cross_entropy(big, {0});
    CHECK(tape2.value(loss2).data[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::isfinite(tape2.value(loss2).data[0]));

    // random batch against a long-double evaluation
    Rng rng(7);
    Tensor l = random_tensor({4, 3}, rng, -2.0, 2.0);
    std::vector<int> labels = {0, 2, 1, 0};
    GradTape tape3;
    int loss3 = tape3.softmax_cross_entropy(tape3.constant(l), labels);
    long double total = 0.0L;
    for (int i = 0; i < 4; ++i) {
        long double denom = 0.0L;
        for (int j = 0; j < 3; ++j) denom += expl(static_cast<long double>(l.at(i, j)));
        total += logl(denom) - static_cast<long double>(l.at(i, labels[static_cast<size_t>(i)]));
    }
    CHECK(tape3.value(loss3).data[0] ==
          doctest::Approx(static_cast<double>(total / 4.0L)).epsilon(1e-12));
}

TEST_CASE("softmax cross entropy label range errors") {
    GradTape tape;
    int logits = tape.constant(Tensor::row_matrix(1, 3, {0, 0, 0}));
    CHECK_THROWS_AS(tape.softmax_cross_entropy(logits, {3}), IndexError);
    CHECK_THROWS_AS(tape.softmax_cross_entropy(logits, {-1}), IndexError);
}

TEST_CASE("softmax cross entropy is shift invariant per row") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + rng.uniform_int(4);
        const int c = 2 + rng.uniform_int(4);
        Tensor l = random_tensor({n, c}, rng, -3.0, 3.0);
        std::vector<int> labels;
        for (int i = 0; i < n; ++i) labels.push_back(rng.uniform_int(c));

        Tensor shifted = l;
        for (int i = 0; i < n; ++i) {
            const double s = rng.uniform(-5.0, 5.0);
            for (int j = 0; j < c; ++j) shifted.at(i, j) += s;
        }
        GradTape t1, t2;
        double a = t1.value(t1.softmax_cross_entropy(t1.constant(l), labels)).data[0];
        double b = t2.value(t2.softmax_cross_entropy(t2.constant(shifted), labels)).data[0];
        CHECK(std::fabs(a - b) <= 1e-9);
    }
}

TEST_CASE("backward: square, constant, and tape reuse") {
    // f(x) = x^2 via a 1x1 matmul, gradient at x=3 is 6
    GradTape t2;
    int xv = t2.leaf(Tensor::row_matrix(1, 1, {3.0}));
    int sq = t2.matmul(xv, xv);
    t2.backward(sq);
    CHECK(t2.grad(xv).data[0] == doctest::Approx(6.0).epsilon(1e-12));
    CHECK_THROWS_AS(t2.backward(sq), TapeError); // documented: second backward is rejected

    GradTape t3;
    int c = t3.leaf(Tensor::scalar(5.0));
    int k = t3.constant(Tensor::scalar(7.0));
    t3.backward(k);
    CHECK(t3.grad(c).data[0] == 0.0);
}

TEST_CASE("backward on detached node throws") {
    GradTape tape;
    CHECK_THROWS_AS(tape.backward(0), TapeError);
    int a = tape.leaf(Tensor::row_matrix(1, 2, {1, 2}));
    CHECK_THROWS_AS(tape.backward(a), TapeError); // not a scalar
}

TEST_CASE("mlp gradient matches central finite differences") {
    Rng rng(123);
    MlpConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden_dims = {5};
    cfg.num_classes = 3;
    std::vector<double> params(param_count(cfg));
    for (double& p : params) p = rng.uniform(-1.0, 1.0);

    Dataset batch;
    batch.num_classes = 3;
    for (int i = 0; i < 4; ++i) {
        Example e;
        for (int j = 0; j < 3; ++j) e.x.push_back(rng.uniform());
        e.y = rng.uniform_int(3);
        batch.examples.push_back(e);
    }

    LossGrad lg = loss_and_grad(params, cfg, batch);
    auto f = [&](const std::vector<double>& p) { return loss_and_grad(p, cfg, batch).loss; };
    std::vector<double> fd = finite_diff_grad(f, params, 1e-5);
    for (size_t i = 0; i < params.size(); ++i) {
        const double denom = std::max(std::fabs(fd[i]), 1e-6);
        CHECK(std::fabs(lg.grad[i] - fd[i]) / denom <= 1e-4);
    }
}

TEST_CASE("finite_diff_grad analytic cases") {
    auto sum = [](const std::vector<double>& x) {
        double s = 0.0;
        for (double v : x) s += v;
        return s;
    };
    std::vector<double> g = finite_diff_grad(sum, {0.3, -0.7, 2.0}, 1e-5);
    for (double v : g) CHECK(std::fabs(v - 1.0) <= 1e-9);

    auto sq = [](const std::vector<double>& x) { return x[0] * x[0] + x[1] * x[1]; };
    std::vector<double> g2 = finite_diff_grad(sq, {1.0, 2.0}, 1e-5);
    CHECK(std::fabs(g2[0] - 2.0) <= 1e-6);
    CHECK(std::fabs(g2[1] - 4.0) <= 1e-6);

    CHECK_THROWS(finite_diff_grad(sum, {1.0}, 0.0));
    auto bad = [](const std::vector<double>&) { return std::numeric_limits<double>::infinity(); };
    CHECK_THROWS_AS(finite_diff_grad(bad, {1.0}, 1e-5), NumericError);
}

TEST_CASE("ops are deterministic") {
    Rng rng(55);
    Tensor a = random_tensor({4, 4}, rng);
    Tensor b = random_tensor({4, 4}, rng);
    Tensor c1 = matmul_values(a, b);
    Tensor c2 = matmul_values(a, b);
    CHECK(c1.data == c2.data);

    MlpConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden_dims = {6};
    cfg.num_classes = 2;
    std::vector<double> params(param_count(cfg));
    for (double& p : params) p = rng.uniform(-1.0, 1.0);
    Dataset batch;
    batch.num_classes = 2;
    Example e;
    e.x = {0.1, 0.9, 0.4, 0.2};
    e.y = 1;
    batch.examples.push_back(e);
    LossGrad g1 = loss_and_grad(params, cfg, batch);
    LossGrad g2 = loss_and_grad(params, cfg, batch);
    CHECK(g1.loss == g2.loss);
    CHECK(g1.grad == g2.grad);
}

TEST_CASE("tape forward equals plain forward bit for bit") {
    Rng rng(77);
    MlpConfig cfg;
    cfg.input_dim = 5;
    cfg.hidden_dims = {7, 4};
    cfg.num_classes = 3;
    std::vector<double> params(param_count(cfg));
    for (double& p : params) p = rng.uniform(-1.0, 1.0);
    Tensor x = random_tensor({6, 5}, rng, 0.0, 1.0);

    Tensor plain = forward_logits(params, cfg, x);
    GradTape tape;
    int logits = tape_forward_logits(tape, tape.constant(x), params, cfg);
    CHECK(tape.value(logits).data == plain.data);
}
