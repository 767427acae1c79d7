#include "pfl/tensor.hpp"

#include <cmath>
#include <string>

namespace pfl {

size_t shape_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor dimensions must be positive");
        n *= static_cast<size_t>(d);
    }
    return n;
}

Tensor::Tensor(std::vector<int> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size())
        throw DimensionError("tensor shape does not match data length");
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::zeros(std::vector<int> s) {
    size_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::row_matrix(int rows, int cols, std::vector<double> d) {
    return Tensor({rows, cols}, std::move(d));
}

Tensor Tensor::vec(std::vector<double> d) {
    int n = static_cast<int>(d.size());
    return Tensor({n}, std::move(d));
}

int Tensor::rows() const {
    if (shape.size() != 2) throw DimensionError("rows(): tensor is not rank 2");
    return shape[0];
}

int Tensor::cols() const {
    if (shape.size() != 2) throw DimensionError("cols(): tensor is not rank 2");
    return shape[1];
}

double& Tensor::at(int i, int j) {
    return data[static_cast<size_t>(i) * static_cast<size_t>(cols()) + static_cast<size_t>(j)];
}

double Tensor::at(int i, int j) const {
    return data[static_cast<size_t>(i) * static_cast<size_t>(cols()) + static_cast<size_t>(j)];
}

Tensor matmul_values(const Tensor& a, const Tensor& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2)
        throw DimensionError("matmul: both operands must be rank 2");
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                             " vs " + std::to_string(b.rows()) + ")");
    const int n = a.rows(), k = a.cols(), m = b.cols();
    Tensor c = Tensor::zeros({n, m});
    for (int i = 0; i < n; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = a.at(i, p);
            for (int j = 0; j < m; ++j) c.at(i, j) += av * b.at(p, j);
        }
    }
    return c;
}

bool all_finite(const std::vector<double>& v) {
    for (double d : v)
        if (!std::isfinite(d)) return false;
    return true;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(const std::vector<double>& v) { return std::sqrt(dot(v, v)); }

double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DimensionError("l2_distance: length mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y) {
    if (x.size() != y.size()) throw DimensionError("axpy: length mismatch");
    for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

std::vector<double> vec_sub(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DimensionError("vec_sub: length mismatch");
    std::vector<double> r(a.size());
    for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

std::vector<double> vec_add(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DimensionError("vec_add: length mismatch");
    std::vector<double> r(a.size());
    for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

std::vector<double> vec_scale(const std::vector<double>& a, double s) {
    std::vector<double> r(a.size());
    for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] * s;
    return r;
}

void clamp01(std::vector<double>& v) {
    for (double& d : v) {
        if (d < 0.0) d = 0.0;
        if (d > 1.0) d = 1.0;
    }
}

} // namespace pfl
