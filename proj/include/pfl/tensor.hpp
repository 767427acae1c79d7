#pragma once

#include <cstddef>
#include <vector>

#include "pfl/errors.hpp"

namespace pfl {

/// Dense row-major tensor of 64-bit floats. Rank 0 (scalar), 1 and 2 are the
/// only ranks the simulator needs.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d);

    static Tensor scalar(double v);
    static Tensor zeros(std::vector<int> s);
    static Tensor row_matrix(int rows, int cols, std::vector<double> d);
    static Tensor vec(std::vector<double> d);

    size_t size() const { return data.size(); }
    int rows() const;
    int cols() const;

    double& at(int i, int j);
    double at(int i, int j) const;

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

size_t shape_numel(const std::vector<int>& shape);

// c[n x m] = a[n x k] * b[k x m]; throws DimensionError on mismatch.
Tensor matmul_values(const Tensor& a, const Tensor& b);

bool all_finite(const std::vector<double>& v);

// Small flat-vector helpers shared across the engine.
double dot(const std::vector<double>& a, const std::vector<double>& b);
double l2_norm(const std::vector<double>& v);
double l2_distance(const std::vector<double>& a, const std::vector<double>& b);
void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y);
std::vector<double> vec_sub(const std::vector<double>& a, const std::vector<double>& b);
std::vector<double> vec_add(const std::vector<double>& a, const std::vector<double>& b);
std::vector<double> vec_scale(const std::vector<double>& a, double s);
void clamp01(std::vector<double>& v);

} // namespace pfl
