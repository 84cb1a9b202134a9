#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace unirec {

// Dense row-major tensor of doubles. All numerics in this project are stored
// and accumulated in 64-bit precision; that is what makes the 1e-3
// finite-difference tolerances and the 1e-12 optimizer oracle achievable.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {}

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);
    static Tensor scalar(double value) { return Tensor({1}, {value}); }
    static Tensor row(std::vector<double> values);

    int64_t numel() const {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    double& at(int64_t i) { return data[static_cast<size_t>(i)]; }
    double at(int64_t i) const { return data[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;
    std::string shape_str() const;
};

int64_t shape_numel(const std::vector<int>& shape);

// Raw row-major matmul kernels. C is accumulated into (callers zero it first
// when needed). These are the only hot loops in the project.
//   mm_nn: C(MxN) += A(MxK) * B(KxN)
//   mm_nt: C(MxN) += A(MxK) * B(NxK)^T
//   mm_tn: C(KxN) += A(MxK)^T * B(MxN)
void mm_nn(const double* a, const double* b, double* c, int m, int k, int n);
void mm_nt(const double* a, const double* b, double* c, int m, int k, int n);
void mm_tn(const double* a, const double* b, double* c, int m, int k, int n);

}  // namespace unirec
